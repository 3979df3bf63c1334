#include "yolo/permission.hpp"

#include <algorithm>

#include "yolo/path.hpp"

namespace yolo {

const char* to_string(RuleState state) {
  switch (state) {
    case RuleState::kAllow:
      return "allow";
    case RuleState::kReadOnly:
      return "read_only";
    case RuleState::kDeny:
      return "deny";
    case RuleState::kHidden:
      return "hidden";
    case RuleState::kAsk:
      return "ask";
  }
  return "?";
}

const char* to_string(AccessKind kind) {
  switch (kind) {
    case AccessKind::kRead:
      return "read";
    case AccessKind::kWrite:
      return "write";
    case AccessKind::kMutate:
      return "mutate";
    case AccessKind::kList:
      return "list";
    case AccessKind::kStat:
      return "stat";
  }
  return "?";
}

const char* to_string(CheckOutcome outcome) {
  switch (outcome) {
    case CheckOutcome::kAllowed:
      return "allowed";
    case CheckOutcome::kDenied:
      return "denied";
    case CheckOutcome::kNotFound:
      return "not-found";
    case CheckOutcome::kNeedsAsk:
      return "needs-ask";
  }
  return "?";
}

std::optional<RuleState> parse_rule_state(std::string_view text) {
  for (auto s : {RuleState::kAllow, RuleState::kReadOnly, RuleState::kDeny,
                 RuleState::kHidden, RuleState::kAsk}) {
    if (text == to_string(s)) {
      return s;
    }
  }
  if (text == "read-only" || text == "readonly") {
    return RuleState::kReadOnly;
  }
  return std::nullopt;
}

std::optional<AccessKind> parse_access_kind(std::string_view text) {
  for (auto k : {AccessKind::kRead, AccessKind::kWrite, AccessKind::kMutate,
                 AccessKind::kList, AccessKind::kStat}) {
    if (text == to_string(k)) {
      return k;
    }
  }
  return std::nullopt;
}

std::uint64_t RuleTree::add(std::string_view path, RuleState state) {
  require_normalized(path);
  if (path.empty()) {
    root_ = state;
  } else {
    rules_[std::string(path)] = state;
  }
  return ++version_;
}

std::uint64_t RuleTree::remove(std::string_view path) {
  require_normalized(path);
  if (path.empty()) {
    root_.reset();
  } else {
    rules_.erase(std::string(path));
  }
  return ++version_;
}

std::optional<RuleState> RuleTree::find(std::string_view path) const {
  if (path.empty()) {
    return root_;
  }
  auto it = rules_.find(std::string(path));
  if (it == rules_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::vector<std::pair<std::string, RuleState>> RuleTree::list() const {
  std::vector<std::pair<std::string, RuleState>> out;
  if (root_) {
    out.emplace_back("", *root_);
  }
  for (const auto& [path, state] : rules_) {
    out.emplace_back(path, state);
  }
  std::sort(out.begin(), out.end());
  return out;
}

RuleState resolve_effective(const RuleTree& rules, std::string_view path) {
  RuleState state = rules.find("").value_or(RuleState::kAsk);
  if (state == RuleState::kHidden) {
    return state;
  }
  std::size_t pos = 0;
  while (pos < path.size()) {
    auto slash = path.find('/', pos);
    auto end = slash == std::string_view::npos ? path.size() : slash;
    if (auto rule = rules.find(path.substr(0, end))) {
      state = *rule;
      if (state == RuleState::kHidden) {
        return state;
      }
    }
    pos = end + 1;
  }
  return state;
}

CheckOutcome check_state(RuleState effective, AccessKind kind) {
  switch (effective) {
    case RuleState::kAllow:
      return CheckOutcome::kAllowed;
    case RuleState::kReadOnly:
      return (kind == AccessKind::kWrite || kind == AccessKind::kMutate)
                 ? CheckOutcome::kDenied
                 : CheckOutcome::kAllowed;
    case RuleState::kDeny:
      return kind == AccessKind::kStat ? CheckOutcome::kAllowed
                                       : CheckOutcome::kDenied;
    case RuleState::kHidden:
      return CheckOutcome::kNotFound;
    case RuleState::kAsk:
      return CheckOutcome::kNeedsAsk;
  }
  return CheckOutcome::kDenied;
}

CheckOutcome check(const RuleTree& rules, std::string_view path,
                   AccessKind kind) {
  return check_state(resolve_effective(rules, path), kind);
}

CachedPermission revalidate(const CachedPermission& /*cached*/,
                            std::string_view path, const RuleTree& rules,
                            std::size_t* probes) {
  std::optional<RuleState> nearest;
  bool hidden = false;
  std::string_view prefix = path;
  while (!prefix.empty()) {
    if (probes != nullptr) {
      ++*probes;
    }
    if (auto rule = rules.find(prefix)) {
      if (*rule == RuleState::kHidden) {
        hidden = true;
      } else if (!nearest) {
        nearest = rule;
      }
    }
    prefix = parent_path(prefix);
  }
  if (auto root = rules.find("")) {
    if (*root == RuleState::kHidden) {
      hidden = true;
    } else if (!nearest) {
      nearest = root;
    }
  }
  RuleState state =
      hidden ? RuleState::kHidden : nearest.value_or(RuleState::kAsk);
  return CachedPermission{state, rules.version()};
}

// --- PermissionEngine -------------------------------------------------------

std::uint64_t PermissionEngine::add_rule(std::string_view path,
                                         RuleState state) {
  std::unique_lock lock(rules_mutex_);
  auto v = rules_.add(path, state);
  version_.store(v);
  return v;
}

std::uint64_t PermissionEngine::remove_rule(std::string_view path) {
  std::unique_lock lock(rules_mutex_);
  auto v = rules_.remove(path);
  version_.store(v);
  return v;
}

std::vector<std::pair<std::string, RuleState>> PermissionEngine::list_rules()
    const {
  std::shared_lock lock(rules_mutex_);
  return rules_.list();
}

std::uint64_t PermissionEngine::version() const { return version_.load(); }

RuleState PermissionEngine::effective(std::string_view path) {
  std::shared_lock rules_lock(rules_mutex_);
  const auto current = rules_.version();
  std::string key(path);
  {
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end() && it->second.version == current) {
      return it->second.state;
    }
  }
  auto fresh = revalidate(CachedPermission{}, path, rules_);
  std::lock_guard lock(cache_mutex_);
  if (cache_.size() > (1u << 20)) {
    cache_.clear();
  }
  cache_[std::move(key)] = fresh;
  return fresh.state;
}

CheckOutcome PermissionEngine::check(std::string_view path, AccessKind kind) {
  if (!enabled_.load(std::memory_order_relaxed)) {
    return CheckOutcome::kAllowed;
  }
  return check_state(effective(path), kind);
}

CheckOutcome PermissionEngine::authorize(std::string_view path,
                                         AccessKind kind,
                                         std::string_view process_name,
                                         pid_t pid) {
  auto outcome = check(path, kind);
  if (outcome != CheckOutcome::kNeedsAsk) {
    return outcome;
  }
  return ask(path, kind, process_name, pid);
}

CheckOutcome PermissionEngine::ask(std::string_view path, AccessKind kind,
                                   std::string_view process_name, pid_t pid) {
  Asker* asker = asker_.load();
  if (asker == nullptr) {
    return CheckOutcome::kDenied;
  }
  AskRequest request;
  request.id = next_ask_id_++;
  request.path = std::string(path);
  request.kind = kind;
  request.process_name = std::string(process_name);
  request.pid = pid;
  auto decision = asker->ask(request);
  if (decision.install) {
    add_rule(decision.install->path, decision.install->state);
    if (on_install) {
      on_install(*decision.install);
    }
  }
  return decision.verdict == Verdict::kAllow ? CheckOutcome::kAllowed
                                             : CheckOutcome::kDenied;
}

}  // namespace yolo
