#pragma once

#include <sys/types.h>

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace yolo {

enum class RuleState { kAllow, kReadOnly, kDeny, kHidden, kAsk };

/// Access classes checked against the effective rule. kStat covers lookup
/// and getattr, which stay visible under Deny.
enum class AccessKind { kRead, kWrite, kMutate, kList, kStat };

enum class CheckOutcome { kAllowed, kDenied, kNotFound, kNeedsAsk };

const char* to_string(RuleState state);
const char* to_string(AccessKind kind);
const char* to_string(CheckOutcome outcome);
std::optional<RuleState> parse_rule_state(std::string_view text);
std::optional<AccessKind> parse_access_kind(std::string_view text);

/// Path-keyed permission rules with a version bumped on every mutation.
class RuleTree {
 public:
  std::uint64_t add(std::string_view path, RuleState state);
  /// Removing a missing rule still bumps the version.
  std::uint64_t remove(std::string_view path);

  std::optional<RuleState> find(std::string_view path) const;
  std::uint64_t version() const { return version_; }
  std::vector<std::pair<std::string, RuleState>> list() const;
  std::size_t size() const { return rules_.size() + (root_ ? 1 : 0); }

 private:
  std::optional<RuleState> root_;
  std::unordered_map<std::string, RuleState> rules_;
  std::uint64_t version_ = 0;
};

/// Walks root to leaf; each rule replaces the carried state and Hidden
/// stops the walk. Ask when nothing governs the path.
RuleState resolve_effective(const RuleTree& rules, std::string_view path);

CheckOutcome check_state(RuleState effective, AccessKind kind);
CheckOutcome check(const RuleTree& rules, std::string_view path,
                   AccessKind kind);

struct CachedPermission {
  RuleState state = RuleState::kAsk;
  std::uint64_t version = 0;
  bool operator==(const CachedPermission&) const = default;
};

/// Recomputes a stale cache entry by walking from `path` toward the root.
/// Non-root prefixes consulted are counted in `probes` when given.
CachedPermission revalidate(const CachedPermission& cached,
                            std::string_view path, const RuleTree& rules,
                            std::size_t* probes = nullptr);

struct AskRequest {
  std::uint64_t id = 0;
  std::string path;
  AccessKind kind = AccessKind::kRead;
  std::string process_name;
  pid_t pid = 0;
};

enum class Verdict { kAllow, kDeny };

struct RuleInstall {
  std::string path;
  RuleState state = RuleState::kAllow;
  bool persist = false;
};

struct Decision {
  Verdict verdict = Verdict::kDeny;
  std::optional<RuleInstall> install;
};

/// Source of decisions for accesses whose effective state is Ask.
class Asker {
 public:
  virtual ~Asker() = default;
  virtual Decision ask(const AskRequest& request) = 0;
};

/// Thread-safe front for the rule tree: cached effective-state lookups and
/// the ask round trip.
class PermissionEngine {
 public:
  PermissionEngine() = default;

  void set_asker(Asker* asker) { asker_.store(asker); }
  void set_enabled(bool enabled) { enabled_.store(enabled); }
  bool enabled() const { return enabled_.load(); }

  std::uint64_t add_rule(std::string_view path, RuleState state);
  std::uint64_t remove_rule(std::string_view path);
  std::vector<std::pair<std::string, RuleState>> list_rules() const;
  std::uint64_t version() const;

  RuleState effective(std::string_view path);
  CheckOutcome check(std::string_view path, AccessKind kind);

  /// Resolves NeedsAsk through the asker. Never returns kNeedsAsk.
  CheckOutcome authorize(std::string_view path, AccessKind kind,
                         std::string_view process_name = {}, pid_t pid = 0);

  /// Asks unconditionally, applying any rule the decision installs.
  /// Returns kAllowed or kDenied; kDenied when no asker is attached.
  CheckOutcome ask(std::string_view path, AccessKind kind,
                   std::string_view process_name = {}, pid_t pid = 0);

  /// Called after an installed rule is applied, for optional persistence.
  std::function<void(const RuleInstall&)> on_install;

 private:
  mutable std::shared_mutex rules_mutex_;
  RuleTree rules_;
  std::atomic<std::uint64_t> version_{0};
  std::mutex cache_mutex_;
  std::unordered_map<std::string, CachedPermission> cache_;
  std::atomic<Asker*> asker_{nullptr};
  std::atomic<bool> enabled_{true};
  std::atomic<std::uint64_t> next_ask_id_{1};
};

}  // namespace yolo
