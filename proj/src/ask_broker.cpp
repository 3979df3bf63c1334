#include "yolo/ask_broker.hpp"

#include <spdlog/spdlog.h>

namespace yolo {

nlohmann::json ask_event(const AskRequest& request) {
  return {{"type", "ask"},
          {"id", request.id},
          {"path", request.path},
          {"kind", to_string(request.kind)},
          {"process", request.process_name},
          {"pid", request.pid}};
}

nlohmann::json decision_event(std::uint64_t id, const Decision& decision,
                              const char* reason) {
  nlohmann::json install = nullptr;
  if (decision.install) {
    install = {{"path", decision.install->path},
               {"state", to_string(decision.install->state)},
               {"persist", decision.install->persist}};
  }
  return {{"type", "decision"},
          {"id", id},
          {"verdict", decision.verdict == Verdict::kAllow ? "allow" : "deny"},
          {"install", install},
          {"reason", reason}};
}

AskBroker::AskBroker(std::chrono::milliseconds timeout) : timeout_(timeout) {}

Decision AskBroker::ask(const AskRequest& request) {
  std::unique_lock lock(mutex_);
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  pending_[request.id] = Pending{request, std::nullopt};
  lock.unlock();
  publish(ask_event(request));
  lock.lock();
  bool decided = cv_.wait_until(lock, deadline, [&] {
    return pending_.at(request.id).decision.has_value();
  });
  Decision decision;
  if (decided) {
    decision = *pending_.at(request.id).decision;
  }
  pending_.erase(request.id);
  if (!decided) {
    ++timed_out_;
    lock.unlock();
    spdlog::warn("ask {} for {} {} timed out; denying", request.id,
                 to_string(request.kind), request.path);
    publish(decision_event(request.id, decision, "timeout"));
  }
  return decision;
}

bool AskBroker::decide(std::uint64_t id, const Decision& decision) {
  {
    std::lock_guard lock(mutex_);
    auto it = pending_.find(id);
    if (it == pending_.end() || it->second.decision) {
      return false;
    }
    it->second.decision = decision;
  }
  cv_.notify_all();
  publish(decision_event(id, decision, "decided"));
  return true;
}

void AskBroker::cancel_all() {
  std::vector<std::uint64_t> ids;
  {
    std::lock_guard lock(mutex_);
    for (auto& [id, p] : pending_) {
      if (!p.decision) {
        p.decision = Decision{};
        ids.push_back(id);
      }
    }
  }
  cv_.notify_all();
  for (auto id : ids) {
    publish(decision_event(id, Decision{}, "cancelled"));
  }
}

std::size_t AskBroker::pending() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, p] : pending_) {
    if (!p.decision) {
      ++n;
    }
  }
  return n;
}

std::vector<AskRequest> AskBroker::pending_requests() const {
  std::lock_guard lock(mutex_);
  std::vector<AskRequest> out;
  for (const auto& [id, p] : pending_) {
    if (!p.decision) {
      out.push_back(p.request);
    }
  }
  return out;
}

std::uint64_t AskBroker::subscribe(Listener listener) {
  std::lock_guard lock(listeners_mutex_);
  auto token = next_token_++;
  listeners_[token] = std::move(listener);
  return token;
}

void AskBroker::unsubscribe(std::uint64_t token) {
  std::lock_guard lock(listeners_mutex_);
  listeners_.erase(token);
}

std::size_t AskBroker::subscribers() const {
  std::lock_guard lock(listeners_mutex_);
  return listeners_.size();
}

void AskBroker::publish(const nlohmann::json& event) {
  std::vector<Listener> targets;
  {
    std::lock_guard lock(listeners_mutex_);
    for (const auto& [token, l] : listeners_) {
      targets.push_back(l);
    }
  }
  for (auto& l : targets) {
    try {
      l(event);
    } catch (const std::exception& e) {
      spdlog::debug("event listener failed: {}", e.what());
    }
  }
}

void AskBroker::set_timeout(std::chrono::milliseconds timeout) {
  std::lock_guard lock(mutex_);
  timeout_ = timeout;
}

std::chrono::milliseconds AskBroker::timeout() const {
  std::lock_guard lock(mutex_);
  return timeout_;
}

}  // namespace yolo
