#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "json.hpp"

#include "yolo/permission.hpp"

namespace yolo {

/// Routes asks from blocked operations to subscribers. The first decision
/// for an ask wins and is echoed to every subscriber; an ask nobody answers
/// within the timeout is denied.
class AskBroker : public Asker {
 public:
  using Listener = std::function<void(const nlohmann::json& event)>;

  explicit AskBroker(std::chrono::milliseconds timeout);

  Decision ask(const AskRequest& request) override;

  /// Returns false when the ask is unknown or already decided.
  bool decide(std::uint64_t id, const Decision& decision);

  /// Denies every undecided ask, e.g. on shutdown.
  void cancel_all();

  std::size_t pending() const;
  std::vector<AskRequest> pending_requests() const;

  std::uint64_t subscribe(Listener listener);
  void unsubscribe(std::uint64_t token);
  std::size_t subscribers() const;
  void publish(const nlohmann::json& event);

  void set_timeout(std::chrono::milliseconds timeout);
  std::chrono::milliseconds timeout() const;
  std::uint64_t timed_out() const { return timed_out_; }

 private:
  struct Pending {
    AskRequest request;
    std::optional<Decision> decision;
  };

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::uint64_t, Pending> pending_;
  std::chrono::milliseconds timeout_;
  std::uint64_t timed_out_ = 0;

  mutable std::mutex listeners_mutex_;
  std::map<std::uint64_t, Listener> listeners_;
  std::uint64_t next_token_ = 1;
};

nlohmann::json ask_event(const AskRequest& request);
nlohmann::json decision_event(std::uint64_t id, const Decision& decision,
                              const char* reason);

}  // namespace yolo
