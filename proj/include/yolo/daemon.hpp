#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "yolo/ask_broker.hpp"
#include "yolo/config.hpp"
#include "yolo/control.hpp"
#include "yolo/fuse_bridge.hpp"
#include "yolo/session.hpp"
#include "yolo/staged_fs.hpp"

namespace yolo {

struct DaemonOptions {
  std::string base;
  std::string mountpoint;
  std::vector<std::string> extra_roots;
  std::vector<RuleConfig> rules;
  std::chrono::milliseconds ask_timeout{std::chrono::seconds(120)};
  /// Receives rules installed with `persist`; empty disables persistence.
  std::string config_path;
  /// Empty selects default_socket_path().
  std::string socket_path;
  unsigned threads = 4;
  bool sync = true;
  bool permissions = true;
};

/// Reads `<base>/yolo.toml` when present. The file's `base` key, if set,
/// must name the same directory.
DaemonOptions load_daemon_options(const std::string& base,
                                  const std::string& mountpoint);

/// `<base>/.yolo/control.sock`, unless that path would be shadowed by a
/// mount over the base itself or exceeds the socket name limit; then a
/// per-user directory under /tmp.
std::string default_socket_path(const std::string& base,
                                 const std::string& mountpoint);

/// A mounted session: the staged filesystem served at the mountpoint plus
/// the control socket.
class Daemon {
 public:
  explicit Daemon(DaemonOptions options);
  ~Daemon();

  Daemon(const Daemon&) = delete;
  Daemon& operator=(const Daemon&) = delete;

  void start();
  /// Idempotent. Must not be called from a control handler.
  void stop();
  /// Blocks until an unmount request, an external umount, or stop().
  void wait();
  void request_stop();

  Session& session() { return *session_; }
  AskBroker& broker() { return broker_; }
  StagedFs& fs() { return *fs_; }
  const std::string& socket_path() const { return options_.socket_path; }
  const std::string& mountpoint() const { return options_.mountpoint; }

  json handle(const std::string& verb, const json& payload,
              ControlConnection& conn);
  json state_payload();

 private:
  void publish_state(const char* reason);
  json rule_add(const json& payload);

  DaemonOptions options_;
  std::unique_ptr<Session> session_;
  AskBroker broker_;
  std::unique_ptr<StagedFs> fs_;
  std::unique_ptr<FuseBridge> bridge_;
  std::unique_ptr<ControlServer> server_;
  std::mutex config_mutex_;

  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;
  bool stop_requested_ = false;
  bool started_ = false;
};

}  // namespace yolo
