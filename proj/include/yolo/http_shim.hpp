#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>
#include <utility>

namespace httplib {
class Server;
}

namespace yolo {

/// Bridges the control socket to HTTP for browser clients. Each request
/// opens its own control connection; `/api/events` holds a subscription
/// open and streams frames as server-sent events.
///
///   GET  /api/state /api/diff /api/log /api/rules /api/events
///   POST /api/decision /api/travel /api/snapshot /api/commit /api/abort
///        /api/rule-add /api/rule-remove
class HttpShim {
 public:
  explicit HttpShim(std::string socket_path);
  ~HttpShim();

  /// Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  /// Splits `host:port`; a bare port binds loopback.
  static std::pair<std::string, int> parse_listen(const std::string& listen);

 private:
  void install_routes();

  std::string socket_path_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<bool> stopping_{false};
  std::unique_ptr<std::thread> thread_;
};

}  // namespace yolo
