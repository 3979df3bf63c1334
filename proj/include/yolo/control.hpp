#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include "yolo/fd.hpp"
#include "yolo/protocol.hpp"

namespace yolo {

/// Error reported in a response frame: `{"ok": false, "error": {...}}`.
class ControlError : public std::runtime_error {
 public:
  ControlError(std::string code, const std::string& message,
               json detail = json::object())
      : std::runtime_error(message), code_(std::move(code)),
        detail_(std::move(detail)) {}
  const std::string& code() const { return code_; }
  const json& detail() const { return detail_; }

 private:
  std::string code_;
  json detail_;
};

/// One accepted client. Frames may be sent from any thread.
class ControlConnection : public std::enable_shared_from_this<ControlConnection> {
 public:
  explicit ControlConnection(UniqueFd fd) : fd_(std::move(fd)) {}

  /// Returns false once the peer is gone.
  bool send(const json& frame);
  void push_event(const std::string& verb, const json& payload);
  int fd() const { return fd_.get(); }
  void shutdown();

  /// Cleanup run when the connection closes, e.g. dropping a subscription.
  std::function<void()> on_close;

 private:
  std::mutex write_mutex_;
  UniqueFd fd_;
  std::atomic<bool> closed_{false};
};

/// Unix-socket server: one thread per connection, requests on a connection
/// are handled in order and each gets exactly one response.
class ControlServer {
 public:
  using Handler = std::function<json(const std::string& verb,
                                     const json& payload,
                                     ControlConnection& conn)>;

  ControlServer(std::string socket_path, Handler handler);
  ~ControlServer();

  void start();
  void stop();
  const std::string& socket_path() const { return path_; }

 private:
  struct Client {
    std::shared_ptr<ControlConnection> conn;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve(Client& client);
  json respond(const json& request, ControlConnection& conn);

  std::string path_;
  Handler handler_;
  UniqueFd listen_;
  std::thread acceptor_;
  std::atomic<bool> running_{false};
  std::mutex clients_mutex_;
  std::list<Client> clients_;
};

json make_request(std::uint64_t id, const std::string& verb, const json& payload);

/// Blocking client for one connection. Event frames that arrive while a
/// response is awaited are queued for next_event().
class ControlClient {
 public:
  static ControlClient connect(const std::string& socket_path);

  /// Returns the response payload; throws ControlError on `ok: false`.
  json call(const std::string& verb, const json& payload = json::object());
  /// Returns the full response frame.
  json call_raw(const std::string& verb, const json& payload = json::object());

  /// Blocks for the next pushed event; nullopt when the server closes.
  std::optional<json> next_event();
  int fd() const { return fd_.get(); }

 private:
  explicit ControlClient(UniqueFd fd) : fd_(std::move(fd)) {}

  UniqueFd fd_;
  std::uint64_t next_id_ = 1;
  std::deque<json> events_;
};

/// Socket lookup order: `YOLO_SOCKET`, a `.yolo/control.sock` in the
/// working directory or an ancestor, then the source of a mounted yolo
/// filesystem in /proc/self/mountinfo. Prefers the mount containing
/// `near` when several are present.
std::optional<std::string> discover_socket(const std::string& near);

/// Mounted yolo filesystems as (mountpoint, source) pairs.
std::vector<std::pair<std::string, std::string>> yolo_mounts();

}  // namespace yolo
