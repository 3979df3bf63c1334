#include "yolo/control.hpp"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "yolo/config.hpp"
#include "yolo/path.hpp"

namespace yolo {

namespace {

sockaddr_un socket_address(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) {
    throw std::runtime_error("socket path too long: " + path);
  }
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

json error_body(const std::string& code, const std::string& message,
                const json& detail = json::object()) {
  json e = {{"code", code}, {"message", message}};
  if (!detail.empty()) {
    e["detail"] = detail;
  }
  return e;
}

std::string unescape_mountinfo(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 3 < s.size()) {
      auto oct = s.substr(i + 1, 3);
      if (oct.size() == 3 && oct.find_first_not_of("01234567") == std::string::npos) {
        out += static_cast<char>(std::stoi(oct, nullptr, 8));
        i += 3;
        continue;
      }
    }
    out += s[i];
  }
  return out;
}

}  // namespace

bool ControlConnection::send(const json& frame) {
  std::lock_guard lock(write_mutex_);
  if (closed_) {
    return false;
  }
  try {
    write_frame(fd_.get(), frame);
    return true;
  } catch (const std::exception& e) {
    spdlog::debug("control send failed: {}", e.what());
    closed_ = true;
    return false;
  }
}

void ControlConnection::push_event(const std::string& verb, const json& payload) {
  send({{"id", nullptr}, {"verb", verb}, {"payload", payload}});
}

void ControlConnection::shutdown() { ::shutdown(fd_.get(), SHUT_RDWR); }

ControlServer::ControlServer(std::string socket_path, Handler handler)
    : path_(std::move(socket_path)), handler_(std::move(handler)) {}

ControlServer::~ControlServer() { stop(); }

void ControlServer::start() {
  auto addr = socket_address(path_);
  listen_ = UniqueFd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!listen_) {
    throw_errno("socket");
  }
  ::unlink(path_.c_str());
  check_syscall(::bind(listen_.get(), reinterpret_cast<sockaddr*>(&addr),
                       sizeof(addr)),
                "bind " + path_);
  ::chmod(path_.c_str(), 0600);
  check_syscall(::listen(listen_.get(), 64), "listen " + path_);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void ControlServer::stop() {
  if (!running_.exchange(false)) {
    return;
  }
  ::shutdown(listen_.get(), SHUT_RDWR);
  if (acceptor_.joinable()) {
    acceptor_.join();
  }
  std::list<Client> clients;
  {
    std::lock_guard lock(clients_mutex_);
    clients.splice(clients.end(), clients_);
  }
  for (auto& c : clients) {
    c.conn->shutdown();
  }
  for (auto& c : clients) {
    if (c.thread.joinable()) {
      c.thread.join();
    }
  }
  listen_.reset();
  ::unlink(path_.c_str());
}

void ControlServer::accept_loop() {
  while (running_) {
    int fd = ::accept4(listen_.get(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      if (running_) {
        spdlog::error("control accept: {}", std::strerror(errno));
      }
      break;
    }
    std::lock_guard lock(clients_mutex_);
    for (auto it = clients_.begin(); it != clients_.end();) {
      if (it->done) {
        it->thread.join();
        it = clients_.erase(it);
      } else {
        ++it;
      }
    }
    auto& client = clients_.emplace_back();
    client.conn = std::make_shared<ControlConnection>(UniqueFd(fd));
    client.thread = std::thread([this, &client] { serve(client); });
  }
}

void ControlServer::serve(Client& client) {
  auto& conn = *client.conn;
  for (;;) {
    std::optional<json> request;
    try {
      request = read_frame(conn.fd());
    } catch (const ProtocolError& e) {
      conn.send({{"id", nullptr}, {"verb", "error"}, {"ok", false},
                 {"error", error_body("bad-request", e.what())}});
      break;
    } catch (const std::exception&) {
      break;
    }
    if (!request) {
      break;
    }
    if (!conn.send(respond(*request, conn))) {
      break;
    }
  }
  if (conn.on_close) {
    conn.on_close();
  }
  client.done = true;
}

json ControlServer::respond(const json& request, ControlConnection& conn) {
  json id = request.contains("id") ? request["id"] : json(nullptr);
  json response = {{"id", id}};
  if (!request.contains("verb") || !request["verb"].is_string()) {
    response["verb"] = nullptr;
    response["ok"] = false;
    response["error"] = error_body("bad-request", "missing verb");
    return response;
  }
  auto verb = request["verb"].get<std::string>();
  response["verb"] = verb;
  json payload = request.value("payload", json::object());
  try {
    response["payload"] = handler_(verb, payload, conn);
    response["ok"] = true;
  } catch (const ControlError& e) {
    response["ok"] = false;
    response["error"] = error_body(e.code(), e.what(), e.detail());
  } catch (const InvalidTarget& e) {
    response["ok"] = false;
    response["error"] = error_body("invalid-target", e.what());
  } catch (const SessionBusy& e) {
    response["ok"] = false;
    response["error"] = error_body("busy", e.what());
  } catch (const CommitError& e) {
    response["ok"] = false;
    response["error"] = error_body(
        "commit-failed", e.what(),
        {{"index", e.index()}, {"applied", e.applied()}});
  } catch (const InvalidPath& e) {
    response["ok"] = false;
    response["error"] = error_body("bad-request", e.what());
  } catch (const ConfigError& e) {
    response["ok"] = false;
    response["error"] = error_body("config", e.what());
  } catch (const json::exception& e) {
    response["ok"] = false;
    response["error"] = error_body("bad-request", e.what());
  } catch (const std::system_error& e) {
    response["ok"] = false;
    response["error"] = error_body("io-error", e.what());
  } catch (const std::exception& e) {
    spdlog::error("control verb {} failed: {}", verb, e.what());
    response["ok"] = false;
    response["error"] = error_body("internal", e.what());
  }
  return response;
}

json make_request(std::uint64_t id, const std::string& verb,
                  const json& payload) {
  return {{"id", id}, {"verb", verb}, {"payload", payload}};
}

ControlClient ControlClient::connect(const std::string& socket_path) {
  auto addr = socket_address(socket_path);
  UniqueFd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd) {
    throw_errno("socket");
  }
  check_syscall(::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr),
                          sizeof(addr)),
                "connect " + socket_path);
  return ControlClient(std::move(fd));
}

json ControlClient::call_raw(const std::string& verb, const json& payload) {
  auto id = next_id_++;
  write_frame(fd_.get(), make_request(id, verb, payload));
  for (;;) {
    auto frame = read_frame(fd_.get());
    if (!frame) {
      throw ControlError("disconnected", "daemon closed the connection");
    }
    if ((*frame)["id"].is_null() && frame->value("verb", "") != "error") {
      events_.push_back(std::move(*frame));
      continue;
    }
    return *frame;
  }
}

json ControlClient::call(const std::string& verb, const json& payload) {
  auto response = call_raw(verb, payload);
  if (!response.value("ok", false)) {
    const auto& err = response.at("error");
    throw ControlError(err.value("code", "error"), err.value("message", ""),
                       err.value("detail", json::object()));
  }
  return response.value("payload", json::object());
}

std::optional<json> ControlClient::next_event() {
  if (!events_.empty()) {
    auto e = std::move(events_.front());
    events_.pop_front();
    return e;
  }
  for (;;) {
    std::optional<json> frame;
    try {
      frame = read_frame(fd_.get());
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (!frame) {
      return std::nullopt;
    }
    if ((*frame)["id"].is_null()) {
      return frame;
    }
  }
}

std::vector<std::pair<std::string, std::string>> yolo_mounts() {
  std::vector<std::pair<std::string, std::string>> out;
  std::ifstream in("/proc/self/mountinfo");
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<std::string> parts;
    std::string f;
    while (fields >> f) {
      parts.push_back(f);
    }
    auto dash = std::find(parts.begin(), parts.end(), "-");
    if (parts.size() < 5 || dash == parts.end() || dash + 2 >= parts.end()) {
      continue;
    }
    if (*(dash + 1) != "fuse.yolo") {
      continue;
    }
    out.emplace_back(unescape_mountinfo(parts[4]),
                     unescape_mountinfo(*(dash + 2)));
  }
  return out;
}

std::optional<std::string> discover_socket(const std::string& near) {
  if (const char* env = std::getenv("YOLO_SOCKET"); env && *env) {
    return std::string(env);
  }
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::path dir = fs::absolute(near, ec);
  if (!ec) {
    for (fs::path p = dir;; p = p.parent_path()) {
      auto candidate = p / ".yolo" / "control.sock";
      if (fs::is_socket(candidate, ec)) {
        return candidate.string();
      }
      if (p == p.parent_path()) {
        break;
      }
    }
  }
  std::optional<std::string> best;
  std::size_t best_len = 0;
  for (const auto& [mnt, source] : yolo_mounts()) {
    if (!fs::is_socket(source, ec)) {
      continue;
    }
    bool contains = is_within(normalize_path(dir.string()), normalize_path(mnt));
    std::size_t score = contains ? mnt.size() + 1 : 0;
    if (!best || score > best_len) {
      best = source;
      best_len = score;
    }
  }
  return best;
}

}  // namespace yolo
