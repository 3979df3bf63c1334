#include "yolo/http_shim.hpp"

#include <poll.h>

#include <thread>

#include "httplib.h"

#include <spdlog/spdlog.h>

#include "yolo/control.hpp"

namespace yolo {

namespace {

int status_for(const std::string& code) {
  if (code == "bad-request" || code == "invalid-target" ||
      code == "unknown-verb") {
    return 400;
  }
  if (code == "busy") return 409;
  if (code == "disconnected") return 502;
  return 500;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

HttpShim::HttpShim(std::string socket_path)
    : socket_path_(std::move(socket_path)),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpShim::~HttpShim() { stop(); }

std::pair<std::string, int> HttpShim::parse_listen(const std::string& listen) {
  auto colon = listen.rfind(':');
  if (colon == std::string::npos) {
    return {"127.0.0.1", std::stoi(listen)};
  }
  auto host = listen.substr(0, colon);
  return {host.empty() ? "127.0.0.1" : host, std::stoi(listen.substr(colon + 1))};
}

void HttpShim::install_routes() {
  auto forward = [this](const std::string& verb, bool with_body) {
    return [this, verb, with_body](const httplib::Request& req,
                                   httplib::Response& res) {
      json payload = json::object();
      if (with_body && !req.body.empty()) {
        payload = json::parse(req.body, nullptr, false);
        if (payload.is_discarded() || !payload.is_object()) {
          send_json(res, 400, {{"code", "bad-request"}, {"message", "body is not a JSON object"}});
          return;
        }
      }
      try {
        auto client = ControlClient::connect(socket_path_);
        auto response = client.call_raw(verb, payload);
        if (response.value("ok", false)) {
          send_json(res, 200, response.value("payload", json::object()));
        } else {
          auto err = response.value("error", json::object());
          send_json(res, status_for(err.value("code", "")), err);
        }
      } catch (const std::exception& e) {
        send_json(res, 502, {{"code", "disconnected"}, {"message", e.what()}});
      }
    };
  };

  server_->Get("/api/state", forward("state", false));
  server_->Get("/api/diff", forward("diff", false));
  server_->Get("/api/log", forward("log", false));
  server_->Get("/api/rules", forward("rule-list", false));
  server_->Post("/api/decision", forward("decision", true));
  server_->Post("/api/travel", forward("travel", true));
  server_->Post("/api/snapshot", forward("snapshot", true));
  server_->Post("/api/commit", forward("commit", false));
  server_->Post("/api/abort", forward("abort", false));
  server_->Post("/api/rule-add", forward("rule-add", true));
  server_->Post("/api/rule-remove", forward("rule-remove", true));

  server_->Get("/api/events", [this](const httplib::Request&,
                                     httplib::Response& res) {
    std::shared_ptr<ControlClient> client;
    json first;
    try {
      client = std::make_shared<ControlClient>(ControlClient::connect(socket_path_));
      first = client->call("subscribe");
    } catch (const std::exception& e) {
      send_json(res, 502, {{"code", "disconnected"}, {"message", e.what()}});
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, client, first, sent_first = false](std::size_t,
                                                  httplib::DataSink& sink) mutable {
          if (!sent_first) {
            sent_first = true;
            json hello = {{"id", nullptr}, {"verb", "subscribed"}, {"payload", first}};
            auto chunk = "data: " + hello.dump() + "\n\n";
            return sink.write(chunk.data(), chunk.size());
          }
          while (!stopping_) {
            pollfd p{client->fd(), POLLIN, 0};
            int rc = ::poll(&p, 1, 1000);
            if (rc == 0) {
              static const std::string ping = ": ping\n\n";
              if (!sink.is_writable() || !sink.write(ping.data(), ping.size())) {
                return false;
              }
              continue;
            }
            auto event = client->next_event();
            if (!event) {
              sink.done();
              return true;
            }
            auto chunk = "data: " + event->dump() + "\n\n";
            return sink.write(chunk.data(), chunk.size());
          }
          sink.done();
          return true;
        });
  });
}

int HttpShim::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  }
  thread_ = std::make_unique<std::thread>([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpShim::run(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) {
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  }
  spdlog::info("serving {} on http://{}:{}", socket_path_, host, port);
  server_->listen_after_bind();
}

void HttpShim::stop() {
  stopping_ = true;
  server_->stop();
  if (thread_ && thread_->joinable()) {
    thread_->join();
  }
  thread_.reset();
}

}  // namespace yolo
