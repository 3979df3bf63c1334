#include "yolo/daemon.hpp"

#include <sys/stat.h>
#include <sys/un.h>
#include <unistd.h>

#include <filesystem>
#include <functional>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "yolo/path.hpp"

namespace yolo {

namespace fs = std::filesystem;

namespace {

std::string canonical_dir(const std::string& path, const char* what) {
  std::error_code ec;
  auto p = fs::canonical(path, ec);
  if (ec || !fs::is_directory(p)) {
    throw std::runtime_error(fmt::format("{} {} is not a directory", what, path));
  }
  return p.string();
}

Verdict parse_verdict(const std::string& s) {
  if (s == "allow") return Verdict::kAllow;
  if (s == "deny") return Verdict::kDeny;
  throw ControlError("bad-request", "verdict must be allow or deny");
}

RuleState parse_state_or_throw(const std::string& s) {
  auto state = parse_rule_state(s);
  if (!state) {
    throw ControlError("bad-request", "unknown rule state " + s);
  }
  return *state;
}

std::string target_string(const json& target) {
  if (target.is_number_unsigned() || target.is_number_integer()) {
    if (target.is_number_integer() && target.get<long long>() < 0) {
      throw InvalidTarget("negative generation");
    }
    return std::to_string(target.get<unsigned long long>());
  }
  return target.get<std::string>();
}

}  // namespace

std::string default_socket_path(const std::string& base,
                                const std::string& mountpoint) {
  std::string in_base = base + "/" + std::string(kStateDirName) + "/control.sock";
  if (base != mountpoint && in_base.size() < sizeof(sockaddr_un::sun_path)) {
    return in_base;
  }
  auto dir = fmt::format("/tmp/yolo-{}", ::getuid());
  ::mkdir(dir.c_str(), 0700);
  return fmt::format("{}/{:016x}.sock", dir, std::hash<std::string>{}(base));
}

DaemonOptions load_daemon_options(const std::string& base,
                                  const std::string& mountpoint) {
  DaemonOptions o;
  o.base = canonical_dir(base, "base");
  o.mountpoint = canonical_dir(mountpoint, "mountpoint");
  o.config_path = o.base + "/yolo.toml";
  if (fs::exists(o.config_path)) {
    auto config = load_config(o.config_path);
    if (!config.base.empty() && canonical_dir(config.base, "base") != o.base) {
      throw std::runtime_error(fmt::format(
          "{} names base {}, not {}", o.config_path, config.base, o.base));
    }
    o.extra_roots = config.extra_roots;
    o.rules = config.rules;
    o.ask_timeout = std::chrono::seconds(config.ask_timeout_seconds);
  }
  return o;
}

Daemon::Daemon(DaemonOptions options)
    : options_(std::move(options)), broker_(options_.ask_timeout) {
  options_.base = canonical_dir(options_.base, "base");
  options_.mountpoint = canonical_dir(options_.mountpoint, "mountpoint");
  if (options_.mountpoint != options_.base &&
      is_within(normalize_path(options_.mountpoint),
                normalize_path(options_.base))) {
    throw std::runtime_error("mountpoint " + options_.mountpoint +
                             " lies inside the base " + options_.base);
  }
  if (options_.socket_path.empty()) {
    options_.socket_path = default_socket_path(options_.base, options_.mountpoint);
  }

  SessionOptions so;
  so.base_root = options_.base;
  so.extra_roots = options_.extra_roots;
  so.sync = options_.sync;
  session_ = std::make_unique<Session>(so);
  auto& perms = session_->permissions();
  perms.set_enabled(options_.permissions);
  for (const auto& r : options_.rules) {
    perms.add_rule(r.path, r.state);
  }
  perms.set_asker(&broker_);
  perms.on_install = [this](const RuleInstall& install) {
    if (install.persist && !options_.config_path.empty()) {
      std::lock_guard lock(config_mutex_);
      append_rule(options_.config_path, {install.path, install.state});
    }
  };
  session_->pending_asks = [this] { return broker_.pending(); };
  fs_ = std::make_unique<StagedFs>(*session_);
}

Daemon::~Daemon() { stop(); }

void Daemon::start() {
  server_ = std::make_unique<ControlServer>(
      options_.socket_path,
      [this](const std::string& verb, const json& payload,
             ControlConnection& conn) { return handle(verb, payload, conn); });
  server_->start();

  MountOptions mo;
  mo.mountpoint = options_.mountpoint;
  mo.source = options_.socket_path;
  mo.threads = options_.threads;
  bridge_ = std::make_unique<FuseBridge>(*fs_, mo);
  try {
    bridge_->start();
  } catch (...) {
    server_->stop();
    throw;
  }
  started_ = true;
  spdlog::info("mounted {} at {} (control {})", options_.base,
               options_.mountpoint, options_.socket_path);
}

void Daemon::stop() {
  request_stop();
  broker_.cancel_all();
  if (bridge_) {
    bridge_->stop();
  }
  if (server_) {
    server_->stop();
  }
  started_ = false;
}

void Daemon::request_stop() {
  {
    std::lock_guard lock(stop_mutex_);
    stop_requested_ = true;
  }
  stop_cv_.notify_all();
}

void Daemon::wait() {
  std::unique_lock lock(stop_mutex_);
  while (!stop_requested_) {
    stop_cv_.wait_for(lock, std::chrono::milliseconds(200));
    if (bridge_ && !bridge_->running()) {
      spdlog::info("{} was unmounted externally", options_.mountpoint);
      break;
    }
  }
}

void Daemon::publish_state(const char* reason) {
  broker_.publish({{"type", "state"},
                   {"reason", reason},
                   {"generation", session_->generation()}});
}

json Daemon::state_payload() {
  json pending = json::array();
  for (const auto& r : broker_.pending_requests()) {
    pending.push_back(ask_event(r));
  }
  return {{"base", options_.base},
          {"mountpoint", options_.mountpoint},
          {"socket", options_.socket_path},
          {"generation", session_->generation()},
          {"epoch", session_->epoch()},
          {"pending", pending},
          {"subscribers", broker_.subscribers()},
          {"open_handles", fs_->open_handles()},
          {"permissions", session_->permissions().enabled()},
          {"ask_timeout_ms", broker_.timeout().count()}};
}

json Daemon::rule_add(const json& payload) {
  RuleConfig rule{normalize_path(payload.at("path").get<std::string>()),
                  parse_state_or_throw(payload.at("state").get<std::string>())};
  auto version = session_->permissions().add_rule(rule.path, rule.state);
  if (payload.value("persist", false)) {
    if (options_.config_path.empty()) {
      throw ControlError("config", "no configuration file to persist to");
    }
    std::lock_guard lock(config_mutex_);
    append_rule(options_.config_path, rule);
  }
  return {{"version", version}};
}

json Daemon::handle(const std::string& verb, const json& payload,
                    ControlConnection& conn) {
  if (verb == "state") {
    return state_payload();
  }
  if (verb == "snapshot") {
    auto gen = session_->snapshot(payload.at("name").get<std::string>());
    publish_state("snapshot");
    return {{"generation", gen}};
  }
  if (verb == "travel") {
    auto gen = session_->travel(target_string(payload.at("target")),
                                payload.value("label", ""));
    publish_state("travel");
    return {{"generation", gen}};
  }
  if (verb == "diff") {
    return diff_payload(session_->diff());
  }
  if (verb == "log") {
    return log_payload(session_->log());
  }
  if (verb == "commit") {
    auto summary = session_->commit();
    publish_state("commit");
    return commit_payload(summary);
  }
  if (verb == "abort") {
    session_->abort();
    publish_state("abort");
    return json::object();
  }
  if (verb == "rule-add") {
    return rule_add(payload);
  }
  if (verb == "rule-remove") {
    auto path = normalize_path(payload.at("path").get<std::string>());
    return {{"version", session_->permissions().remove_rule(path)}};
  }
  if (verb == "rule-list") {
    return rules_payload(session_->permissions().list_rules());
  }
  if (verb == "subscribe") {
    auto token = broker_.subscribe([c = conn.shared_from_this()](const json& event) {
      auto type = event.value("type", "");
      c->push_event(type == "ask"        ? "ask-event"
                      : type == "decision" ? "decision"
                                           : "state-event",
                      event);
    });
    conn.on_close = [this, token] { broker_.unsubscribe(token); };
    json pending = json::array();
    for (const auto& r : broker_.pending_requests()) {
      pending.push_back(ask_event(r));
    }
    return {{"pending", pending}};
  }
  if (verb == "decision") {
    Decision d;
    d.verdict = parse_verdict(payload.at("verdict").get<std::string>());
    if (payload.contains("install") && !payload["install"].is_null()) {
      const auto& in = payload["install"];
      d.install = RuleInstall{
          normalize_path(in.at("path").get<std::string>()),
          parse_state_or_throw(in.at("state").get<std::string>()),
          in.value("persist", false)};
    }
    bool accepted = broker_.decide(payload.at("ask_id").get<std::uint64_t>(), d);
    return {{"accepted", accepted}};
  }
  if (verb == "unmount") {
    request_stop();
    return json::object();
  }
  throw ControlError("unknown-verb", "unknown verb " + verb);
}

}  // namespace yolo
