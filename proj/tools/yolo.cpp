#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/spdlog.h>

#include "yolo/bench.hpp"
#include "yolo/control.hpp"
#include "yolo/daemon.hpp"
#include "yolo/http_shim.hpp"
#include "yolo/path.hpp"

namespace fs = std::filesystem;
using namespace yolo;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string socket_override;

std::string locate_socket() {
  if (!socket_override.empty()) return socket_override;
  auto found = discover_socket(fs::current_path().string());
  if (!found) {
    throw Failure("no mounted session found; set YOLO_SOCKET or run inside the project");
  }
  return *found;
}

ControlClient connect() { return ControlClient::connect(locate_socket()); }

// Blocks the termination signals in every thread and forwards them to
// `stop` from a dedicated waiter.
void forward_signals(std::function<void()> stop) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGHUP);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::thread([set, stop = std::move(stop)] {
    int sig = 0;
    while (sigwait(&set, &sig) == 0) {
      stop();
    }
  }).detach();
}

int serve_daemon(Daemon& daemon) {
  forward_signals([&daemon] { daemon.request_stop(); });
  daemon.wait();
  daemon.stop();
  return 0;
}

int cmd_mount(const std::string& base, const std::string& mnt, bool foreground,
              bool no_permissions, int timeout) {
  auto start = [&] {
    auto options = load_daemon_options(base, mnt);
    options.permissions = !no_permissions;
    if (timeout > 0) options.ask_timeout = std::chrono::seconds(timeout);
    return std::make_unique<Daemon>(options);
  };
  if (foreground) {
    if (spdlog::get_level() > spdlog::level::info) spdlog::set_level(spdlog::level::info);
    auto daemon = start();
    daemon->start();
    std::cout << daemon->socket_path() << std::endl;
    return serve_daemon(*daemon);
  }

  int pipefd[2];
  if (::pipe2(pipefd, O_CLOEXEC) != 0) throw_errno("pipe");
  pid_t pid = ::fork();
  if (pid < 0) throw_errno("fork");
  if (pid == 0) {
    ::close(pipefd[0]);
    ::setsid();
    std::string status;
    std::unique_ptr<Daemon> daemon;
    try {
      daemon = start();
      auto log = spdlog::basic_logger_mt(
          "yolo", daemon->session().state_dir_path() + "/daemon.log");
      spdlog::set_default_logger(log);
      spdlog::set_level(spdlog::level::info);
      spdlog::flush_on(spdlog::level::info);
      daemon->start();
      status = "ok " + daemon->socket_path();
    } catch (const std::exception& e) {
      status = std::string("error ") + e.what();
    }
    if (::write(pipefd[1], status.data(), status.size()) < 0) {
      _exit(1);
    }
    ::close(pipefd[1]);
    if (!daemon || status.rfind("ok", 0) != 0) _exit(1);
    int null = ::open("/dev/null", O_RDWR);
    ::dup2(null, 0);
    ::dup2(null, 1);
    ::dup2(null, 2);
    _exit(serve_daemon(*daemon));
  }
  ::close(pipefd[1]);
  std::string status;
  char buf[512];
  ssize_t n;
  while ((n = ::read(pipefd[0], buf, sizeof(buf))) > 0) {
    status.append(buf, static_cast<std::size_t>(n));
  }
  ::close(pipefd[0]);
  if (status.rfind("ok ", 0) == 0) {
    std::cout << "mounted " << mnt << " (control " << status.substr(3) << ")\n";
    return 0;
  }
  ::waitpid(pid, nullptr, 0);
  throw Failure(status.empty() ? "daemon exited during startup" : status.substr(6));
}

int cmd_unmount() {
  auto client = connect();
  auto state = client.call("state");
  auto mnt = state.at("mountpoint").get<std::string>();
  client.call("unmount");
  for (int i = 0; i < 100; ++i) {
    bool present = false;
    for (const auto& [m, s] : yolo_mounts()) {
      if (m == mnt) present = true;
    }
    if (!present) return 0;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  throw Failure("daemon did not release " + mnt);
}

// Terminal prompt for ask events, run beside a wrapped command.
class Prompter {
 public:
  explicit Prompter(const std::string& socket) : socket_(socket) {
    tty_ = ::open("/dev/tty", O_RDWR | O_CLOEXEC);
    if (tty_ < 0) return;
    try {
      events_.emplace(ControlClient::connect(socket_));
      events_->call("subscribe");
    } catch (const std::exception& e) {
      spdlog::warn("no ask prompt: {}", e.what());
      events_.reset();
      return;
    }
    thread_ = std::thread([this] { loop(); });
  }
  ~Prompter() {
    stop_ = true;
    if (events_) ::shutdown(events_->fd(), SHUT_RDWR);
    if (thread_.joinable()) thread_.join();
    if (tty_ >= 0) ::close(tty_);
  }

 private:
  void say(const std::string& s) {
    if (::write(tty_, s.data(), s.size()) < 0) stop_ = true;
  }

  std::optional<std::string> read_line() {
    std::string line;
    while (!stop_) {
      pollfd p{tty_, POLLIN, 0};
      int rc = ::poll(&p, 1, 200);
      if (rc <= 0) continue;
      char ch;
      auto n = ::read(tty_, &ch, 1);
      if (n <= 0) return std::nullopt;
      if (ch == '\n') return line;
      line += ch;
    }
    return std::nullopt;
  }

  void loop() {
    while (!stop_) {
      auto event = events_->next_event();
      if (!event) return;
      if (event->value("verb", "") != "ask-event") continue;
      const auto& ask = (*event)["payload"];
      auto path = ask.at("path").get<std::string>();
      say(fmt::format(
          "\nyolo: {} wants to {} {}\n"
          "  [a]llow once  [d]eny once  [A]llow subtree  [D]eny subtree  [h]ide > ",
          ask.value("process", "?"), ask.value("kind", "?"), display_path(path)));
      auto answer = read_line();
      if (!answer) return;
      json decision = {{"ask_id", ask.at("id")}, {"verdict", "deny"}};
      auto install = [&](const char* state, const std::string& at) {
        decision["install"] = {{"path", at}, {"state", state}, {"persist", false}};
      };
      auto subtree = [&]() -> std::string {
        std::string parent(parent_path(path));
        say(fmt::format("  subtree root [{}] > ", display_path(parent)));
        auto root = read_line().value_or("");
        return root.empty() ? parent : normalize_path(root);
      };
      try {
        if (*answer == "a") {
          decision["verdict"] = "allow";
        } else if (*answer == "A") {
          decision["verdict"] = "allow";
          install("allow", subtree());
        } else if (*answer == "D") {
          install("deny", subtree());
        } else if (*answer == "h") {
          install("hidden", path);
        }
        auto client = ControlClient::connect(socket_);
        auto reply = client.call("decision", decision);
        if (!reply.value("accepted", false)) say("  (already decided elsewhere)\n");
      } catch (const std::exception& e) {
        say(fmt::format("  decision failed: {}\n", e.what()));
      }
    }
  }

  std::string socket_;
  int tty_ = -1;
  std::optional<ControlClient> events_;
  std::thread thread_;
  std::atomic<bool> stop_{false};
};

std::string map_cwd(const std::string& base, const std::string& mnt) {
  std::error_code ec;
  auto cwd = fs::canonical(fs::current_path(), ec).string();
  if (ec) return mnt;
  auto norm = [](const std::string& p) { return normalize_path(p); };
  if (is_within(norm(cwd), norm(mnt))) return cwd;
  if (is_within(norm(cwd), norm(base))) {
    return (fs::path(mnt) / fs::relative(cwd, base)).lexically_normal().string();
  }
  return mnt;
}

int cmd_run(std::vector<std::string> command, bool no_snapshot) {
  if (!command.empty() && command.front() == "--") command.erase(command.begin());
  if (command.empty()) throw Failure("run needs a command");
  auto socket = locate_socket();
  auto client = ControlClient::connect(socket);
  auto state = client.call("state");
  auto before = diff_from_payload(client.call("diff"));
  if (!no_snapshot) {
    auto gen = state.at("generation").get<Generation>() + 1;
    client.call("snapshot", {{"name", fmt::format("pre:{}", gen)}});
  }
  auto dir = map_cwd(state.at("base").get<std::string>(),
                     state.at("mountpoint").get<std::string>());

  int status = 0;
  {
    Prompter prompter(socket);
    std::cout.flush();
    pid_t pid = ::fork();
    if (pid < 0) throw_errno("fork");
    if (pid == 0) {
      if (::chdir(dir.c_str()) != 0) {
        std::perror(("yolo: chdir " + dir).c_str());
        _exit(126);
      }
      std::vector<char*> argv;
      for (auto& a : command) argv.push_back(a.data());
      argv.push_back(nullptr);
      ::execvp(argv[0], argv.data());
      int err = errno;
      std::perror(("yolo: " + command[0]).c_str());
      _exit(err == ENOENT ? 127 : 126);
    }
    struct sigaction ignore {}, old_int {}, old_quit {};
    ignore.sa_handler = SIG_IGN;
    ::sigaction(SIGINT, &ignore, &old_int);
    ::sigaction(SIGQUIT, &ignore, &old_quit);
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    ::sigaction(SIGINT, &old_int, nullptr);
    ::sigaction(SIGQUIT, &old_quit, nullptr);
  }

  auto after = diff_from_payload(client.call("diff"));
  std::cout << render_change_summary(change_delta(before, after)) << std::flush;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return 1;
}

int cmd_bench(const std::string& suite, const std::string& csv, std::uint64_t seed,
              int reps, const std::string& workdir, std::uint64_t size,
              std::size_t samples) {
  BenchConfig c;
  c.seed = seed;
  c.reps = reps;
  c.workdir = workdir;
  if (size > 0) c.io_file_size = size;
  if (samples > 0) {
    c.meta_iterations = samples;
    c.snap_samples = samples;
  }
  c.progress = [](const std::string& m) { std::cerr << m << "\n"; };
  std::vector<BenchResult> results;
  auto want = [&](const char* s) { return suite == s || suite == "all"; };
  if (want("io")) results.push_back(bench_io(c));
  if (want("meta")) results.push_back(bench_meta(c));
  if (want("snap")) results.push_back(bench_snap(c));
  if (want("commit")) results.push_back(bench_commit(c));
  if (results.empty()) throw Failure("unknown suite " + suite);
  bool intact = true;
  for (const auto& r : results) {
    std::cout << render_summary(r);
    intact = intact && r.base_intact;
  }
  if (!csv.empty()) {
    std::ofstream out(csv);
    if (!out) throw Failure("cannot write " + csv);
    write_csv(out, results);
  }
  if (!intact) {
    std::cerr << "yolo: base tree changed during the run; numbers are void\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"yolo: stage, snapshot and review filesystem changes"};
  app.require_subcommand(1);
  spdlog::set_level(spdlog::level::warn);
  app.add_flag_callback("-v,--verbose", [] { spdlog::set_level(spdlog::level::debug); },
                        "Debug logging");
  app.add_option("--socket", socket_override, "Control socket (overrides discovery)");

  int exit_code = 0;

  auto* mount = app.add_subcommand("mount", "Mount a staged view of <base> at <mnt>");
  std::string base, mnt;
  bool foreground = false, no_permissions = false;
  int timeout = 0;
  mount->add_option("base", base)->required();
  mount->add_option("mnt", mnt)->required();
  mount->add_flag("--foreground", foreground, "Stay attached");
  mount->add_flag("--no-permissions", no_permissions, "Disable rule checks and asks");
  mount->add_option("--ask-timeout", timeout, "Seconds before an unanswered ask is denied");
  mount->callback([&] {
    exit_code = cmd_mount(base, mnt, foreground, no_permissions, timeout);
  });

  app.add_subcommand("unmount", "Stop the session daemon")->callback([&] {
    exit_code = cmd_unmount();
  });

  auto* run = app.add_subcommand("run", "Run a command inside the mount and print its changes");
  bool no_snapshot = false;
  run->add_flag("--no-snapshot", no_snapshot, "Skip the automatic pre:<n> snapshot");
  std::vector<std::string> wrapped;
  run->callback([&] { exit_code = cmd_run(wrapped, no_snapshot); });

  auto* diff = app.add_subcommand("diff", "Show staged changes");
  bool diff_json = false;
  diff->add_flag("--json", diff_json, "Print the control payload");
  diff->callback([&] {
    auto payload = connect().call("diff");
    std::cout << (diff_json ? payload.dump() + "\n" : render_diff(diff_from_payload(payload)));
  });

  auto* log = app.add_subcommand("log", "Show markers and segments");
  bool log_json = false;
  log->add_flag("--json", log_json, "Print the control payload");
  log->callback([&] {
    auto payload = connect().call("log");
    std::cout << (log_json ? payload.dump() + "\n" : render_log(payload));
  });

  auto* status = app.add_subcommand("status", "Show session state");
  status->callback([&] { std::cout << connect().call("state").dump(2) << "\n"; });

  auto* snapshot = app.add_subcommand("snapshot", "Record a snapshot marker");
  std::string snap_name;
  snapshot->add_option("name", snap_name)->required();
  snapshot->callback([&] {
    auto r = connect().call("snapshot", {{"name", snap_name}});
    std::cout << r.at("generation").get<Generation>() << "\n";
  });

  auto* travel = app.add_subcommand("travel", "Return to a generation or named snapshot");
  std::string target, label;
  travel->add_option("target", target)->required();
  travel->add_option("--as", label, "Label for the travel marker");
  travel->callback([&] {
    json payload = {{"target", target}};
    if (!label.empty()) payload["label"] = label;
    auto r = connect().call("travel", payload);
    std::cout << r.at("generation").get<Generation>() << "\n";
  });

  app.add_subcommand("commit", "Apply staged changes to the base")->callback([&] {
    auto r = connect().call("commit");
    std::cout << fmt::format("applied {} record(s), moved {} file(s), {} byte(s)\n",
                             r.at("applied").get<std::size_t>(),
                             r.at("files_moved").get<std::size_t>(),
                             r.at("bytes").get<std::uint64_t>());
  });

  app.add_subcommand("abort", "Discard all staged changes")->callback([&] {
    connect().call("abort");
  });

  auto* rule = app.add_subcommand("rule", "Manage permission rules");
  rule->require_subcommand(1);
  auto* rule_add = rule->add_subcommand("add", "Set the rule for a path");
  std::string rule_path, rule_state;
  bool persist = false;
  rule_add->add_option("path", rule_path)->required();
  rule_add->add_option("state", rule_state, "allow|read_only|deny|hidden|ask")->required();
  rule_add->add_flag("--persist", persist, "Also append to yolo.toml");
  rule_add->callback([&] {
    connect().call("rule-add", {{"path", rule_path}, {"state", rule_state}, {"persist", persist}});
  });
  auto* rule_remove = rule->add_subcommand("remove", "Drop the rule for a path");
  rule_remove->add_option("path", rule_path)->required();
  rule_remove->callback([&] { connect().call("rule-remove", {{"path", rule_path}}); });
  auto* rule_list = rule->add_subcommand("list", "List rules");
  bool rules_json = false;
  rule_list->add_flag("--json", rules_json, "Print the control payload");
  rule_list->callback([&] {
    auto payload = connect().call("rule-list");
    std::cout << (rules_json ? payload.dump() + "\n" : render_rules(payload));
  });

  auto* serve = app.add_subcommand("serve", "HTTP and event-stream bridge for the review console");
  std::string listen;
  serve->add_option("--listen", listen, "host:port (default from yolo.toml, else 127.0.0.1:7878)");
  serve->callback([&] {
    auto socket = locate_socket();
    if (listen.empty()) {
      auto state = ControlClient::connect(socket).call("state");
      auto config = state.at("base").get<std::string>() + "/yolo.toml";
      if (fs::exists(config)) {
        listen = load_config(config).console_listen.value_or("");
      }
    }
    auto [host, port] = HttpShim::parse_listen(listen.empty() ? "127.0.0.1:7878" : listen);
    HttpShim shim(socket);
    std::cerr << fmt::format("serving on http://{}:{}\n", host, port);
    shim.run(host, port);
  });

  auto* bench = app.add_subcommand("bench", "Run a benchmark suite");
  std::string suite, csv, workdir = "/tmp/yolo-bench";
  std::uint64_t seed = 1, size = 0;
  int reps = 5;
  std::size_t samples = 0;
  bench->add_option("suite", suite, "io|meta|snap|commit|all")->required();
  bench->add_option("--csv", csv, "Write rows to this file");
  bench->add_option("--seed", seed, "RNG seed");
  bench->add_option("--reps", reps, "Repetitions per cell")->check(CLI::Range(1, 1000));
  bench->add_option("--workdir", workdir, "Scratch directory");
  bench->add_option("--size", size, "io file size in bytes");
  bench->add_option("--samples", samples, "meta iterations / snap samples");
  bench->callback([&] {
    exit_code = cmd_bench(suite, csv, seed, reps, workdir, size, samples);
  });

  // The wrapped command is split off by hand so its own flags never reach
  // the option parser.
  std::vector<std::string> args(argv + 1, argv + argc);
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--socket") {
      ++i;
      continue;
    }
    if (args[i] != "run") continue;
    std::size_t j = i + 1;
    while (j < args.size() && (args[j] == "--no-snapshot" || args[j] == "-h" ||
                               args[j] == "--help")) {
      ++j;
    }
    if (j < args.size() && args[j] == "--") ++j;
    wrapped.assign(args.begin() + static_cast<std::ptrdiff_t>(j), args.end());
    args.resize(j);
    if (!args.empty() && args.back() == "--") args.pop_back();
    break;
  }
  std::reverse(args.begin(), args.end());

  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ControlError& e) {
    std::cerr << "yolo: " << e.what();
    if (e.detail().contains("index")) {
      std::cerr << fmt::format(" (record {}, {} applied)", e.detail()["index"].dump(),
                               e.detail()["applied"].dump());
    }
    std::cerr << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "yolo: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
