#include <fcntl.h>
#include <gtest/gtest.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cstring>
#include <future>

#include "harness.hpp"

namespace yolo {
namespace {

using test::MountedSession;

std::string error_code(ControlClient& c, const std::string& verb,
                       const json& payload = json::object()) {
  auto r = c.call_raw(verb, payload);
  if (r.value("ok", false)) return "";
  return r["error"].value("code", "?");
}

TEST(Control, SessionVerbs) {
  MountedSession m;
  auto c = ControlClient::connect(m.daemon().socket_path());

  auto state = c.call("state");
  EXPECT_EQ(state["generation"], 0);
  EXPECT_EQ(state["mountpoint"], m.mnt());
  EXPECT_EQ(state["pending"], json::array());

  test::write_file(m.at("a"), "1");
  EXPECT_EQ(c.call("snapshot", {{"name", "one"}})["generation"], 1);
  test::write_file(m.at("b"), "2");
  auto diff = c.call("diff");
  ASSERT_EQ(diff["entries"].size(), 2u);
  EXPECT_EQ(diff["entries"][1]["path"], "b");
  EXPECT_EQ(diff["entries"][1]["kind"], "created");

  EXPECT_EQ(c.call("travel", {{"target", "one"}})["generation"], 2);
  EXPECT_EQ(c.call("travel", {{"target", 0}, {"label", "start"}})["generation"], 3);
  auto log = c.call("log");
  EXPECT_EQ(log["generation"], 3);
  EXPECT_EQ(log["markers"][2]["name"], "start");
  EXPECT_EQ(log["markers"][2]["target"], 0);
  EXPECT_EQ(c.call("diff")["entries"].size(), 0u);

  c.call("travel", {{"target", "one"}});
  auto commit = c.call("commit");
  EXPECT_EQ(commit["applied"], 1);
  EXPECT_EQ(test::read_file(m.in_base("a")), "1");
  EXPECT_FALSE(std::filesystem::exists(m.in_base("b")));
  EXPECT_EQ(c.call("state")["generation"], 0);

  test::write_file(m.at("c"), "3");
  c.call("abort");
  EXPECT_FALSE(std::filesystem::exists(m.at("c")));
}

TEST(Control, ErrorsAreStructured) {
  MountedSession m;
  auto c = ControlClient::connect(m.daemon().socket_path());
  EXPECT_EQ(error_code(c, "frobnicate"), "unknown-verb");
  EXPECT_EQ(error_code(c, "travel", {{"target", 5}}), "invalid-target");
  EXPECT_EQ(error_code(c, "travel", {{"target", "nowhere"}}), "invalid-target");
  EXPECT_EQ(error_code(c, "snapshot"), "bad-request");
  EXPECT_EQ(error_code(c, "rule-add", {{"path", "a"}, {"state", "maybe"}}), "bad-request");
  EXPECT_EQ(error_code(c, "rule-add", {{"path", "../x"}, {"state", "allow"}}), "bad-request");
  EXPECT_EQ(error_code(c, "decision", {{"ask_id", 1}, {"verdict", "perhaps"}}), "bad-request");
  EXPECT_EQ(error_code(c, "rule-add", {{"path", "a"}, {"state", "allow"}, {"persist", true}}),
            "config");
  EXPECT_THROW(c.call("travel", {{"target", 9}}), ControlError);
  // The connection survives errors.
  EXPECT_EQ(c.call("state")["generation"], 0);
}

TEST(Control, ResponsesMatchRequestIds) {
  MountedSession m;
  auto fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::strncpy(addr.sun_path, m.daemon().socket_path().c_str(), sizeof addr.sun_path - 1);
  ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  write_frame(fd, make_request(41, "state", json::object()));
  write_frame(fd, make_request(42, "nope", json::object()));
  auto a = read_frame(fd);
  auto b = read_frame(fd);
  ASSERT_TRUE(a && b);
  EXPECT_EQ((*a)["id"], 41);
  EXPECT_EQ((*a)["ok"], true);
  EXPECT_EQ((*b)["id"], 42);
  EXPECT_EQ((*b)["ok"], false);
  ::close(fd);
}

TEST(Control, RuleVerbs) {
  MountedSession m;
  auto c = ControlClient::connect(m.daemon().socket_path());
  auto v1 = c.call("rule-add", {{"path", "/secrets/"}, {"state", "hidden"}})["version"];
  auto v2 = c.call("rule-remove", {{"path", "nothing"}})["version"];
  EXPECT_GT(v2.get<int>(), v1.get<int>());
  auto rules = c.call("rule-list")["rules"];
  ASSERT_EQ(rules.size(), 2u);
  EXPECT_EQ(rules[1], (json{{"path", "secrets"}, {"state", "hidden"}}));
  ::mkdir(m.in_base("secrets").c_str(), 0755);
  EXPECT_FALSE(std::filesystem::exists(m.at("secrets")));
  c.call("rule-remove", {{"path", "secrets"}});
  EXPECT_TRUE(std::filesystem::exists(m.at("secrets")));
}

TEST(Control, AskRoundTripFirstDecisionWins) {
  MountedSession::Options o;
  o.allow_all = false;
  o.populate = [](const std::string& base) { test::write_file(base + "/f", "data"); };
  MountedSession m(o);
  auto watcher = ControlClient::connect(m.daemon().socket_path());
  auto other = ControlClient::connect(m.daemon().socket_path());
  EXPECT_EQ(watcher.call("subscribe")["pending"], json::array());
  other.call("subscribe");

  auto reader = std::async(std::launch::async, [&] { return test::read_file(m.at("f")); });
  auto ask = watcher.next_event();
  ASSERT_TRUE(ask);
  EXPECT_EQ((*ask)["verb"], "ask-event");
  const auto& p = (*ask)["payload"];
  EXPECT_EQ(p["path"], "f");
  // The kernel looks the name up before opening it.
  EXPECT_EQ(p["kind"], "stat");
  auto id = p["id"];

  auto state = watcher.call("state");
  EXPECT_EQ(state["pending"].size(), 1u);
  EXPECT_EQ(error_code(watcher, "commit"), "busy");

  json install = {{"path", "f"}, {"state", "allow"}};
  EXPECT_EQ(watcher.call("decision", {{"ask_id", id}, {"verdict", "allow"}, {"install", install}})
                ["accepted"],
            true);
  EXPECT_EQ(other.call("decision", {{"ask_id", id}, {"verdict", "deny"}})["accepted"], false);
  EXPECT_EQ(reader.get(), "data");

  for (auto* client : {&watcher, &other}) {
    std::optional<json> decision;
    do {
      decision = client->next_event();
    } while (decision && (*decision)["verb"] != "decision");
    ASSERT_TRUE(decision);
    EXPECT_EQ((*decision)["payload"]["id"], id);
    EXPECT_EQ((*decision)["payload"]["verdict"], "allow");
    EXPECT_EQ((*decision)["payload"]["install"]["path"], "f");
  }
}

TEST(Control, UnmountStopsWait) {
  MountedSession m;
  auto waiter = std::async(std::launch::async, [&] { m.daemon().wait(); });
  auto c = ControlClient::connect(m.daemon().socket_path());
  c.call("unmount");
  EXPECT_EQ(waiter.wait_for(std::chrono::seconds(5)), std::future_status::ready);
}

TEST(Control, SocketDiscovery) {
  MountedSession m;
  ::setenv("YOLO_SOCKET", "/tmp/explicit.sock", 1);
  EXPECT_EQ(discover_socket(m.mnt()), "/tmp/explicit.sock");
  ::unsetenv("YOLO_SOCKET");
  auto found = discover_socket(m.mnt());
  ASSERT_TRUE(found);
  EXPECT_EQ(*found, m.daemon().socket_path());
  bool listed = false;
  for (const auto& [mnt, src] : yolo_mounts()) listed |= mnt == m.mnt();
  EXPECT_TRUE(listed);
}

}  // namespace
}  // namespace yolo
