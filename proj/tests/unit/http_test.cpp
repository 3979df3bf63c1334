#include <gtest/gtest.h>

#include <future>

#include "harness.hpp"
#include "httplib.h"
#include "yolo/http_shim.hpp"

namespace yolo {
namespace {

using test::MountedSession;

struct Served {
  explicit Served(MountedSession& m) : shim(m.daemon().socket_path()) {
    port = shim.start("127.0.0.1", 0);
  }
  httplib::Client client() {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    return c;
  }
  HttpShim shim;
  int port = 0;
};

json post(httplib::Client& c, const std::string& path, const json& body, int want = 200) {
  auto r = c.Post(path, body.dump(), "application/json");
  EXPECT_TRUE(r);
  if (!r) return json();
  EXPECT_EQ(r->status, want) << path << " " << r->body;
  return json::parse(r->body);
}

json get(httplib::Client& c, const std::string& path) {
  auto r = c.Get(path);
  EXPECT_TRUE(r);
  if (!r) return json();
  EXPECT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
  return json::parse(r->body);
}

TEST(Http, ParseListen) {
  EXPECT_EQ(HttpShim::parse_listen("0.0.0.0:9000"), (std::pair<std::string, int>{"0.0.0.0", 9000}));
  EXPECT_EQ(HttpShim::parse_listen("7878"), (std::pair<std::string, int>{"127.0.0.1", 7878}));
  EXPECT_EQ(HttpShim::parse_listen(":81"), (std::pair<std::string, int>{"127.0.0.1", 81}));
}

TEST(Http, ForwardsVerbs) {
  MountedSession m;
  Served s(m);
  auto c = s.client();
  EXPECT_EQ(get(c, "/api/state")["generation"], 0);
  test::write_file(m.at("f"), "x");
  EXPECT_EQ(post(c, "/api/snapshot", {{"name", "one"}})["generation"], 1);
  EXPECT_EQ(get(c, "/api/diff")["entries"][0]["path"], "f");
  EXPECT_EQ(get(c, "/api/log")["markers"][0]["name"], "one");
  post(c, "/api/rule-add", {{"path", "hide"}, {"state", "hidden"}});
  EXPECT_EQ(get(c, "/api/rules")["rules"].size(), 2u);
  post(c, "/api/rule-remove", {{"path", "hide"}});
  EXPECT_EQ(post(c, "/api/travel", {{"target", 0}})["generation"], 2);
  EXPECT_FALSE(std::filesystem::exists(m.at("f")));
  EXPECT_EQ(post(c, "/api/commit", json::object())["applied"], 0);
  post(c, "/api/abort", json::object());
}

TEST(Http, ErrorStatuses) {
  MountedSession m;
  Served s(m);
  auto c = s.client();
  EXPECT_EQ(post(c, "/api/travel", {{"target", 7}}, 400)["code"], "invalid-target");
  EXPECT_EQ(post(c, "/api/snapshot", json::object(), 400)["code"], "bad-request");
  auto r = c.Post("/api/travel", "not json", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(c.Get("/api/nothing")->status, 404);

  HttpShim orphan("/tmp/yolo-no-such.sock");
  int port = orphan.start("127.0.0.1", 0);
  httplib::Client oc("127.0.0.1", port);
  auto lost = oc.Get("/api/state");
  ASSERT_TRUE(lost);
  EXPECT_EQ(lost->status, 502);
}

TEST(Http, EventStreamCarriesAsksAndDecisions) {
  MountedSession::Options o;
  o.allow_all = false;
  o.populate = [](const std::string& base) { test::write_file(base + "/f", "data"); };
  MountedSession m(o);
  Served s(m);

  std::promise<json> ask_seen;
  std::vector<json> frames;
  auto stream = std::async(std::launch::async, [&] {
    auto c = s.client();
    std::string buffer;
    bool ask_sent = false;
    c.Get("/api/events", [&](const char* data, std::size_t len) {
      buffer.append(data, len);
      std::size_t end;
      while ((end = buffer.find("\n\n")) != std::string::npos) {
        auto block = buffer.substr(0, end);
        buffer.erase(0, end + 2);
        if (block.rfind("data: ", 0) != 0) continue;
        auto frame = json::parse(block.substr(6));
        frames.push_back(frame);
        if (frame["verb"] == "ask-event" && !ask_sent) {
          ask_sent = true;
          ask_seen.set_value(frame["payload"]);
        }
        if (frame["verb"] == "decision") return false;
      }
      return true;
    });
  });

  // Wait for the subscription before triggering the ask.
  for (int i = 0; i < 200 && m.daemon().broker().subscribers() == 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  auto reader = std::async(std::launch::async, [&] { return test::read_file(m.at("f")); });
  auto seen = ask_seen.get_future();
  ASSERT_EQ(seen.wait_for(std::chrono::seconds(10)), std::future_status::ready);
  auto ask = seen.get();
  EXPECT_EQ(ask["path"], "f");

  auto c = s.client();
  auto reply = post(c, "/api/decision",
                    {{"ask_id", ask["id"]},
                     {"verdict", "allow"},
                     {"install", {{"path", "f"}, {"state", "allow"}}}});
  EXPECT_EQ(reply["accepted"], true);
  EXPECT_EQ(reader.get(), "data");
  ASSERT_EQ(stream.wait_for(std::chrono::seconds(10)), std::future_status::ready);
  stream.get();
  ASSERT_GE(frames.size(), 3u);
  EXPECT_EQ(frames.front()["verb"], "subscribed");
  EXPECT_EQ(frames.back()["payload"]["id"], ask["id"]);
}

}  // namespace
}  // namespace yolo
