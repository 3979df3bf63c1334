#include <gtest/gtest.h>

#include "tree.hpp"
#include "yolo/config.hpp"

namespace yolo {
namespace {

TEST(Config, ParsesFullSchema) {
  auto c = parse_config(R"(# session
base = "/home/me/proj"
extra_roots = ["/opt/data", '/srv/x']
ask_timeout = 30

[[rule]]
path = "/"
state = "allow"

[[rule]]
path = "secrets"   # trailing comment
state = "hidden"

[[rule]]
path = "docs"
state = "read_only"

[console]
listen = "127.0.0.1:9000"
)");
  EXPECT_EQ(c.base, "/home/me/proj");
  EXPECT_EQ(c.extra_roots, (std::vector<std::string>{"/opt/data", "/srv/x"}));
  EXPECT_EQ(c.ask_timeout_seconds, 30);
  ASSERT_EQ(c.rules.size(), 3u);
  EXPECT_EQ(c.rules[0], (RuleConfig{"", RuleState::kAllow}));
  EXPECT_EQ(c.rules[1], (RuleConfig{"secrets", RuleState::kHidden}));
  EXPECT_EQ(c.rules[2].state, RuleState::kReadOnly);
  EXPECT_EQ(c.console_listen, "127.0.0.1:9000");
}

TEST(Config, Defaults) {
  auto c = parse_config("");
  EXPECT_EQ(c.ask_timeout_seconds, 120);
  EXPECT_TRUE(c.rules.empty());
  EXPECT_FALSE(c.console_listen);
}

TEST(Config, RejectsBadInput) {
  auto line_of = [](const char* text) -> std::size_t {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("colour = \"red\"\n"), 1u);
  EXPECT_EQ(line_of("\n[[rule]]\npath = \"a\"\nstate = \"maybe\"\n"), 4u);
  EXPECT_NE(line_of("[[rule]]\npath = \"a\"\n"), 0u);
  EXPECT_NE(line_of("base = \"unterminated\n"), 0u);
  EXPECT_NE(line_of("[[rule]]\npath = \"../up\"\nstate = \"deny\"\n"), 0u);
  EXPECT_NE(line_of("[server]\n"), 0u);
}

TEST(Config, AppendRuleRoundTrips) {
  test::TempDir dir;
  auto path = dir / "yolo.toml";
  test::write_file(path, "ask_timeout = 5\n");
  append_rule(path, {"data", RuleState::kAllow});
  append_rule(path, {"odd \"name\"", RuleState::kDeny});
  auto c = load_config(path);
  EXPECT_EQ(c.ask_timeout_seconds, 5);
  ASSERT_EQ(c.rules.size(), 2u);
  EXPECT_EQ(c.rules[1].path, "odd \"name\"");

  auto fresh = dir / "new.toml";
  append_rule(fresh, {"x", RuleState::kAsk});
  EXPECT_EQ(load_config(fresh).rules.size(), 1u);
  EXPECT_EQ(quote_toml("a\\b"), "\"a\\\\b\"");
}

}  // namespace
}  // namespace yolo
