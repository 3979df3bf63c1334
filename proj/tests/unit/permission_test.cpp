#include <gtest/gtest.h>

#include <array>
#include <atomic>
#include <thread>

#include "perm_oracle.hpp"

namespace yolo {
namespace {

using test::kind_table;
using test::kLattice;
using test::kStates;

TEST(Permission, ExhaustiveRuleMapsMatchOracle) {
  int maps = 0;
  for (int code = 0; code < 625; ++code) {
    RuleTree tree;
    auto rules = test::rule_map(code);
    for (const auto& [p, s] : rules) tree.add(p, s);
    ++maps;
    for (const auto& path : kLattice) {
      auto want = test::brute_force_state(rules, path);
      ASSERT_EQ(resolve_effective(tree, path), want) << "map " << code << " path " << path;
      for (auto k : test::kKinds) {
        ASSERT_EQ(check(tree, path, k), kind_table(want, k));
      }
      CachedPermission stale{RuleState::kAsk, tree.version() - 1};
      ASSERT_EQ(revalidate(stale, path, tree).state, want);
    }
  }
  EXPECT_EQ(maps, 625);
}

TEST(Permission, ResolutionExamples) {
  RuleTree t;
  EXPECT_EQ(resolve_effective(t, "any/path"), RuleState::kAsk);
  t.add("a", RuleState::kDeny);
  t.add("a/b", RuleState::kAllow);
  t.add("a/b/c", RuleState::kDeny);
  EXPECT_EQ(resolve_effective(t, "a/b/d"), RuleState::kAllow);
  EXPECT_EQ(resolve_effective(t, "a/b/c/x"), RuleState::kDeny);
  EXPECT_EQ(resolve_effective(t, "a/z"), RuleState::kDeny);

  RuleTree h;
  h.add("a", RuleState::kHidden);
  h.add("a/b", RuleState::kAllow);
  EXPECT_EQ(resolve_effective(h, "a/b"), RuleState::kHidden);

  RuleTree ro;
  ro.add("proj", RuleState::kReadOnly);
  EXPECT_EQ(check(ro, "proj/a", AccessKind::kMutate), CheckOutcome::kDenied);
  EXPECT_EQ(check(ro, "proj/a", AccessKind::kWrite), CheckOutcome::kDenied);
  EXPECT_EQ(check(ro, "proj/a", AccessKind::kRead), CheckOutcome::kAllowed);
  EXPECT_EQ(check(ro, "proj/a", AccessKind::kList), CheckOutcome::kAllowed);
}

TEST(Permission, RootRuleGovernsEverything) {
  RuleTree t;
  t.add("", RuleState::kAllow);
  EXPECT_EQ(resolve_effective(t, "proj/src/main"), RuleState::kAllow);
  EXPECT_EQ(resolve_effective(t, ""), RuleState::kAllow);
  t.remove("");
  EXPECT_EQ(resolve_effective(t, "proj"), RuleState::kAsk);
}

TEST(Permission, VersionLaw) {
  RuleTree t;
  for (int i = 0; i < 1000; ++i) t.add("p" + std::to_string(i % 10), RuleState::kAllow);
  EXPECT_EQ(t.version(), 1000u);
  t.remove("not-there");
  EXPECT_EQ(t.version(), 1001u);
  EXPECT_EQ(t.size(), 10u);
}

TEST(Permission, RevalidateProbesAtMostDepth) {
  RuleTree t;
  t.add("a", RuleState::kDeny);
  std::string deep = "a/b/c/d/e/f/g/h/i/j";
  std::size_t probes = 0;
  auto fresh = revalidate({RuleState::kAllow, 0}, deep, t, &probes);
  EXPECT_EQ(fresh, (CachedPermission{RuleState::kDeny, t.version()}));
  EXPECT_LE(probes, 10u);

  auto same = revalidate({RuleState::kDeny, 0}, "a/b/c", t);
  EXPECT_EQ(same.version, t.version());
}

TEST(Permission, ParseAndPrint) {
  for (auto s : kStates) EXPECT_EQ(parse_rule_state(to_string(s)), s);
  EXPECT_EQ(parse_rule_state("read-only"), RuleState::kReadOnly);
  EXPECT_EQ(parse_rule_state("bogus"), std::nullopt);
  EXPECT_EQ(parse_access_kind(to_string(AccessKind::kMutate)), AccessKind::kMutate);
}

class ScriptedAsker : public Asker {
 public:
  Decision next;
  std::atomic<int> asks{0};
  std::string last_path;
  Decision ask(const AskRequest& r) override {
    ++asks;
    last_path = r.path;
    return next;
  }
};

TEST(PermissionEngine, DenyOnceAsksAgain) {
  PermissionEngine engine;
  ScriptedAsker asker;
  engine.set_asker(&asker);
  asker.next = {Verdict::kDeny, std::nullopt};
  EXPECT_EQ(engine.authorize("secrets/key", AccessKind::kRead), CheckOutcome::kDenied);
  EXPECT_EQ(engine.authorize("secrets/key", AccessKind::kRead), CheckOutcome::kDenied);
  EXPECT_EQ(asker.asks.load(), 2);
  EXPECT_EQ(asker.last_path, "secrets/key");
}

TEST(PermissionEngine, InstallCoversSubtree) {
  PermissionEngine engine;
  ScriptedAsker asker;
  engine.set_asker(&asker);
  std::vector<RuleInstall> installed;
  engine.on_install = [&](const RuleInstall& r) { installed.push_back(r); };
  asker.next = {Verdict::kAllow, RuleInstall{"data", RuleState::kAllow, true}};
  EXPECT_EQ(engine.authorize("data/a", AccessKind::kWrite), CheckOutcome::kAllowed);
  EXPECT_EQ(engine.authorize("data/b", AccessKind::kWrite), CheckOutcome::kAllowed);
  EXPECT_EQ(asker.asks.load(), 1);
  ASSERT_EQ(installed.size(), 1u);
  EXPECT_TRUE(installed[0].persist);
}

TEST(PermissionEngine, NoAskerDenies) {
  PermissionEngine engine;
  EXPECT_EQ(engine.authorize("x", AccessKind::kRead), CheckOutcome::kDenied);
  engine.set_enabled(false);
  EXPECT_FALSE(engine.enabled());
}

TEST(PermissionEngine, CacheSeesEveryMutation) {
  PermissionEngine engine;
  engine.add_rule("home", RuleState::kAllow);
  EXPECT_EQ(engine.check("home/.ssh/id", AccessKind::kRead), CheckOutcome::kAllowed);
  engine.add_rule("home/.ssh", RuleState::kDeny);
  EXPECT_EQ(engine.check("home/.ssh/id", AccessKind::kRead), CheckOutcome::kDenied);
  engine.remove_rule("home/.ssh");
  EXPECT_EQ(engine.check("home/.ssh/id", AccessKind::kRead), CheckOutcome::kAllowed);
  engine.remove_rule("home");
  EXPECT_EQ(engine.check("home/.ssh/id", AccessKind::kRead), CheckOutcome::kNeedsAsk);
}

TEST(PermissionEngine, ConcurrentChecksNeverSeeTornState) {
  PermissionEngine engine;
  engine.add_rule("p", RuleState::kAllow);
  std::atomic<bool> stop{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    while (!stop) {
      auto s = engine.effective("p/q/r");
      if (s != RuleState::kAllow && s != RuleState::kDeny) ++bad;
    }
  });
  for (int i = 0; i < 2000; ++i) {
    engine.add_rule("p", i % 2 ? RuleState::kAllow : RuleState::kDeny);
  }
  engine.add_rule("p", RuleState::kDeny);
  stop = true;
  reader.join();
  EXPECT_EQ(bad.load(), 0);
  EXPECT_EQ(engine.effective("p/q/r"), RuleState::kDeny);
}

}  // namespace
}  // namespace yolo
