#include <fcntl.h>
#include <gtest/gtest.h>
#include <sys/stat.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <future>

#include "harness.hpp"
#include "yolo/file_store.hpp"

namespace yolo {
namespace {

using test::MountedSession;

int err_of(int rc) { return rc == 0 ? 0 : errno; }

int open_err(const std::string& path, int flags) {
  int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) return errno;
  ::close(fd);
  return 0;
}

void append(const std::string& path, const std::string& data) {
  int fd = ::open(path.c_str(), O_WRONLY | O_APPEND);
  ASSERT_GE(fd, 0) << path;
  ASSERT_EQ(::write(fd, data.data(), data.size()), static_cast<ssize_t>(data.size()));
  ::close(fd);
}

std::string journal_text(MountedSession& m) {
  return test::read_file(m.session().state_dir_path() + "/journal");
}

MountedSession::Options trace_base() {
  MountedSession::Options o;
  o.populate = [](const std::string& base) {
    test::write_tree(base, {{"d1", {test::Kind::kDir, ""}},
                            {"d1/x", {test::Kind::kFile, "x0\n"}},
                            {"d1/y", {test::Kind::kFile, "y0\n"}}});
  };
  return o;
}

TEST(Mount, GoldenStagingTrace) {
  MountedSession m(trace_base());
  const auto base_before = test::walk_tree(m.base());
  auto columns = [&] {
    std::shared_lock lock(m.session().mutex());
    return test::override_columns(m.session().tree());
  };

  // echo > d1/x
  test::write_file(m.at("d1/x"), "\n");
  EXPECT_EQ(columns()["d1/x"], "ino 1");
  // mv d1/y d1/x
  ASSERT_EQ(err_of(::rename(m.at("d1/y").c_str(), m.at("d1/x").c_str())), 0);
  EXPECT_EQ(columns()["d1/x"], "base d1/y");
  EXPECT_EQ(columns()["d1/y"], "tomb");
  // mkdir d3
  ASSERT_EQ(err_of(::mkdir(m.at("d3").c_str(), 0755)), 0);
  EXPECT_EQ(columns()["d3"], "ino 2");
  // mv d1 d3/d2
  ASSERT_EQ(err_of(::rename(m.at("d1").c_str(), m.at("d3/d2").c_str())), 0);
  // echo >> d3/d2/x
  append(m.at("d3/d2/x"), "more\n");

  EXPECT_EQ(columns(), (std::map<std::string, std::string>{{"d1", "tomb"},
                                                          {"d3", "ino 2"},
                                                          {"d3/d2", "base d1"},
                                                          {"d3/d2/x", "ino 3"},
                                                          {"d3/d2/y", "tomb"}}));
  EXPECT_EQ(journal_text(m),
            "S\td1/x\t1\nR\td1/y\td1/x\nS\td3\t2\nR\td1\td3/d2\nS\td3/d2/x\t3\n");
  EXPECT_EQ(test::list_names(m.mnt()), (std::vector<std::string>{"d3"}));
  EXPECT_EQ(test::list_names(m.at("d3/d2")), (std::vector<std::string>{"x"}));
  EXPECT_EQ(test::read_file(m.at("d3/d2/x")), "y0\nmore\n");
  EXPECT_EQ(test::walk_tree(m.base()), base_before);

  m.session().commit();
  EXPECT_EQ(test::walk_tree(m.base()),
            (test::Tree{{"d3", {test::Kind::kDir, ""}},
                        {"d3/d2", {test::Kind::kDir, ""}},
                        {"d3/d2/x", {test::Kind::kFile, "y0\nmore\n"}}}));
}

TEST(Mount, StateDirIsInvisible) {
  MountedSession m;
  test::write_file(m.at("f"), "x");
  EXPECT_EQ(test::list_names(m.mnt()), (std::vector<std::string>{"f"}));
  struct stat st;
  EXPECT_EQ(err_of(::stat(m.at(".yolo").c_str(), &st)), ENOENT);
  EXPECT_NE(open_err(m.at(".yolo/journal"), O_RDONLY), 0);
  EXPECT_NE(err_of(::mkdir(m.at(".yolo").c_str(), 0755)), 0);
}

TEST(Mount, RuleKindsThroughKernel) {
  MountedSession::Options o;
  o.allow_all = false;
  o.populate = [](const std::string& base) {
    test::write_tree(base, {{"secrets", {test::Kind::kDir, ""}},
                            {"secrets/key", {test::Kind::kFile, "k"}},
                            {"docs", {test::Kind::kDir, ""}},
                            {"docs/a", {test::Kind::kFile, "a"}},
                            {"locked", {test::Kind::kFile, "l"}},
                            {"open", {test::Kind::kFile, "o"}}});
  };
  MountedSession m(o);
  auto& perms = m.session().permissions();
  perms.add_rule("", RuleState::kAllow);
  perms.add_rule("secrets", RuleState::kHidden);
  perms.add_rule("docs", RuleState::kReadOnly);
  perms.add_rule("locked", RuleState::kDeny);

  EXPECT_EQ(test::list_names(m.mnt()),
            (std::vector<std::string>{"docs", "locked", "open"}));
  struct stat st;
  EXPECT_EQ(err_of(::stat(m.at("secrets").c_str(), &st)), ENOENT);
  EXPECT_EQ(err_of(::stat(m.at("secrets/key").c_str(), &st)), ENOENT);
  EXPECT_EQ(open_err(m.at("secrets/key"), O_RDONLY), ENOENT);
  EXPECT_EQ(err_of(::mkdir(m.at("secrets").c_str(), 0755)), ENOENT);

  EXPECT_EQ(test::read_file(m.at("docs/a")), "a");
  EXPECT_EQ(test::list_names(m.at("docs")), (std::vector<std::string>{"a"}));
  EXPECT_EQ(open_err(m.at("docs/a"), O_WRONLY), EACCES);
  EXPECT_EQ(open_err(m.at("docs/new"), O_WRONLY | O_CREAT), EACCES);
  EXPECT_EQ(err_of(::unlink(m.at("docs/a").c_str())), EACCES);
  EXPECT_EQ(err_of(::rename(m.at("docs/a").c_str(), m.at("moved").c_str())), EACCES);

  EXPECT_EQ(err_of(::stat(m.at("locked").c_str(), &st)), 0);
  EXPECT_EQ(open_err(m.at("locked"), O_RDONLY), EACCES);
  EXPECT_EQ(err_of(::unlink(m.at("locked").c_str())), EACCES);

  EXPECT_EQ(open_err(m.at("open"), O_WRONLY), 0);
  auto diff = m.session().diff();
  ASSERT_EQ(diff.size(), 1u);
  EXPECT_EQ(diff[0].path, "open");
  EXPECT_EQ(diff[0].kind, ChangeKind::kModified);
}

TEST(Mount, UnansweredAskIsDenied) {
  MountedSession::Options o;
  o.allow_all = false;
  o.ask_timeout = std::chrono::milliseconds(300);
  o.populate = [](const std::string& base) { test::write_file(base + "/f", "f"); };
  MountedSession m(o);
  auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(open_err(m.at("f"), O_RDONLY), EACCES);
  auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_GE(elapsed, std::chrono::milliseconds(250));
  EXPECT_LT(elapsed, std::chrono::seconds(5));
  EXPECT_GE(m.daemon().broker().timed_out(), 1u);
  EXPECT_EQ(m.daemon().broker().pending(), 0u);
}

TEST(Mount, AnsweredAskInstallsRule) {
  MountedSession::Options o;
  o.allow_all = false;
  o.populate = [](const std::string& base) {
    ::mkdir((base + "/data").c_str(), 0755);
    test::write_file(base + "/data/a", "a");
    test::write_file(base + "/data/b", "b");
  };
  MountedSession m(o);
  auto& broker = m.daemon().broker();
  std::vector<std::future<void>> replies;
  std::mutex replies_mutex;
  std::vector<std::string> asked;
  broker.subscribe([&](const json& event) {
    if (event.value("type", "") != "ask") return;
    std::lock_guard lock(replies_mutex);
    asked.push_back(event["path"]);
    auto id = event["id"].get<std::uint64_t>();
    replies.push_back(std::async(std::launch::async, [&broker, id] {
      broker.decide(id, {Verdict::kAllow, RuleInstall{"", RuleState::kAllow, false}});
    }));
  });
  EXPECT_EQ(test::read_file(m.at("data/a")), "a");
  EXPECT_EQ(test::read_file(m.at("data/b")), "b");
  std::lock_guard lock(replies_mutex);
  EXPECT_EQ(asked.size(), 1u);
  EXPECT_EQ(m.session().permissions().effective("data/b"), RuleState::kAllow);
}

TEST(Mount, DirectoryRenameIsZeroCopy) {
  MountedSession::Options o;
  o.populate = [](const std::string& base) {
    ::mkdir((base + "/big").c_str(), 0755);
    for (int i = 0; i < 200; ++i) {
      test::write_file(base + "/big/f" + std::to_string(i), std::string(4096, 'z'));
    }
  };
  MountedSession m(o);
  auto allocations = m.session().store().allocation_count();
  ASSERT_EQ(err_of(::rename(m.at("big").c_str(), m.at("moved").c_str())), 0);
  EXPECT_EQ(m.session().store().allocation_count(), allocations);
  EXPECT_EQ(journal_text(m), "R\tbig\tmoved\n");
  EXPECT_EQ(test::list_names(m.at("moved")).size(), 200u);
  EXPECT_EQ(test::read_file(m.at("moved/f7")), std::string(4096, 'z'));
  EXPECT_TRUE(std::filesystem::exists(m.in_base("big/f7")));
}

TEST(Mount, BaseChangesOutsideMountAreVisible) {
  MountedSession m;
  test::write_file(m.in_base("late"), "v1");
  EXPECT_EQ(test::read_file(m.at("late")), "v1");
  test::write_file(m.in_base("late"), "v2!");
  EXPECT_EQ(test::read_file(m.at("late")), "v2!");
}

TEST(Mount, TravelThroughMount) {
  MountedSession m;
  test::write_file(m.at("a"), "1");
  m.session().snapshot("one");
  test::write_file(m.at("a"), "2");
  ::unlink(m.at("a").c_str());
  test::write_file(m.at("b"), "b");
  m.session().travel("one");
  EXPECT_EQ(test::list_names(m.mnt()), (std::vector<std::string>{"a"}));
  EXPECT_EQ(test::read_file(m.at("a")), "1");
  m.session().abort();
  EXPECT_TRUE(test::list_names(m.mnt()).empty());
}

}  // namespace
}  // namespace yolo
