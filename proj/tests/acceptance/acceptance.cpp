#include <fcntl.h>
#include <sys/mount.h>
#include <sys/stat.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "harness.hpp"
#include "perm_oracle.hpp"
#include "yolo/bench.hpp"
#include "yolo/fs_util.hpp"

namespace fs = std::filesystem;
using namespace yolo;
using namespace yolo::test;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
  void note(const std::string& what) {
    if (!pass) return;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

int errno_of(int rc) { return rc == 0 ? 0 : errno; }

int open_errno(const std::string& path, int flags) {
  int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) return errno;
  ::close(fd);
  return 0;
}

std::map<std::string, std::string> columns_of(Session& s) {
  std::shared_lock lock(s.mutex());
  return override_columns(s.tree());
}

std::string render_columns(const std::map<std::string, std::string>& c) {
  std::string out;
  for (const auto& [k, v] : c) out += k + "=" + v + " ";
  return out;
}

std::uint64_t store_bytes(Session& s) {
  std::uint64_t total = 0;
  auto files = s.state_dir_path() + "/files";
  if (!fs::exists(files)) return 0;
  for (const auto& e : fs::recursive_directory_iterator(files)) {
    struct stat st;
    if (::lstat(e.path().c_str(), &st) == 0 && !S_ISDIR(st.st_mode)) {
      total += static_cast<std::uint64_t>(st.st_size);
    }
  }
  return total;
}

Outcome golden_trace() {
  Outcome v;
  MountedSession::Options o;
  o.populate = [](const std::string& base) {
    write_tree(base, {{"d1", {Kind::kDir, ""}},
                      {"d1/x", {Kind::kFile, "x\n"}},
                      {"d1/y", {Kind::kFile, "y\n"}},
                      {"d1/z", {Kind::kFile, "z\n"}}});
  };
  MountedSession m(o);
  auto t0 = Clock::now();
  using Columns = std::map<std::string, std::string>;
  const std::vector<Columns> want = {
      {{"d1", "base d1"}, {"d1/x", "ino 1"}},
      {{"d1", "base d1"}, {"d1/x", "base d1/y"}, {"d1/y", "tomb"}},
      {{"d1", "base d1"}, {"d1/x", "base d1/y"}, {"d1/y", "tomb"}, {"d3", "ino 2"}},
      {{"d1", "tomb"}, {"d3", "ino 2"}, {"d3/d2", "base d1"}, {"d3/d2/x", "base d1/y"},
       {"d3/d2/y", "tomb"}},
      {{"d1", "tomb"}, {"d3", "ino 2"}, {"d3/d2", "base d1"}, {"d3/d2/x", "ino 3"},
       {"d3/d2/y", "tomb"}},
  };
  const std::vector<std::pair<std::string, std::function<bool()>>> steps = {
      {"echo > d1/x", [&] {
         int fd = ::open(m.at("d1/x").c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
         bool ok = fd >= 0 && ::write(fd, "\n", 1) == 1;
         if (fd >= 0) ::close(fd);
         return ok;
       }},
      {"mv d1/y d1/x", [&] { return ::rename(m.at("d1/y").c_str(), m.at("d1/x").c_str()) == 0; }},
      {"mkdir d3", [&] { return ::mkdir(m.at("d3").c_str(), 0755) == 0; }},
      {"mv d1 d3/d2", [&] { return ::rename(m.at("d1").c_str(), m.at("d3/d2").c_str()) == 0; }},
      {"echo >> d3/d2/x", [&] {
         int fd = ::open(m.at("d3/d2/x").c_str(), O_WRONLY | O_APPEND);
         bool ok = fd >= 0 && ::write(fd, "\n", 1) == 1;
         if (fd >= 0) ::close(fd);
         return ok;
       }},
  };
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!steps[i].second()) {
      v.fail(fmt::format("step {} ({}) failed: {}", i + 1, steps[i].first, std::strerror(errno)));
      return v;
    }
    auto got = columns_of(m.session());
    if (got != want[i]) {
      v.fail(fmt::format("column {}: got {}", i + 1, render_columns(got)));
    }
  }
  auto journal = read_file(m.session().state_dir_path() + "/journal");
  const std::string want_journal =
      "S\td1/x\t1\nR\td1/y\td1/x\nS\td3\t2\nR\td1\td3/d2\nS\td3/d2/x\t3\n";
  if (journal != want_journal) v.fail("journal differs: " + journal);
  double s = since(t0);
  if (s >= 1.0) v.fail(fmt::format("took {:.3f} s", s));
  v.note(fmt::format("5 columns and 5 records exact in {:.3f} s", s));
  return v;
}

Outcome branching_liveness() {
  Outcome v;
  auto t0 = Clock::now();
  std::vector<JournalRecord> records = {
      StageRecord{"s0", 1}, SnapshotMarker{"barn"},   StageRecord{"s1", 2},
      TravelMarker{"mall", 1}, StageRecord{"s2", 3}, TravelMarker{"clock", 2},
      StageRecord{"s3", 4}, SnapshotMarker{"roads"},
  };
  auto live = liveness(records, 4);
  if (live != LivenessSet{0, 1, 3}) {
    v.fail(fmt::format("journal liveness at 4 is {{{}}}", fmt::join(live, ",")));
  }

  // The same history driven through a live mount.
  MountedSession m;
  auto& s = m.session();
  write_file(m.at("s0"), "0");
  s.snapshot("barn");
  write_file(m.at("s1"), "1");
  s.travel("barn", "mall");
  write_file(m.at("s2"), "2");
  s.travel("2", "clock");
  write_file(m.at("s3"), "3");
  s.snapshot("roads");
  auto log = s.log();
  std::vector<Generation> seen_live, seen_dead;
  for (const auto& seg : log.segments) {
    if (seg.gen > 3) continue;
    (seg.live ? seen_live : seen_dead).push_back(seg.gen);
  }
  if (seen_live != std::vector<Generation>{0, 1, 3} || seen_dead != std::vector<Generation>{2}) {
    v.fail(fmt::format("mount: live {{{}}} dead {{{}}}", fmt::join(seen_live, ","),
                       fmt::join(seen_dead, ",")));
  }
  if (list_names(m.mnt()) != std::vector<std::string>{"s0", "s1", "s3"}) {
    v.fail("mounted view is not s0 s1 s3");
  }
  double secs = since(t0);
  if (secs >= 1.0) v.fail(fmt::format("took {:.3f} s", secs));
  v.note(fmt::format("live {{0,1,3}} dead {{2}} in {:.3f} s", secs));
  return v;
}

struct OracleRun {
  int sequences = 0;
  int equivalence_failures = 0;
  int abort_failures = 0;
  long ops = 0;
  long markers = 0;
  double seconds = 0;
  std::string first_equivalence;
  std::string first_abort;
};

OracleRun run_oracle(int count) {
  OracleRun r;
  MountedSession m;
  auto t0 = Clock::now();
  for (int seed = 1; seed <= count; ++seed) {
    auto out = run_oracle_sequence(m, static_cast<std::uint64_t>(seed));
    ++r.sequences;
    r.ops += out.ops;
    r.markers += out.markers;
    if (!out.equivalence.empty()) {
      if (r.equivalence_failures++ == 0) r.first_equivalence = out.equivalence;
    }
    if (!out.abort.empty()) {
      if (r.abort_failures++ == 0) r.first_abort = out.abort;
    }
  }
  r.seconds = since(t0);
  return r;
}

Outcome oracle_equivalence(const OracleRun& r) {
  Outcome v;
  if (r.equivalence_failures > 0) {
    v.fail(fmt::format("{} of {} sequences diverged; first: {}", r.equivalence_failures,
                       r.sequences, r.first_equivalence.substr(0, 400)));
  }
  if (r.seconds >= 600) v.fail(fmt::format("took {:.0f} s", r.seconds));
  v.note(fmt::format("{} sequences, {} ops, {} markers, 0 mismatches in {:.1f} s", r.sequences,
                     r.ops, r.markers, r.seconds));
  return v;
}

Outcome abort_safety(const OracleRun& r) {
  Outcome v;
  if (r.abort_failures > 0) {
    v.fail(fmt::format("{} of {} aborts changed the base; first: {}", r.abort_failures,
                       r.sequences, r.first_abort.substr(0, 400)));
  }
  v.note(fmt::format("{} aborts, base checksum unchanged", r.sequences));
  return v;
}

Outcome zero_copy_rename() {
  Outcome v;
  constexpr int kFiles = 1000;
  constexpr std::size_t kFileBytes = 1000000;  // 1000 x 1 MB = 1 GB
  MountedSession::Options o;
  o.populate = [&](const std::string& base) {
    fs::create_directory(base + "/big");
    std::string block(kFileBytes, 'r');
    for (int i = 0; i < kFiles; ++i) write_file(fmt::format("{}/big/f{:04}", base, i), block);
  };
  MountedSession m(o);
  auto& s = m.session();
  std::uint64_t total = 0;
  for (const auto& e : fs::directory_iterator(m.in_base("big"))) total += e.file_size();
  auto bytes_before = store_bytes(s);
  auto allocs_before = s.store().allocation_count();
  auto records_before = s.journal().read().records.size();

  auto t0 = Clock::now();
  int rc = errno_of(::rename(m.at("big").c_str(), m.at("moved").c_str()));
  double secs = since(t0);

  if (rc != 0) {
    v.fail(std::string("rename failed: ") + std::strerror(rc));
    return v;
  }
  auto added = store_bytes(s) - bytes_before;
  auto records = s.journal().read().records.size() - records_before;
  if (added != 0) v.fail(fmt::format("store grew by {} bytes", added));
  if (s.store().allocation_count() != allocs_before) v.fail("store allocated objects");
  if (records != 1) v.fail(fmt::format("{} journal records", records));
  if (secs >= 0.1) v.fail(fmt::format("rename took {:.1f} ms", secs * 1e3));
  if (list_names(m.at("moved")).size() != kFiles) v.fail("moved directory is incomplete");
  v.note(fmt::format("{} files, {} bytes: +0 store bytes, 1 record, {:.2f} ms", kFiles, total,
                     secs * 1e3));
  s.abort();
  return v;
}

Outcome permission_oracle() {
  Outcome v;
  int checked = 0;
  for (int code = 0; code < 625; ++code) {
    RuleTree tree;
    auto rules = rule_map(code);
    for (const auto& [p, st] : rules) tree.add(p, st);
    for (const auto& path : kLattice) {
      auto want = brute_force_state(rules, path);
      auto got = resolve_effective(tree, path);
      ++checked;
      if (got != want) {
        v.fail(fmt::format("map {} path {}: {} vs oracle {}", code, path, to_string(got),
                           to_string(want)));
        return v;
      }
      for (auto k : kKinds) {
        if (check(tree, path, k) != kind_table(want, k)) {
          v.fail(fmt::format("map {} path {} kind {}", code, path, to_string(k)));
          return v;
        }
      }
    }
  }

  {
    MountedSession::Options o;
    o.allow_all = false;
    o.populate = [](const std::string& base) {
      write_tree(base, {{"secrets", {Kind::kDir, ""}},
                        {"secrets/key", {Kind::kFile, "k"}},
                        {"docs", {Kind::kDir, ""}},
                        {"docs/a", {Kind::kFile, "a"}},
                        {"pub", {Kind::kFile, "p"}}});
    };
    MountedSession m(o);
    auto& perms = m.session().permissions();
    perms.add_rule("", RuleState::kAllow);
    perms.add_rule("secrets", RuleState::kHidden);
    perms.add_rule("docs", RuleState::kReadOnly);
    struct stat st;
    if (list_names(m.mnt()) != std::vector<std::string>{"docs", "pub"}) {
      v.fail("hidden entry listed by readdir");
    }
    if (errno_of(::stat(m.at("secrets").c_str(), &st)) != ENOENT ||
        errno_of(::stat(m.at("secrets/key").c_str(), &st)) != ENOENT) {
      v.fail("hidden path stat is not ENOENT");
    }
    if (open_errno(m.at("docs/a"), O_RDONLY) != 0) v.fail("read-only denied Read");
    if (list_names(m.at("docs")) != std::vector<std::string>{"a"}) v.fail("read-only denied List");
    if (open_errno(m.at("docs/a"), O_WRONLY) != EACCES) v.fail("read-only allowed Write");
    if (errno_of(::unlink(m.at("docs/a").c_str())) != EACCES ||
        errno_of(::mkdir(m.at("docs/n").c_str(), 0755)) != EACCES) {
      v.fail("read-only allowed Mutate");
    }
  }

  if (DaemonOptions{}.ask_timeout != std::chrono::seconds(120)) v.fail("default timeout is not 120 s");
  double waited = 0;
  {
    MountedSession::Options o;
    o.allow_all = false;
    o.ask_timeout = std::chrono::seconds(2);
    o.populate = [](const std::string& base) { write_file(base + "/f", "f"); };
    MountedSession m(o);
    if (m.daemon().broker().subscribers() != 0) v.fail("unexpected subscriber");
    auto t0 = Clock::now();
    int err = open_errno(m.at("f"), O_RDONLY);
    waited = since(t0);
    if (err != EACCES) v.fail(fmt::format("unanswered ask gave errno {}", err));
    if (std::abs(waited - 2.0) > 2.0) v.fail(fmt::format("denied after {:.2f} s", waited));
    if (m.daemon().broker().timed_out() < 1) v.fail("no ask timed out");
  }
  v.note(fmt::format("625 maps x 8 paths ({} checks) exact; hidden/read-only through mount; "
                     "deny after {:.2f} s with 2 s timeout",
                     checked, waited));
  return v;
}

BenchConfig bench_config() {
  BenchConfig c;
  c.workdir = "/tmp/yolo-acceptance-bench";
  fs::create_directories(c.workdir);
  c.progress = [](const std::string& m) { spdlog::info("{}", m); };
  return c;
}

Outcome snapshot_scalability() {
  Outcome v;
  auto t0 = Clock::now();
  auto c = bench_config();
  auto snap = bench_snap(c);
  c.commit_snapshots.clear();
  auto commit = bench_commit(c);
  double secs = since(t0);
  double create = snap.metric("ratio:create");
  double read = snap.metric("ratio:read-untouched");
  double r2 = commit.metric("records-r2");
  if (!(create <= 1.25)) v.fail(fmt::format("create ratio {:.3f}", create));
  if (!(read <= 1.25)) v.fail(fmt::format("read-untouched ratio {:.3f}", read));
  if (!(r2 >= 0.98)) v.fail(fmt::format("commit r2 {:.4f}", r2));
  if (!snap.base_intact || !commit.base_intact) v.fail("base changed during the run");
  for (const auto& n : commit.notes) v.fail(n);
  if (secs >= 1200) v.fail(fmt::format("took {:.0f} s", secs));
  v.note(fmt::format("k=512/k=1 create {:.3f}, read {:.3f}; commit r2 {:.4f} "
                     "({:.2f} us/record); {:.0f} s",
                     create, read, r2, commit.metric("records-us-per-record"), secs));
  return v;
}

Outcome pass_through() {
  Outcome v;
  auto c = bench_config();
  auto r = bench_io(c);
  if (!r.skipped.empty()) {
    v.fail("skipped: " + r.skipped);
    return v;
  }
  std::string ratios;
  for (const auto& [k, val] : r.metrics) {
    if (k.rfind("ratio:", 0) != 0) continue;
    ratios += fmt::format("{} {:.3f} ", k.substr(6), val);
    if (!(val >= 0.90)) v.fail(fmt::format("{} at {:.1f}% of null", k.substr(6), val * 100));
  }
  if (!r.base_intact) v.fail("base changed during the run");
  v.note(ratios + "(yolo / null)");
  for (const auto& n : r.notes) v.note(n);
  return v;
}

Outcome run_summary() {
  Outcome v;
  TempDir dir("yolo-accept-run");
  auto base = dir / "base";
  auto mnt = dir / "mnt";
  fs::create_directories(base);
  fs::create_directories(mnt);
  write_tree(base, {{"notes.txt", {Kind::kFile, "keep me\n"}},
                    {"draft.txt", {Kind::kFile, "draft\n"}},
                    {"main.c", {Kind::kFile, "int main() {}\n"}},
                    {"README", {Kind::kFile, "readme\n"}}});
  auto yolo = [&](std::vector<std::string> args) {
    args.insert(args.begin(), YOLO_BIN);
    return run_process(args, base);
  };
  auto mounted = yolo({"mount", base, mnt, "--no-permissions"});
  if (mounted.status != 0) {
    v.fail("mount failed: " + mounted.err);
    return v;
  }
  auto pre = walk_tree(mnt, false);
  auto run = yolo({"run", "--", "sh", "-c",
                   "rm notes.txt draft.txt && echo '/* edited */' >> main.c"});
  const std::string want = "#yolo-changes\nD\tdraft.txt\nM\tmain.c\nD\tnotes.txt\n";
  if (run.status != 0) v.fail(fmt::format("run exited {}: {}", run.status, run.err));
  if (run.out != want) v.fail("summary was: " + run.out);
  auto travel = yolo({"travel", "pre:1"});
  if (travel.status != 0) v.fail("travel failed: " + travel.err);
  auto post = walk_tree(mnt, false);
  if (post != pre) v.fail("travel did not restore the pre-command view:\n" + tree_mismatch(pre, post));
  yolo({"abort"});
  yolo({"unmount"});
  for (const auto& [m, s] : yolo_mounts()) {
    if (m == mnt) ::umount2(mnt.c_str(), MNT_DETACH);
  }
  std::istringstream lines(run.out);
  std::string line;
  int entries = -1;
  while (std::getline(lines, line)) ++entries;
  v.note(fmt::format("{} entries printed; travel pre:1 restored the view", entries));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  std::set<std::string> only(argv + 1, argv + argc);
  auto wanted = [&](const char* name) { return only.empty() || only.count(name) > 0; };

  int failures = 0;
  auto report = [&](const char* name, const Outcome& v, double secs) {
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << name << "  [" << fmt::format("{:.1f}s", secs)
              << "]  " << v.detail << std::endl;
    if (!v.pass) ++failures;
  };
  auto guarded = [&](const char* name, const std::function<Outcome()>& fn) {
    if (!wanted(name)) return;
    auto t0 = Clock::now();
    Outcome v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.fail(std::string("threw: ") + e.what());
    }
    report(name, v, since(t0));
  };

  guarded("golden-staging-trace", golden_trace);
  guarded("segment-liveness", branching_liveness);
  if (wanted("oracle-equivalence") || wanted("abort-safety")) {
    auto t0 = Clock::now();
    OracleRun run;
    std::string error;
    try {
      run = run_oracle(10000);
    } catch (const std::exception& e) {
      error = e.what();
    }
    double secs = since(t0);
    auto with_error = [&](Outcome v) {
      if (!error.empty()) v.fail("threw: " + error);
      return v;
    };
    if (wanted("oracle-equivalence")) report("oracle-equivalence", with_error(oracle_equivalence(run)), secs);
    if (wanted("abort-safety")) report("abort-safety", with_error(abort_safety(run)), secs);
  }
  guarded("zero-copy-rename", zero_copy_rename);
  guarded("permission-oracle", permission_oracle);
  guarded("snapshot-scalability", snapshot_scalability);
  guarded("pass-through-overhead", pass_through);
  guarded("run-change-summary", run_summary);

  std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
