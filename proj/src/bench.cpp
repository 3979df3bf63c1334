#include "yolo/bench.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "yolo/daemon.hpp"
#include "yolo/fs_util.hpp"
#include "yolo/passthrough_fs.hpp"

namespace yolo {

namespace fs = std::filesystem;

double BenchResult::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  return std::nan("");
}

double BenchResult::median(const std::string& param,
                           const std::string& location) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.param == param && r.location == location) v.push_back(r.value);
  }
  return v.empty() ? std::nan("") : median_of(std::move(v));
}

double median_of(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  auto n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2;
}

double coefficient_of_variation(const std::vector<double>& values) {
  if (values.size() < 2) return 0;
  double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / (values.size() - 1));
  return mean == 0 ? 0 : sd / mean;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  auto n = static_cast<double>(x.size());
  if (x.size() < 2 || x.size() != y.size()) return f;
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0 ? 1 : (sxy * sxy) / (sxx * syy);
  return f;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_s(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void say(const BenchConfig& c, const std::string& msg) {
  if (c.progress) {
    c.progress(msg);
  } else {
    spdlog::info("{}", msg);
  }
}

class Scratch {
 public:
  Scratch(const std::string& root, const std::string& name)
      : dir_(fs::path(root) / name) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  std::string sub(const std::string& name) const {
    auto p = dir_ / name;
    fs::create_directories(p);
    return p.string();
  }

 private:
  fs::path dir_;
};

std::unique_ptr<Daemon> mount_yolo(const std::string& base,
                                   const std::string& mnt) {
  DaemonOptions o;
  o.base = base;
  o.mountpoint = mnt;
  o.rules = {{"", RuleState::kAllow}};
  o.sync = false;
  auto d = std::make_unique<Daemon>(o);
  d->start();
  return d;
}

struct NullMount {
  explicit NullMount(const std::string& root, const std::string& mnt)
      : fs(root), bridge(fs, [&] {
          MountOptions m;
          m.mountpoint = mnt;
          m.source = "yolo-null";
          m.subtype = "yolo-null";
          return m;
        }()) {
    bridge.start();
  }
  PassthroughFs fs;
  FuseBridge bridge;
};

void write_small(const std::string& path, std::size_t size, char fill = 'x') {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("create " + path);
  std::string data(size, fill);
  if (size > 0 && ::write(fd, data.data(), size) != static_cast<ssize_t>(size)) {
    int err = errno;
    ::close(fd);
    throw_errno(err, "write " + path);
  }
  ::close(fd);
}

void touch(const std::string& path) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("create " + path);
  ::close(fd);
}

bool drop_caches() {
  ::sync();
  std::ofstream out("/proc/sys/vm/drop_caches");
  if (!out) return false;
  out << "3" << std::flush;
  return static_cast<bool>(out);
}

// Throughput passes. Each returns elapsed seconds for `size` bytes.

double seq_write(const std::string& path, std::uint64_t size, std::size_t req,
                 const std::vector<char>& buf) {
  auto t0 = Clock::now();
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("open " + path);
  for (std::uint64_t off = 0; off < size; off += req) {
    if (::write(fd, buf.data(), req) != static_cast<ssize_t>(req)) {
      int err = errno;
      ::close(fd);
      throw_errno(err, "write " + path);
    }
  }
  ::close(fd);
  return elapsed_s(t0);
}

double seq_read(const std::string& path, std::uint64_t size, std::size_t req,
                std::vector<char>& buf) {
  auto t0 = Clock::now();
  int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) throw_errno("open " + path);
  std::uint64_t total = 0;
  while (total < size) {
    auto n = ::read(fd, buf.data(), req);
    if (n <= 0) break;
    total += static_cast<std::uint64_t>(n);
  }
  ::close(fd);
  if (total != size) throw std::runtime_error("short read on " + path);
  return elapsed_s(t0);
}

double rand_io(const std::string& path, const std::vector<std::uint64_t>& offsets,
               std::size_t req, std::vector<char>& buf, bool write) {
  auto t0 = Clock::now();
  int fd = ::open(path.c_str(), (write ? O_WRONLY : O_RDONLY) | O_CLOEXEC);
  if (fd < 0) throw_errno("open " + path);
  for (auto off : offsets) {
    auto n = write ? ::pwrite(fd, buf.data(), req, static_cast<off_t>(off))
                   : ::pread(fd, buf.data(), req, static_cast<off_t>(off));
    if (n != static_cast<ssize_t>(req)) {
      int err = errno;
      ::close(fd);
      throw_errno(err, "random io " + path);
    }
  }
  ::close(fd);
  return elapsed_s(t0);
}

double time_us(const std::function<void()>& op) {
  auto t0 = Clock::now();
  op();
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

void list_all(const std::string& dir) {
  DIR* d = ::opendir(dir.c_str());
  if (!d) throw_errno("opendir " + dir);
  while (::readdir(d) != nullptr) {
  }
  ::closedir(d);
}

void check_stat(const std::string& path) {
  struct stat st {};
  if (::lstat(path.c_str(), &st) != 0) throw_errno("stat " + path);
}

void read_4k(const std::string& path, char* buf) {
  int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) throw_errno("open " + path);
  if (::read(fd, buf, 4096) < 0) {
    int err = errno;
    ::close(fd);
    throw_errno(err, "read " + path);
  }
  ::close(fd);
}

}  // namespace

BenchResult bench_io(const BenchConfig& c) {
  BenchResult result;
  result.suite = "io";
  Scratch scratch(c.workdir, "io");
  auto base = scratch.sub("base");
  auto mnt = scratch.sub("mnt");
  auto null_root = scratch.sub("null-root");
  auto null_mnt = scratch.sub("null-mnt");
  write_small(base + "/README", 64);

  auto space = fs::space(c.workdir);
  if (space.available < 3 * c.io_file_size) {
    result.skipped = fmt::format("insufficient disk: {} bytes free, need {}",
                                 space.available, 3 * c.io_file_size);
    return result;
  }
  auto before = tree_digest(base);

  std::mt19937_64 rng(c.seed);
  std::vector<char> wbuf(c.io_request);
  for (auto& ch : wbuf) ch = static_cast<char>(rng());
  std::vector<char> rbuf(c.io_request);
  std::uint64_t blocks = c.io_file_size / c.io_request;
  std::vector<std::uint64_t> offsets(blocks);
  std::uniform_int_distribution<std::uint64_t> pick(0, blocks - 1);
  for (auto& o : offsets) o = pick(rng) * c.io_request;

  {
    auto daemon = mount_yolo(base, mnt);
    NullMount null(null_root, null_mnt);
    const std::map<std::string, std::string> targets = {
        {"yolo", mnt + "/io.dat"}, {"null", null_mnt + "/io.dat"}};

    for (const auto& [loc, path] : targets) {
      say(c, fmt::format("io: laying out {} file on {}", c.io_file_size, loc));
      seq_write(path, c.io_file_size, c.io_request, wbuf);
    }
    bool cold = c.io_cold && drop_caches();
    if (c.io_cold && !cold) {
      result.notes.push_back("cold-cache patterns skipped: drop_caches not writable");
    }
    std::vector<std::string> patterns = {"seq-write", "seq-read", "rand-read",
                                         "rand-write"};
    if (cold) {
      patterns.push_back("seq-read-cold");
      patterns.push_back("rand-read-cold");
    }
    auto run = [&](const std::string& pattern, const std::string& path) {
      if (pattern == "seq-write") return seq_write(path, c.io_file_size, c.io_request, wbuf);
      if (pattern == "rand-write") return rand_io(path, offsets, c.io_request, wbuf, true);
      if (pattern.ends_with("-cold")) drop_caches();
      if (pattern.starts_with("seq-read")) return seq_read(path, c.io_file_size, c.io_request, rbuf);
      return rand_io(path, offsets, c.io_request, rbuf, false);
    };
    for (int rep = 0; rep < c.reps; ++rep) {
      for (const auto& pattern : patterns) {
        // Alternate which mount goes first to cancel drift.
        std::vector<std::string> order = {"yolo", "null"};
        if (rep % 2) std::swap(order[0], order[1]);
        for (const auto& loc : order) {
          double s = run(pattern, targets.at(loc));
          double mbps = static_cast<double>(c.io_file_size) / 1e6 / s;
          result.rows.push_back({"io", fmt::format("{}/{}", pattern, c.io_request),
                                 loc, rep, mbps, "MB/s"});
          say(c, fmt::format("io rep {} {} {}: {:.1f} MB/s", rep, pattern, loc, mbps));
        }
      }
    }
    double worst = 1e9;
    for (const auto& pattern : patterns) {
      auto param = fmt::format("{}/{}", pattern, c.io_request);
      double ratio = result.median(param, "yolo") / result.median(param, "null");
      result.metrics.emplace_back("ratio:" + pattern, ratio);
      worst = std::min(worst, ratio);
    }
    result.metrics.emplace_back("min-ratio", worst);
    daemon->stop();
  }
  result.base_intact = tree_digest(base) == before;
  return result;
}

BenchResult bench_meta(const BenchConfig& c) {
  BenchResult result;
  result.suite = "meta";
  Scratch scratch(c.workdir, "meta");
  auto base = scratch.sub("base");
  auto mnt = scratch.sub("mnt");
  const std::size_t n = std::max<std::size_t>(c.meta_iterations, c.reps);
  const std::size_t per_rep = n / c.reps;
  const std::vector<std::string> locations = {"base", "snapshot", "staged"};

  auto populate = [&](const std::string& root, const std::string& loc) {
    auto dir = root + "/" + loc;
    ::mkdir(dir.c_str(), 0755);
    ::mkdir((dir + "/list").c_str(), 0755);
    for (std::size_t i = 0; i < n; ++i) {
      touch(fmt::format("{}/f{}", dir, i));
      touch(fmt::format("{}/u{}", dir, i));
    }
    for (int i = 0; i < 16; ++i) {
      touch(fmt::format("{}/list/e{}", dir, i));
    }
  };
  populate(base, "base");
  auto before = tree_digest(base);

  {
    auto daemon = mount_yolo(base, mnt);
    say(c, "meta: staging snapshot location");
    populate(mnt, "snapshot");
    daemon->session().snapshot("meta");
    say(c, "meta: staging current location");
    populate(mnt, "staged");
    auto& perms = daemon->session().permissions();

    for (int rep = 0; rep < c.reps; ++rep) {
      for (const auto& loc : locations) {
        auto dir = mnt + "/" + loc;
        auto lo = static_cast<std::size_t>(rep) * per_rep;
        auto record = [&](const char* op, std::vector<double>& samples) {
          result.rows.push_back({"meta", op, loc, rep, median_of(samples), "us"});
          samples.clear();
        };
        std::vector<double> s;
        for (std::size_t i = lo; i < lo + per_rep; ++i) {
          s.push_back(time_us([&] { check_stat(fmt::format("{}/f{}", dir, i)); }));
        }
        record("stat", s);
        perms.set_enabled(false);
        for (std::size_t i = lo; i < lo + per_rep; ++i) {
          s.push_back(time_us([&] { check_stat(fmt::format("{}/f{}", dir, i)); }));
        }
        perms.set_enabled(true);
        record("stat-noperm", s);
        for (std::size_t i = 0; i < per_rep; ++i) {
          s.push_back(time_us([&] { list_all(dir + "/list"); }));
        }
        record("readdir", s);
        for (std::size_t i = lo; i < lo + per_rep; ++i) {
          s.push_back(time_us([&] { touch(fmt::format("{}/c{}", dir, i)); }));
        }
        record("create", s);
        for (std::size_t i = lo; i < lo + per_rep; ++i) {
          auto from = fmt::format("{}/f{}", dir, i);
          auto to = fmt::format("{}/m{}", dir, i);
          s.push_back(time_us([&] {
            if (::rename(from.c_str(), to.c_str()) != 0) throw_errno("rename " + from);
          }));
        }
        record("rename", s);
        for (std::size_t i = lo; i < lo + per_rep; ++i) {
          auto p = fmt::format("{}/u{}", dir, i);
          s.push_back(time_us([&] {
            if (::unlink(p.c_str()) != 0) throw_errno("unlink " + p);
          }));
        }
        record("unlink", s);
      }
      say(c, fmt::format("meta rep {} done", rep));
      if (tree_digest(base) != before) {
        result.base_intact = false;
      }
    }
    for (const auto& loc : locations) {
      result.metrics.emplace_back(
          "stat-perm-overhead:" + loc,
          result.median("stat", loc) / result.median("stat-noperm", loc) - 1);
    }
    daemon->session().abort();
    daemon->stop();
  }
  result.base_intact = result.base_intact && tree_digest(base) == before;
  return result;
}

BenchResult bench_snap(const BenchConfig& c) {
  BenchResult result;
  result.suite = "snap";
  Scratch scratch(c.workdir, "snap");
  auto base = scratch.sub("base");
  auto mnt = scratch.sub("mnt");
  ::mkdir((base + "/set").c_str(), 0755);
  ::mkdir((base + "/untouched").c_str(), 0755);
  ::mkdir((base + "/new").c_str(), 0755);
  for (int i = 0; i < 10; ++i) {
    write_small(fmt::format("{}/set/s{}", base, i), 4096, 'a');
  }
  for (std::size_t i = 0; i < c.snap_untouched; ++i) {
    write_small(fmt::format("{}/untouched/u{}", base, i), 4096, 'u');
  }
  auto before = tree_digest(base);

  {
    auto daemon = mount_yolo(base, mnt);
    auto& session = daemon->session();
    std::size_t next_new = 0;
    std::size_t next_read = 0;
    std::vector<char> buf(4096);
    auto measure = [&](int k) {
      for (int rep = 0; rep < c.reps; ++rep) {
        std::vector<double> create, read;
        for (std::size_t i = 0; i < c.snap_samples; ++i) {
          auto p = fmt::format("{}/new/k{}-{}", mnt, k, next_new++);
          create.push_back(time_us([&] { touch(p); }));
          auto r = fmt::format("{}/untouched/u{}", mnt, next_read++ % c.snap_untouched);
          read.push_back(time_us([&] { read_4k(r, buf.data()); }));
        }
        auto param = std::to_string(k);
        result.rows.push_back({"snap", "create", param, rep, median_of(create), "us"});
        result.rows.push_back({"snap", "read-untouched", param, rep, median_of(read), "us"});
      }
      say(c, fmt::format("snap k={}: create {:.1f} us, read {:.1f} us", k,
                         result.median("create", std::to_string(k)),
                         result.median("read-untouched", std::to_string(k))));
    };

    measure(0);
    int k = 0;
    for (int target : c.snap_counts) {
      while (k < target) {
        for (int i = 0; i < 10; ++i) {
          write_small(fmt::format("{}/set/s{}", mnt, i), 4096,
                      static_cast<char>('b' + k % 20));
        }
        session.snapshot("k" + std::to_string(k + 1));
        ++k;
      }
      measure(k);
    }
    if (!c.snap_counts.empty()) {
      auto lo = std::to_string(c.snap_counts.front());
      auto hi = std::to_string(c.snap_counts.back());
      for (const char* op : {"create", "read-untouched"}) {
        result.metrics.emplace_back(std::string("ratio:") + op,
                                    result.median(op, hi) / result.median(op, lo));
      }
      std::vector<double> xs, ys;
      for (int kk : c.snap_counts) {
        xs.push_back(kk);
        ys.push_back(result.median("create", std::to_string(kk)));
      }
      result.metrics.emplace_back("create-slope-us-per-snapshot", fit_line(xs, ys).slope);
    }
    result.base_intact = tree_digest(base) == before;
    session.abort();
    daemon->stop();
  }
  result.base_intact = result.base_intact && tree_digest(base) == before;
  return result;
}

namespace {

struct InProcess {
  explicit InProcess(const std::string& base) {
    SessionOptions o;
    o.base_root = base;
    o.sync = false;
    session = std::make_unique<Session>(o);
    session->permissions().set_enabled(false);
    fs = std::make_unique<StagedFs>(*session);
  }
  void write_file(const std::string& path, const std::string& data, bool create) {
    auto fh = create ? fs->create(ctx, path, O_WRONLY | O_CREAT | O_EXCL, 0644)
                     : fs->open(ctx, path, O_WRONLY | O_TRUNC);
    fs->write(fh, path, data.data(), data.size(), 0);
    fs->release(fh);
  }
  std::unique_ptr<Session> session;
  std::unique_ptr<StagedFs> fs;
  OpContext ctx{::getpid(), 0, 0};
};

// A small-repository edit session: new directories and sources, edits of
// existing files, renames and deletions, in seeded proportions. Returns
// the number of journal records produced.
std::size_t script_session(InProcess& p, std::size_t records, std::mt19937_64& rng) {
  std::vector<std::string> files;
  for (int i = 0; i < 50; ++i) files.push_back(fmt::format("src/seed{}.c", i));
  std::string body(256, 'c');
  std::size_t made = 0;
  std::size_t dirs = 0;
  std::string dir;
  std::uniform_int_distribution<int> pct(0, 99);
  while (made < records) {
    if (made % 100 == 0 || dir.empty()) {
      dir = fmt::format("build{}", dirs++);
      p.fs->mkdir(p.ctx, dir, 0755);
      ++made;
      continue;
    }
    int roll = pct(rng);
    if (roll < 8 && files.size() > 60) {
      std::uniform_int_distribution<std::size_t> pick(0, files.size() - 1);
      auto i = pick(rng);
      auto to = fmt::format("{}/r{}.o", dir, made);
      p.fs->rename(p.ctx, files[i], to, 0);
      files[i] = to;
    } else if (roll < 12 && files.size() > 60) {
      std::uniform_int_distribution<std::size_t> pick(0, files.size() - 1);
      auto i = pick(rng);
      p.fs->unlink(p.ctx, files[i]);
      files.erase(files.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      auto path = fmt::format("{}/o{}.o", dir, made);
      p.write_file(path, body, true);
      files.push_back(path);
    }
    ++made;
  }
  return made;
}

void seed_repo(const std::string& base) {
  fs::create_directories(base + "/src");
  for (int i = 0; i < 50; ++i) {
    write_small(fmt::format("{}/src/seed{}.c", base, i), 512, 's');
  }
}

}  // namespace

BenchResult bench_commit(const BenchConfig& c) {
  BenchResult result;
  result.suite = "commit";
  Scratch scratch(c.workdir, "commit");
  std::mt19937_64 rng(c.seed);

  auto run_one = [&](const std::string& param, const std::string& loc, int rep,
                     const std::function<void(InProcess&)>& stage) {
    auto base = scratch.sub(fmt::format("base-{}-{}-{}", param, loc, rep));
    seed_repo(base);
    auto before = tree_digest(base);
    double seconds = 0;
    {
      InProcess p(base);
      stage(p);
      if (tree_digest(base) != before) result.base_intact = false;
      auto t0 = Clock::now();
      p.session->commit();
      seconds = elapsed_s(t0);
    }
    result.rows.push_back({"commit", param, loc, rep, seconds * 1e3, "ms"});
    fs::remove_all(base);
  };

  std::vector<double> xs, ys;
  for (auto n : c.commit_records) {
    for (int rep = 0; rep < c.reps; ++rep) {
      run_one("records", std::to_string(n), rep, [&](InProcess& p) {
        script_session(p, n, rng);
        auto log = p.session->log();
        std::size_t total = 0;
        for (const auto& s : log.segments) total += s.records;
        if (total != n) {
          result.notes.push_back(fmt::format("expected {} records, journal has {}", n, total));
        }
      });
    }
    xs.push_back(static_cast<double>(n));
    ys.push_back(result.median("records", std::to_string(n)));
    say(c, fmt::format("commit {} records: {:.1f} ms", n, ys.back()));
  }
  auto f = fit_line(xs, ys);
  result.metrics.emplace_back("records-r2", f.r2);
  result.metrics.emplace_back("records-us-per-record", f.slope * 1e3);

  xs.clear();
  ys.clear();
  for (int k : c.commit_snapshots) {
    for (int rep = 0; rep < c.reps; ++rep) {
      run_one("snapshots", std::to_string(k), rep, [&](InProcess& p) {
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < 10; ++j) {
            p.write_file(fmt::format("src/seed{}.c", j), std::string(512, 'a' + i % 20),
                         false);
          }
          p.session->snapshot("k" + std::to_string(i + 1));
        }
      });
    }
    xs.push_back(k);
    ys.push_back(result.median("snapshots", std::to_string(k)));
    say(c, fmt::format("commit after {} snapshots: {:.1f} ms", k, ys.back()));
  }
  result.metrics.emplace_back("snapshots-r2", fit_line(xs, ys).r2);
  return result;
}

void write_csv(std::ostream& out, const std::vector<BenchResult>& results,
               bool header) {
  if (header) out << "suite,param,location,rep,value,unit\n";
  for (const auto& r : results) {
    for (const auto& row : r.rows) {
      out << fmt::format("{},{},{},{},{:.6g},{}\n", row.suite, row.param,
                         row.location, row.rep, row.value, row.unit);
    }
  }
}

std::string render_summary(const BenchResult& r) {
  std::ostringstream out;
  out << fmt::format("== {} ==\n", r.suite);
  if (!r.skipped.empty()) {
    out << "skipped: " << r.skipped << "\n";
    return out.str();
  }
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::string> units;
  for (const auto& row : r.rows) {
    auto key = std::make_pair(row.param, row.location);
    if (!cells.count(key)) order.push_back(key);
    cells[key].push_back(row.value);
    units[key] = row.unit;
  }
  out << fmt::format("{:<24} {:<10} {:>12} {:>8} {:>4}\n", "param", "location",
                     "median", "cv", "n");
  for (const auto& key : order) {
    const auto& v = cells[key];
    out << fmt::format("{:<24} {:<10} {:>9.2f} {:<2} {:>7.1f}% {:>4}\n", key.first,
                       key.second, median_of(v), units[key],
                       100 * coefficient_of_variation(v), v.size());
  }
  for (const auto& [k, v] : r.metrics) {
    out << fmt::format("{} = {:.4f}\n", k, v);
  }
  for (const auto& note : r.notes) {
    out << "note: " << note << "\n";
  }
  out << "base unchanged: " << (r.base_intact ? "yes" : "NO") << "\n";
  return out.str();
}

}  // namespace yolo
