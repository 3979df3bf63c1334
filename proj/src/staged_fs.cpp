#include "yolo/staged_fs.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <linux/fs.h>
#include <sys/stat.h>
#include <unistd.h>

#include <fstream>
#include <mutex>
#include <shared_mutex>

#include "yolo/fs_util.hpp"
#include "yolo/path.hpp"

namespace yolo {

struct StagedFs::Handle {
  std::mutex mutex;
  std::atomic<int> fd{-1};
  std::vector<UniqueFd> fds;
  bool staged = false;
  bool writable = false;
  int append = 0;
  Ino ino = 0;
  std::atomic<Generation> gen{0};
  std::uint64_t epoch = 0;

  void adopt(UniqueFd next) {
    fd.store(next.get(), std::memory_order_release);
    fds.push_back(std::move(next));
  }
};

namespace {

[[noreturn]] void fail(int err, const std::string& what) {
  throw_errno(err, what);
}

bool is_state_entry(const std::string& path) { return path == kStateDirName; }

const ResolvedStaged* staged_of(const Resolution& r) {
  return std::get_if<ResolvedStaged>(&r);
}

}  // namespace

std::string process_name(pid_t pid) {
  if (pid <= 0) {
    return {};
  }
  std::ifstream in("/proc/" + std::to_string(pid) + "/comm");
  std::string name;
  std::getline(in, name);
  return name;
}

bool symlink_stays_inside(std::string_view link_parent,
                          std::string_view target) {
  if (target.empty() || target.front() == '/') {
    return false;
  }
  long depth = static_cast<long>(split_path(link_parent).size());
  std::size_t pos = 0;
  while (pos <= target.size()) {
    auto slash = target.find('/', pos);
    auto end = slash == std::string_view::npos ? target.size() : slash;
    auto part = target.substr(pos, end - pos);
    if (part == "..") {
      if (--depth < 0) {
        return false;
      }
    } else if (!part.empty() && part != ".") {
      ++depth;
    }
    if (slash == std::string_view::npos) {
      break;
    }
    pos = end + 1;
  }
  return true;
}

// --- permission --------------------------------------------------------------

namespace {

void raise_outcome(CheckOutcome outcome, const std::string& path) {
  switch (outcome) {
    case CheckOutcome::kAllowed:
    case CheckOutcome::kNeedsAsk:
      return;
    case CheckOutcome::kNotFound:
      fail(ENOENT, path);
    case CheckOutcome::kDenied:
      fail(EACCES, path);
  }
}

}  // namespace

void StagedFs::authorize(const OpContext& ctx, const std::string& path,
                         AccessKind kind) {
  auto& engine = session_.permissions();
  auto outcome = engine.check(path, kind);
  if (outcome == CheckOutcome::kNeedsAsk) {
    outcome = engine.ask(path, kind, process_name(ctx.pid), ctx.pid);
  }
  raise_outcome(outcome, path);
}

void StagedFs::authorize_mutation(const OpContext& ctx,
                                  const std::string& path) {
  auto& engine = session_.permissions();
  std::string parent(parent_path(path));
  auto entry = engine.check(path, AccessKind::kMutate);
  auto dir = engine.check(parent, AccessKind::kMutate);
  raise_outcome(entry, path);
  raise_outcome(dir, path);
  if (entry != CheckOutcome::kNeedsAsk && dir != CheckOutcome::kNeedsAsk) {
    return;
  }
  auto verdict = engine.ask(path, AccessKind::kMutate, process_name(ctx.pid),
                            ctx.pid);
  raise_outcome(verdict, path);
  // A rule installed by the decision may have narrowed either path.
  raise_outcome(engine.check(path, AccessKind::kMutate), path);
  raise_outcome(engine.check(parent, AccessKind::kMutate), path);
}

// --- resolution helpers ---------------------------------------------------------

std::optional<struct stat> StagedFs::stat_resolved(const Resolution& r) const {
  if (auto* s = staged_of(r)) {
    return lstat_at(session_.state_dirfd(), FileStore::path_of(s->ino));
  }
  if (auto* b = std::get_if<ResolvedBase>(&r)) {
    return session_.base().stat(b->src);
  }
  return std::nullopt;
}

std::optional<struct stat> StagedFs::stat_path(const std::string& path) const {
  return stat_resolved(session_.tree().resolve(path));
}

void StagedFs::require_parent_dir(const std::string& path) const {
  auto st = stat_path(std::string(parent_path(path)));
  if (!st) {
    fail(ENOENT, path);
  }
  if (!S_ISDIR(st->st_mode)) {
    fail(ENOTDIR, path);
  }
}

void StagedFs::require_absent(const std::string& path) const {
  if (stat_path(path)) {
    fail(EEXIST, path);
  }
}

std::vector<std::string> StagedFs::base_names(const std::string& path,
                                              const Resolution& r) const {
  std::vector<std::string> names;
  if (auto* b = std::get_if<ResolvedBase>(&r)) {
    for (auto& e : session_.base().list(b->src)) {
      names.push_back(std::move(e.name));
    }
  }
  (void)path;
  return names;
}

Ino StagedFs::stage_for_write(const std::string& path, bool empty) {
  auto& store = session_.store();
  const Generation current = session_.generation();
  auto r = session_.tree().resolve(path);
  if (auto* s = staged_of(r)) {
    auto st = store.stat(s->ino);
    if (S_ISDIR(st.st_mode)) {
      fail(EISDIR, path);
    }
    if (s->gen == current) {
      return s->ino;
    }
    Ino fresh = empty ? store.allocate(StoreKind::kRegular, st.st_mode)
                      : store.ensure_current(s->ino, s->gen, current);
    session_.record(StageRecord{path, fresh});
    return fresh;
  }
  auto* b = std::get_if<ResolvedBase>(&r);
  if (b == nullptr) {
    fail(ENOENT, path);
  }
  auto st = session_.base().stat(b->src);
  if (!st) {
    fail(ENOENT, path);
  }
  if (S_ISDIR(st->st_mode)) {
    fail(EISDIR, path);
  }
  if (!S_ISREG(st->st_mode)) {
    fail(EINVAL, path);
  }
  Ino ino;
  if (empty) {
    ino = store.allocate(StoreKind::kRegular, st->st_mode);
  } else {
    auto loc = session_.base().locate(b->src);
    ino = store.copy_up(loc.dirfd, loc.rel);
  }
  session_.record(StageRecord{path, ino});
  return ino;
}

StagedFs::Handle& StagedFs::handle(std::uint64_t fh) const {
  return *reinterpret_cast<Handle*>(fh);
}

// --- operations ------------------------------------------------------------------

struct stat StagedFs::getattr(const OpContext& ctx, const std::string& path) {
  if (!path.empty()) {
    authorize(ctx, path, AccessKind::kStat);
  }
  std::shared_lock lock(session_.mutex());
  auto st = stat_path(path);
  if (!st) {
    fail(ENOENT, path);
  }
  return *st;
}

std::vector<DirEntry> StagedFs::list(const OpContext& ctx,
                                     const std::string& path) {
  authorize(ctx, path, AccessKind::kList);
  std::shared_lock lock(session_.mutex());
  const auto& tree = session_.tree();
  auto r = tree.resolve(path);
  auto st = stat_resolved(r);
  if (!st) {
    fail(ENOENT, path);
  }
  if (!S_ISDIR(st->st_mode)) {
    fail(ENOTDIR, path);
  }
  std::vector<DirEntry> base_entries;
  if (auto* b = std::get_if<ResolvedBase>(&r)) {
    base_entries = session_.base().list(b->src);
  }
  std::vector<std::string> names;
  names.reserve(base_entries.size());
  for (const auto& e : base_entries) {
    names.push_back(e.name);
  }
  std::sort(base_entries.begin(), base_entries.end(),
            [](const DirEntry& a, const DirEntry& b) { return a.name < b.name; });
  auto merged = tree.merge_readdir(path, names);

  auto& engine = session_.permissions();
  const bool filter = engine.enabled();
  std::vector<DirEntry> out;
  out.reserve(merged.size());
  for (auto& m : merged) {
    auto child = join_path(path, m.name);
    if (filter && engine.effective(child) == RuleState::kHidden) {
      continue;
    }
    unsigned char type = DT_UNKNOWN;
    if (m.origin == EntryOrigin::kBase) {
      auto it = std::lower_bound(
          base_entries.begin(), base_entries.end(), m.name,
          [](const DirEntry& e, const std::string& n) { return e.name < n; });
      if (it != base_entries.end() && it->name == m.name) {
        type = it->type;
      }
    } else if (auto cst = stat_path(child)) {
      type = static_cast<unsigned char>(IFTODT(cst->st_mode));
    } else {
      continue;
    }
    out.push_back({std::move(m.name), type});
  }
  return out;
}

std::uint64_t StagedFs::open(const OpContext& ctx, const std::string& path,
                             int flags) {
  const int acc = flags & O_ACCMODE;
  const bool writable = acc != O_RDONLY;
  const bool trunc = (flags & O_TRUNC) != 0;
  authorize(ctx, path, writable ? AccessKind::kWrite : AccessKind::kRead);

  auto h = std::make_unique<Handle>();
  h->writable = writable;
  h->append = flags & O_APPEND;
  h->epoch = session_.epoch();
  if (!writable) {
    std::shared_lock lock(session_.mutex());
    auto r = session_.tree().resolve(path);
    if (auto* s = staged_of(r)) {
      h->staged = true;
      h->ino = s->ino;
      h->gen = s->gen;
      h->adopt(session_.store().open(s->ino, O_RDONLY | O_NOFOLLOW));
    } else if (auto* b = std::get_if<ResolvedBase>(&r)) {
      h->adopt(session_.base().open(b->src, O_RDONLY));
    } else {
      fail(ENOENT, path);
    }
  } else {
    std::unique_lock lock(session_.mutex());
    auto r = session_.tree().resolve(path);
    const bool fresh_empty = trunc && !(staged_of(r) != nullptr &&
                                        staged_of(r)->gen == session_.generation());
    Ino ino = stage_for_write(path, trunc);
    h->staged = true;
    h->ino = ino;
    h->gen = session_.generation();
    h->adopt(session_.store().open(ino, O_RDWR | O_NOFOLLOW | h->append));
    if (trunc && !fresh_empty) {
      check_syscall(::ftruncate(h->fd.load(), 0), "truncate " + path);
    }
  }
  handles_++;
  return reinterpret_cast<std::uint64_t>(h.release());
}

std::uint64_t StagedFs::create(const OpContext& ctx, const std::string& path,
                               int flags, mode_t mode) {
  if (is_state_entry(path)) {
    fail(EPERM, path);
  }
  authorize_mutation(ctx, path);
  if (!(flags & O_EXCL)) {
    std::shared_lock lock(session_.mutex());
    if (stat_path(path)) {
      lock.unlock();
      return open(ctx, path, flags & ~O_CREAT);
    }
  }
  auto h = std::make_unique<Handle>();
  h->writable = true;
  h->staged = true;
  h->append = flags & O_APPEND;
  h->epoch = session_.epoch();
  {
    std::unique_lock lock(session_.mutex());
    require_parent_dir(path);
    require_absent(path);
    Ino ino = session_.store().allocate(StoreKind::kRegular, mode);
    session_.record(StageRecord{path, ino});
    h->ino = ino;
    h->gen = session_.generation();
    h->adopt(session_.store().open(ino, O_RDWR | O_NOFOLLOW | h->append));
  }
  handles_++;
  return reinterpret_cast<std::uint64_t>(h.release());
}

ssize_t StagedFs::read(std::uint64_t fh, char* buf, std::size_t size,
                       off_t offset) {
  auto& h = handle(fh);
  ssize_t n = ::pread(h.fd.load(std::memory_order_acquire), buf, size, offset);
  if (n < 0) {
    throw_errno("read");
  }
  return n;
}

void StagedFs::refresh_handle(Handle& h, const std::string& path) {
  std::unique_lock lock(session_.mutex());
  std::lock_guard hl(h.mutex);
  const Generation current = session_.generation();
  if (h.epoch != session_.epoch()) {
    fail(EIO, "handle predates commit or abort");
  }
  if (h.gen.load() == current) {
    return;
  }
  if (path.empty()) {
    fail(ESTALE, "unlinked handle");
  }
  auto r = session_.tree().resolve(path);
  auto* s = staged_of(r);
  if (s == nullptr) {
    fail(ESTALE, path);
  }
  Ino ino = s->ino;
  if (s->gen != current) {
    if (s->ino != h.ino) {
      fail(ESTALE, path);
    }
    ino = session_.store().ensure_current(s->ino, s->gen, current);
    session_.record(StageRecord{path, ino});
  }
  if (ino != h.ino) {
    h.adopt(session_.store().open(ino, O_RDWR | O_NOFOLLOW | h.append));
    h.ino = ino;
  }
  h.gen.store(current);
}

ssize_t StagedFs::write(std::uint64_t fh, const std::string& path,
                        const char* buf, std::size_t size, off_t offset) {
  auto& h = handle(fh);
  if (!h.writable) {
    fail(EBADF, path);
  }
  for (;;) {
    std::shared_lock lock(session_.mutex());
    if (h.epoch != session_.epoch()) {
      fail(EIO, "handle predates commit or abort");
    }
    if (h.gen.load(std::memory_order_acquire) == session_.generation()) {
      ssize_t n =
          ::pwrite(h.fd.load(std::memory_order_acquire), buf, size, offset);
      if (n < 0) {
        throw_errno("write " + path);
      }
      return n;
    }
    lock.unlock();
    refresh_handle(h, path);
  }
}

std::optional<struct stat> StagedFs::fgetattr(std::uint64_t fh) {
  struct stat st {};
  if (::fstat(handle(fh).fd.load(), &st) != 0) {
    return std::nullopt;
  }
  return st;
}

void StagedFs::fsync(std::uint64_t fh, bool datasync) {
  auto& h = handle(fh);
  if (!h.writable) {
    return;
  }
  int fd = h.fd.load();
  check_syscall(datasync ? ::fdatasync(fd) : ::fsync(fd), "fsync");
}

void StagedFs::release(std::uint64_t fh) {
  delete reinterpret_cast<Handle*>(fh);
  handles_--;
}

void StagedFs::mkdir(const OpContext& ctx, const std::string& path,
                     mode_t mode) {
  if (is_state_entry(path)) {
    fail(EPERM, path);
  }
  authorize_mutation(ctx, path);
  std::unique_lock lock(session_.mutex());
  require_parent_dir(path);
  require_absent(path);
  Ino ino = session_.store().allocate(StoreKind::kDirectory, mode);
  session_.record(StageRecord{path, ino});
}

void StagedFs::symlink(const OpContext& ctx, const std::string& target,
                       const std::string& path) {
  if (is_state_entry(path)) {
    fail(EPERM, path);
  }
  authorize_mutation(ctx, path);
  std::unique_lock lock(session_.mutex());
  require_parent_dir(path);
  require_absent(path);
  Ino ino = session_.store().allocate_symlink(target);
  session_.record(StageRecord{path, ino});
}

void StagedFs::unlink(const OpContext& ctx, const std::string& path) {
  if (path.empty() || session_.base().is_root_entry(path)) {
    fail(EBUSY, path);
  }
  authorize_mutation(ctx, path);
  std::unique_lock lock(session_.mutex());
  auto st = stat_path(path);
  if (!st) {
    fail(ENOENT, path);
  }
  if (S_ISDIR(st->st_mode)) {
    fail(EISDIR, path);
  }
  session_.record(DeleteRecord{path});
}

void StagedFs::rmdir(const OpContext& ctx, const std::string& path) {
  if (path.empty() || session_.base().is_root_entry(path)) {
    fail(EBUSY, path);
  }
  authorize_mutation(ctx, path);
  std::unique_lock lock(session_.mutex());
  const auto& tree = session_.tree();
  auto r = tree.resolve(path);
  auto st = stat_resolved(r);
  if (!st) {
    fail(ENOENT, path);
  }
  if (!S_ISDIR(st->st_mode)) {
    fail(ENOTDIR, path);
  }
  if (!tree.merge_readdir(path, base_names(path, r)).empty()) {
    fail(ENOTEMPTY, path);
  }
  session_.record(DeleteRecord{path});
}

void StagedFs::rename(const OpContext& ctx, const std::string& src,
                      const std::string& dst, unsigned flags) {
  if (flags & ~static_cast<unsigned>(RENAME_NOREPLACE)) {
    fail(EINVAL, src);
  }
  if (src.empty() || dst.empty() || session_.base().is_root_entry(src)) {
    fail(EBUSY, src);
  }
  if (is_state_entry(dst)) {
    fail(EPERM, dst);
  }
  authorize_mutation(ctx, src);
  authorize_mutation(ctx, dst);
  std::unique_lock lock(session_.mutex());
  auto src_st = stat_path(src);
  if (!src_st) {
    fail(ENOENT, src);
  }
  if (src == dst) {
    return;
  }
  if (is_within(dst, src)) {
    fail(EINVAL, dst);
  }
  require_parent_dir(dst);
  // Only a non-directory may replace a non-directory.
  if (auto dst_st = stat_path(dst)) {
    if ((flags & RENAME_NOREPLACE) || S_ISDIR(dst_st->st_mode)) {
      fail(EEXIST, dst);
    }
    if (S_ISDIR(src_st->st_mode)) {
      fail(ENOTDIR, dst);
    }
  }
  session_.record(RenameRecord{src, dst});
}

std::string StagedFs::readlink(const OpContext& ctx, const std::string& path) {
  authorize(ctx, path, AccessKind::kRead);
  std::string target;
  {
    std::shared_lock lock(session_.mutex());
    auto r = session_.tree().resolve(path);
    if (auto* s = staged_of(r)) {
      auto store_path = FileStore::path_of(s->ino);
      std::string buf(PATH_MAX, '\0');
      ssize_t n = ::readlinkat(session_.state_dirfd(), store_path.c_str(),
                               buf.data(), buf.size());
      if (n < 0) {
        throw_errno("readlink " + path);
      }
      buf.resize(static_cast<std::size_t>(n));
      target = std::move(buf);
    } else if (auto* b = std::get_if<ResolvedBase>(&r)) {
      target = session_.base().readlink(b->src);
    } else {
      fail(ENOENT, path);
    }
  }
  if (!symlink_stays_inside(parent_path(path), target)) {
    fail(ENOENT, path);
  }
  return target;
}

struct stat StagedFs::setattr(const OpContext& ctx, const std::string& path,
                              std::optional<std::uint64_t> fh,
                              const SetAttrRequest& request) {
  if (request.mode || request.uid || request.gid) {
    fail(EOPNOTSUPP, path);
  }
  if (request.size || request.atime || request.mtime) {
    authorize(ctx, path, AccessKind::kWrite);
  }
  if (request.size) {
    if (fh && handle(*fh).writable) {
      auto& h = handle(*fh);
      for (;;) {
        std::shared_lock lock(session_.mutex());
        if (h.epoch != session_.epoch()) {
          fail(EIO, path);
        }
        if (h.gen.load() == session_.generation()) {
          check_syscall(::ftruncate(h.fd.load(), *request.size),
                        "truncate " + path);
          break;
        }
        lock.unlock();
        refresh_handle(h, path);
      }
    } else {
      std::unique_lock lock(session_.mutex());
      Ino ino = stage_for_write(path, *request.size == 0);
      auto fd = session_.store().open(ino, O_WRONLY | O_NOFOLLOW);
      check_syscall(::ftruncate(fd.get(), *request.size), "truncate " + path);
    }
  }
  if (request.atime || request.mtime) {
    struct timespec times[2];
    times[0] = request.atime.value_or(timespec{0, UTIME_OMIT});
    times[1] = request.mtime.value_or(timespec{0, UTIME_OMIT});
    std::unique_lock lock(session_.mutex());
    auto r = session_.tree().resolve(path);
    auto st = stat_resolved(r);
    if (!st) {
      fail(ENOENT, path);
    }
    std::optional<Ino> target;
    if (auto* s = staged_of(r)) {
      if (S_ISREG(st->st_mode) && s->gen != session_.generation()) {
        target = stage_for_write(path, false);
      } else if (!S_ISLNK(st->st_mode)) {
        target = s->ino;
      }
    } else if (S_ISREG(st->st_mode)) {
      target = stage_for_write(path, false);
    }
    if (target) {
      auto store_path = FileStore::path_of(*target);
      check_syscall(::utimensat(session_.state_dirfd(), store_path.c_str(),
                                times, AT_SYMLINK_NOFOLLOW),
                    "utimens " + path);
    }
  }
  std::shared_lock lock(session_.mutex());
  auto st = stat_path(path);
  if (!st) {
    fail(ENOENT, path);
  }
  return *st;
}

struct statvfs StagedFs::statfs() { return session_.base().statfs(); }

}  // namespace yolo
