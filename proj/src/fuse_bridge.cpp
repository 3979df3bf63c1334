#include "yolo/fuse_bridge.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <linux/fuse.h>
#include <spdlog/spdlog.h>
#include <sys/mount.h>
#include <sys/stat.h>
#include <sys/sysmacros.h>
#include <sys/uio.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <system_error>

#include "yolo/path.hpp"

namespace yolo {

namespace {

constexpr std::uint32_t kMaxWrite = 128 * 1024;
constexpr std::size_t kBufferSize = kMaxWrite + 64 * 1024;

fuse_attr to_fuse_attr(const struct stat& st, std::uint64_t ino) {
  fuse_attr a{};
  a.ino = ino;
  a.size = static_cast<std::uint64_t>(st.st_size);
  a.blocks = static_cast<std::uint64_t>(st.st_blocks);
  a.atime = static_cast<std::uint64_t>(st.st_atim.tv_sec);
  a.mtime = static_cast<std::uint64_t>(st.st_mtim.tv_sec);
  a.ctime = static_cast<std::uint64_t>(st.st_ctim.tv_sec);
  a.atimensec = static_cast<std::uint32_t>(st.st_atim.tv_nsec);
  a.mtimensec = static_cast<std::uint32_t>(st.st_mtim.tv_nsec);
  a.ctimensec = static_cast<std::uint32_t>(st.st_ctim.tv_nsec);
  a.mode = st.st_mode;
  a.nlink = static_cast<std::uint32_t>(st.st_nlink);
  a.uid = st.st_uid;
  a.gid = st.st_gid;
  a.rdev = static_cast<std::uint32_t>(st.st_rdev);
  a.blksize = static_cast<std::uint32_t>(st.st_blksize);
  return a;
}

struct DirHandle {
  std::vector<DirEntry> entries;
  std::vector<std::uint64_t> inos;
};

}  // namespace

struct FuseBridge::Request {
  const fuse_in_header* in = nullptr;
  const char* arg = nullptr;
  std::size_t arg_size = 0;
  std::vector<char>* out = nullptr;

  template <typename T>
  const T& as() const {
    if (arg_size < sizeof(T)) {
      throw std::system_error(EINVAL, std::generic_category(), "short request");
    }
    return *reinterpret_cast<const T*>(arg);
  }
  OpContext ctx() const {
    return OpContext{static_cast<pid_t>(in->pid), in->uid, in->gid};
  }
};

FuseBridge::FuseBridge(FsOps& ops, MountOptions options)
    : ops_(ops), options_(std::move(options)) {
  nodes_[FUSE_ROOT_ID] = Node{"", 1, S_IFDIR};
  by_path_[""] = FUSE_ROOT_ID;
}

FuseBridge::~FuseBridge() { stop(); }

void FuseBridge::start() {
  int fd = ::open("/dev/fuse", O_RDWR | O_CLOEXEC);
  if (fd < 0) {
    throw_errno("open /dev/fuse");
  }
  dev_.reset(fd);
  struct stat root_st {};
  check_syscall(::stat(options_.mountpoint.c_str(), &root_st),
                "stat " + options_.mountpoint);
  std::string data = "fd=" + std::to_string(fd) +
                     ",rootmode=40000,user_id=" + std::to_string(::getuid()) +
                     ",group_id=" + std::to_string(::getgid()) +
                     ",default_permissions";
  if (options_.allow_other) {
    data += ",allow_other";
  }
  std::string type = "fuse." + options_.subtype;
  if (::mount(options_.source.c_str(), options_.mountpoint.c_str(),
              type.c_str(), MS_NOSUID | MS_NODEV, data.c_str()) != 0) {
    throw_errno("mount " + options_.mountpoint);
  }
  mounted_ = true;
  running_ = true;
  unsigned n = std::max(1u, options_.threads);
  for (unsigned i = 0; i < n; ++i) {
    workers_.emplace_back([this] { worker(); });
  }
  std::unique_lock lock(init_mutex_);
  if (!init_cv_.wait_for(lock, std::chrono::seconds(10),
                         [this] { return initialized_.load() || !running_; })) {
    lock.unlock();
    stop();
    throw std::runtime_error("kernel handshake timed out");
  }
  struct stat st {};
  if (::stat(options_.mountpoint.c_str(), &st) == 0) {
    mount_dev_ = st.st_dev;
  }
}

void FuseBridge::stop() {
  if (mounted_.exchange(false)) {
    if (::umount2(options_.mountpoint.c_str(), 0) != 0) {
      spdlog::debug("umount {} busy ({}), detaching", options_.mountpoint,
                    std::strerror(errno));
      ::umount2(options_.mountpoint.c_str(), MNT_DETACH);
      if (mount_dev_ != 0) {
        std::ofstream abort("/sys/fs/fuse/connections/" +
                            std::to_string(minor(mount_dev_)) + "/abort");
        abort << "1";
      }
    }
  }
  running_ = false;
  for (auto& t : workers_) {
    if (t.joinable()) {
      t.join();
    }
  }
  workers_.clear();
  dev_.reset();
  init_cv_.notify_all();
}

void FuseBridge::wait() {
  for (auto& t : workers_) {
    if (t.joinable()) {
      t.join();
    }
  }
  mounted_ = false;
  running_ = false;
}

void FuseBridge::worker() {
  std::vector<char> buf(kBufferSize);
  std::vector<char> out(kBufferSize);
  for (;;) {
    ssize_t n = ::read(dev_.get(), buf.data(), buf.size());
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == ENOENT) {
        continue;
      }
      if (errno != ENODEV) {
        spdlog::error("fuse read: {}", std::strerror(errno));
      }
      break;
    }
    if (static_cast<std::size_t>(n) < sizeof(fuse_in_header)) {
      continue;
    }
    Request req;
    req.in = reinterpret_cast<const fuse_in_header*>(buf.data());
    req.arg = buf.data() + sizeof(fuse_in_header);
    req.arg_size = static_cast<std::size_t>(n) - sizeof(fuse_in_header);
    req.out = &out;
    served_++;
    try {
      dispatch(req);
    } catch (const std::system_error& e) {
      reply_error(req.in->unique, e.code().value() ? e.code().value() : EIO);
    } catch (const InvalidPath&) {
      reply_error(req.in->unique, EINVAL);
    } catch (const std::exception& e) {
      spdlog::error("opcode {} failed: {}", req.in->opcode, e.what());
      reply_error(req.in->unique, EIO);
    }
  }
  running_ = false;
  init_cv_.notify_all();
}

void FuseBridge::reply(std::uint64_t unique, int error, const void* data,
                       std::size_t size) {
  fuse_out_header out{};
  out.unique = unique;
  out.error = error > 0 ? -error : error;
  if (out.error != 0) {
    size = 0;
  }
  out.len = static_cast<std::uint32_t>(sizeof(out) + size);
  iovec iov[2] = {{&out, sizeof(out)}, {const_cast<void*>(data), size}};
  if (::writev(dev_.get(), iov, size > 0 ? 2 : 1) < 0 && errno != ENOENT) {
    spdlog::debug("fuse reply failed: {}", std::strerror(errno));
  }
}

// --- node table ----------------------------------------------------------------

std::string FuseBridge::path_of(std::uint64_t nodeid, bool* known) {
  std::lock_guard lock(nodes_mutex_);
  auto it = nodes_.find(nodeid);
  if (it == nodes_.end() || it->second.orphan) {
    if (known != nullptr) {
      *known = false;
      return {};
    }
    throw std::system_error(it == nodes_.end() ? ESTALE : ENOENT,
                            std::generic_category(), "unknown node");
  }
  if (known != nullptr) {
    *known = true;
  }
  return it->second.path;
}

std::uint64_t FuseBridge::remember(const std::string& path, mode_t type) {
  std::lock_guard lock(nodes_mutex_);
  auto it = by_path_.find(path);
  if (it != by_path_.end()) {
    auto& node = nodes_[it->second];
    if (node.type == (type & S_IFMT) || it->second == FUSE_ROOT_ID) {
      node.lookups++;
      return it->second;
    }
  }
  std::uint64_t id = next_nodeid_++;
  nodes_[id] = Node{path, 1, type & S_IFMT};
  by_path_[path] = id;
  return id;
}

void FuseBridge::forget(std::uint64_t nodeid, std::uint64_t count) {
  if (nodeid == FUSE_ROOT_ID) {
    return;
  }
  std::lock_guard lock(nodes_mutex_);
  auto it = nodes_.find(nodeid);
  if (it == nodes_.end()) {
    return;
  }
  if (it->second.lookups > count) {
    it->second.lookups -= count;
    return;
  }
  auto p = by_path_.find(it->second.path);
  if (p != by_path_.end() && p->second == nodeid) {
    by_path_.erase(p);
  }
  nodes_.erase(it);
}

void FuseBridge::moved(const std::string& src, const std::string& dst) {
  if (src == dst) {
    return;
  }
  // A replaced destination keeps its node only for open handles.
  removed(dst);
  std::lock_guard lock(nodes_mutex_);
  std::vector<std::pair<std::string, std::uint64_t>> moving;
  if (auto it = by_path_.find(src); it != by_path_.end()) {
    moving.emplace_back(it->first, it->second);
  }
  std::string prefix = src + "/";
  for (auto it = by_path_.lower_bound(prefix);
       it != by_path_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
       ++it) {
    moving.emplace_back(it->first, it->second);
  }
  for (auto& [path, id] : moving) {
    by_path_.erase(path);
  }
  for (auto& [path, id] : moving) {
    auto next = rebase_path(path, src, dst);
    nodes_[id].path = next;
    by_path_[next] = id;
  }
}

void FuseBridge::removed(const std::string& path) {
  std::lock_guard lock(nodes_mutex_);
  if (auto it = by_path_.find(path); it != by_path_.end()) {
    nodes_[it->second].orphan = true;
    by_path_.erase(it);
  }
  std::string prefix = path + "/";
  auto it = by_path_.lower_bound(prefix);
  while (it != by_path_.end() &&
         it->first.compare(0, prefix.size(), prefix) == 0) {
    nodes_[it->second].orphan = true;
    it = by_path_.erase(it);
  }
}

std::uint64_t FuseBridge::dirent_ino(const std::string& path) {
  std::lock_guard lock(nodes_mutex_);
  auto it = by_path_.find(path);
  if (it != by_path_.end()) {
    return it->second;
  }
  // Any nonzero value; the kernel re-resolves names through lookup.
  return std::hash<std::string>{}(path) | (1ull << 63);
}

// --- dispatch ------------------------------------------------------------------

void FuseBridge::dispatch(Request& req) {
  const auto* in = req.in;
  const auto unique = in->unique;

  auto entry_reply = [&](const std::string& path, const struct stat& st) {
    fuse_entry_out e{};
    e.nodeid = remember(path, st.st_mode);
    e.attr = to_fuse_attr(st, e.nodeid);
    return e;
  };
  auto child_path = [&](std::uint64_t parent, const char* name) {
    return join_path(path_of(parent), name);
  };

  switch (in->opcode) {
    case FUSE_INIT: {
      const auto& init = req.as<fuse_init_in>();
      fuse_init_out out{};
      out.major = FUSE_KERNEL_VERSION;
      out.minor = std::min<std::uint32_t>(init.minor, FUSE_KERNEL_MINOR_VERSION);
      out.max_readahead = init.max_readahead;
      const std::uint32_t wanted = FUSE_ASYNC_READ | FUSE_ATOMIC_O_TRUNC |
                                   FUSE_BIG_WRITES | FUSE_PARALLEL_DIROPS |
                                   FUSE_MAX_PAGES;
      out.flags = init.flags & wanted;
      out.max_background = 16;
      out.congestion_threshold = 12;
      out.max_write = kMaxWrite;
      out.time_gran = 1;
      out.max_pages = kMaxWrite / 4096;
      if (init.major != FUSE_KERNEL_VERSION) {
        reply_error(unique, EPROTO);
        return;
      }
      reply(unique, 0, &out, sizeof(out));
      {
        std::lock_guard lock(init_mutex_);
        initialized_ = true;
      }
      init_cv_.notify_all();
      return;
    }
    case FUSE_DESTROY:
      reply(unique, 0, nullptr, 0);
      return;
    case FUSE_FORGET:
      forget(in->nodeid, req.as<fuse_forget_in>().nlookup);
      return;
    case FUSE_BATCH_FORGET: {
      const auto& batch = req.as<fuse_batch_forget_in>();
      const auto* items = reinterpret_cast<const fuse_forget_one*>(
          req.arg + sizeof(fuse_batch_forget_in));
      std::size_t avail =
          (req.arg_size - sizeof(fuse_batch_forget_in)) / sizeof(fuse_forget_one);
      for (std::size_t i = 0; i < std::min<std::size_t>(batch.count, avail); ++i) {
        forget(items[i].nodeid, items[i].nlookup);
      }
      return;
    }
    case FUSE_INTERRUPT:
      return;
    case FUSE_LOOKUP: {
      auto path = child_path(in->nodeid, req.arg);
      auto st = ops_.getattr(req.ctx(), path);
      auto e = entry_reply(path, st);
      reply(unique, 0, &e, sizeof(e));
      return;
    }
    case FUSE_GETATTR: {
      const auto& g = req.as<fuse_getattr_in>();
      std::optional<struct stat> st;
      bool known = false;
      auto path = path_of(in->nodeid, &known);
      try {
        if (!known) {
          throw std::system_error(ENOENT, std::generic_category(), "stale");
        }
        st = ops_.getattr(req.ctx(), path);
      } catch (const std::system_error& e) {
        if ((g.getattr_flags & FUSE_GETATTR_FH) == 0 ||
            e.code().value() != ENOENT) {
          throw;
        }
        st = ops_.fgetattr(g.fh);
        if (!st) {
          throw;
        }
      }
      fuse_attr_out out{};
      out.attr = to_fuse_attr(*st, in->nodeid);
      reply(unique, 0, &out, sizeof(out));
      return;
    }
    case FUSE_SETATTR: {
      const auto& s = req.as<fuse_setattr_in>();
      SetAttrRequest r;
      if (s.valid & FATTR_MODE) r.mode = s.mode;
      if (s.valid & FATTR_UID) r.uid = s.uid;
      if (s.valid & FATTR_GID) r.gid = s.gid;
      if (s.valid & FATTR_SIZE) r.size = static_cast<off_t>(s.size);
      if (s.valid & FATTR_ATIME) {
        r.atime = timespec{static_cast<time_t>(s.atime),
                           (s.valid & FATTR_ATIME_NOW) ? UTIME_NOW
                                                       : static_cast<long>(s.atimensec)};
      }
      if (s.valid & FATTR_MTIME) {
        r.mtime = timespec{static_cast<time_t>(s.mtime),
                           (s.valid & FATTR_MTIME_NOW) ? UTIME_NOW
                                                       : static_cast<long>(s.mtimensec)};
      }
      std::optional<std::uint64_t> fh;
      if (s.valid & FATTR_FH) fh = s.fh;
      auto st = ops_.setattr(req.ctx(), path_of(in->nodeid), fh, r);
      fuse_attr_out out{};
      out.attr = to_fuse_attr(st, in->nodeid);
      reply(unique, 0, &out, sizeof(out));
      return;
    }
    case FUSE_READLINK: {
      auto target = ops_.readlink(req.ctx(), path_of(in->nodeid));
      reply(unique, 0, target.data(), target.size());
      return;
    }
    case FUSE_SYMLINK: {
      const char* name = req.arg;
      const char* target = name + std::strlen(name) + 1;
      auto path = child_path(in->nodeid, name);
      ops_.symlink(req.ctx(), target, path);
      auto e = entry_reply(path, ops_.getattr(req.ctx(), path));
      reply(unique, 0, &e, sizeof(e));
      return;
    }
    case FUSE_MKNOD: {
      const auto& m = req.as<fuse_mknod_in>();
      const char* name = req.arg + sizeof(fuse_mknod_in);
      if (!S_ISREG(m.mode)) {
        reply_error(unique, EOPNOTSUPP);
        return;
      }
      auto path = child_path(in->nodeid, name);
      ops_.release(ops_.create(req.ctx(), path, O_WRONLY, m.mode & 07777));
      auto e = entry_reply(path, ops_.getattr(req.ctx(), path));
      reply(unique, 0, &e, sizeof(e));
      return;
    }
    case FUSE_MKDIR: {
      const auto& m = req.as<fuse_mkdir_in>();
      const char* name = req.arg + sizeof(fuse_mkdir_in);
      auto path = child_path(in->nodeid, name);
      ops_.mkdir(req.ctx(), path, m.mode & 07777);
      auto e = entry_reply(path, ops_.getattr(req.ctx(), path));
      reply(unique, 0, &e, sizeof(e));
      return;
    }
    case FUSE_UNLINK:
    case FUSE_RMDIR: {
      auto path = child_path(in->nodeid, req.arg);
      if (in->opcode == FUSE_UNLINK) {
        ops_.unlink(req.ctx(), path);
      } else {
        ops_.rmdir(req.ctx(), path);
      }
      removed(path);
      reply(unique, 0, nullptr, 0);
      return;
    }
    case FUSE_RENAME:
    case FUSE_RENAME2: {
      std::uint64_t newdir = 0;
      unsigned flags = 0;
      const char* names = nullptr;
      if (in->opcode == FUSE_RENAME) {
        newdir = req.as<fuse_rename_in>().newdir;
        names = req.arg + sizeof(fuse_rename_in);
      } else {
        const auto& r = req.as<fuse_rename2_in>();
        newdir = r.newdir;
        flags = r.flags;
        names = req.arg + sizeof(fuse_rename2_in);
      }
      const char* newname = names + std::strlen(names) + 1;
      auto src = child_path(in->nodeid, names);
      auto dst = child_path(newdir, newname);
      ops_.rename(req.ctx(), src, dst, flags);
      moved(src, dst);
      reply(unique, 0, nullptr, 0);
      return;
    }
    case FUSE_LINK:
      reply_error(unique, EOPNOTSUPP);
      return;
    case FUSE_OPEN: {
      const auto& o = req.as<fuse_open_in>();
      fuse_open_out out{};
      out.fh = ops_.open(req.ctx(), path_of(in->nodeid),
                         static_cast<int>(o.flags));
      reply(unique, 0, &out, sizeof(out));
      return;
    }
    case FUSE_CREATE: {
      const auto& c = req.as<fuse_create_in>();
      const char* name = req.arg + sizeof(fuse_create_in);
      auto path = child_path(in->nodeid, name);
      auto fh = ops_.create(req.ctx(), path, static_cast<int>(c.flags),
                            c.mode & 07777);
      struct {
        fuse_entry_out entry;
        fuse_open_out open;
      } out{};
      try {
        out.entry = entry_reply(path, ops_.getattr(req.ctx(), path));
      } catch (...) {
        ops_.release(fh);
        throw;
      }
      out.open.fh = fh;
      reply(unique, 0, &out, sizeof(out));
      return;
    }
    case FUSE_READ: {
      const auto& r = req.as<fuse_read_in>();
      auto& out = *req.out;
      std::size_t size = std::min<std::size_t>(r.size, out.size());
      ssize_t n = ops_.read(r.fh, out.data(), size, static_cast<off_t>(r.offset));
      reply(unique, 0, out.data(), static_cast<std::size_t>(n));
      return;
    }
    case FUSE_WRITE: {
      const auto& w = req.as<fuse_write_in>();
      const char* data = req.arg + sizeof(fuse_write_in);
      if (req.arg_size < sizeof(fuse_write_in) + w.size) {
        reply_error(unique, EINVAL);
        return;
      }
      bool known = false;
      auto path = path_of(in->nodeid, &known);
      ssize_t n = ops_.write(w.fh, path, data, w.size,
                             static_cast<off_t>(w.offset));
      fuse_write_out out{};
      out.size = static_cast<std::uint32_t>(n);
      reply(unique, 0, &out, sizeof(out));
      return;
    }
    case FUSE_STATFS: {
      auto s = ops_.statfs();
      fuse_statfs_out out{};
      out.st.blocks = s.f_blocks;
      out.st.bfree = s.f_bfree;
      out.st.bavail = s.f_bavail;
      out.st.files = s.f_files;
      out.st.ffree = s.f_ffree;
      out.st.bsize = static_cast<std::uint32_t>(s.f_bsize);
      out.st.frsize = static_cast<std::uint32_t>(s.f_frsize);
      out.st.namelen = static_cast<std::uint32_t>(s.f_namemax);
      reply(unique, 0, &out, sizeof(out));
      return;
    }
    case FUSE_RELEASE:
      ops_.release(req.as<fuse_release_in>().fh);
      reply(unique, 0, nullptr, 0);
      return;
    case FUSE_FLUSH:
      reply(unique, 0, nullptr, 0);
      return;
    case FUSE_FSYNC: {
      const auto& f = req.as<fuse_fsync_in>();
      ops_.fsync(f.fh, (f.fsync_flags & FUSE_FSYNC_FDATASYNC) != 0);
      reply(unique, 0, nullptr, 0);
      return;
    }
    case FUSE_OPENDIR: {
      auto path = path_of(in->nodeid);
      auto dir = std::make_unique<DirHandle>();
      dir->entries = ops_.list(req.ctx(), path);
      for (const auto& e : dir->entries) {
        dir->inos.push_back(dirent_ino(join_path(path, e.name)));
      }
      fuse_open_out out{};
      out.fh = reinterpret_cast<std::uint64_t>(dir.release());
      reply(unique, 0, &out, sizeof(out));
      return;
    }
    case FUSE_READDIR: {
      const auto& r = req.as<fuse_read_in>();
      auto* dir = reinterpret_cast<DirHandle*>(r.fh);
      auto& out = *req.out;
      std::size_t limit = std::min<std::size_t>(r.size, out.size());
      std::size_t used = 0;
      const std::size_t total = dir->entries.size() + 2;
      for (std::uint64_t i = r.offset; i < total; ++i) {
        std::string_view name;
        std::uint64_t ino;
        std::uint32_t type;
        if (i == 0) {
          name = ".";
          ino = in->nodeid;
          type = DT_DIR;
        } else if (i == 1) {
          name = "..";
          ino = FUSE_ROOT_ID;
          type = DT_DIR;
        } else {
          const auto& e = dir->entries[i - 2];
          name = e.name;
          ino = dir->inos[i - 2];
          type = e.type;
        }
        std::size_t rec = FUSE_DIRENT_ALIGN(FUSE_NAME_OFFSET + name.size());
        if (used + rec > limit) {
          break;
        }
        auto* d = reinterpret_cast<fuse_dirent*>(out.data() + used);
        std::memset(d, 0, rec);
        d->ino = ino;
        d->off = i + 1;
        d->namelen = static_cast<std::uint32_t>(name.size());
        d->type = type;
        std::memcpy(d->name, name.data(), name.size());
        used += rec;
      }
      reply(unique, 0, out.data(), used);
      return;
    }
    case FUSE_RELEASEDIR:
      delete reinterpret_cast<DirHandle*>(req.as<fuse_release_in>().fh);
      reply(unique, 0, nullptr, 0);
      return;
    case FUSE_FSYNCDIR:
      reply(unique, 0, nullptr, 0);
      return;
    case FUSE_FALLOCATE:
      reply_error(unique, EOPNOTSUPP);
      return;
    default:
      reply_error(unique, ENOSYS);
      return;
  }
}

}  // namespace yolo
