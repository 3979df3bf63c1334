#include "yolo/passthrough_fs.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include "yolo/fs_util.hpp"

namespace yolo {

namespace {

std::string rel(const std::string& path) { return path.empty() ? "." : path; }

}  // namespace

PassthroughFs::PassthroughFs(const std::string& root) : base_(root, {}) {}

struct stat PassthroughFs::getattr(const OpContext&, const std::string& path) {
  auto st = lstat_at(base_.root_fd(), path);
  if (!st) {
    throw_errno(ENOENT, path);
  }
  return *st;
}

std::vector<DirEntry> PassthroughFs::list(const OpContext&,
                                          const std::string& path) {
  return base_.list(path);
}

std::uint64_t PassthroughFs::open(const OpContext&, const std::string& path,
                                  int flags) {
  auto fd = open_at(base_.root_fd(), path,
                    (flags & ~(O_CREAT | O_EXCL | O_NOCTTY)) | O_NOFOLLOW);
  return static_cast<std::uint64_t>(fd.release());
}

std::uint64_t PassthroughFs::create(const OpContext&, const std::string& path,
                                    int flags, mode_t mode) {
  auto fd = open_at(base_.root_fd(), path,
                    flags | O_CREAT | O_EXCL | O_NOFOLLOW, mode);
  return static_cast<std::uint64_t>(fd.release());
}

ssize_t PassthroughFs::read(std::uint64_t fh, char* buf, std::size_t size,
                            off_t offset) {
  ssize_t n = ::pread(static_cast<int>(fh), buf, size, offset);
  if (n < 0) {
    throw_errno("read");
  }
  return n;
}

ssize_t PassthroughFs::write(std::uint64_t fh, const std::string&,
                             const char* buf, std::size_t size, off_t offset) {
  ssize_t n = ::pwrite(static_cast<int>(fh), buf, size, offset);
  if (n < 0) {
    throw_errno("write");
  }
  return n;
}

std::optional<struct stat> PassthroughFs::fgetattr(std::uint64_t fh) {
  struct stat st {};
  if (::fstat(static_cast<int>(fh), &st) != 0) {
    return std::nullopt;
  }
  return st;
}

void PassthroughFs::fsync(std::uint64_t fh, bool datasync) {
  int fd = static_cast<int>(fh);
  check_syscall(datasync ? ::fdatasync(fd) : ::fsync(fd), "fsync");
}

void PassthroughFs::release(std::uint64_t fh) { ::close(static_cast<int>(fh)); }

void PassthroughFs::mkdir(const OpContext&, const std::string& path,
                          mode_t mode) {
  check_syscall(::mkdirat(base_.root_fd(), path.c_str(), mode), path);
}

void PassthroughFs::unlink(const OpContext&, const std::string& path) {
  check_syscall(::unlinkat(base_.root_fd(), path.c_str(), 0), path);
}

void PassthroughFs::rmdir(const OpContext&, const std::string& path) {
  check_syscall(::unlinkat(base_.root_fd(), path.c_str(), AT_REMOVEDIR), path);
}

void PassthroughFs::rename(const OpContext&, const std::string& src,
                           const std::string& dst, unsigned flags) {
  check_syscall(::renameat2(base_.root_fd(), src.c_str(), base_.root_fd(),
                            dst.c_str(), flags),
                src);
}

void PassthroughFs::symlink(const OpContext&, const std::string& target,
                            const std::string& path) {
  check_syscall(::symlinkat(target.c_str(), base_.root_fd(), path.c_str()),
                path);
}

std::string PassthroughFs::readlink(const OpContext&, const std::string& path) {
  return base_.readlink(path);
}

struct stat PassthroughFs::setattr(const OpContext& ctx, const std::string& path,
                                   std::optional<std::uint64_t> fh,
                                   const SetAttrRequest& request) {
  int dirfd = base_.root_fd();
  auto p = rel(path);
  if (request.mode) {
    check_syscall(::fchmodat(dirfd, p.c_str(), *request.mode, 0), path);
  }
  if (request.uid || request.gid) {
    check_syscall(::fchownat(dirfd, p.c_str(),
                             request.uid.value_or(static_cast<uid_t>(-1)),
                             request.gid.value_or(static_cast<gid_t>(-1)),
                             AT_SYMLINK_NOFOLLOW),
                  path);
  }
  if (request.size) {
    if (fh) {
      check_syscall(::ftruncate(static_cast<int>(*fh), *request.size), path);
    } else {
      auto fd = open_at(dirfd, path, O_WRONLY | O_NOFOLLOW);
      check_syscall(::ftruncate(fd.get(), *request.size), path);
    }
  }
  if (request.atime || request.mtime) {
    struct timespec times[2];
    times[0] = request.atime.value_or(timespec{0, UTIME_OMIT});
    times[1] = request.mtime.value_or(timespec{0, UTIME_OMIT});
    check_syscall(::utimensat(dirfd, p.c_str(), times, AT_SYMLINK_NOFOLLOW),
                  path);
  }
  return getattr(ctx, path);
}

struct statvfs PassthroughFs::statfs() { return base_.statfs(); }

}  // namespace yolo
