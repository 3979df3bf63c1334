#pragma once

#include <sys/stat.h>
#include <sys/statvfs.h>
#include <sys/types.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "yolo/base_fs.hpp"

namespace yolo {

struct OpContext {
  pid_t pid = 0;
  uid_t uid = 0;
  gid_t gid = 0;
};

struct SetAttrRequest {
  std::optional<off_t> size;
  std::optional<mode_t> mode;
  std::optional<uid_t> uid;
  std::optional<gid_t> gid;
  std::optional<struct timespec> atime;  // tv_nsec may be UTIME_NOW
  std::optional<struct timespec> mtime;
};

/// Path-addressed filesystem operations served through a mount. Paths are
/// normalized logical paths; failures throw std::system_error carrying the
/// errno to report.
class FsOps {
 public:
  virtual ~FsOps() = default;

  virtual struct stat getattr(const OpContext& ctx, const std::string& path) = 0;
  virtual std::vector<DirEntry> list(const OpContext& ctx,
                                     const std::string& path) = 0;

  virtual std::uint64_t open(const OpContext& ctx, const std::string& path,
                             int flags) = 0;
  virtual std::uint64_t create(const OpContext& ctx, const std::string& path,
                               int flags, mode_t mode) = 0;
  virtual ssize_t read(std::uint64_t fh, char* buf, std::size_t size,
                       off_t offset) = 0;
  /// `path` is the handle's current logical path, empty if unknown.
  virtual ssize_t write(std::uint64_t fh, const std::string& path,
                        const char* buf, std::size_t size, off_t offset) = 0;
  virtual std::optional<struct stat> fgetattr(std::uint64_t) {
    return std::nullopt;
  }
  virtual void fsync(std::uint64_t fh, bool datasync) = 0;
  virtual void release(std::uint64_t fh) = 0;

  virtual void mkdir(const OpContext& ctx, const std::string& path,
                     mode_t mode) = 0;
  virtual void unlink(const OpContext& ctx, const std::string& path) = 0;
  virtual void rmdir(const OpContext& ctx, const std::string& path) = 0;
  virtual void rename(const OpContext& ctx, const std::string& src,
                      const std::string& dst, unsigned flags) = 0;
  virtual void symlink(const OpContext& ctx, const std::string& target,
                       const std::string& path) = 0;
  virtual std::string readlink(const OpContext& ctx,
                               const std::string& path) = 0;
  virtual struct stat setattr(const OpContext& ctx, const std::string& path,
                              std::optional<std::uint64_t> fh,
                              const SetAttrRequest& request) = 0;
  virtual struct statvfs statfs() = 0;
};

}  // namespace yolo
