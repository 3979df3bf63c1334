#pragma once

#include "yolo/fs_ops.hpp"

namespace yolo {

/// Null pass-through: forwards every operation to a directory with no
/// staging, journaling or permission checks. The performance control for
/// the staged filesystem on the same bridge.
class PassthroughFs : public FsOps {
 public:
  explicit PassthroughFs(const std::string& root);

  struct stat getattr(const OpContext& ctx, const std::string& path) override;
  std::vector<DirEntry> list(const OpContext& ctx,
                             const std::string& path) override;
  std::uint64_t open(const OpContext& ctx, const std::string& path,
                     int flags) override;
  std::uint64_t create(const OpContext& ctx, const std::string& path,
                       int flags, mode_t mode) override;
  ssize_t read(std::uint64_t fh, char* buf, std::size_t size,
               off_t offset) override;
  ssize_t write(std::uint64_t fh, const std::string& path, const char* buf,
                std::size_t size, off_t offset) override;
  std::optional<struct stat> fgetattr(std::uint64_t fh) override;
  void fsync(std::uint64_t fh, bool datasync) override;
  void release(std::uint64_t fh) override;
  void mkdir(const OpContext& ctx, const std::string& path,
             mode_t mode) override;
  void unlink(const OpContext& ctx, const std::string& path) override;
  void rmdir(const OpContext& ctx, const std::string& path) override;
  void rename(const OpContext& ctx, const std::string& src,
              const std::string& dst, unsigned flags) override;
  void symlink(const OpContext& ctx, const std::string& target,
               const std::string& path) override;
  std::string readlink(const OpContext& ctx, const std::string& path) override;
  struct stat setattr(const OpContext& ctx, const std::string& path,
                      std::optional<std::uint64_t> fh,
                      const SetAttrRequest& request) override;
  struct statvfs statfs() override;

 private:
  BaseFs base_;
};

}  // namespace yolo
