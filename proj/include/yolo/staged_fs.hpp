#pragma once

#include <atomic>
#include <mutex>

#include "yolo/fs_ops.hpp"
#include "yolo/session.hpp"

namespace yolo {

/// The interposition layer: every operation is checked against the rules,
/// reads resolve through the override tree, and mutations are staged in the
/// store and journaled. The base tree is never written.
class StagedFs : public FsOps {
 public:
  explicit StagedFs(Session& session) : session_(session) {}

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

  std::size_t open_handles() const { return handles_.load(); }

 private:
  struct Handle;

  void authorize(const OpContext& ctx, const std::string& path,
                 AccessKind kind);
  void authorize_mutation(const OpContext& ctx, const std::string& path);

  // The helpers below expect the session mutex to be held.
  std::optional<struct stat> stat_resolved(const Resolution& r) const;
  std::optional<struct stat> stat_path(const std::string& path) const;
  void require_parent_dir(const std::string& path) const;
  void require_absent(const std::string& path) const;
  std::vector<std::string> base_names(const std::string& path,
                                      const Resolution& r) const;
  /// Makes `path` a current-generation staged regular file, copying up or
  /// allocating empty as requested. Returns its ino.
  Ino stage_for_write(const std::string& path, bool empty);

  void refresh_handle(Handle& h, const std::string& path);
  Handle& handle(std::uint64_t fh) const;

  Session& session_;
  std::atomic<std::size_t> handles_{0};
};

std::string process_name(pid_t pid);

/// True when a relative symlink target stays inside the mount when
/// resolved from the directory `link_parent`.
bool symlink_stays_inside(std::string_view link_parent, std::string_view target);

}  // namespace yolo
