#pragma once

#include <sys/stat.h>
#include <sys/statvfs.h>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "yolo/fd.hpp"

namespace yolo {

inline constexpr std::string_view kStateDirName = ".yolo";

struct DirEntry {
  std::string name;
  unsigned char type = 0;  // DT_* value, DT_UNKNOWN when not known
};

/// Read access to the base tree, addressed by base-relative paths.
///
/// Extra roots appear as top-level directories named after their last path
/// component. The state directory at the top of the primary root is never
/// reported. All access goes through descriptors opened at construction, so
/// the base may be shadowed by a mount on the same directory.
class BaseFs {
 public:
  BaseFs(const std::string& root, const std::vector<std::string>& extra_roots);

  struct Location {
    int dirfd;
    std::string rel;  // empty names the directory itself
  };

  Location locate(std::string_view path) const;

  std::optional<struct stat> stat(std::string_view path) const;
  bool exists(std::string_view path) const { return stat(path).has_value(); }
  std::vector<DirEntry> list(std::string_view path) const;
  UniqueFd open(std::string_view path, int flags) const;
  std::string readlink(std::string_view path) const;
  struct statvfs statfs() const;

  /// True for the top-level names of extra roots, which cannot be renamed
  /// or removed through the mount.
  bool is_root_entry(std::string_view path) const;

  // Commit-side mutations.
  void rename(std::string_view src, std::string_view dst);
  void remove_tree(std::string_view path);
  /// Moves an object from another directory into the base, replacing any
  /// non-directory at `dst`.
  void install(int from_dirfd, std::string_view from, std::string_view dst);

  int root_fd() const { return root_.get(); }
  const std::string& root_path() const { return root_path_; }
  std::vector<std::string> extra_root_names() const;

 private:
  struct ExtraRoot {
    std::string name;
    std::string path;
    UniqueFd fd;
  };

  std::string root_path_;
  UniqueFd root_;
  std::vector<ExtraRoot> extras_;
};

}  // namespace yolo
