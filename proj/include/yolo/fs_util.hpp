#pragma once

#include <sys/stat.h>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "yolo/fd.hpp"

namespace yolo {

// Thin wrappers over the *at() syscalls. Relative paths are resolved against
// `dirfd`; the empty path names `dirfd` itself.

std::optional<struct stat> lstat_at(int dirfd, std::string_view path);
UniqueFd open_at(int dirfd, std::string_view path, int flags, mode_t mode = 0);
std::vector<std::string> list_dir_at(int dirfd, std::string_view path);

/// Removes a file, symlink or directory tree. Missing paths are ignored.
void remove_tree_at(int dirfd, std::string_view path);

/// Copies a regular file's bytes from one descriptor to another.
void copy_fd_contents(int from_fd, int to_fd);

/// Copies a file, symlink or directory tree across directory descriptors.
void copy_tree_at(int from_dirfd, std::string_view from, int to_dirfd,
                  std::string_view to);

void write_file_at(int dirfd, std::string_view path, std::string_view contents,
                   bool sync);
std::string read_file_at(int dirfd, std::string_view path);

/// Deterministic hex digest over names, types, permission bits, file bytes
/// and link targets. A top-level `.yolo` is skipped when asked.
std::string tree_digest(const std::string& root, bool skip_state_dir = true);

inline const char* rel_or_dot(const std::string& path) {
  return path.empty() ? "." : path.c_str();
}

}  // namespace yolo
