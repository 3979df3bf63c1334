#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace yolo {

// Logical paths are relative to the mount root, use `/` as separator, carry
// no leading or trailing slash, and never contain `.`, `..` or empty
// components. The mount root itself is the empty string.

class InvalidPath : public std::invalid_argument {
 public:
  explicit InvalidPath(std::string_view path);
};

/// Normalizes a user-supplied path into a logical path. Leading slashes and
/// `.` components are dropped and repeated separators collapsed; `..` is
/// rejected rather than resolved.
std::string normalize_path(std::string_view path);

/// Throws InvalidPath unless `path` is already in normalized form.
void require_normalized(std::string_view path);
bool is_normalized(std::string_view path);

std::vector<std::string_view> split_path(std::string_view path);

std::string join_path(std::string_view parent, std::string_view name);

/// Parent of a logical path; the parent of a top-level entry is the root "".
std::string_view parent_path(std::string_view path);
std::string_view base_name(std::string_view path);

/// True when `path` equals `ancestor` or lies beneath it.
bool is_within(std::string_view path, std::string_view ancestor);

/// Rewrites the `from` prefix of `path` to `to`. Requires is_within(path, from).
std::string rebase_path(std::string_view path, std::string_view from,
                        std::string_view to);

}  // namespace yolo
