#include "yolo/base_fs.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <memory>

#include "yolo/fs_util.hpp"
#include "yolo/path.hpp"

namespace yolo {

namespace {

UniqueFd open_dir(const std::string& path) {
  int fd = ::open(path.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) {
    throw_errno("open base directory " + path);
  }
  return UniqueFd(fd);
}

bool is_state_dir(std::string_view path) { return path == kStateDirName; }

}  // namespace

BaseFs::BaseFs(const std::string& root,
               const std::vector<std::string>& extra_roots)
    : root_path_(std::filesystem::absolute(root).lexically_normal().string()),
      root_(open_dir(root_path_)) {
  for (const auto& extra : extra_roots) {
    auto abs = std::filesystem::absolute(extra).lexically_normal();
    auto name = abs.filename().string();
    if (name.empty()) {
      name = abs.parent_path().filename().string();
    }
    if (name.empty() || name == kStateDirName) {
      throw std::invalid_argument("unusable extra root " + extra);
    }
    for (const auto& e : extras_) {
      if (e.name == name) {
        throw std::invalid_argument("duplicate extra root name " + name);
      }
    }
    extras_.push_back({name, abs.string(), open_dir(abs.string())});
  }
}

BaseFs::Location BaseFs::locate(std::string_view path) const {
  if (!extras_.empty() && !path.empty()) {
    auto slash = path.find('/');
    auto head = path.substr(0, slash);
    for (const auto& e : extras_) {
      if (e.name == head) {
        return {e.fd.get(), slash == std::string_view::npos
                                ? std::string()
                                : std::string(path.substr(slash + 1))};
      }
    }
  }
  return {root_.get(), std::string(path)};
}

std::optional<struct stat> BaseFs::stat(std::string_view path) const {
  if (is_state_dir(path)) {
    return std::nullopt;
  }
  auto loc = locate(path);
  return lstat_at(loc.dirfd, loc.rel);
}

std::vector<DirEntry> BaseFs::list(std::string_view path) const {
  auto loc = locate(path);
  auto fd = open_at(loc.dirfd, loc.rel, O_RDONLY | O_DIRECTORY | O_NOFOLLOW);
  DIR* dir = ::fdopendir(fd.get());
  if (dir == nullptr) {
    throw_errno("fdopendir " + std::string(path));
  }
  fd.release();
  std::unique_ptr<DIR, int (*)(DIR*)> guard(dir, ::closedir);
  std::vector<DirEntry> out;
  while (auto* ent = ::readdir(dir)) {
    std::string_view name(ent->d_name);
    if (name == "." || name == "..") {
      continue;
    }
    if (path.empty() && name == kStateDirName) {
      continue;
    }
    out.push_back({std::string(name), ent->d_type});
  }
  if (path.empty()) {
    for (const auto& e : extras_) {
      std::erase_if(out, [&](const DirEntry& d) { return d.name == e.name; });
      out.push_back({e.name, DT_DIR});
    }
  }
  return out;
}

UniqueFd BaseFs::open(std::string_view path, int flags) const {
  if (is_state_dir(path)) {
    throw_errno(ENOENT, "open .yolo");
  }
  auto loc = locate(path);
  return open_at(loc.dirfd, loc.rel, flags | O_NOFOLLOW);
}

std::string BaseFs::readlink(std::string_view path) const {
  auto loc = locate(path);
  std::string buf(PATH_MAX, '\0');
  ssize_t n = ::readlinkat(loc.dirfd, rel_or_dot(loc.rel), buf.data(), buf.size());
  if (n < 0) {
    throw_errno("readlink " + std::string(path));
  }
  buf.resize(static_cast<size_t>(n));
  return buf;
}

struct statvfs BaseFs::statfs() const {
  struct statvfs st {};
  check_syscall(::fstatvfs(root_.get(), &st), "statvfs base");
  return st;
}

bool BaseFs::is_root_entry(std::string_view path) const {
  for (const auto& e : extras_) {
    if (e.name == path) {
      return true;
    }
  }
  return false;
}

std::vector<std::string> BaseFs::extra_root_names() const {
  std::vector<std::string> names;
  for (const auto& e : extras_) {
    names.push_back(e.name);
  }
  return names;
}

void BaseFs::rename(std::string_view src, std::string_view dst) {
  auto from = locate(src);
  auto to = locate(dst);
  if (::renameat(from.dirfd, rel_or_dot(from.rel), to.dirfd,
                 rel_or_dot(to.rel)) == 0) {
    return;
  }
  if (errno != EXDEV) {
    throw_errno("rename " + std::string(src) + " -> " + std::string(dst));
  }
  remove_tree_at(to.dirfd, to.rel);
  copy_tree_at(from.dirfd, from.rel, to.dirfd, to.rel);
  remove_tree_at(from.dirfd, from.rel);
}

void BaseFs::remove_tree(std::string_view path) {
  auto loc = locate(path);
  remove_tree_at(loc.dirfd, loc.rel);
}

void BaseFs::install(int from_dirfd, std::string_view from,
                     std::string_view dst) {
  auto to = locate(dst);
  std::string src(from);
  if (auto existing = lstat_at(to.dirfd, to.rel);
      existing && S_ISDIR(existing->st_mode)) {
    auto incoming = lstat_at(from_dirfd, src);
    if (incoming && !S_ISDIR(incoming->st_mode)) {
      remove_tree_at(to.dirfd, to.rel);
    }
  }
  if (::renameat(from_dirfd, src.c_str(), to.dirfd, rel_or_dot(to.rel)) == 0) {
    return;
  }
  if (errno == ENOTEMPTY || errno == EEXIST) {
    remove_tree_at(to.dirfd, to.rel);
    if (::renameat(from_dirfd, src.c_str(), to.dirfd, rel_or_dot(to.rel)) == 0) {
      return;
    }
  }
  if (errno != EXDEV) {
    throw_errno("install " + std::string(dst));
  }
  remove_tree_at(to.dirfd, to.rel);
  copy_tree_at(from_dirfd, src, to.dirfd, to.rel);
  remove_tree_at(from_dirfd, src);
}

}  // namespace yolo
