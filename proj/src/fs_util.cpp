#include "yolo/fs_util.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <memory>

namespace yolo {

std::optional<struct stat> lstat_at(int dirfd, std::string_view path) {
  std::string p(path);
  struct stat st {};
  if (::fstatat(dirfd, rel_or_dot(p), &st, AT_SYMLINK_NOFOLLOW) != 0) {
    if (errno == ENOENT || errno == ENOTDIR) {
      return std::nullopt;
    }
    throw_errno("stat " + p);
  }
  return st;
}

UniqueFd open_at(int dirfd, std::string_view path, int flags, mode_t mode) {
  std::string p(path);
  int fd = ::openat(dirfd, rel_or_dot(p), flags | O_CLOEXEC, mode);
  if (fd < 0) {
    throw_errno("open " + p);
  }
  return UniqueFd(fd);
}

std::vector<std::string> list_dir_at(int dirfd, std::string_view path) {
  auto fd = open_at(dirfd, path, O_RDONLY | O_DIRECTORY | O_NOFOLLOW);
  DIR* dir = ::fdopendir(fd.get());
  if (dir == nullptr) {
    throw_errno("fdopendir " + std::string(path));
  }
  fd.release();
  std::unique_ptr<DIR, int (*)(DIR*)> guard(dir, ::closedir);
  std::vector<std::string> names;
  while (auto* ent = ::readdir(dir)) {
    std::string_view name(ent->d_name);
    if (name == "." || name == "..") {
      continue;
    }
    names.emplace_back(name);
  }
  return names;
}

void remove_tree_at(int dirfd, std::string_view path) {
  std::string p(path);
  auto st = lstat_at(dirfd, p);
  if (!st) {
    return;
  }
  if (S_ISDIR(st->st_mode)) {
    for (const auto& name : list_dir_at(dirfd, p)) {
      remove_tree_at(dirfd, p.empty() ? name : p + "/" + name);
    }
    if (p.empty()) {
      return;
    }
    if (::unlinkat(dirfd, p.c_str(), AT_REMOVEDIR) != 0 && errno != ENOENT) {
      throw_errno("rmdir " + p);
    }
    return;
  }
  if (::unlinkat(dirfd, p.c_str(), 0) != 0 && errno != ENOENT) {
    throw_errno("unlink " + p);
  }
}

void copy_fd_contents(int from_fd, int to_fd) {
  bool fallback = false;
  while (!fallback) {
    ssize_t n = ::copy_file_range(from_fd, nullptr, to_fd, nullptr, 1 << 30, 0);
    if (n == 0) {
      return;
    }
    if (n < 0) {
      if (errno == EXDEV || errno == ENOSYS || errno == EINVAL ||
          errno == EOPNOTSUPP) {
        fallback = true;
        break;
      }
      throw_errno("copy_file_range");
    }
  }
  std::array<char, 1 << 16> buf;
  for (;;) {
    ssize_t n = ::read(from_fd, buf.data(), buf.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("read");
    }
    if (n == 0) {
      return;
    }
    ssize_t off = 0;
    while (off < n) {
      ssize_t w = ::write(to_fd, buf.data() + off, n - off);
      if (w < 0) {
        if (errno == EINTR) continue;
        throw_errno("write");
      }
      off += w;
    }
  }
}

void copy_tree_at(int from_dirfd, std::string_view from, int to_dirfd,
                  std::string_view to) {
  std::string src(from), dst(to);
  auto st = lstat_at(from_dirfd, src);
  if (!st) {
    throw_errno(ENOENT, "copy " + src);
  }
  if (S_ISDIR(st->st_mode)) {
    if (::mkdirat(to_dirfd, dst.c_str(), st->st_mode & 07777) != 0 &&
        errno != EEXIST) {
      throw_errno("mkdir " + dst);
    }
    for (const auto& name : list_dir_at(from_dirfd, src)) {
      copy_tree_at(from_dirfd, src.empty() ? name : src + "/" + name, to_dirfd,
                   dst + "/" + name);
    }
    return;
  }
  if (S_ISLNK(st->st_mode)) {
    std::string target(static_cast<size_t>(st->st_size) + 1, '\0');
    ssize_t n = ::readlinkat(from_dirfd, src.c_str(), target.data(), target.size());
    if (n < 0) {
      throw_errno("readlink " + src);
    }
    target.resize(static_cast<size_t>(n));
    if (::symlinkat(target.c_str(), to_dirfd, dst.c_str()) != 0) {
      throw_errno("symlink " + dst);
    }
    return;
  }
  auto in = open_at(from_dirfd, src, O_RDONLY | O_NOFOLLOW);
  auto out = open_at(to_dirfd, dst, O_WRONLY | O_CREAT | O_TRUNC,
                     st->st_mode & 07777);
  copy_fd_contents(in.get(), out.get());
}

void write_file_at(int dirfd, std::string_view path, std::string_view contents,
                   bool sync) {
  auto fd = open_at(dirfd, path, O_WRONLY | O_CREAT | O_TRUNC, 0644);
  size_t off = 0;
  while (off < contents.size()) {
    ssize_t n = ::write(fd.get(), contents.data() + off, contents.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("write " + std::string(path));
    }
    off += static_cast<size_t>(n);
  }
  if (sync && ::fdatasync(fd.get()) != 0) {
    throw_errno("fdatasync " + std::string(path));
  }
}

std::string read_file_at(int dirfd, std::string_view path) {
  auto fd = open_at(dirfd, path, O_RDONLY);
  std::string out;
  std::array<char, 1 << 16> buf;
  for (;;) {
    ssize_t n = ::read(fd.get(), buf.data(), buf.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("read " + std::string(path));
    }
    if (n == 0) {
      return out;
    }
    out.append(buf.data(), static_cast<size_t>(n));
  }
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void add(const void* data, std::size_t n) {
    auto p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h = (h ^ p[i]) * 1099511628211ull;
    }
  }
  void add(std::string_view s) {
    std::uint64_t n = s.size();
    add(&n, sizeof(n));
    add(s.data(), s.size());
  }
};

void digest_dir(Fnv& f, int dirfd, const std::string& rel, bool skip_state) {
  auto names = list_dir_at(dirfd, rel);
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    if (skip_state && rel.empty() && name == ".yolo") {
      continue;
    }
    auto path = rel.empty() ? name : rel + "/" + name;
    auto st = lstat_at(dirfd, path);
    if (!st) {
      continue;
    }
    f.add(path);
    std::uint32_t mode = st->st_mode;
    f.add(&mode, sizeof(mode));
    if (S_ISDIR(st->st_mode)) {
      digest_dir(f, dirfd, path, skip_state);
    } else if (S_ISLNK(st->st_mode)) {
      std::string target(static_cast<std::size_t>(st->st_size) + 1, '\0');
      auto n = ::readlinkat(dirfd, path.c_str(), target.data(), target.size());
      f.add(std::string_view(target.data(), n > 0 ? static_cast<std::size_t>(n) : 0));
    } else if (S_ISREG(st->st_mode)) {
      auto fd = open_at(dirfd, path, O_RDONLY | O_NOFOLLOW);
      std::array<char, 1 << 16> buf;
      std::uint64_t total = 0;
      for (;;) {
        auto n = ::read(fd.get(), buf.data(), buf.size());
        if (n < 0) {
          if (errno == EINTR) continue;
          throw_errno("read " + path);
        }
        if (n == 0) break;
        f.add(buf.data(), static_cast<std::size_t>(n));
        total += static_cast<std::uint64_t>(n);
      }
      f.add(&total, sizeof(total));
    }
  }
}

}  // namespace

std::string tree_digest(const std::string& root, bool skip_state_dir) {
  auto fd = open_at(AT_FDCWD, root, O_RDONLY | O_DIRECTORY);
  Fnv f;
  digest_dir(f, fd.get(), "", skip_state_dir);
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(f.h));
  return out;
}

}  // namespace yolo
