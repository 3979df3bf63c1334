#include "yolo/file_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <charconv>
#include <cstdio>

#include "yolo/fs_util.hpp"

namespace yolo {

namespace {
constexpr const char* kFilesDir = "files";
constexpr const char* kNextInoFile = "next_ino";
}  // namespace

FileStore::FileStore(int state_dirfd, bool sync_metadata)
    : state_dirfd_(state_dirfd), sync_metadata_(sync_metadata) {
  if (::mkdirat(state_dirfd_, kFilesDir, 0755) != 0 && errno != EEXIST) {
    throw_errno("mkdir .yolo/files");
  }
  if (lstat_at(state_dirfd_, kNextInoFile)) {
    auto text = read_file_at(state_dirfd_, kNextInoFile);
    Ino value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || value == 0) {
      throw std::runtime_error("corrupt .yolo/next_ino");
    }
    next_ino_ = value;
  }
}

std::string FileStore::path_of(Ino ino) {
  char shard[3];
  std::snprintf(shard, sizeof shard, "%02x", static_cast<unsigned>(ino & 0xff));
  return std::string(kFilesDir) + "/" + shard + "/" + std::to_string(ino);
}

void FileStore::persist_next_ino(Ino next) {
  write_file_at(state_dirfd_, kNextInoFile, std::to_string(next) + "\n",
                sync_metadata_);
}

Ino FileStore::reserve_ino() {
  Ino ino = next_ino_.load();
  persist_next_ino(ino + 1);
  next_ino_ = ino + 1;
  allocations_++;
  return ino;
}

void FileStore::ensure_shard(Ino ino) {
  auto path = path_of(ino);
  auto shard = path.substr(0, path.rfind('/'));
  if (::mkdirat(state_dirfd_, shard.c_str(), 0755) != 0 && errno != EEXIST) {
    throw_errno("mkdir " + shard);
  }
}

Ino FileStore::allocate(StoreKind kind, mode_t mode) {
  std::lock_guard lock(alloc_mutex_);
  Ino ino = next_ino_.load();
  ensure_shard(ino);
  auto path = path_of(ino);
  switch (kind) {
    case StoreKind::kRegular:
      ::fchmod(open_at(state_dirfd_, path, O_WRONLY | O_CREAT | O_TRUNC,
                       mode & 07777)
                   .get(),
               mode & 07777);
      break;
    case StoreKind::kDirectory:
      if (::mkdirat(state_dirfd_, path.c_str(), (mode & 07777) | 0700) != 0) {
        if (errno != EEXIST) {
          throw_errno("mkdir " + path);
        }
        remove_tree_at(state_dirfd_, path);
        check_syscall(
            ::mkdirat(state_dirfd_, path.c_str(), (mode & 07777) | 0700),
            "mkdir " + path);
      }
      break;
    case StoreKind::kSymlink:
      throw std::invalid_argument("use allocate_symlink");
  }
  return reserve_ino();
}

Ino FileStore::allocate_symlink(std::string_view target) {
  std::lock_guard lock(alloc_mutex_);
  Ino ino = next_ino_.load();
  ensure_shard(ino);
  auto path = path_of(ino);
  std::string t(target);
  if (::symlinkat(t.c_str(), state_dirfd_, path.c_str()) != 0) {
    throw_errno("symlink " + path);
  }
  return reserve_ino();
}

Ino FileStore::copy_up(int base_dirfd, std::string_view base_path) {
  auto src = open_at(base_dirfd, base_path, O_RDONLY | O_NOFOLLOW);
  struct stat st {};
  check_syscall(::fstat(src.get(), &st), "fstat " + std::string(base_path));
  if (!S_ISREG(st.st_mode)) {
    throw_errno(EINVAL, "copy-up of non-regular file " + std::string(base_path));
  }
  std::lock_guard lock(alloc_mutex_);
  Ino ino = next_ino_.load();
  ensure_shard(ino);
  auto path = path_of(ino);
  auto dst = open_at(state_dirfd_, path, O_WRONLY | O_CREAT | O_TRUNC,
                     st.st_mode & 07777);
  ::fchmod(dst.get(), st.st_mode & 07777);
  try {
    copy_fd_contents(src.get(), dst.get());
  } catch (...) {
    ::unlinkat(state_dirfd_, path.c_str(), 0);
    throw;
  }
  return reserve_ino();
}

Ino FileStore::ensure_current(Ino ino, Generation file_gen,
                              Generation global_gen) {
  if (file_gen == global_gen) {
    return ino;
  }
  auto stale_path = path_of(ino);
  auto src = open_at(state_dirfd_, stale_path, O_RDONLY | O_NOFOLLOW);
  struct stat st {};
  check_syscall(::fstat(src.get(), &st), "fstat " + stale_path);
  if (S_ISDIR(st.st_mode)) {
    // Directory contents are tracked by the tree, never by the store object.
    return ino;
  }
  std::lock_guard lock(alloc_mutex_);
  Ino fresh = next_ino_.load();
  ensure_shard(fresh);
  auto path = path_of(fresh);
  auto dst = open_at(state_dirfd_, path, O_WRONLY | O_CREAT | O_TRUNC,
                     st.st_mode & 07777);
  ::fchmod(dst.get(), st.st_mode & 07777);
  try {
    copy_fd_contents(src.get(), dst.get());
  } catch (...) {
    ::unlinkat(state_dirfd_, path.c_str(), 0);
    throw;
  }
  return reserve_ino();
}

UniqueFd FileStore::open(Ino ino, int flags) const {
  return open_at(state_dirfd_, path_of(ino), flags);
}

struct stat FileStore::stat(Ino ino) const {
  auto st = lstat_at(state_dirfd_, path_of(ino));
  if (!st) {
    throw_errno(ENOENT, "store object " + std::to_string(ino) + " missing");
  }
  return *st;
}

bool FileStore::exists(Ino ino) const {
  return lstat_at(state_dirfd_, path_of(ino)).has_value();
}

void FileStore::reset() {
  std::lock_guard lock(alloc_mutex_);
  remove_tree_at(state_dirfd_, kFilesDir);
  if (::mkdirat(state_dirfd_, kFilesDir, 0755) != 0 && errno != EEXIST) {
    throw_errno("mkdir .yolo/files");
  }
  persist_next_ino(1);
  next_ino_ = 1;
}

}  // namespace yolo
