#pragma once

#include <sys/stat.h>

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>

#include "yolo/fd.hpp"
#include "yolo/override_tree.hpp"

namespace yolo {

enum class StoreKind { kRegular, kDirectory, kSymlink };

/// Flat, ino-indexed pool of staged contents under `.yolo/files/`.
///
/// Inos are allocated from a persisted counter that never decreases within
/// a session. Objects live at `files/<hh>/<ino>` where `hh` is the low byte
/// of the ino in lowercase hex.
class FileStore {
 public:
  /// `state_dirfd` is an open descriptor of the `.yolo` directory.
  FileStore(int state_dirfd, bool sync_metadata);

  static std::string path_of(Ino ino);

  Ino allocate(StoreKind kind, mode_t mode = 0644);
  Ino allocate_symlink(std::string_view target);

  /// Copies a regular base file (relative to `base_dirfd`) into a fresh ino.
  Ino copy_up(int base_dirfd, std::string_view base_path);

  /// Returns `ino` when its generation is current, otherwise a fresh copy.
  /// The stale ino is left untouched.
  Ino ensure_current(Ino ino, Generation file_gen, Generation global_gen);

  UniqueFd open(Ino ino, int flags) const;
  struct stat stat(Ino ino) const;
  bool exists(Ino ino) const;

  /// Descriptor of the `.yolo` directory, for relative operations.
  int state_dirfd() const { return state_dirfd_; }

  Ino next_ino() const { return next_ino_.load(); }
  /// Number of objects allocated by this instance (copy-ups included).
  std::uint64_t allocation_count() const { return allocations_.load(); }

  /// Removes every stored object and restarts inos at 1.
  void reset();

 private:
  Ino reserve_ino();
  void persist_next_ino(Ino next);
  void ensure_shard(Ino ino);

  int state_dirfd_;
  bool sync_metadata_;
  std::mutex alloc_mutex_;
  std::atomic<Ino> next_ino_{1};
  std::atomic<std::uint64_t> allocations_{0};
};

}  // namespace yolo
