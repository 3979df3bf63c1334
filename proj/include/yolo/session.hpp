#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "yolo/base_fs.hpp"
#include "yolo/file_store.hpp"
#include "yolo/journal.hpp"
#include "yolo/override_tree.hpp"
#include "yolo/permission.hpp"

namespace yolo {

struct SessionOptions {
  std::string base_root;
  std::vector<std::string> extra_roots;
  /// Flush journal appends and the ino counter to stable storage.
  bool sync = true;
};

struct CommitSummary {
  std::size_t applied = 0;
  std::size_t files_moved = 0;
  std::uint64_t bytes = 0;
};

class CommitError : public std::runtime_error {
 public:
  CommitError(std::size_t index, std::size_t applied, const std::string& what)
      : std::runtime_error(what), index_(index), applied_(applied) {}
  std::size_t index() const { return index_; }
  std::size_t applied() const { return applied_; }

 private:
  std::size_t index_;
  std::size_t applied_;
};

class InvalidTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SessionBusy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SegmentInfo {
  Generation gen = 0;
  std::size_t records = 0;
  bool live = false;
};

struct SessionLog {
  Generation generation = 0;
  std::vector<MarkerInfo> markers;
  std::vector<SegmentInfo> segments;
};

/// Staged state of one mounted base tree: the override tree, the store, the
/// journal and the rules, plus the session-level operations on them.
///
/// Filesystem operations take `mutex()` shared to read the tree and
/// exclusive to mutate it; snapshot, travel, commit and abort take it
/// exclusively, which quiesces the mount for their duration.
class Session {
 public:
  explicit Session(SessionOptions options);
  ~Session();

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  BaseFs& base() { return *base_; }
  const BaseFs& base() const { return *base_; }
  FileStore& store() { return *store_; }
  Journal& journal() { return *journal_; }
  PermissionEngine& permissions() { return permissions_; }
  const SessionOptions& options() const { return options_; }
  int state_dirfd() const { return state_dir_.get(); }
  std::string state_dir_path() const;

  Generation generation() const { return gen_.load(std::memory_order_acquire); }
  /// Changes on commit and abort; handles opened earlier become unusable.
  std::uint64_t epoch() const { return epoch_.load(std::memory_order_acquire); }

  std::shared_mutex& mutex() const { return mutex_; }
  /// Caller holds mutex() in either mode.
  const OverrideTree& tree() const { return tree_; }
  /// Journals and applies an action. Caller holds mutex() exclusively.
  void record(const ActionRecord& action);

  Generation snapshot(std::string_view name);
  /// `target` is a generation number or a marker name (latest wins).
  Generation travel(std::string_view target, std::string_view label = {});
  Generation travel_to(Generation target, std::string_view label);
  Generation resolve_target(std::string_view target) const;

  std::vector<ChangeEntry> diff() const;
  SessionLog log() const;

  CommitSummary commit();
  void abort();

  /// Consulted by commit; a nonzero count refuses the commit.
  std::function<std::size_t()> pending_asks;

 private:
  void reset_locked();

  SessionOptions options_;
  std::unique_ptr<BaseFs> base_;
  UniqueFd state_dir_;
  std::unique_ptr<FileStore> store_;
  std::unique_ptr<Journal> journal_;
  PermissionEngine permissions_;

  mutable std::shared_mutex mutex_;
  OverrideTree tree_;
  std::atomic<Generation> gen_{0};
  std::atomic<std::uint64_t> epoch_{0};
};

}  // namespace yolo
