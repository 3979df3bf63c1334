#pragma once

#include <sys/types.h>

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "yolo/fd.hpp"
#include "yolo/fs_ops.hpp"

namespace yolo {

struct MountOptions {
  std::string mountpoint;
  /// Mount source shown in /proc/self/mountinfo.
  std::string source = "yolo";
  /// Filesystem subtype; the mount type becomes `fuse.<subtype>`.
  std::string subtype = "yolo";
  unsigned threads = 4;
  bool allow_other = true;
};

/// Serves an FsOps implementation through the kernel's userspace
/// filesystem device, speaking the wire protocol directly.
///
/// Nodes are tracked by logical path; every lookup revalidates against the
/// ops (entry and attribute timeouts are zero) so tree swaps are visible on
/// the next access.
class FuseBridge {
 public:
  FuseBridge(FsOps& ops, MountOptions options);
  ~FuseBridge();

  FuseBridge(const FuseBridge&) = delete;
  FuseBridge& operator=(const FuseBridge&) = delete;

  /// Mounts and starts the worker threads; returns once the kernel
  /// handshake has completed.
  void start();
  /// Unmounts (lazily if busy) and joins the workers. Idempotent.
  void stop();
  /// Blocks until the mount goes away, e.g. after an external umount.
  void wait();

  bool running() const { return running_.load(); }
  const std::string& mountpoint() const { return options_.mountpoint; }
  std::uint64_t requests_served() const { return served_.load(); }

 private:
  struct Node {
    std::string path;
    std::uint64_t lookups = 0;
    mode_t type = 0;
    bool orphan = false;
  };
  struct Request;

  void worker();
  void dispatch(Request& req);
  void reply(std::uint64_t unique, int error, const void* data,
             std::size_t size);
  void reply_error(std::uint64_t unique, int error) {
    reply(unique, error, nullptr, 0);
  }

  std::string path_of(std::uint64_t nodeid, bool* known = nullptr);
  std::uint64_t remember(const std::string& path, mode_t type);
  void forget(std::uint64_t nodeid, std::uint64_t count);
  void moved(const std::string& src, const std::string& dst);
  void removed(const std::string& path);
  std::uint64_t dirent_ino(const std::string& path);

  FsOps& ops_;
  MountOptions options_;
  UniqueFd dev_;
  std::vector<std::thread> workers_;
  std::atomic<bool> running_{false};
  std::atomic<bool> mounted_{false};
  std::atomic<bool> initialized_{false};
  std::atomic<std::uint64_t> served_{0};
  std::mutex init_mutex_;
  std::condition_variable init_cv_;
  dev_t mount_dev_ = 0;

  std::mutex nodes_mutex_;
  std::unordered_map<std::uint64_t, Node> nodes_;
  std::map<std::string, std::uint64_t, std::less<>> by_path_;
  std::uint64_t next_nodeid_ = 2;
};

}  // namespace yolo
