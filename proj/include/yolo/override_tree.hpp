#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace yolo {

using Ino = std::uint64_t;
using Generation = std::uint64_t;

// Node states. A path without a node is implicitly BasePath to itself.
struct StagedFile {
  Ino ino = 0;
  Generation gen = 0;
  bool operator==(const StagedFile&) const = default;
};

struct BasePath {
  std::string src;
  bool operator==(const BasePath&) const = default;
};

struct Tombstone {
  bool operator==(const Tombstone&) const = default;
};

using NodeState = std::variant<StagedFile, BasePath, Tombstone>;

struct OverrideNode {
  std::optional<NodeState> state;
  std::map<std::string, OverrideNode, std::less<>> children;

  bool operator==(const OverrideNode&) const = default;
};

enum class AbsentReason { kTombstoned, kStagedDirMiss, kBaseMiss };

struct ResolvedStaged {
  Ino ino = 0;
  Generation gen = 0;
  bool operator==(const ResolvedStaged&) const = default;
};
struct ResolvedBase {
  std::string src;
  bool operator==(const ResolvedBase&) const = default;
};
struct ResolvedAbsent {
  AbsentReason reason = AbsentReason::kBaseMiss;
  bool operator==(const ResolvedAbsent&) const = default;
};

using Resolution = std::variant<ResolvedStaged, ResolvedBase, ResolvedAbsent>;

// Action records as seen by the tree. Markers live in the journal module.
struct StageRecord {
  std::string path;
  Ino ino = 0;
  bool operator==(const StageRecord&) const = default;
};
struct RenameRecord {
  std::string src;
  std::string dst;
  bool operator==(const RenameRecord&) const = default;
};
struct DeleteRecord {
  std::string path;
  bool operator==(const DeleteRecord&) const = default;
};

using ActionRecord = std::variant<StageRecord, RenameRecord, DeleteRecord>;

class InvalidRecord : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedTree : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EntryOrigin { kOverride, kBase };

struct MergedEntry {
  std::string name;
  EntryOrigin origin;
  bool operator==(const MergedEntry&) const = default;
};

enum class ChangeKind { kCreated, kModified, kDeleted, kRenamed };

struct ChangeEntry {
  std::string path;
  ChangeKind kind;
  std::string src;           // kRenamed only
  std::optional<Ino> ino;    // kCreated / kModified only
  bool operator==(const ChangeEntry&) const = default;
};

using BaseProber = std::function<bool(std::string_view base_path)>;

/// In-memory map from logical paths to node states. Not internally
/// synchronized; the owning session serializes mutations against readers.
class OverrideTree {
 public:
  OverrideTree() = default;

  Resolution resolve(std::string_view path) const;

  /// Merged listing of a directory. `base_entries` is the listing of the
  /// base directory the path resolves to; it is ignored for staged
  /// directories. Throws std::system_error(ENOENT) if the path is absent.
  std::vector<MergedEntry> merge_readdir(
      std::string_view path, const std::vector<std::string>& base_entries) const;

  void apply(const ActionRecord& record, Generation current_gen);

  std::vector<ChangeEntry> diff(const BaseProber& base_exists) const;

  std::string serialize() const;
  static OverrideTree deserialize(std::string_view bytes);

  /// Node at `path`, or nullptr. The root node always exists.
  const OverrideNode* find(std::string_view path) const;
  const OverrideNode& root() const { return root_; }
  bool empty() const { return root_.children.empty(); }

  /// Visits every node with a StagedFile state.
  void for_each_staged(
      const std::function<void(std::string_view path, const StagedFile&)>& fn)
      const;

  bool operator==(const OverrideTree& other) const = default;

 private:
  OverrideNode& ensure_node(std::string_view path);
  OverrideNode* find_mutable(std::string_view path);

  OverrideNode root_;
};

const char* to_string(ChangeKind kind);
const char* to_string(AbsentReason reason);

}  // namespace yolo
