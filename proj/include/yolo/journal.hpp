#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "yolo/fd.hpp"
#include "yolo/override_tree.hpp"

namespace yolo {

struct SnapshotMarker {
  std::string name;
  bool operator==(const SnapshotMarker&) const = default;
};

struct TravelMarker {
  std::string name;
  Generation target = 0;
  bool operator==(const TravelMarker&) const = default;
};

using JournalRecord = std::variant<StageRecord, RenameRecord, DeleteRecord,
                                   SnapshotMarker, TravelMarker>;

bool is_marker(const JournalRecord& record);
std::optional<ActionRecord> as_action(const JournalRecord& record);
JournalRecord to_journal_record(const ActionRecord& action);

class CorruptJournal : public std::runtime_error {
 public:
  CorruptJournal(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Encodes one record as a single LF-terminated line:
///   S<TAB>path<TAB>ino | R<TAB>src<TAB>dst | D<TAB>path |
///   P<TAB>name | T<TAB>name<TAB>target
/// Bytes 0x00-0x1F and `%` inside fields are written as `%XX`.
std::string encode_record(const JournalRecord& record);

struct ParsedJournal {
  std::vector<JournalRecord> records;
  /// Bytes of a trailing line without LF, which is ignored.
  std::size_t dropped_partial_bytes = 0;
};

ParsedJournal parse_journal(std::string_view bytes);

bool valid_label(std::string_view label);

// --- segments and liveness ---------------------------------------------

struct Segment {
  Generation gen = 0;
  std::vector<ActionRecord> records;
};

/// Splits the journal into segments; segment g holds the action records
/// following marker g (segment 0 starts at session start).
std::vector<Segment> partition_segments(const std::vector<JournalRecord>& records);

/// The ordered segment generations composing a state.
using LivenessSet = std::vector<Generation>;

struct MarkerInfo {
  Generation gen = 0;
  bool travel = false;
  std::string name;
  Generation target = 0;  // travel only
};

std::vector<MarkerInfo> list_markers(const std::vector<JournalRecord>& records);

/// Segments composing the state recorded at marker `query_gen` (the state at
/// the instant that marker was written). Generation 0 is the empty session
/// start. Throws CorruptJournal for a travel marker whose target is not
/// strictly earlier, and std::out_of_range for an unknown generation.
LivenessSet liveness(const std::vector<JournalRecord>& records,
                     Generation query_gen);

/// Segments composing the live state after the last record: the state the
/// last marker established followed by the open segment.
LivenessSet current_liveness(const std::vector<JournalRecord>& records);

/// Replays the live segments of `query_gen` into a fresh tree.
OverrideTree reconstruct(const std::vector<JournalRecord>& records,
                         Generation target_gen);
OverrideTree reconstruct_current(const std::vector<JournalRecord>& records);

/// Replays an explicit liveness set.
OverrideTree replay(const std::vector<Segment>& segments,
                    const LivenessSet& live);

/// Action records of the live set, in replay order.
std::vector<ActionRecord> live_actions(const std::vector<JournalRecord>& records);

// --- file handle ----------------------------------------------------------

/// Append-only journal file at `.yolo/journal`.
class Journal {
 public:
  Journal(int state_dirfd, bool sync);

  /// Durably appends `record`. For markers, returns the generation the
  /// marker receives.
  std::optional<Generation> append(const JournalRecord& record);

  ParsedJournal read() const;
  Generation marker_count() const;
  std::uint64_t size_bytes() const;

  /// Deletes the journal and starts an empty one.
  void reset();

 private:
  void open_file();

  int state_dirfd_;
  bool sync_;
  mutable std::mutex mutex_;
  UniqueFd fd_;
  Generation markers_ = 0;
  std::uint64_t size_ = 0;
};

}  // namespace yolo
