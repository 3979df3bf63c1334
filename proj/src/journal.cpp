#include "yolo/journal.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <charconv>
#include <spdlog/spdlog.h>

#include "yolo/fs_util.hpp"
#include "yolo/path.hpp"

namespace yolo {

namespace {

constexpr const char* kJournalFile = "journal";

bool needs_escape(unsigned char c) { return c < 0x20 || c == '%'; }

void append_escaped(std::string& out, std::string_view field) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  for (char ch : field) {
    auto c = static_cast<unsigned char>(ch);
    if (needs_escape(c)) {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    } else {
      out.push_back(ch);
    }
  }
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

std::string unescape(std::string_view field, std::size_t line) {
  std::string out;
  out.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    char c = field[i];
    if (static_cast<unsigned char>(c) < 0x20) {
      throw CorruptJournal(line, "raw control byte in field");
    }
    if (c != '%') {
      out.push_back(c);
      continue;
    }
    if (i + 2 >= field.size()) {
      throw CorruptJournal(line, "truncated escape");
    }
    int hi = hex_value(field[i + 1]);
    int lo = hex_value(field[i + 2]);
    if (hi < 0 || lo < 0) {
      throw CorruptJournal(line, "bad escape");
    }
    out.push_back(static_cast<char>(hi * 16 + lo));
    i += 2;
  }
  return out;
}

std::uint64_t parse_number(std::string_view text, std::size_t line,
                           const char* what) {
  std::uint64_t value = 0;
  if (text.empty() || text.front() == '+' || text.front() == '-') {
    throw CorruptJournal(line, std::string("non-numeric ") + what);
  }
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw CorruptJournal(line, std::string("non-numeric ") + what);
  }
  return value;
}

std::string parse_path(std::string_view field, std::size_t line) {
  auto path = unescape(field, line);
  if (path.empty() || !is_normalized(path)) {
    throw CorruptJournal(line, "invalid path '" + path + "'");
  }
  return path;
}

std::string parse_label(std::string_view field, std::size_t line) {
  auto label = unescape(field, line);
  if (!valid_label(label)) {
    throw CorruptJournal(line, "invalid label");
  }
  return label;
}

JournalRecord parse_line(std::string_view text, std::size_t line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  for (;;) {
    auto tab = text.find('\t', pos);
    if (tab == std::string_view::npos) {
      fields.push_back(text.substr(pos));
      break;
    }
    fields.push_back(text.substr(pos, tab - pos));
    pos = tab + 1;
  }
  auto expect = [&](std::size_t n) {
    if (fields.size() != n) {
      throw CorruptJournal(line, "wrong field count");
    }
  };
  std::string_view tag = fields[0];
  if (tag == "S") {
    expect(3);
    auto ino = parse_number(fields[2], line, "ino");
    if (ino == 0) {
      throw CorruptJournal(line, "ino 0");
    }
    return StageRecord{parse_path(fields[1], line), ino};
  }
  if (tag == "R") {
    expect(3);
    return RenameRecord{parse_path(fields[1], line), parse_path(fields[2], line)};
  }
  if (tag == "D") {
    expect(2);
    return DeleteRecord{parse_path(fields[1], line)};
  }
  if (tag == "P") {
    expect(2);
    return SnapshotMarker{parse_label(fields[1], line)};
  }
  if (tag == "T") {
    expect(3);
    return TravelMarker{parse_label(fields[1], line),
                        parse_number(fields[2], line, "generation")};
  }
  throw CorruptJournal(line, "invalid record tag");
}

}  // namespace

CorruptJournal::CorruptJournal(std::size_t line, const std::string& what)
    : std::runtime_error("corrupt journal at line " + std::to_string(line) +
                         ": " + what),
      line_(line) {}

bool is_marker(const JournalRecord& record) {
  return std::holds_alternative<SnapshotMarker>(record) ||
         std::holds_alternative<TravelMarker>(record);
}

std::optional<ActionRecord> as_action(const JournalRecord& record) {
  if (auto* s = std::get_if<StageRecord>(&record)) return ActionRecord{*s};
  if (auto* r = std::get_if<RenameRecord>(&record)) return ActionRecord{*r};
  if (auto* d = std::get_if<DeleteRecord>(&record)) return ActionRecord{*d};
  return std::nullopt;
}

JournalRecord to_journal_record(const ActionRecord& action) {
  return std::visit([](const auto& r) -> JournalRecord { return r; }, action);
}

bool valid_label(std::string_view label) {
  if (label.empty()) {
    return false;
  }
  for (char c : label) {
    if (static_cast<unsigned char>(c) < 0x20 || c == 0x7f) {
      return false;
    }
  }
  return true;
}

std::string encode_record(const JournalRecord& record) {
  std::string out;
  std::visit(
      [&out](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, StageRecord>) {
          out += "S\t";
          append_escaped(out, r.path);
          out += '\t';
          out += std::to_string(r.ino);
        } else if constexpr (std::is_same_v<T, RenameRecord>) {
          out += "R\t";
          append_escaped(out, r.src);
          out += '\t';
          append_escaped(out, r.dst);
        } else if constexpr (std::is_same_v<T, DeleteRecord>) {
          out += "D\t";
          append_escaped(out, r.path);
        } else if constexpr (std::is_same_v<T, SnapshotMarker>) {
          out += "P\t";
          append_escaped(out, r.name);
        } else {
          out += "T\t";
          append_escaped(out, r.name);
          out += '\t';
          out += std::to_string(r.target);
        }
      },
      record);
  out += '\n';
  return out;
}

ParsedJournal parse_journal(std::string_view bytes) {
  ParsedJournal parsed;
  std::size_t pos = 0;
  std::size_t line = 0;
  Generation markers = 0;
  while (pos < bytes.size()) {
    auto lf = bytes.find('\n', pos);
    if (lf == std::string_view::npos) {
      parsed.dropped_partial_bytes = bytes.size() - pos;
      break;
    }
    ++line;
    auto record = parse_line(bytes.substr(pos, lf - pos), line);
    if (is_marker(record)) {
      ++markers;
      if (auto* travel = std::get_if<TravelMarker>(&record)) {
        if (travel->target >= markers) {
          throw CorruptJournal(line, "travel target not earlier than marker");
        }
      }
    }
    parsed.records.push_back(std::move(record));
    pos = lf + 1;
  }
  return parsed;
}

std::vector<Segment> partition_segments(const std::vector<JournalRecord>& records) {
  std::vector<Segment> segments(1);
  for (const auto& record : records) {
    if (is_marker(record)) {
      segments.push_back(Segment{static_cast<Generation>(segments.size()), {}});
      continue;
    }
    segments.back().records.push_back(*as_action(record));
  }
  return segments;
}

std::vector<MarkerInfo> list_markers(const std::vector<JournalRecord>& records) {
  std::vector<MarkerInfo> markers;
  for (const auto& record : records) {
    if (auto* p = std::get_if<SnapshotMarker>(&record)) {
      markers.push_back({static_cast<Generation>(markers.size() + 1), false,
                         p->name, 0});
    } else if (auto* t = std::get_if<TravelMarker>(&record)) {
      markers.push_back({static_cast<Generation>(markers.size() + 1), true,
                         t->name, t->target});
    }
  }
  return markers;
}

namespace {

// at_marker[g]: segments composing the state recorded by marker g.
// after_marker[g]: segments composing the state marker g leaves behind.
struct LivenessTable {
  std::vector<LivenessSet> at_marker;
  std::vector<LivenessSet> after_marker;
};

LivenessTable build_liveness(const std::vector<MarkerInfo>& markers) {
  LivenessTable table;
  table.at_marker.resize(markers.size() + 1);
  table.after_marker.resize(markers.size() + 1);
  for (const auto& m : markers) {
    auto g = m.gen;
    auto& at = table.at_marker[g];
    at = table.after_marker[g - 1];
    at.push_back(g - 1);
    if (m.travel) {
      if (m.target >= g) {
        throw CorruptJournal(0, "travel target " + std::to_string(m.target) +
                                    " not earlier than marker " +
                                    std::to_string(g));
      }
      table.after_marker[g] = table.at_marker[m.target];
    } else {
      table.after_marker[g] = at;
    }
  }
  return table;
}

}  // namespace

LivenessSet liveness(const std::vector<JournalRecord>& records,
                     Generation query_gen) {
  auto markers = list_markers(records);
  if (query_gen > markers.size()) {
    throw std::out_of_range("unknown generation " + std::to_string(query_gen));
  }
  return build_liveness(markers).at_marker[query_gen];
}

LivenessSet current_liveness(const std::vector<JournalRecord>& records) {
  auto markers = list_markers(records);
  auto table = build_liveness(markers);
  auto live = table.after_marker[markers.size()];
  live.push_back(markers.size());
  return live;
}

OverrideTree replay(const std::vector<Segment>& segments,
                    const LivenessSet& live) {
  OverrideTree tree;
  std::size_t index = 0;
  for (auto gen : live) {
    if (gen >= segments.size()) {
      throw std::out_of_range("segment " + std::to_string(gen));
    }
    for (const auto& action : segments[gen].records) {
      ++index;
      try {
        tree.apply(action, gen);
      } catch (const InvalidRecord& e) {
        throw CorruptJournal(index, e.what());
      } catch (const InvalidPath& e) {
        throw CorruptJournal(index, e.what());
      }
    }
  }
  return tree;
}

OverrideTree reconstruct(const std::vector<JournalRecord>& records,
                         Generation target_gen) {
  return replay(partition_segments(records), liveness(records, target_gen));
}

OverrideTree reconstruct_current(const std::vector<JournalRecord>& records) {
  return replay(partition_segments(records), current_liveness(records));
}

std::vector<ActionRecord> live_actions(const std::vector<JournalRecord>& records) {
  auto segments = partition_segments(records);
  std::vector<ActionRecord> out;
  for (auto gen : current_liveness(records)) {
    auto& seg = segments[gen].records;
    out.insert(out.end(), seg.begin(), seg.end());
  }
  return out;
}

// --- Journal --------------------------------------------------------------

Journal::Journal(int state_dirfd, bool sync)
    : state_dirfd_(state_dirfd), sync_(sync) {
  open_file();
}

void Journal::open_file() {
  fd_ = open_at(state_dirfd_, kJournalFile, O_RDWR | O_CREAT | O_APPEND, 0644);
  auto bytes = read_file_at(state_dirfd_, kJournalFile);
  auto parsed = parse_journal(bytes);
  if (parsed.dropped_partial_bytes > 0) {
    spdlog::warn("journal: discarding {} bytes of a torn trailing record",
                 parsed.dropped_partial_bytes);
    check_syscall(
        ::ftruncate(fd_.get(), static_cast<off_t>(bytes.size() -
                                                  parsed.dropped_partial_bytes)),
        "truncate journal");
  }
  markers_ = 0;
  for (const auto& r : parsed.records) {
    if (is_marker(r)) ++markers_;
  }
  size_ = bytes.size() - parsed.dropped_partial_bytes;
}

std::optional<Generation> Journal::append(const JournalRecord& record) {
  if (auto* p = std::get_if<SnapshotMarker>(&record); p && !valid_label(p->name)) {
    throw std::invalid_argument("invalid snapshot label");
  }
  if (auto* t = std::get_if<TravelMarker>(&record)) {
    if (!valid_label(t->name)) {
      throw std::invalid_argument("invalid travel label");
    }
  }
  auto line = encode_record(record);
  std::lock_guard lock(mutex_);
  if (auto* t = std::get_if<TravelMarker>(&record); t && t->target > markers_) {
    throw std::invalid_argument("travel target is not an earlier generation");
  }
  std::size_t off = 0;
  while (off < line.size()) {
    ssize_t n = ::write(fd_.get(), line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      if (::ftruncate(fd_.get(), static_cast<off_t>(size_)) != 0) {
        spdlog::error("journal rollback failed");
      }
      throw_errno(err, "journal append");
    }
    off += static_cast<std::size_t>(n);
  }
  if (sync_ && ::fdatasync(fd_.get()) != 0) {
    int err = errno;
    if (::ftruncate(fd_.get(), static_cast<off_t>(size_)) != 0) {
      spdlog::error("journal rollback failed");
    }
    throw_errno(err, "journal fdatasync");
  }
  size_ += line.size();
  if (is_marker(record)) {
    return ++markers_;
  }
  return std::nullopt;
}

ParsedJournal Journal::read() const {
  std::lock_guard lock(mutex_);
  auto bytes = read_file_at(state_dirfd_, kJournalFile);
  return parse_journal(bytes);
}

Generation Journal::marker_count() const {
  std::lock_guard lock(mutex_);
  return markers_;
}

std::uint64_t Journal::size_bytes() const {
  std::lock_guard lock(mutex_);
  return size_;
}

void Journal::reset() {
  std::lock_guard lock(mutex_);
  fd_.reset();
  if (::unlinkat(state_dirfd_, kJournalFile, 0) != 0 && errno != ENOENT) {
    throw_errno("unlink journal");
  }
  fd_ = open_at(state_dirfd_, kJournalFile, O_RDWR | O_CREAT | O_APPEND, 0644);
  markers_ = 0;
  size_ = 0;
}

}  // namespace yolo
