#include "yolo/protocol.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "yolo/fd.hpp"

namespace yolo {

namespace {

void send_all(int fd, const char* data, std::size_t size) {
  while (size > 0) {
    ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) {
      n = ::write(fd, data, size);
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("control write");
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

// Returns false on EOF before any byte was read.
bool recv_all(int fd, char* data, std::size_t size) {
  std::size_t got = 0;
  while (got < size) {
    ssize_t n = ::read(fd, data + got, size - got);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("control read");
    }
    if (n == 0) {
      if (got == 0) return false;
      throw ProtocolError("truncated frame");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

const char* kind_name(ChangeKind kind) {
  switch (kind) {
    case ChangeKind::kCreated: return "created";
    case ChangeKind::kModified: return "modified";
    case ChangeKind::kDeleted: return "deleted";
    case ChangeKind::kRenamed: return "renamed";
  }
  return "?";
}

}  // namespace

void write_frame(int fd, const json& message) {
  std::string body = message.dump();
  if (body.size() > kMaxFrame) {
    throw ProtocolError("frame too large");
  }
  auto n = static_cast<std::uint32_t>(body.size());
  std::string frame(4, '\0');
  for (int i = 0; i < 4; ++i) {
    frame[i] = static_cast<char>((n >> (8 * i)) & 0xff);
  }
  frame += body;
  send_all(fd, frame.data(), frame.size());
}

std::optional<json> read_frame(int fd) {
  unsigned char len[4];
  if (!recv_all(fd, reinterpret_cast<char*>(len), 4)) {
    return std::nullopt;
  }
  std::uint32_t n = len[0] | (len[1] << 8) | (len[2] << 16) |
                    (static_cast<std::uint32_t>(len[3]) << 24);
  if (n > kMaxFrame) {
    throw ProtocolError("frame too large");
  }
  std::string body(n, '\0');
  if (n > 0 && !recv_all(fd, body.data(), n)) {
    throw ProtocolError("truncated frame");
  }
  try {
    auto j = json::parse(body);
    if (!j.is_object()) {
      throw ProtocolError("frame is not a JSON object");
    }
    return j;
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("bad frame: ") + e.what());
  }
}

char change_letter(ChangeKind kind) {
  switch (kind) {
    case ChangeKind::kCreated: return 'C';
    case ChangeKind::kModified: return 'M';
    case ChangeKind::kDeleted: return 'D';
    case ChangeKind::kRenamed: return 'R';
  }
  return '?';
}

json to_json(const ChangeEntry& entry) {
  json j = {{"path", entry.path}, {"kind", kind_name(entry.kind)}};
  if (entry.kind == ChangeKind::kRenamed) {
    j["src"] = entry.src;
  }
  if (entry.ino) {
    j["ino"] = *entry.ino;
  }
  return j;
}

ChangeEntry change_from_json(const json& j) {
  ChangeEntry e;
  e.path = j.at("path").get<std::string>();
  auto kind = j.at("kind").get<std::string>();
  if (kind == "created") {
    e.kind = ChangeKind::kCreated;
  } else if (kind == "modified") {
    e.kind = ChangeKind::kModified;
  } else if (kind == "deleted") {
    e.kind = ChangeKind::kDeleted;
  } else if (kind == "renamed") {
    e.kind = ChangeKind::kRenamed;
    e.src = j.at("src").get<std::string>();
  } else {
    throw ProtocolError("unknown change kind " + kind);
  }
  if (j.contains("ino")) {
    e.ino = j.at("ino").get<Ino>();
  }
  return e;
}

json diff_payload(const std::vector<ChangeEntry>& entries) {
  json list = json::array();
  for (const auto& e : entries) {
    list.push_back(to_json(e));
  }
  return {{"entries", list}};
}

std::vector<ChangeEntry> diff_from_payload(const json& payload) {
  std::vector<ChangeEntry> out;
  for (const auto& j : payload.at("entries")) {
    out.push_back(change_from_json(j));
  }
  return out;
}

std::string render_diff(const std::vector<ChangeEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += change_letter(e.kind);
    out += '\t';
    out += e.path;
    if (e.kind == ChangeKind::kRenamed) {
      out += "\t← ";
      out += e.src;
    }
    out += '\n';
  }
  return out;
}

std::vector<ChangeEntry> change_delta(const std::vector<ChangeEntry>& before,
                                      const std::vector<ChangeEntry>& after) {
  std::set<std::string> seen;
  for (const auto& e : before) {
    seen.insert(to_json(e).dump());
  }
  std::vector<ChangeEntry> out;
  for (const auto& e : after) {
    if (!seen.count(to_json(e).dump())) {
      out.push_back(e);
    }
  }
  return out;
}

std::string render_change_summary(const std::vector<ChangeEntry>& delta) {
  return std::string(kChangeSentinel) + "\n" + render_diff(delta);
}

json log_payload(const SessionLog& log) {
  json markers = json::array();
  for (const auto& m : log.markers) {
    json j = {{"gen", m.gen}, {"kind", m.travel ? "T" : "P"}, {"name", m.name}};
    if (m.travel) {
      j["target"] = m.target;
    }
    markers.push_back(j);
  }
  json segments = json::array();
  for (const auto& s : log.segments) {
    segments.push_back({{"gen", s.gen}, {"records", s.records}, {"live", s.live}});
  }
  return {{"generation", log.generation},
          {"markers", markers},
          {"segments", segments}};
}

std::string render_log(const json& payload) {
  std::ostringstream out;
  std::map<Generation, json> markers;
  for (const auto& m : payload.at("markers")) {
    markers[m.at("gen").get<Generation>()] = m;
  }
  for (const auto& s : payload.at("segments")) {
    auto gen = s.at("gen").get<Generation>();
    if (auto it = markers.find(gen); it != markers.end()) {
      const auto& m = it->second;
      if (m.at("kind") == "T") {
        out << fmt::format("{:>4}  T {} -> {}\n", gen,
                           m.at("name").get<std::string>(),
                           m.at("target").get<Generation>());
      } else {
        out << fmt::format("{:>4}  P {}\n", gen, m.at("name").get<std::string>());
      }
    }
    out << fmt::format("      seg {} {} record(s){}\n", gen,
                       s.at("records").get<std::size_t>(),
                       s.at("live").get<bool>() ? "" : " (dead)");
  }
  out << fmt::format("generation {}\n", payload.at("generation").get<Generation>());
  return out.str();
}

std::string display_path(const std::string& logical) { return "/" + logical; }

json rules_payload(const std::vector<std::pair<std::string, RuleState>>& rules) {
  json list = json::array();
  for (const auto& [path, state] : rules) {
    list.push_back({{"path", path}, {"state", to_string(state)}});
  }
  return {{"rules", list}};
}

std::string render_rules(const json& payload) {
  std::string out;
  for (const auto& r : payload.at("rules")) {
    out += fmt::format("{}\t{}\n", r.at("state").get<std::string>(),
                       display_path(r.at("path").get<std::string>()));
  }
  return out;
}

json commit_payload(const CommitSummary& summary) {
  return {{"applied", summary.applied},
          {"files_moved", summary.files_moved},
          {"bytes", summary.bytes}};
}

}  // namespace yolo
