#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "yolo/override_tree.hpp"
#include "yolo/permission.hpp"
#include "yolo/session.hpp"

namespace yolo {

using nlohmann::json;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMaxFrame = 64u << 20;

/// Writes one frame: a 4-byte little-endian length then the JSON text.
void write_frame(int fd, const json& message);
/// Returns nullopt on a clean EOF before the length prefix.
std::optional<json> read_frame(int fd);

char change_letter(ChangeKind kind);
json to_json(const ChangeEntry& entry);
ChangeEntry change_from_json(const json& j);

json diff_payload(const std::vector<ChangeEntry>& entries);
std::vector<ChangeEntry> diff_from_payload(const json& payload);

/// One line per entry: `C|M|D|R<TAB>path[<TAB>← src]`.
std::string render_diff(const std::vector<ChangeEntry>& entries);

/// Entries of `after` that do not appear in `before`, in `after` order.
std::vector<ChangeEntry> change_delta(const std::vector<ChangeEntry>& before,
                                      const std::vector<ChangeEntry>& after);
std::string render_change_summary(const std::vector<ChangeEntry>& delta);
inline constexpr const char* kChangeSentinel = "#yolo-changes";

json log_payload(const SessionLog& log);
std::string render_log(const json& payload);

json rules_payload(const std::vector<std::pair<std::string, RuleState>>& rules);
std::string render_rules(const json& payload);

json commit_payload(const CommitSummary& summary);

/// Logical paths print with a leading slash so the root is visible.
std::string display_path(const std::string& logical);

}  // namespace yolo
