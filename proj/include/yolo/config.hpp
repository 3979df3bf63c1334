#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "yolo/permission.hpp"

namespace yolo {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct RuleConfig {
  std::string path;
  RuleState state = RuleState::kAsk;
  bool operator==(const RuleConfig&) const = default;
};

struct SessionConfig {
  std::string base;
  std::vector<std::string> extra_roots;
  std::vector<RuleConfig> rules;
  int ask_timeout_seconds = 120;
  std::optional<std::string> console_listen;
};

/// Parses the subset of TOML used by `yolo.toml`: top-level `base`,
/// `extra_roots`, `ask_timeout`, repeated `[[rule]]` tables and an optional
/// `[console]` table. Unknown keys are rejected.
SessionConfig parse_config(std::string_view text);
SessionConfig load_config(const std::string& path);

/// Appends one `[[rule]]` table to the file, creating it if needed.
void append_rule(const std::string& path, const RuleConfig& rule);

std::string quote_toml(std::string_view value);

}  // namespace yolo
