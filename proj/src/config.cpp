#include "yolo/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "yolo/path.hpp"

namespace yolo {

ConfigError::ConfigError(std::size_t line, const std::string& what)
    : std::runtime_error("yolo.toml line " + std::to_string(line) + ": " + what),
      line_(line) {}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  std::string string() {
    skip_ws();
    if (pos_ >= s_.size() || (s_[pos_] != '"' && s_[pos_] != '\'')) {
      throw ConfigError(line_, "expected a string");
    }
    char quote = s_[pos_++];
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != quote) {
      char c = s_[pos_++];
      if (quote == '"' && c == '\\') {
        if (pos_ >= s_.size()) break;
        char e = s_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: throw ConfigError(line_, "unsupported escape");
        }
      } else {
        out += c;
      }
    }
    if (pos_ >= s_.size()) {
      throw ConfigError(line_, "unterminated string");
    }
    ++pos_;
    return out;
  }

  long integer() {
    skip_ws();
    long value = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), value);
    if (ec != std::errc{}) {
      throw ConfigError(line_, "expected an integer");
    }
    pos_ = static_cast<std::size_t>(ptr - s_.data());
    return value;
  }

  std::vector<std::string> string_array() {
    skip_ws();
    expect('[');
    std::vector<std::string> out;
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      out.push_back(string());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        if (peek() == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      expect(']');
      return out;
    }
  }

  void finish() {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] != '#') {
      throw ConfigError(line_, "trailing characters");
    }
  }

 private:
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void expect(char c) {
    if (peek() != c) {
      throw ConfigError(line_, std::string("expected '") + c + "'");
    }
    ++pos_;
  }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

}  // namespace

SessionConfig parse_config(std::string_view text) {
  SessionConfig config;
  enum class Section { kTop, kRule, kConsole } section = Section::kTop;
  std::size_t line_no = 0;
  std::size_t rule_line = 0;
  bool rule_has_path = false;
  bool rule_has_state = false;

  auto close_rule = [&] {
    if (section == Section::kRule && (!rule_has_path || !rule_has_state)) {
      throw ConfigError(rule_line, "[[rule]] needs path and state");
    }
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                             : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') {
      continue;
    }
    if (line.front() == '[') {
      auto header = line;
      if (auto hash = header.find('#'); hash != std::string_view::npos) {
        header = trim(header.substr(0, hash));
      }
      close_rule();
      if (header == "[[rule]]") {
        section = Section::kRule;
        config.rules.emplace_back();
        rule_line = line_no;
        rule_has_path = rule_has_state = false;
      } else if (header == "[console]") {
        section = Section::kConsole;
      } else {
        throw ConfigError(line_no, "unknown table " + std::string(header));
      }
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(line_no, "expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    ValueParser value(line.substr(eq + 1), line_no);
    switch (section) {
      case Section::kTop:
        if (key == "base") {
          config.base = value.string();
        } else if (key == "ask_timeout") {
          long t = value.integer();
          if (t <= 0) {
            throw ConfigError(line_no, "ask_timeout must be positive");
          }
          config.ask_timeout_seconds = static_cast<int>(t);
        } else if (key == "extra_roots") {
          config.extra_roots = value.string_array();
        } else {
          throw ConfigError(line_no, "unknown key " + std::string(key));
        }
        break;
      case Section::kRule: {
        auto& rule = config.rules.back();
        if (key == "path") {
          try {
            rule.path = normalize_path(value.string());
          } catch (const InvalidPath& e) {
            throw ConfigError(line_no, e.what());
          }
          rule_has_path = true;
        } else if (key == "state") {
          auto s = value.string();
          auto state = parse_rule_state(s);
          if (!state) {
            throw ConfigError(line_no, "unknown rule state " + s);
          }
          rule.state = *state;
          rule_has_state = true;
        } else {
          throw ConfigError(line_no, "unknown rule key " + std::string(key));
        }
        break;
      }
      case Section::kConsole:
        if (key == "listen") {
          config.console_listen = value.string();
        } else {
          throw ConfigError(line_no, "unknown console key " + std::string(key));
        }
        break;
    }
    value.finish();
  }
  close_rule();
  return config;
}

SessionConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string quote_toml(std::string_view value) {
  std::string out = "\"";
  for (char c : value) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

void append_rule(const std::string& path, const RuleConfig& rule) {
  std::ofstream out(path, std::ios::app);
  if (!out) {
    throw std::runtime_error("cannot append to " + path);
  }
  out << "\n[[rule]]\npath = " << quote_toml(rule.path)
      << "\nstate = " << quote_toml(to_string(rule.state)) << "\n";
}

}  // namespace yolo
