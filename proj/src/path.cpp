#include "yolo/path.hpp"

namespace yolo {

InvalidPath::InvalidPath(std::string_view path)
    : std::invalid_argument("invalid path: '" + std::string(path) + "'") {}

std::string normalize_path(std::string_view path) {
  std::string out;
  size_t pos = 0;
  while (pos <= path.size()) {
    size_t next = path.find('/', pos);
    if (next == std::string_view::npos) {
      next = path.size();
    }
    std::string_view comp = path.substr(pos, next - pos);
    pos = next + 1;
    if (comp.empty() || comp == ".") {
      continue;
    }
    if (comp == ".." || comp.find('\0') != std::string_view::npos) {
      throw InvalidPath(path);
    }
    if (!out.empty()) {
      out.push_back('/');
    }
    out.append(comp);
  }
  return out;
}

bool is_normalized(std::string_view path) {
  if (path.empty()) {
    return true;
  }
  size_t pos = 0;
  while (pos <= path.size()) {
    size_t next = path.find('/', pos);
    if (next == std::string_view::npos) {
      next = path.size();
    }
    std::string_view comp = path.substr(pos, next - pos);
    if (comp.empty() || comp == "." || comp == ".." ||
        comp.find('\0') != std::string_view::npos) {
      return false;
    }
    pos = next + 1;
  }
  return true;
}

void require_normalized(std::string_view path) {
  if (!is_normalized(path)) {
    throw InvalidPath(path);
  }
}

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  size_t pos = 0;
  while (pos < path.size()) {
    size_t next = path.find('/', pos);
    if (next == std::string_view::npos) {
      next = path.size();
    }
    if (next > pos) {
      parts.push_back(path.substr(pos, next - pos));
    }
    pos = next + 1;
  }
  return parts;
}

std::string join_path(std::string_view parent, std::string_view name) {
  if (parent.empty()) {
    return std::string(name);
  }
  if (name.empty()) {
    return std::string(parent);
  }
  std::string out;
  out.reserve(parent.size() + 1 + name.size());
  out.append(parent);
  out.push_back('/');
  out.append(name);
  return out;
}

std::string_view parent_path(std::string_view path) {
  auto slash = path.rfind('/');
  if (slash == std::string_view::npos) {
    return {};
  }
  return path.substr(0, slash);
}

std::string_view base_name(std::string_view path) {
  auto slash = path.rfind('/');
  if (slash == std::string_view::npos) {
    return path;
  }
  return path.substr(slash + 1);
}

bool is_within(std::string_view path, std::string_view ancestor) {
  if (ancestor.empty()) {
    return true;
  }
  if (path.size() < ancestor.size() ||
      path.substr(0, ancestor.size()) != ancestor) {
    return false;
  }
  return path.size() == ancestor.size() || path[ancestor.size()] == '/';
}

std::string rebase_path(std::string_view path, std::string_view from,
                        std::string_view to) {
  std::string_view rest = path.substr(from.size());
  if (!rest.empty() && rest.front() == '/') {
    rest.remove_prefix(1);
  }
  return join_path(to, rest);
}

}  // namespace yolo
