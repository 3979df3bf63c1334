#include "yolo/override_tree.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <system_error>

#include "yolo/path.hpp"

namespace yolo {

namespace {

constexpr std::string_view kTreeMagic = "YOVT1";

enum : std::uint8_t {
  kTagNone = 0,
  kTagStaged = 1,
  kTagBase = 2,
  kTagTombstone = 3,
};

// Resolution context carried while walking root to leaf.
struct Context {
  enum Kind { kBase, kStaged, kNoBase } kind = kBase;
  std::string base;  // kBase only
};

Context child_context(const Context& parent, std::string_view name,
                      const OverrideNode* node) {
  if (node != nullptr && node->state) {
    if (auto* staged = std::get_if<StagedFile>(&*node->state)) {
      (void)staged;
      return {Context::kStaged, {}};
    }
    if (auto* base = std::get_if<BasePath>(&*node->state)) {
      return {Context::kBase, base->src};
    }
  }
  if (parent.kind == Context::kBase) {
    return {Context::kBase, join_path(parent.base, name)};
  }
  return {Context::kNoBase, {}};
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void serialize_node(std::string& out, std::string_view name,
                    const OverrideNode& node) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.append(name);
  if (!node.state) {
    out.push_back(static_cast<char>(kTagNone));
  } else if (auto* staged = std::get_if<StagedFile>(&*node.state)) {
    out.push_back(static_cast<char>(kTagStaged));
    put_u64(out, staged->ino);
    put_u64(out, staged->gen);
  } else if (auto* base = std::get_if<BasePath>(&*node.state)) {
    out.push_back(static_cast<char>(kTagBase));
    put_u32(out, static_cast<std::uint32_t>(base->src.size()));
    out.append(base->src);
  } else {
    out.push_back(static_cast<char>(kTagTombstone));
  }
  put_u32(out, static_cast<std::uint32_t>(node.children.size()));
  for (const auto& [child_name, child] : node.children) {
    serialize_node(out, child_name, child);
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw MalformedTree("truncated override tree payload");
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

bool valid_component(std::string_view name) {
  return !name.empty() && name != "." && name != ".." &&
         name.find('/') == std::string_view::npos &&
         name.find('\0') == std::string_view::npos;
}

void deserialize_node(Reader& in, OverrideNode& parent, int depth) {
  if (depth > 4096) {
    throw MalformedTree("override tree nesting too deep");
  }
  auto name = std::string(in.bytes(in.u32()));
  if (!valid_component(name)) {
    throw MalformedTree("invalid node name '" + name + "'");
  }
  OverrideNode node;
  switch (in.u8()) {
    case kTagNone:
      break;
    case kTagStaged: {
      StagedFile staged;
      staged.ino = in.u64();
      staged.gen = in.u64();
      if (staged.ino == 0) {
        throw MalformedTree("staged node with ino 0");
      }
      node.state = staged;
      break;
    }
    case kTagBase: {
      auto src = std::string(in.bytes(in.u32()));
      if (!is_normalized(src)) {
        throw MalformedTree("base path not normalized: '" + src + "'");
      }
      node.state = BasePath{std::move(src)};
      break;
    }
    case kTagTombstone:
      node.state = Tombstone{};
      break;
    default:
      throw MalformedTree("unknown node state tag");
  }
  auto children = in.u32();
  if (children > 0 && node.state &&
      std::holds_alternative<Tombstone>(*node.state)) {
    throw MalformedTree("tombstone with children");
  }
  for (std::uint32_t i = 0; i < children; ++i) {
    deserialize_node(in, node, depth + 1);
  }
  auto [it, inserted] = parent.children.emplace(std::move(name), std::move(node));
  if (!inserted) {
    throw MalformedTree("duplicate child '" + it->first + "'");
  }
}

}  // namespace

const OverrideNode* OverrideTree::find(std::string_view path) const {
  const OverrideNode* node = &root_;
  for (auto comp : split_path(path)) {
    auto it = node->children.find(comp);
    if (it == node->children.end()) {
      return nullptr;
    }
    node = &it->second;
  }
  return node;
}

OverrideNode* OverrideTree::find_mutable(std::string_view path) {
  return const_cast<OverrideNode*>(std::as_const(*this).find(path));
}

OverrideNode& OverrideTree::ensure_node(std::string_view path) {
  OverrideNode* node = &root_;
  for (auto comp : split_path(path)) {
    if (node->state && std::holds_alternative<Tombstone>(*node->state)) {
      throw InvalidRecord("path '" + std::string(path) +
                          "' lies beneath a tombstone");
    }
    auto it = node->children.find(comp);
    if (it == node->children.end()) {
      it = node->children.emplace(std::string(comp), OverrideNode{}).first;
    }
    node = &it->second;
  }
  return *node;
}

Resolution OverrideTree::resolve(std::string_view path) const {
  require_normalized(path);
  const OverrideNode* node = &root_;
  Context ctx;
  for (auto comp : split_path(path)) {
    const OverrideNode* child = nullptr;
    if (node != nullptr) {
      auto it = node->children.find(comp);
      if (it != node->children.end()) {
        child = &it->second;
      }
    }
    if (child != nullptr && child->state &&
        std::holds_alternative<Tombstone>(*child->state)) {
      return ResolvedAbsent{AbsentReason::kTombstoned};
    }
    ctx = child_context(ctx, comp, child);
    if (ctx.kind == Context::kNoBase) {
      return ResolvedAbsent{AbsentReason::kStagedDirMiss};
    }
    node = child;
  }
  if (ctx.kind == Context::kStaged) {
    const auto& staged = std::get<StagedFile>(*node->state);
    return ResolvedStaged{staged.ino, staged.gen};
  }
  return ResolvedBase{ctx.base};
}

std::vector<MergedEntry> OverrideTree::merge_readdir(
    std::string_view path, const std::vector<std::string>& base_entries) const {
  auto resolution = resolve(path);
  if (std::holds_alternative<ResolvedAbsent>(resolution)) {
    throw std::system_error(ENOENT, std::generic_category(),
                            "merge_readdir: " + std::string(path));
  }
  const bool staged = std::holds_alternative<ResolvedStaged>(resolution);
  const OverrideNode* node = find(path);

  std::vector<MergedEntry> out;
  std::vector<std::string_view> masked;
  if (node != nullptr) {
    for (const auto& [name, child] : node->children) {
      if (!child.state) {
        // Pure structure: exists only if the base has it.
        continue;
      }
      masked.push_back(name);
      if (std::holds_alternative<Tombstone>(*child.state)) {
        continue;
      }
      out.push_back({name, EntryOrigin::kOverride});
    }
  }
  if (staged) {
    return out;
  }
  std::vector<std::string_view> base_sorted(base_entries.begin(),
                                            base_entries.end());
  std::sort(base_sorted.begin(), base_sorted.end());
  base_sorted.erase(std::unique(base_sorted.begin(), base_sorted.end()),
                    base_sorted.end());
  for (auto name : base_sorted) {
    if (std::binary_search(masked.begin(), masked.end(), name)) {
      continue;
    }
    out.push_back({std::string(name), EntryOrigin::kBase});
  }
  return out;
}

void OverrideTree::apply(const ActionRecord& record, Generation current_gen) {
  if (auto* stage = std::get_if<StageRecord>(&record)) {
    require_normalized(stage->path);
    if (stage->path.empty()) {
      throw InvalidRecord("cannot stage the mount root");
    }
    if (stage->ino == 0) {
      throw InvalidRecord("stage record with ino 0");
    }
    auto& node = ensure_node(stage->path);
    node.state = StagedFile{stage->ino, current_gen};
    node.children.clear();
    return;
  }
  if (auto* del = std::get_if<DeleteRecord>(&record)) {
    require_normalized(del->path);
    if (del->path.empty()) {
      throw InvalidRecord("cannot delete the mount root");
    }
    auto& node = ensure_node(del->path);
    node.state = Tombstone{};
    node.children.clear();
    return;
  }
  const auto& rename = std::get<RenameRecord>(record);
  require_normalized(rename.src);
  require_normalized(rename.dst);
  if (rename.src.empty() || rename.dst.empty()) {
    throw InvalidRecord("cannot rename the mount root");
  }
  if (is_within(rename.dst, rename.src) || is_within(rename.src, rename.dst)) {
    throw InvalidRecord("rename between nested paths: '" + rename.src +
                        "' -> '" + rename.dst + "'");
  }
  auto resolution = resolve(rename.src);
  if (std::holds_alternative<ResolvedAbsent>(resolution)) {
    throw InvalidRecord("rename of absent path '" + rename.src + "'");
  }

  NodeState moved_state;
  std::map<std::string, OverrideNode, std::less<>> moved_children;
  OverrideNode* src = find_mutable(rename.src);
  if (src != nullptr && src->state) {
    moved_state = *src->state;
  } else {
    // Implicit or pure-structure source: redirect to where it resolves.
    moved_state = BasePath{std::get<ResolvedBase>(resolution).src};
  }
  if (src != nullptr) {
    moved_children = std::move(src->children);
  }

  auto& src_node = ensure_node(rename.src);
  src_node.state = Tombstone{};
  src_node.children.clear();

  auto& dst_node = ensure_node(rename.dst);
  dst_node.state = std::move(moved_state);
  dst_node.children = std::move(moved_children);
}

std::vector<ChangeEntry> OverrideTree::diff(const BaseProber& base_exists) const {
  std::vector<ChangeEntry> out;
  // (path, node, context of its parent)
  struct Frame {
    std::string path;
    const OverrideNode* node;
    Context parent_ctx;
  };
  std::vector<Frame> stack;
  for (auto it = root_.children.rbegin(); it != root_.children.rend(); ++it) {
    stack.push_back({it->first, &it->second, Context{}});
  }
  while (!stack.empty()) {
    auto frame = std::move(stack.back());
    stack.pop_back();
    const OverrideNode& node = *frame.node;
    std::string_view name = base_name(frame.path);

    std::optional<std::string> implicit_base;
    if (frame.parent_ctx.kind == Context::kBase) {
      implicit_base = join_path(frame.parent_ctx.base, name);
    }
    auto exists = [&] {
      return implicit_base.has_value() && base_exists(*implicit_base);
    };

    if (node.state) {
      if (auto* staged = std::get_if<StagedFile>(&*node.state)) {
        out.push_back({frame.path,
                       exists() ? ChangeKind::kModified : ChangeKind::kCreated,
                       {},
                       staged->ino});
      } else if (auto* base = std::get_if<BasePath>(&*node.state)) {
        if (!implicit_base || *implicit_base != base->src) {
          out.push_back({frame.path, ChangeKind::kRenamed, base->src, {}});
        }
      } else if (exists()) {
        out.push_back({frame.path, ChangeKind::kDeleted, {}, {}});
      }
    }

    Context ctx = child_context(frame.parent_ctx, name, &node);
    for (auto it = node.children.rbegin(); it != node.children.rend(); ++it) {
      stack.push_back({join_path(frame.path, it->first), &it->second, ctx});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const ChangeEntry& a, const ChangeEntry& b) {
              return a.path < b.path;
            });
  return out;
}

std::string OverrideTree::serialize() const {
  std::string out(kTreeMagic);
  for (const auto& [name, child] : root_.children) {
    serialize_node(out, name, child);
  }
  return out;
}

OverrideTree OverrideTree::deserialize(std::string_view bytes) {
  if (bytes.size() < kTreeMagic.size() ||
      bytes.substr(0, kTreeMagic.size()) != kTreeMagic) {
    throw MalformedTree("bad override tree magic");
  }
  Reader in(bytes.substr(kTreeMagic.size()));
  OverrideTree tree;
  while (!in.at_end()) {
    deserialize_node(in, tree.root_, 0);
  }
  return tree;
}

void OverrideTree::for_each_staged(
    const std::function<void(std::string_view, const StagedFile&)>& fn) const {
  std::vector<std::pair<std::string, const OverrideNode*>> stack;
  for (const auto& [name, child] : root_.children) {
    stack.emplace_back(name, &child);
  }
  while (!stack.empty()) {
    auto [path, node] = std::move(stack.back());
    stack.pop_back();
    if (node->state) {
      if (auto* staged = std::get_if<StagedFile>(&*node->state)) {
        fn(path, *staged);
      }
    }
    for (const auto& [name, child] : node->children) {
      stack.emplace_back(join_path(path, name), &child);
    }
  }
}

const char* to_string(ChangeKind kind) {
  switch (kind) {
    case ChangeKind::kCreated:
      return "created";
    case ChangeKind::kModified:
      return "modified";
    case ChangeKind::kDeleted:
      return "deleted";
    case ChangeKind::kRenamed:
      return "renamed";
  }
  return "?";
}

const char* to_string(AbsentReason reason) {
  switch (reason) {
    case AbsentReason::kTombstoned:
      return "tombstoned";
    case AbsentReason::kStagedDirMiss:
      return "staged-dir-miss";
    case AbsentReason::kBaseMiss:
      return "base-miss";
  }
  return "?";
}

}  // namespace yolo
