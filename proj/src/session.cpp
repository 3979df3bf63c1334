#include "yolo/session.hpp"

#include <fcntl.h>
#include <spdlog/spdlog.h>
#include <sys/stat.h>

#include <algorithm>
#include <charconv>
#include <mutex>

#include "yolo/fs_util.hpp"

namespace yolo {

Session::Session(SessionOptions options) : options_(std::move(options)) {
  base_ = std::make_unique<BaseFs>(options_.base_root, options_.extra_roots);
  std::string state_name(kStateDirName);
  if (::mkdirat(base_->root_fd(), state_name.c_str(), 0700) != 0 &&
      errno != EEXIST) {
    throw_errno("mkdir " + state_name);
  }
  state_dir_ = open_at(base_->root_fd(), state_name,
                       O_RDONLY | O_DIRECTORY | O_NOFOLLOW);
  store_ = std::make_unique<FileStore>(state_dir_.get(), options_.sync);
  journal_ = std::make_unique<Journal>(state_dir_.get(), options_.sync);

  auto parsed = journal_->read();
  tree_ = reconstruct_current(parsed.records);
  gen_ = journal_->marker_count();
  std::size_t missing = 0;
  tree_.for_each_staged([&](std::string_view, const StagedFile& f) {
    if (!store_->exists(f.ino)) {
      ++missing;
    }
  });
  if (missing > 0) {
    spdlog::warn("{} staged objects referenced by the journal are missing",
                 missing);
  }
  if (!parsed.records.empty()) {
    spdlog::info("resumed session: {} records, generation {}",
                 parsed.records.size(), gen_.load());
  }
}

Session::~Session() = default;

std::string Session::state_dir_path() const {
  return base_->root_path() + "/" + std::string(kStateDirName);
}

void Session::record(const ActionRecord& action) {
  journal_->append(to_journal_record(action));
  tree_.apply(action, gen_.load());
}

Generation Session::snapshot(std::string_view name) {
  std::unique_lock lock(mutex_);
  auto gen = journal_->append(SnapshotMarker{std::string(name)});
  gen_.store(*gen, std::memory_order_release);
  return *gen;
}

Generation Session::resolve_target(std::string_view target) const {
  Generation current = generation();
  Generation value = 0;
  auto [ptr, ec] =
      std::from_chars(target.data(), target.data() + target.size(), value);
  if (!target.empty() && ec == std::errc{} && ptr == target.data() + target.size()) {
    if (value > current) {
      throw InvalidTarget("generation " + std::string(target) +
                          " is in the future (current " +
                          std::to_string(current) + ")");
    }
    return value;
  }
  auto markers = list_markers(journal_->read().records);
  for (auto it = markers.rbegin(); it != markers.rend(); ++it) {
    if (it->name == target) {
      return it->gen;
    }
  }
  throw InvalidTarget("no marker named '" + std::string(target) + "'");
}

Generation Session::travel(std::string_view target, std::string_view label) {
  Generation gen = resolve_target(target);
  std::string name(label);
  if (name.empty()) {
    name = "to:" + std::string(target);
  }
  return travel_to(gen, name);
}

Generation Session::travel_to(Generation target, std::string_view label) {
  if (!valid_label(label)) {
    throw InvalidTarget("invalid travel label");
  }
  std::unique_lock lock(mutex_);
  Generation current = gen_.load();
  if (target > current) {
    throw InvalidTarget("generation " + std::to_string(target) +
                        " is in the future (current " +
                        std::to_string(current) + ")");
  }
  auto records = journal_->read().records;
  OverrideTree next = reconstruct(records, target);
  std::string missing;
  next.for_each_staged([&](std::string_view path, const StagedFile& f) {
    if (missing.empty() && !store_->exists(f.ino)) {
      missing = std::string(path);
    }
  });
  if (!missing.empty()) {
    throw InvalidTarget("reconstructed tree references a missing object at " +
                        missing);
  }
  auto gen = journal_->append(TravelMarker{std::string(label), target});
  tree_ = std::move(next);
  gen_.store(*gen, std::memory_order_release);
  return *gen;
}

std::vector<ChangeEntry> Session::diff() const {
  std::shared_lock lock(mutex_);
  return tree_.diff([this](std::string_view p) { return base_->exists(p); });
}

SessionLog Session::log() const {
  std::shared_lock lock(mutex_);
  auto records = journal_->read().records;
  SessionLog out;
  out.generation = gen_.load();
  out.markers = list_markers(records);
  auto segments = partition_segments(records);
  auto live = current_liveness(records);
  for (Generation g = 0; g <= out.markers.size(); ++g) {
    SegmentInfo info;
    info.gen = g;
    if (g < segments.size()) {
      info.records = segments[g].records.size();
    }
    info.live = std::find(live.begin(), live.end(), g) != live.end();
    out.segments.push_back(info);
  }
  return out;
}

CommitSummary Session::commit() {
  auto pending = [this] { return pending_asks ? pending_asks() : 0; };
  if (pending() > 0) {
    throw SessionBusy("cannot commit while asks are pending");
  }
  std::unique_lock lock(mutex_);
  if (pending() > 0) {
    throw SessionBusy("cannot commit while asks are pending");
  }
  auto actions = live_actions(journal_->read().records);
  CommitSummary summary;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    try {
      std::visit(
          [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, StageRecord>) {
              auto st = store_->stat(r.ino);
              base_->install(state_dir_.get(), FileStore::path_of(r.ino),
                             r.path);
              ++summary.files_moved;
              if (S_ISREG(st.st_mode)) {
                summary.bytes += static_cast<std::uint64_t>(st.st_size);
              }
            } else if constexpr (std::is_same_v<T, RenameRecord>) {
              base_->rename(r.src, r.dst);
            } else {
              base_->remove_tree(r.path);
            }
          },
          actions[i]);
    } catch (const std::exception& e) {
      spdlog::error("commit stopped at record {} of {}: {}", i, actions.size(),
                    e.what());
      throw CommitError(i, summary.applied,
                        "commit failed at record " + std::to_string(i) + ": " +
                            e.what());
    }
    ++summary.applied;
  }
  reset_locked();
  return summary;
}

void Session::abort() {
  std::unique_lock lock(mutex_);
  reset_locked();
}

void Session::reset_locked() {
  store_->reset();
  journal_->reset();
  tree_ = OverrideTree();
  gen_.store(0, std::memory_order_release);
  epoch_.fetch_add(1, std::memory_order_acq_rel);
}

}  // namespace yolo
