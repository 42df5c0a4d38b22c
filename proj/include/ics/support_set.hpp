#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ics/error.hpp"
#include "ics/image.hpp"

namespace ics {

enum class Provenance : std::uint8_t { GroundTruth, Predicted };

/// One (image, label) pair conditioning the segmenter.
struct SupportEntry {
  Slice image;
  Mask label;
  Provenance provenance = Provenance::GroundTruth;
  int source_index = 0;
  /// Append order within the owning set; assigned by SupportSet.
  std::uint64_t seq = 0;

  Size2 size() const noexcept { return image.size(); }

  friend bool operator==(const SupportEntry&, const SupportEntry&) = default;
};

inline SupportEntry make_entry(Slice image, Mask label, Provenance provenance) {
  if (image.size() != label.size()) {
    fail(ErrorCode::DimMismatch,
         "support image " + to_string(image.size()) + " vs label " + to_string(label.size()));
  }
  const int source = image.index;
  return SupportEntry{std::move(image), std::move(label), provenance, source, 0};
}

enum class EvictionPolicy {
  /// Drop lowest-seq entries regardless of provenance.
  Fifo,
  /// Drop lowest-seq Predicted entries first; GroundTruth entries go only
  /// once no Predicted entry is left to evict.
  PinGroundTruth,
};

/// Capacity-bounded support set. Entries are kept in ascending seq; seq
/// values are never reused, so "oldest" means first appended, independent of
/// slice index.
class SupportSet {
 public:
  int capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<SupportEntry>& entries() const noexcept { return entries_; }
  std::uint64_t next_seq() const noexcept { return next_seq_; }
  Size2 entry_size() const noexcept { return entries_.empty() ? Size2{} : entries_.front().size(); }

  friend SupportSet new_support_set(int capacity, std::vector<SupportEntry> initial);
  friend SupportSet append_entry(SupportSet set, SupportEntry entry, EvictionPolicy policy);

 private:
  int capacity_ = 0;
  std::uint64_t next_seq_ = 1;
  std::vector<SupportEntry> entries_;
};

inline SupportSet new_support_set(int capacity, std::vector<SupportEntry> initial) {
  if (capacity < 1) fail(ErrorCode::InvalidValue, "support capacity must be >= 1");
  if (initial.empty()) fail(ErrorCode::EmptyInitial, "initial support set is empty");
  if (initial.size() > static_cast<std::size_t>(capacity)) {
    fail(ErrorCode::OverCapacity, std::to_string(initial.size()) + " initial entries exceed capacity " +
                                      std::to_string(capacity));
  }
  const Size2 size = initial.front().size();
  for (const auto& e : initial) {
    if (e.image.size() != size || e.label.size() != size) {
      fail(ErrorCode::DimMismatch, "initial support entries disagree on dimensions");
    }
    if (e.provenance != Provenance::GroundTruth) {
      fail(ErrorCode::InvalidValue, "initial support entries must be ground truth");
    }
  }
  SupportSet set;
  set.capacity_ = capacity;
  set.entries_ = std::move(initial);
  for (auto& e : set.entries_) e.seq = set.next_seq_++;
  return set;
}

inline SupportSet append_entry(SupportSet set, SupportEntry entry, EvictionPolicy policy = EvictionPolicy::Fifo) {
  if (entry.image.size() != entry.label.size() || (!set.entries_.empty() && entry.size() != set.entry_size())) {
    fail(ErrorCode::DimMismatch, "appended entry " + to_string(entry.size()) + " vs support set " +
                                     to_string(set.entry_size()));
  }
  entry.seq = set.next_seq_++;
  set.entries_.push_back(std::move(entry));

  auto& entries = set.entries_;
  while (entries.size() > static_cast<std::size_t>(set.capacity_)) {
    auto victim = entries.begin();
    if (policy == EvictionPolicy::PinGroundTruth) {
      auto predicted = std::find_if(entries.begin(), entries.end(),
                                    [](const SupportEntry& e) { return e.provenance == Provenance::Predicted; });
      if (predicted != entries.end()) victim = predicted;
    }
    entries.erase(victim);
  }
  return set;
}

/// Engine-wide run configuration.
struct CascadeConfig {
  int capacity = 5;
  double prob_threshold = 0.5;
  bool augment = true;
  bool pin_initial = false;
  /// Re-predict the boundary labeled slices as the literal loop bounds do.
  bool faithful_loops = false;
  std::string backend_id = "ref";

  EvictionPolicy eviction() const noexcept {
    return pin_initial ? EvictionPolicy::PinGroundTruth : EvictionPolicy::Fifo;
  }
};

inline void validate(const CascadeConfig& cfg) {
  if (cfg.capacity < 1) fail(ErrorCode::InvalidValue, "capacity must be >= 1");
  if (!(cfg.prob_threshold > 0.0 && cfg.prob_threshold < 1.0)) {
    fail(ErrorCode::InvalidValue, "probability threshold must lie in (0,1)");
  }
}

}  // namespace ics
