#pragma once

// Sequential slice inference: the fixed-support baseline and the in-context
// cascade, which feeds every prediction back into a bounded support set and
// runs independently forward and backward from a labeled block.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <future>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ics/error.hpp"
#include "ics/image.hpp"
#include "ics/segmenter.hpp"
#include "ics/support_set.hpp"
#include "ics/volume_io.hpp"

namespace ics {

/// Indices (1-based) of the initially labeled slices: a contiguous block.
struct InitialSupportSpec {
  std::vector<int> indices;

  static InitialSupportSpec block(int start, int count) {
    InitialSupportSpec spec;
    for (int i = 0; i < count; ++i) spec.indices.push_back(start + i);
    return spec;
  }

  int first() const { return indices.front(); }
  int last() const { return indices.back(); }
  bool contains(int index) const { return std::binary_search(indices.begin(), indices.end(), index); }
};

inline void validate(const InitialSupportSpec& spec, int n) {
  if (spec.indices.empty()) fail(ErrorCode::EmptyInitial, "no initial labeled slices");
  for (std::size_t i = 0; i < spec.indices.size(); ++i) {
    const int idx = spec.indices[i];
    if (idx < 1 || idx > n) {
      fail(ErrorCode::InvalidSpec, "initial index " + std::to_string(idx) + " outside 1.." + std::to_string(n));
    }
    if (i > 0 && idx <= spec.indices[i - 1]) fail(ErrorCode::InvalidSpec, "initial indices must be sorted and unique");
  }
  if (spec.last() - spec.first() + 1 != static_cast<int>(spec.indices.size())) {
    fail(ErrorCode::NonContiguousInitial, "initial labeled slices must form a contiguous block");
  }
}

enum class Direction { Forward, Backward };

inline std::string_view to_string(Direction d) noexcept { return d == Direction::Forward ? "forward" : "backward"; }

/// Prediction for a labeled boundary slice, produced only with faithful loops.
struct BoundaryPrediction {
  int index = 0;
  Direction direction = Direction::Forward;
  Mask mask;
};

struct CascadeResult {
  /// One mask per unlabeled slice index.
  std::map<int, Mask> masks;
  std::map<int, Direction> direction_of;
  /// Filled only when CascadeOptions::store_probabilities is set.
  std::map<int, ProbMask> probabilities;
  std::vector<BoundaryPrediction> boundary;
  std::map<int, double> slice_ms;
  double total_ms = 0.0;
  /// Largest stored support-set size observed during the run.
  std::size_t max_support_size = 0;

  std::size_t size() const noexcept { return masks.size(); }
  bool empty() const noexcept { return masks.empty(); }

  void merge(CascadeResult other) {
    for (auto& [k, v] : other.masks) {
      if (!masks.emplace(k, std::move(v)).second) {
        fail(ErrorCode::InvalidSpec, "slice " + std::to_string(k) + " predicted twice");
      }
    }
    direction_of.merge(other.direction_of);
    probabilities.merge(other.probabilities);
    slice_ms.merge(other.slice_ms);
    for (auto& b : other.boundary) boundary.push_back(std::move(b));
    total_ms += other.total_ms;
    max_support_size = std::max(max_support_size, other.max_support_size);
  }
};

struct CascadeOptions {
  bool store_probabilities = false;
};

/// Appends the 90, 180 and 270 degree rotations of every entry after the
/// originals (all originals, then all 90, then 180, then 270). Non-square
/// entries are zero-padded to a centered square first, originals included,
/// so the returned list shares one size.
inline std::vector<SupportEntry> augment_support(std::span<const SupportEntry> entries) {
  std::vector<SupportEntry> out;
  out.reserve(entries.size() * 4);
  for (int turns = 0; turns < 4; ++turns) {
    for (const auto& e : entries) {
      SupportEntry r = e;
      r.image.pixels = rotate(pad_to_square(e.image.pixels), turns);
      r.label = rotate(pad_to_square(e.label), turns);
      out.push_back(std::move(r));
    }
  }
  return out;
}

namespace detail {

/// Most recent entries first, each followed by its rotated copies, cut to
/// `limit` entries. `augmented` is laid out as augment_support returns it.
inline std::vector<SupportEntry> truncate_support(std::vector<SupportEntry> list, std::size_t originals,
                                                  bool augmented, std::size_t limit) {
  if (limit == 0 || list.size() <= limit) return list;
  const std::size_t groups = augmented ? 4 : 1;
  std::vector<std::size_t> order(originals);
  for (std::size_t i = 0; i < originals; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return list[a].seq > list[b].seq; });
  std::vector<SupportEntry> out;
  out.reserve(limit);
  for (std::size_t i : order) {
    for (std::size_t g = 0; g < groups && out.size() < limit; ++g) out.push_back(list[g * originals + i]);
  }
  return out;
}

}  // namespace detail

struct SlicePrediction {
  ProbMask probability;
  Mask mask;
};

/// One inference call with engine-side preprocessing: normalize, optionally
/// augment, truncate to the backend's support limit, resample to its required
/// size, segment, resample back and threshold.
inline SlicePrediction predict_slice(SegmenterBackend& backend, const Slice& query,
                                     std::span<const SupportEntry> support, const CascadeConfig& cfg) {
  if (support.empty()) fail(ErrorCode::EmptySupport, "no support entries for slice " + std::to_string(query.index));
  const Size2 native = query.size();

  Slice q = normalize_slice(query);
  std::vector<SupportEntry> list;
  list.reserve(support.size());
  for (const auto& e : support) {
    SupportEntry n = e;
    n.image = normalize_slice(e.image);
    list.push_back(std::move(n));
  }

  const bool padded = cfg.augment && !native.is_square();
  if (cfg.augment) {
    list = augment_support(list);
    q.pixels = pad_to_square(q.pixels);
  }
  list = detail::truncate_support(std::move(list), support.size(), cfg.augment, backend.max_support());

  const Size2 presented_native = q.size();
  if (const auto required = backend.required_size(); required && *required != presented_native) {
    q = resample(q, *required, Interpolation::Bilinear);
    for (auto& e : list) {
      e.image = resample(e.image, *required, Interpolation::Bilinear);
      e.label = resample(e.label, *required, Interpolation::Nearest);
    }
  }

  ProbMask prob;
  try {
    prob = backend.segment(q, list);
  } catch (const Error& err) {
    if (err.is_backend_failure()) throw Error(err.code(), "slice " + std::to_string(query.index) + ": " + err.what());
    throw Error(ErrorCode::BackendFailure, "slice " + std::to_string(query.index) + ": " + err.what());
  } catch (const std::exception& err) {
    throw Error(ErrorCode::BackendFailure, "slice " + std::to_string(query.index) + ": " + err.what());
  }
  if (prob.size() != q.size()) {
    fail(ErrorCode::BackendFailure, "slice " + std::to_string(query.index) + ": backend returned " +
                                        to_string(prob.size()) + " for query " + to_string(q.size()));
  }
  try {
    validate(prob);
  } catch (const Error& err) {
    fail(ErrorCode::BackendFailure, "slice " + std::to_string(query.index) + ": " + err.what());
  }

  prob = resample(prob, presented_native, Interpolation::Bilinear);
  if (padded) prob = crop_from_square(prob, native);
  Mask mask = threshold(prob, cfg.prob_threshold);
  return {std::move(prob), std::move(mask)};
}

namespace detail {

inline std::vector<SupportEntry> initial_entries(const CaseBundle& bundle, const InitialSupportSpec& spec) {
  std::vector<SupportEntry> entries;
  for (int idx : spec.indices) {
    entries.push_back(make_entry(bundle.image.at(idx), bundle.label_at(idx), Provenance::GroundTruth));
  }
  return entries;
}

inline void check_inputs(const CaseBundle& bundle, const InitialSupportSpec& spec, const CascadeConfig& cfg) {
  validate(cfg);
  validate(spec, bundle.count());
  if (bundle.labels.size() != bundle.image.slices.size()) fail(ErrorCode::ShapeMismatch, "bundle label count");
  if (static_cast<int>(spec.indices.size()) > cfg.capacity) {
    fail(ErrorCode::OverCapacity, std::to_string(spec.indices.size()) + " initial slices exceed capacity " +
                                      std::to_string(cfg.capacity));
  }
}

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace detail

/// Fixed support: every unlabeled slice is segmented independently from the
/// initial labeled block.
inline CascadeResult run_baseline(const CaseBundle& bundle, const InitialSupportSpec& spec, SegmenterBackend& backend,
                                  const CascadeConfig& cfg, const CascadeOptions& options = {}) {
  detail::check_inputs(bundle, spec, cfg);
  const auto start = std::chrono::steady_clock::now();
  const SupportSet support = new_support_set(cfg.capacity, detail::initial_entries(bundle, spec));

  CascadeResult result;
  result.max_support_size = support.size();
  for (int idx = 1; idx <= bundle.count(); ++idx) {
    if (spec.contains(idx)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    auto pred = predict_slice(backend, bundle.image.at(idx), support.entries(), cfg);
    result.masks.emplace(idx, std::move(pred.mask));
    result.direction_of.emplace(idx, idx > spec.last() ? Direction::Forward : Direction::Backward);
    if (options.store_probabilities) result.probabilities.emplace(idx, std::move(pred.probability));
    result.slice_ms.emplace(idx, detail::elapsed_ms(t0));
  }
  result.total_ms = detail::elapsed_ms(start);
  return result;
}

/// One directional cascade pass from a fresh copy of the initial set.
inline CascadeResult run_pass(const CaseBundle& bundle, const InitialSupportSpec& spec, SegmenterBackend& backend,
                              const CascadeConfig& cfg, Direction direction, const CascadeOptions& options = {}) {
  detail::check_inputs(bundle, spec, cfg);
  const auto start = std::chrono::steady_clock::now();
  SupportSet support = new_support_set(cfg.capacity, detail::initial_entries(bundle, spec));

  CascadeResult result;
  result.max_support_size = support.size();
  const int n = bundle.count();
  const int step = direction == Direction::Forward ? 1 : -1;
  int idx = direction == Direction::Forward ? spec.last() : spec.first();
  if (!cfg.faithful_loops) idx += step;

  for (; idx >= 1 && idx <= n; idx += step) {
    const auto t0 = std::chrono::steady_clock::now();
    const Slice& query = bundle.image.at(idx);
    auto pred = predict_slice(backend, query, support.entries(), cfg);
    support = append_entry(std::move(support), make_entry(query, pred.mask, Provenance::Predicted), cfg.eviction());
    if (support.size() > static_cast<std::size_t>(cfg.capacity)) {
      fail(ErrorCode::OverCapacity, "support set grew past capacity");
    }
    result.max_support_size = std::max(result.max_support_size, support.size());

    if (spec.contains(idx)) {
      result.boundary.push_back({idx, direction, std::move(pred.mask)});
      continue;
    }
    result.masks.emplace(idx, std::move(pred.mask));
    result.direction_of.emplace(idx, direction);
    if (options.store_probabilities) result.probabilities.emplace(idx, std::move(pred.probability));
    result.slice_ms.emplace(idx, detail::elapsed_ms(t0));
  }
  result.total_ms = detail::elapsed_ms(start);
  return result;
}

/// In-context cascade: forward pass over last+1..n, then backward pass over
/// first-1..1, each starting from the initial labeled block.
inline CascadeResult run_ics(const CaseBundle& bundle, const InitialSupportSpec& spec, SegmenterBackend& backend,
                             const CascadeConfig& cfg, const CascadeOptions& options = {}) {
  CascadeResult result = run_pass(bundle, spec, backend, cfg, Direction::Forward, options);
  result.merge(run_pass(bundle, spec, backend, cfg, Direction::Backward, options));
  return result;
}

/// Same as run_ics, with the two passes on separate backend instances in
/// parallel.
inline CascadeResult run_ics_concurrent(const CaseBundle& bundle, const InitialSupportSpec& spec,
                                        const BackendFactory& make_backend, const CascadeConfig& cfg,
                                        const CascadeOptions& options = {}) {
  auto forward_backend = make_backend();
  auto backward_backend = make_backend();
  auto backward = std::async(std::launch::async, [&] {
    return run_pass(bundle, spec, *backward_backend, cfg, Direction::Backward, options);
  });
  CascadeResult result = run_pass(bundle, spec, *forward_backend, cfg, Direction::Forward, options);
  result.merge(backward.get());
  return result;
}

/// Full-volume mask stack: ground truth on labeled slices, predictions elsewhere.
inline std::vector<Mask> assemble_masks(const CaseBundle& bundle, const InitialSupportSpec& spec,
                                        const CascadeResult& result) {
  std::vector<Mask> stack;
  stack.reserve(static_cast<std::size_t>(bundle.count()));
  for (int idx = 1; idx <= bundle.count(); ++idx) {
    if (spec.contains(idx)) {
      stack.push_back(bundle.label_at(idx));
    } else {
      stack.push_back(result.masks.at(idx));
    }
  }
  return stack;
}

}  // namespace ics
