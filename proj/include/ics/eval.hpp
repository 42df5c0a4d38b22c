#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "ics/error.hpp"
#include "ics/image.hpp"
#include "ics/volume_io.hpp"

namespace ics {

struct OverlapCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

inline OverlapCounts count_overlap(const Mask& pred, const Mask& gt) {
  if (pred.size() != gt.size()) {
    fail(ErrorCode::DimMismatch, "prediction " + to_string(pred.size()) + " vs ground truth " + to_string(gt.size()));
  }
  OverlapCounts c;
  const auto p = pred.values();
  const auto g = gt.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pi = p[i] != 0;
    const bool gi = g[i] != 0;
    c.tp += static_cast<std::uint64_t>(pi && gi);
    c.fp += static_cast<std::uint64_t>(pi && !gi);
    c.fn += static_cast<std::uint64_t>(!pi && gi);
  }
  return c;
}

/// 2TP / (2TP + FP + FN); two empty masks score 1.
inline double dsc(const OverlapCounts& c) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

inline double dsc(const Mask& pred, const Mask& gt) { return dsc(count_overlap(pred, gt)); }

/// Removes slices whose label is empty and renumbers the rest 1..n'. The
/// original index of every kept slice is preserved in original_index.
inline CaseBundle drop_empty_slices(const CaseBundle& bundle) {
  CaseBundle out;
  out.region = bundle.region;
  out.image.spacing = bundle.image.spacing;
  out.image.id = bundle.image.id;
  for (int idx = 1; idx <= bundle.count(); ++idx) {
    const Mask& label = bundle.label_at(idx);
    const auto v = label.values();
    if (std::none_of(v.begin(), v.end(), [](std::uint8_t x) { return x != 0; })) continue;
    Slice s = bundle.image.at(idx);
    s.index = out.count() + 1;
    out.image.slices.push_back(std::move(s));
    out.labels.push_back(label);
    out.original_index.push_back(bundle.original_index.empty()
                                     ? idx
                                     : bundle.original_index.at(static_cast<std::size_t>(idx - 1)));
  }
  if (out.image.slices.empty()) fail(ErrorCode::AllEmpty, "every slice has an empty label");
  return out;
}

struct SliceScore {
  int index = 0;
  double dsc = 0.0;
};

struct DscStats {
  std::vector<SliceScore> per_slice;
  double mean = 0.0;
  /// Sample standard deviation (n-1); 0 when n = 1.
  double std = 0.0;
  std::size_t n = 0;
};

inline DscStats aggregate(std::vector<SliceScore> per_slice) {
  if (per_slice.empty()) fail(ErrorCode::EmptySeries, "cannot aggregate an empty series");
  DscStats s;
  s.n = per_slice.size();
  // Welford update.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t k = 0;
  for (const auto& p : per_slice) {
    ++k;
    const double delta = p.dsc - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (p.dsc - mean);
  }
  s.mean = mean;
  s.std = s.n > 1 ? std::sqrt(m2 / static_cast<double>(s.n - 1)) : 0.0;
  s.per_slice = std::move(per_slice);
  return s;
}

inline DscStats aggregate(std::span<const double> values) {
  std::vector<SliceScore> series;
  series.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) series.push_back({static_cast<int>(i) + 1, values[i]});
  return aggregate(std::move(series));
}

// ---------------------------------------------------------------------------
// Paired significance tests.

enum class PValueMethod { Auto, Exact, Normal };

struct PairedTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_effective = 0;
  std::string method;
};

namespace detail {

/// Mid-ranks (1-based) of `values`; equal values share their average rank.
inline std::vector<double> mid_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

/// P(W+ <= observed) under the sign-flip null, counted exactly over all 2^n
/// sign assignments. Ranks are doubled so mid-ranks become integers.
inline double exact_lower_tail(std::span<const double> ranks, double observed) {
  std::vector<int> doubled(ranks.size());
  int total = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
    total += doubled[i];
  }
  // counts[s] = number of sign assignments whose doubled positive-rank sum is s.
  std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
  counts[0] = 1.0;
  int reach = 0;
  for (int r : doubled) {
    for (int s = reach; s >= 0; --s) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
    reach += r;
  }
  const long limit = std::lround(2.0 * observed);
  double below = 0.0;
  for (long s = 0; s <= limit && s <= total; ++s) below += counts[static_cast<std::size_t>(s)];
  return below / std::ldexp(1.0, static_cast<int>(ranks.size()));
}

}  // namespace detail

/// Two-sided Wilcoxon signed-rank test on a - b. Zero differences are
/// dropped, tied magnitudes get mid-ranks. The exact null distribution is used
/// for up to 20 non-zero pairs (Auto), otherwise the normal approximation
/// with continuity and fourth-cumulant corrections. statistic = min(W+, W-).
inline PairedTestResult paired_test(std::span<const double> a, std::span<const double> b,
                                    PValueMethod method = PValueMethod::Auto) {
  if (a.size() != b.size()) fail(ErrorCode::DimMismatch, "paired series differ in length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n < 2) fail(ErrorCode::TooFewPairs, std::to_string(n) + " non-zero paired differences");

  std::vector<double> magnitudes(n);
  std::transform(diffs.begin(), diffs.end(), magnitudes.begin(), [](double d) { return std::abs(d); });
  const std::vector<double> ranks = detail::mid_ranks(magnitudes);
  double w_plus = 0.0;
  double w_minus = 0.0;
  for (std::size_t i = 0; i < n; ++i) (diffs[i] > 0 ? w_plus : w_minus) += ranks[i];

  PairedTestResult result;
  result.n_effective = n;
  result.statistic = std::min(w_plus, w_minus);

  const bool exact = method == PValueMethod::Exact || (method == PValueMethod::Auto && n <= 20);
  if (exact) {
    if (n > 60) fail(ErrorCode::InvalidValue, "exact Wilcoxon limited to 60 pairs");
    result.method = "wilcoxon-signed-rank-exact";
    result.p_value = std::min(1.0, 2.0 * detail::exact_lower_tail(ranks, result.statistic));
    return result;
  }

  // Normal approximation with continuity correction plus the Edgeworth term
  // for the fourth cumulant. W+ is a sum of independent r_i * Bernoulli(1/2),
  // so its cumulants follow from the (mid-)ranks directly and ties need no
  // separate correction. The kurtosis term matters for n around 15 to 20,
  // where the plain normal curve is off by about 0.01.
  double s2 = 0.0;
  double s4 = 0.0;
  for (double r : ranks) {
    s2 += r * r;
    s4 += r * r * r * r;
  }
  const double mean = std::accumulate(ranks.begin(), ranks.end(), 0.0) / 2.0;
  const double variance = s2 / 4.0;
  result.method = "wilcoxon-signed-rank-normal";
  if (variance <= 0.0) {
    result.p_value = 1.0;
    return result;
  }
  const double excess_kurtosis = (-s4 / 8.0) / (variance * variance);
  const double z = std::min(0.0, result.statistic + 0.5 - mean) / std::sqrt(variance);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double lower = 0.5 * std::erfc(-z / std::sqrt(2.0)) - excess_kurtosis / 24.0 * (z * z * z - 3.0 * z) * pdf;
  // Far in the tail the series can dip below zero; no sign pattern is rarer
  // than 2^-n, so that bounds the tail from below.
  const double floor = std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(n, 1000)));
  result.p_value = std::clamp(2.0 * std::max(lower, floor), 0.0, 1.0);
  return result;
}

/// Two-sided paired t-test, offered for comparison with the rank test.
inline PairedTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::DimMismatch, "paired series differ in length");
  if (a.size() < 2) fail(ErrorCode::TooFewPairs, "paired t-test needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const DscStats s = aggregate(d);

  PairedTestResult result;
  result.method = "paired-t";
  result.n_effective = static_cast<std::size_t>(std::count_if(d.begin(), d.end(), [](double x) { return x != 0.0; }));
  if (s.std == 0.0) {
    if (s.mean == 0.0) fail(ErrorCode::TooFewPairs, "all paired differences are zero");
    result.statistic = s.mean > 0 ? INFINITY : -INFINITY;
    result.p_value = 0.0;
    return result;
  }
  const double nn = static_cast<double>(d.size());
  result.statistic = s.mean / (s.std / std::sqrt(nn));
  const boost::math::students_t dist(nn - 1.0);
  result.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.statistic))));
  return result;
}

}  // namespace ics
