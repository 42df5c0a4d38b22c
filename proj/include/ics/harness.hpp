#pragma once

// Experiment drivers: baseline-vs-cascade comparison, sweep over the number
// of initial labeled slices, and sweep over the initial block position.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <filesystem>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "ics/cascade.hpp"
#include "ics/error.hpp"
#include "ics/eval.hpp"
#include "ics/report.hpp"
#include "ics/segmenter.hpp"

namespace ics {

enum class Method { Baseline, Ics };

inline std::string to_string(Method m) { return m == Method::Baseline ? "baseline" : "ics"; }

/// Start of the block of `count` slices placed near the middle of n.
inline int centered_start(int n, int count) { return (n - count) / 2 + 1; }

inline CascadeResult run_method(Method method, const CaseBundle& bundle, const InitialSupportSpec& spec,
                                SegmenterBackend& backend, const CascadeConfig& cfg) {
  return method == Method::Baseline ? run_baseline(bundle, spec, backend, cfg) : run_ics(bundle, spec, backend, cfg);
}

/// Scores every predicted slice against ground truth; index is the original
/// slice index.
inline std::vector<SliceScore> score_slices(const CaseBundle& bundle, const CascadeResult& result) {
  std::vector<SliceScore> scores;
  scores.reserve(result.masks.size());
  for (const auto& [idx, mask] : result.masks) {
    const int original =
        bundle.original_index.empty() ? idx : bundle.original_index.at(static_cast<std::size_t>(idx - 1));
    scores.push_back({original, dsc(mask, bundle.label_at(idx))});
  }
  return scores;
}

inline RunReport make_report(Method method, const CaseBundle& bundle, const InitialSupportSpec& spec,
                             const CascadeConfig& cfg, const std::string& backend_id, const CascadeResult& result) {
  RunReport r;
  r.case_id = bundle.image.id.empty() ? "case" : bundle.image.id;
  r.region = bundle.region.empty() ? "region" : bundle.region;
  r.method = to_string(method);
  r.m = static_cast<int>(spec.indices.size());
  r.seed_start = spec.first();
  r.config = cfg;
  r.backend_id = backend_id;
  r.masks = assemble_masks(bundle, spec, result);
  r.spacing = bundle.image.spacing;
  r.per_slice = score_slices(bundle, result);
  if (!r.per_slice.empty()) {
    r.stats = aggregate(r.per_slice);
  } else {
    r.notice = "NoQuerySlices: every slice is labeled";
  }
  r.elapsed_ms = result.total_ms;
  return r;
}

struct CompareReport {
  RunReport baseline;
  RunReport ics;
  CascadeResult baseline_result;
  CascadeResult ics_result;
  std::optional<PairedTestResult> test;
  /// Set when no test could be run ("identical" or "NoQuerySlices").
  std::string notice;
};

enum class TestKind { Wilcoxon, PairedT };

/// Baseline and cascade from the same initial block and config, with a paired
/// test over the per-slice DSC series.
inline CompareReport run_compare(const CaseBundle& bundle, const InitialSupportSpec& spec, SegmenterBackend& backend,
                                 const CascadeConfig& cfg, TestKind test = TestKind::Wilcoxon) {
  CompareReport out;
  out.baseline_result = run_baseline(bundle, spec, backend, cfg);
  out.ics_result = run_ics(bundle, spec, backend, cfg);
  out.baseline = make_report(Method::Baseline, bundle, spec, cfg, backend.id(), out.baseline_result);
  out.ics = make_report(Method::Ics, bundle, spec, cfg, backend.id(), out.ics_result);

  if (out.ics.per_slice.empty()) {
    out.notice = "NoQuerySlices";
    return out;
  }
  std::vector<double> a;
  std::vector<double> b;
  for (std::size_t i = 0; i < out.ics.per_slice.size(); ++i) {
    a.push_back(out.ics.per_slice[i].dsc);
    b.push_back(out.baseline.per_slice[i].dsc);
  }
  try {
    out.test = test == TestKind::Wilcoxon ? paired_test(a, b) : paired_t_test(a, b);
    out.ics.paired = out.test;
    out.baseline.paired = out.test;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewPairs) throw;
    out.notice = "identical";
  }
  if (!out.notice.empty()) {
    out.ics.notice = out.notice;
    out.baseline.notice = out.notice;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps.

struct SweepSpec {
  std::vector<int> m_values{1, 2, 3, 4, 5};
  /// Block size held fixed in the position sweep.
  int init_count = 5;
  /// Block starts for the position sweep; nullopt means every valid start.
  std::optional<std::vector<int>> positions;
  std::vector<Method> methods{Method::Ics};
  /// In the m sweep, use capacity = m (otherwise cfg.capacity, raised to m).
  bool capacity_follows_m = true;
  /// Worker threads; 0 means hardware concurrency.
  unsigned workers = 0;
};

struct SweepCell {
  Method method = Method::Ics;
  int m = 0;
  int seed_start = 0;
  RunReport report;
  /// Mean DSC over the slices each pass predicted; nullopt when empty.
  std::optional<double> forward_mean;
  std::optional<double> backward_mean;

  auto key() const { return std::tuple(static_cast<int>(method), m, seed_start); }
};

struct SweepReport {
  std::string kind;
  std::vector<SweepCell> cells;
};

namespace detail {

struct CellTask {
  Method method;
  int m;
  int start;
  CascadeConfig cfg;
};

inline std::optional<double> direction_mean(const CaseBundle& bundle, const CascadeResult& result, Direction d) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [idx, mask] : result.masks) {
    if (result.direction_of.at(idx) != d) continue;
    sum += dsc(mask, bundle.label_at(idx));
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline SweepCell run_cell(const CaseBundle& bundle, const CellTask& task, SegmenterBackend& backend) {
  const auto spec = InitialSupportSpec::block(task.start, task.m);
  const CascadeResult result = run_method(task.method, bundle, spec, backend, task.cfg);
  SweepCell cell;
  cell.method = task.method;
  cell.m = task.m;
  cell.seed_start = task.start;
  cell.report = make_report(task.method, bundle, spec, task.cfg, backend.id(), result);
  cell.forward_mean = direction_mean(bundle, result, Direction::Forward);
  cell.backward_mean = direction_mean(bundle, result, Direction::Backward);
  return cell;
}

/// Runs cells on a small pool, one backend per worker; output is sorted by
/// cell key so completion order never shows.
inline std::vector<SweepCell> run_cells(const CaseBundle& bundle, const std::vector<CellTask>& tasks,
                                        const BackendFactory& make_backend, unsigned workers) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, tasks.size())));

  std::vector<SweepCell> cells(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    auto backend = make_backend();
    for (std::size_t i = next++; i < tasks.size(); i = next++) cells[i] = run_cell(bundle, tasks[i], *backend);
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::future<void>> pool;
    for (unsigned w = 0; w < workers; ++w) pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();
  }
  std::sort(cells.begin(), cells.end(), [](const SweepCell& a, const SweepCell& b) { return a.key() < b.key(); });
  return cells;
}

}  // namespace detail

/// For each m: a block of m slices centered in the volume, capacity m.
inline SweepReport sweep_m(const CaseBundle& bundle, const SweepSpec& spec, const BackendFactory& make_backend,
                           const CascadeConfig& cfg) {
  if (spec.m_values.empty()) fail(ErrorCode::EmptySweep, "no m values");
  if (spec.methods.empty()) fail(ErrorCode::EmptySweep, "no methods");
  const int n = bundle.count();
  std::vector<detail::CellTask> tasks;
  for (int m : spec.m_values) {
    if (m < 1) fail(ErrorCode::InvalidSpec, "m must be >= 1");
    if (m > n) fail(ErrorCode::InvalidSpec, "m = " + std::to_string(m) + " exceeds " + std::to_string(n) + " slices");
    CascadeConfig c = cfg;
    c.capacity = spec.capacity_follows_m ? m : std::max(cfg.capacity, m);
    for (Method method : spec.methods) tasks.push_back({method, m, centered_start(n, m), c});
  }
  return {"sweep-m", detail::run_cells(bundle, tasks, make_backend, spec.workers)};
}

/// For each block start s (count fixed at spec.init_count): baseline and
/// cascade unless spec.methods says otherwise.
inline SweepReport sweep_position(const CaseBundle& bundle, const SweepSpec& spec, const BackendFactory& make_backend,
                                  const CascadeConfig& cfg) {
  const int n = bundle.count();
  const int m = spec.init_count;
  if (m < 1 || m > n) fail(ErrorCode::InvalidSpec, "block size " + std::to_string(m) + " invalid for " + std::to_string(n) + " slices");
  std::vector<int> starts;
  if (spec.positions) {
    starts = *spec.positions;
  } else {
    for (int s = 1; s + m - 1 <= n; ++s) starts.push_back(s);
  }
  if (starts.empty()) fail(ErrorCode::EmptySweep, "no positions to sweep");
  if (spec.methods.empty()) fail(ErrorCode::EmptySweep, "no methods");
  CascadeConfig c = cfg;
  c.capacity = std::max(cfg.capacity, m);
  std::vector<detail::CellTask> tasks;
  for (int s : starts) {
    if (s < 1 || s + m - 1 > n) fail(ErrorCode::InvalidSpec, "block start " + std::to_string(s) + " out of range");
    for (Method method : spec.methods) tasks.push_back({method, m, s, c});
  }
  return {"sweep-pos", detail::run_cells(bundle, tasks, make_backend, spec.workers)};
}

inline std::string sweep_per_slice_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "case,region,method,m,seed_start,slice,dsc\n";
  for (const auto& cell : report.cells) {
    const std::string csv = per_slice_csv(cell.report);
    out << csv.substr(csv.find('\n') + 1);
  }
  return out.str();
}

inline std::string sweep_summary_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "case,region,method,m,seed_start,n,mean_dsc,std_dsc,forward_mean_dsc,backward_mean_dsc\n";
  const auto opt = [](const std::optional<double>& v) { return v ? fixed6(*v) : std::string(); };
  for (const auto& cell : report.cells) {
    const RunReport& r = cell.report;
    out << r.case_id << ',' << r.region << ',' << r.method << ',' << r.m << ',' << r.seed_start << ','
        << r.per_slice.size() << ',' << (r.stats ? fixed6(r.stats->mean) : "") << ','
        << (r.stats ? fixed6(r.stats->std) : "") << ',' << opt(cell.forward_mean) << ','
        << opt(cell.backward_mean) << '\n';
  }
  return out.str();
}

/// Writes <dir>/<kind>_per_slice.csv and <dir>/<kind>_summary.csv.
inline void write_sweep_report(const SweepReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "create " + dir.string() + ": " + ec.message());
  detail::write_text(dir / (report.kind + "_per_slice.csv"), sweep_per_slice_csv(report));
  detail::write_text(dir / (report.kind + "_summary.csv"), sweep_summary_csv(report));
}

}  // namespace ics
