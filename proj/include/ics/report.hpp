#pragma once

// Run reports: mask stack, per-slice DSC table and a key/value summary. Output
// is a pure function of the report: fixed key order, fixed 6-decimal floats.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ics/error.hpp"
#include "ics/eval.hpp"
#include "ics/support_set.hpp"
#include "ics/volume_io.hpp"

namespace ics {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline const char* yes_no(bool b) { return b ? "true" : "false"; }

struct RunReport {
  std::string case_id;
  std::string region;
  std::string method;
  /// Number of initially labeled slices.
  int m = 0;
  int seed_start = 0;
  CascadeConfig config;
  std::string backend_id;

  /// Full stack, ground truth on labeled slices.
  std::vector<Mask> masks;
  Spacing spacing;
  /// Scores of predicted slices; index is the slice's original index.
  std::vector<SliceScore> per_slice;
  std::optional<DscStats> stats;
  std::optional<PairedTestResult> paired;
  std::string notice;
  double elapsed_ms = 0.0;

  std::string run_id() const {
    return case_id + "_" + region + "_" + method + "_m" + std::to_string(m) + "_s" + std::to_string(seed_start);
  }
};

inline std::string per_slice_csv(const RunReport& r) {
  std::ostringstream out;
  out << "case,region,method,m,seed_start,slice,dsc\n";
  for (const auto& s : r.per_slice) {
    out << r.case_id << ',' << r.region << ',' << r.method << ',' << r.m << ',' << r.seed_start << ',' << s.index
        << ',' << fixed6(s.dsc) << '\n';
  }
  return out.str();
}

inline std::string summary_text(const RunReport& r) {
  std::ostringstream out;
  out << "run_id: " << r.run_id() << '\n'
      << "case: " << r.case_id << '\n'
      << "region: " << r.region << '\n'
      << "method: " << r.method << '\n'
      << "backend: " << r.backend_id << '\n'
      << "init_start: " << r.seed_start << '\n'
      << "init_count: " << r.m << '\n'
      << "capacity: " << r.config.capacity << '\n'
      << "threshold: " << fixed6(r.config.prob_threshold) << '\n'
      << "augment: " << yes_no(r.config.augment) << '\n'
      << "pin_initial: " << yes_no(r.config.pin_initial) << '\n'
      << "faithful_loops: " << yes_no(r.config.faithful_loops) << '\n'
      << "slices_total: " << r.masks.size() << '\n'
      << "slices_predicted: " << r.per_slice.size() << '\n';
  if (r.stats) {
    out << "dsc_mean: " << fixed6(r.stats->mean) << '\n'
        << "dsc_std: " << fixed6(r.stats->std) << '\n'
        << "dsc_n: " << r.stats->n << '\n';
  }
  if (r.paired) {
    out << "test_method: " << r.paired->method << '\n'
        << "test_statistic: " << fixed6(r.paired->statistic) << '\n'
        << "test_p_value: " << fixed6(r.paired->p_value) << '\n'
        << "test_n_effective: " << r.paired->n_effective << '\n';
  }
  if (!r.notice.empty()) out << "notice: " << r.notice << '\n';
  out << "elapsed_ms: " << fixed6(r.elapsed_ms) << '\n';
  return out.str();
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot create " + path.string());
  out << text;
  if (!out) fail(ErrorCode::IoFailure, "write " + path.string());
}

}  // namespace detail

/// Writes <dir>/<run_id>/{masks.nii.gz, per_slice.csv, report.txt} and
/// returns the run directory.
inline std::filesystem::path write_run_report(const RunReport& report, const std::filesystem::path& dir) {
  const auto run_dir = dir / report.run_id();
  std::error_code ec;
  std::filesystem::create_directories(run_dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "create " + run_dir.string() + ": " + ec.message());
  if (!report.masks.empty()) write_nifti(masks_to_volume(report.masks, report.spacing), run_dir / "masks.nii.gz");
  detail::write_text(run_dir / "per_slice.csv", per_slice_csv(report));
  detail::write_text(run_dir / "report.txt", summary_text(report));
  return run_dir;
}

}  // namespace ics
