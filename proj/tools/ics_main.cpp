// ics: command-line driver for cascade segmentation runs, comparisons, sweeps,
// synthetic volumes and DSC evaluation.
//
// Exit codes: 0 success, 2 input error, 3 backend failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ics/ics.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitBackend = 3;

struct CaseOptions {
  std::string image;
  std::string label;
  std::string region = "roi";
  std::optional<int> init_start;
  int init_count = 5;
  int capacity = 5;
  std::string backend = "ref";
  std::string method = "ics";
  std::string out = "ics_out";
  bool no_augment = false;
  bool pin_initial = false;
  bool faithful_loops = false;
  bool keep_empty = false;
  double threshold = 0.5;
  int axis = 2;
  ics::RefSegParams ref;
};

void add_case_options(CLI::App& cmd, CaseOptions& o, bool with_method) {
  cmd.add_option("--image", o.image, "Image volume (.nii / .nii.gz)")->required()->check(CLI::ExistingFile);
  cmd.add_option("--label", o.label, "Label volume (.nii / .nii.gz)")->required()->check(CLI::ExistingFile);
  cmd.add_option("--region", o.region, "Region name (LV, RV, LA, RA, AO, PA, SVC, IVC or custom)");
  cmd.add_option("--init-start", o.init_start, "First initially labeled slice (default: centered block)");
  cmd.add_option("--init-count", o.init_count, "Number of initially labeled slices")->check(CLI::PositiveNumber);
  cmd.add_option("--capacity", o.capacity, "Support set capacity m")->check(CLI::PositiveNumber);
  cmd.add_option("--backend", o.backend, "ref | bridge:<command>");
  if (with_method) cmd.add_option("--method", o.method, "ics | baseline")->check(CLI::IsMember({"ics", "baseline"}));
  cmd.add_option("--out", o.out, "Output directory");
  cmd.add_flag("--no-augment", o.no_augment, "Disable rotation augmentation of the support set");
  cmd.add_flag("--pin-initial", o.pin_initial, "Never evict ground-truth support entries while predictions remain");
  cmd.add_flag("--faithful-loops", o.faithful_loops, "Also re-predict the boundary labeled slices");
  cmd.add_flag("--keep-empty", o.keep_empty, "Keep slices whose label is empty");
  cmd.add_option("--threshold", o.threshold, "Probability threshold in (0,1)");
  cmd.add_option("--axis", o.axis, "Propagation axis of the stored array")->check(CLI::Range(0, 2));
  cmd.add_option("--ref-patch", o.ref.patch_size, "Reference backend patch size (odd)");
  cmd.add_option("--ref-radius", o.ref.search_radius, "Reference backend search radius");
  cmd.add_option("--ref-k", o.ref.k, "Reference backend neighbours");
  cmd.add_option("--ref-sigma", o.ref.bandwidth, "Reference backend bandwidth");
}

ics::CascadeConfig make_config(const CaseOptions& o) {
  ics::CascadeConfig cfg;
  cfg.capacity = o.capacity;
  cfg.prob_threshold = o.threshold;
  cfg.augment = !o.no_augment;
  cfg.pin_initial = o.pin_initial;
  cfg.faithful_loops = o.faithful_loops;
  cfg.backend_id = o.backend;
  ics::validate(cfg);
  return cfg;
}

ics::BackendFactory make_factory(const CaseOptions& o) {
  if (o.backend == "ref") {
    const ics::RefSegParams params = o.ref;
    ics::validate(params);
    return [params] { return std::make_unique<ics::RefSegmenter>(params); };
  }
  const std::string prefix = "bridge:";
  if (o.backend.rfind(prefix, 0) == 0 && o.backend.size() > prefix.size()) {
    const std::string command = o.backend.substr(prefix.size());
    return [command]() -> std::unique_ptr<ics::SegmenterBackend> { return ics::bridge_spawn(command); };
  }
  ics::fail(ics::ErrorCode::InvalidValue, "unknown backend '" + o.backend + "'");
}

ics::CaseBundle load(const CaseOptions& o) {
  ics::CaseBundle bundle = ics::load_case(o.image, o.label, o.region, o.axis);
  if (!o.keep_empty) bundle = ics::drop_empty_slices(bundle);
  return bundle;
}

ics::InitialSupportSpec initial_block(const ics::CaseBundle& bundle, const CaseOptions& o) {
  const int start = o.init_start.value_or(ics::centered_start(bundle.count(), o.init_count));
  auto spec = ics::InitialSupportSpec::block(start, o.init_count);
  ics::validate(spec, bundle.count());
  return spec;
}

void print_summary(const ics::RunReport& r, const fs::path& dir) {
  std::cout << r.method << " " << r.run_id() << ": ";
  if (r.stats) {
    std::cout << "mean DSC " << ics::fixed6(r.stats->mean) << " std " << ics::fixed6(r.stats->std) << " over "
              << r.stats->n << " slices";
  } else {
    std::cout << r.notice;
  }
  std::cout << " -> " << dir.string() << "\n";
}

int cmd_run(const CaseOptions& o) {
  const auto bundle = load(o);
  const auto spec = initial_block(bundle, o);
  const auto cfg = make_config(o);
  auto backend = make_factory(o)();
  const auto method = o.method == "baseline" ? ics::Method::Baseline : ics::Method::Ics;
  const auto result = ics::run_method(method, bundle, spec, *backend, cfg);
  const auto report = ics::make_report(method, bundle, spec, cfg, backend->id(), result);
  print_summary(report, ics::write_run_report(report, o.out));
  return 0;
}

int cmd_compare(const CaseOptions& o, const std::string& test) {
  const auto bundle = load(o);
  const auto spec = initial_block(bundle, o);
  const auto cfg = make_config(o);
  auto backend = make_factory(o)();
  const auto cmp = ics::run_compare(bundle, spec, *backend, cfg,
                                    test == "t" ? ics::TestKind::PairedT : ics::TestKind::Wilcoxon);
  print_summary(cmp.baseline, ics::write_run_report(cmp.baseline, o.out));
  print_summary(cmp.ics, ics::write_run_report(cmp.ics, o.out));
  if (cmp.test) {
    std::cout << cmp.test->method << ": statistic " << ics::fixed6(cmp.test->statistic) << " p "
              << ics::fixed6(cmp.test->p_value) << " (n=" << cmp.test->n_effective << ")\n";
  } else {
    std::cout << "paired test: " << cmp.notice << "\n";
  }
  return 0;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<ics::Method> parse_methods(const std::string& text) {
  std::vector<ics::Method> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item == "baseline") out.push_back(ics::Method::Baseline);
    else if (item == "ics") out.push_back(ics::Method::Ics);
    else ics::fail(ics::ErrorCode::InvalidValue, "unknown method '" + item + "'");
  }
  return out;
}

int cmd_sweep(const CaseOptions& o, const std::string& kind, const std::string& m_values, const std::string& positions,
              const std::string& methods, unsigned workers) {
  const auto bundle = load(o);
  const auto cfg = make_config(o);
  ics::SweepSpec spec;
  spec.workers = workers;
  spec.init_count = o.init_count;
  spec.methods = parse_methods(methods);
  ics::SweepReport report;
  if (kind == "m") {
    spec.m_values = parse_int_list(m_values);
    report = ics::sweep_m(bundle, spec, make_factory(o), cfg);
  } else {
    if (positions != "all") spec.positions = parse_int_list(positions);
    report = ics::sweep_position(bundle, spec, make_factory(o), cfg);
  }
  ics::write_sweep_report(report, o.out);
  std::cout << ics::sweep_summary_csv(report);
  return 0;
}

int cmd_synth(const std::string& preset, std::uint64_t seed, const std::vector<std::string>& out) {
  const auto cfg = ics::phantom_preset(preset, seed);
  if (!cfg) ics::fail(ics::ErrorCode::InvalidValue, "unknown preset '" + preset + "'");
  const auto bundle = ics::gen_phantom(*cfg);
  fs::path image_path;
  fs::path label_path;
  if (out.size() == 2) {
    image_path = out[0];
    label_path = out[1];
  } else {
    image_path = out[0] + "_image.nii.gz";
    label_path = out[0] + "_label.nii.gz";
  }
  ics::write_nifti(bundle.image, image_path);
  ics::write_nifti(ics::masks_to_volume(bundle.labels, bundle.image.spacing), label_path);
  std::cout << image_path.string() << "\n" << label_path.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, int axis, bool per_slice) {
  const auto pred = ics::read_nifti(pred_path, axis);
  const auto gt = ics::read_nifti(gt_path, axis);
  if (pred.count() != gt.count() || pred.slice_size() != gt.slice_size()) {
    ics::fail(ics::ErrorCode::ShapeMismatch, "prediction and ground truth shapes differ");
  }
  ics::OverlapCounts total;
  for (int k = 1; k <= pred.count(); ++k) {
    const auto p = ics::binarize(pred.at(k).pixels);
    const auto g = ics::binarize(gt.at(k).pixels);
    const auto c = ics::count_overlap(p, g);
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
    if (per_slice) std::cout << "slice " << k << " " << ics::fixed6(ics::dsc(c)) << "\n";
  }
  std::cout << "dsc " << ics::fixed6(ics::dsc(total)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context cascade segmentation of slice stacks"};
  app.require_subcommand(1);

  CaseOptions run_opts;
  auto* run = app.add_subcommand("run", "Segment one case with the cascade or the baseline");
  add_case_options(*run, run_opts, true);

  CaseOptions cmp_opts;
  std::string test = "wilcoxon";
  auto* compare = app.add_subcommand("compare", "Run baseline and cascade on one case and test the difference");
  add_case_options(*compare, cmp_opts, false);
  compare->add_option("--test", test, "wilcoxon | t")->check(CLI::IsMember({"wilcoxon", "t"}));

  CaseOptions sm_opts;
  std::string m_values = "1..5";
  std::string sm_methods = "ics";
  unsigned sm_workers = 0;
  auto* sweep_m = app.add_subcommand("sweep-m", "Vary the number of initially labeled slices");
  add_case_options(*sweep_m, sm_opts, false);
  sweep_m->add_option("--m", m_values, "Values of m: a..b or comma list");
  sweep_m->add_option("--methods", sm_methods, "Comma list of ics, baseline");
  sweep_m->add_option("--workers", sm_workers, "Worker threads (0 = all cores)");

  CaseOptions sp_opts;
  std::string positions = "all";
  std::string sp_methods = "baseline,ics";
  unsigned sp_workers = 0;
  auto* sweep_pos = app.add_subcommand("sweep-pos", "Vary the position of the initially labeled block");
  add_case_options(*sweep_pos, sp_opts, false);
  sweep_pos->add_option("--positions", positions, "all | s1,s2,...");
  sweep_pos->add_option("--methods", sp_methods, "Comma list of ics, baseline");
  sweep_pos->add_option("--workers", sp_workers, "Worker threads (0 = all cores)");

  std::string preset;
  std::uint64_t seed = 1;
  std::vector<std::string> synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic image/label pair");
  synth->add_option("--preset", preset, "drifting-disk | constant | mirrored")->required();
  synth->add_option("--seed", seed, "Noise seed");
  synth->add_option("--out", synth_out, "Output prefix, or image and label paths")->required()->expected(1, 2);

  std::string pred_path;
  std::string gt_path;
  int eval_axis = 2;
  bool eval_per_slice = false;
  auto* eval = app.add_subcommand("eval", "Print the DSC between two mask volumes");
  eval->add_option("--pred", pred_path, "Predicted mask volume")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt_path, "Ground-truth mask volume")->required()->check(CLI::ExistingFile);
  eval->add_option("--axis", eval_axis, "Slicing axis")->check(CLI::Range(0, 2));
  eval->add_flag("--per-slice", eval_per_slice, "Also print per-slice DSC");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*compare) return cmd_compare(cmp_opts, test);
    if (*sweep_m) return cmd_sweep(sm_opts, "m", m_values, "", sm_methods, sm_workers);
    if (*sweep_pos) return cmd_sweep(sp_opts, "pos", "", positions, sp_methods, sp_workers);
    if (*synth) return cmd_synth(preset, seed, synth_out);
    if (*eval) return cmd_eval(pred_path, gt_path, eval_axis, eval_per_slice);
  } catch (const ics::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_backend_failure() ? kExitBackend : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
