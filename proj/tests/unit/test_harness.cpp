#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "ics/harness.hpp"
#include "ics/phantom.hpp"
#include "ics/ref_segmenter.hpp"
#include "oracles.hpp"

using namespace ics;

namespace {

void expect_code(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

BackendFactory ref_factory() {
  return [] { return std::make_unique<RefSegmenter>(); };
}

// Small noiseless constant volume so cascade tests stay fast.
CaseBundle small_constant(int n) {
  PhantomConfig c = phantom_presets::constant();
  c.n_slices = n;
  c.width = 16;
  c.height = 16;
  c.radius = 4;
  c.center_x = 8;
  c.center_y = 8;
  return gen_phantom(c);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Phantom, NoMotionMeansIdenticalSlices) {
  PhantomConfig c;
  c.n_slices = 5;
  const auto b = gen_phantom(c);
  for (int k = 2; k <= 5; ++k) {
    EXPECT_EQ(b.image.at(k).pixels, b.image.at(1).pixels);
    EXPECT_EQ(b.label_at(k), b.label_at(1));
  }
}

TEST(Phantom, DriftArithmetic) {
  PhantomConfig c;
  c.radius = 12;
  c.center_x = 14;
  c.center_y = 32;
  c.drift_x = 1;
  EXPECT_NO_THROW(validate(c));
  const auto g = phantom_geometry(c, 40);
  EXPECT_EQ(g.main.cx, 53.0);
  EXPECT_EQ(g.main.cy, 32.0);
}

TEST(Phantom, OutOfBounds) {
  PhantomConfig c;
  c.center_x = 60;
  c.drift_x = 1;
  expect_code(ErrorCode::ShapeOutOfBounds, [&] { gen_phantom(c); });
  PhantomConfig shrink;
  shrink.radius = 3;
  shrink.radius_growth = -1;
  expect_code(ErrorCode::ShapeOutOfBounds, [&] { gen_phantom(shrink); });
}

TEST(Phantom, SeedDeterminism) {
  const auto a = gen_phantom(phantom_presets::drifting_disk(5));
  const auto b = gen_phantom(phantom_presets::drifting_disk(5));
  const auto c = gen_phantom(phantom_presets::drifting_disk(6));
  EXPECT_EQ(a.image.slices, b.image.slices);
  EXPECT_NE(a.image.slices, c.image.slices);
}

TEST(Phantom, MirroredIsSymmetric) {
  const auto b = gen_phantom(phantom_presets::mirrored(2));
  ASSERT_EQ(b.count(), 41);
  for (int k = 1; k <= 41; ++k) {
    EXPECT_EQ(b.image.at(k).pixels, b.image.at(42 - k).pixels);
    EXPECT_EQ(b.label_at(k), b.label_at(42 - k));
    EXPECT_EQ(b.image.at(k).index, k);
  }
}

TEST(Phantom, BranchAppearsHalfway) {
  PhantomConfig c;
  c.shape = PhantomShape::TubeWithBranch;
  c.n_slices = 10;
  c.radius = 6;
  EXPECT_FALSE(phantom_geometry(c, 4).branch.has_value());
  EXPECT_TRUE(phantom_geometry(c, 5).branch.has_value());
  EXPECT_NO_THROW(gen_phantom(c));
}

TEST(Compare, ConstantPhantomIsIdentical) {
  const auto b = small_constant(8);
  RefSegmenter ref;
  CascadeConfig cfg;
  const auto cmp = run_compare(b, InitialSupportSpec::block(4, 1), ref, cfg);
  EXPECT_EQ(cmp.notice, "identical");
  EXPECT_FALSE(cmp.test.has_value());
  for (const auto& s : cmp.ics.per_slice) EXPECT_EQ(s.dsc, 1.0);
  for (const auto& s : cmp.baseline.per_slice) EXPECT_EQ(s.dsc, 1.0);
}

TEST(Compare, EverythingLabeled) {
  const auto b = small_constant(3);
  RefSegmenter ref;
  const auto cmp = run_compare(b, InitialSupportSpec::block(1, 3), ref, CascadeConfig{});
  EXPECT_EQ(cmp.notice, "NoQuerySlices");
  EXPECT_TRUE(cmp.ics.per_slice.empty());
}

TEST(Compare, CsvUsesOriginalIndices) {
  auto b = small_constant(4);
  b.original_index = {3, 4, 5, 6};
  RefSegmenter ref;
  const auto cmp = run_compare(b, InitialSupportSpec::block(1, 1), ref, CascadeConfig{});
  ASSERT_EQ(cmp.ics.per_slice.size(), 3u);
  EXPECT_EQ(cmp.ics.per_slice.front().index, 4);
}

TEST(SweepM, SingleValueOnConstant) {
  const auto b = small_constant(6);
  SweepSpec spec;
  spec.m_values = {1};
  spec.workers = 1;
  const auto rep = sweep_m(b, spec, ref_factory(), CascadeConfig{});
  ASSERT_EQ(rep.cells.size(), 1u);
  EXPECT_EQ(rep.cells[0].report.stats->mean, 1.0);
  EXPECT_EQ(rep.cells[0].report.config.capacity, 1);
}

TEST(SweepM, Errors) {
  const auto b = small_constant(4);
  SweepSpec spec;
  spec.m_values = {5};
  expect_code(ErrorCode::InvalidSpec, [&] { sweep_m(b, spec, ref_factory(), CascadeConfig{}); });
  spec.m_values = {};
  expect_code(ErrorCode::EmptySweep, [&] { sweep_m(b, spec, ref_factory(), CascadeConfig{}); });
}

TEST(SweepM, WorkerCountDoesNotChangeOutput) {
  const auto b = small_constant(7);
  SweepSpec spec;
  spec.m_values = {1, 2, 3};
  spec.methods = {Method::Baseline, Method::Ics};
  spec.workers = 1;
  const auto serial = sweep_m(b, spec, ref_factory(), CascadeConfig{});
  spec.workers = 3;
  const auto parallel = sweep_m(b, spec, ref_factory(), CascadeConfig{});
  EXPECT_EQ(sweep_per_slice_csv(serial), sweep_per_slice_csv(parallel));
  EXPECT_EQ(sweep_summary_csv(serial), sweep_summary_csv(parallel));
  EXPECT_EQ(serial.cells.size(), 6u);
}

TEST(SweepPosition, StartOfVolume) {
  const auto b = small_constant(6);
  SweepSpec spec;
  spec.init_count = 2;
  spec.positions = std::vector<int>{1};
  spec.methods = {Method::Ics};
  const auto rep = sweep_position(b, spec, ref_factory(), CascadeConfig{});
  ASSERT_EQ(rep.cells.size(), 1u);
  EXPECT_FALSE(rep.cells[0].backward_mean.has_value());
  EXPECT_TRUE(rep.cells[0].forward_mean.has_value());
  EXPECT_EQ(rep.cells[0].report.per_slice.size(), 4u);
}

TEST(SweepPosition, AllPositionsByDefault) {
  const auto b = small_constant(5);
  SweepSpec spec;
  spec.init_count = 3;
  spec.methods = {Method::Baseline};
  const auto rep = sweep_position(b, spec, ref_factory(), CascadeConfig{});
  ASSERT_EQ(rep.cells.size(), 3u);
  EXPECT_EQ(rep.cells[2].seed_start, 3);
}

TEST(SweepPosition, Errors) {
  const auto b = small_constant(5);
  SweepSpec spec;
  spec.positions = std::vector<int>{};
  expect_code(ErrorCode::EmptySweep, [&] { sweep_position(b, spec, ref_factory(), CascadeConfig{}); });
  spec.init_count = 2;
  spec.positions = std::vector<int>{5};
  expect_code(ErrorCode::InvalidSpec, [&] { sweep_position(b, spec, ref_factory(), CascadeConfig{}); });
}

TEST(SweepPosition, MirroredCenterIsBalanced) {
  const auto b = gen_phantom(phantom_presets::mirrored(1));
  SweepSpec spec;
  spec.init_count = 5;
  spec.positions = std::vector<int>{centered_start(b.count(), 5)};
  spec.methods = {Method::Ics};
  spec.workers = 1;
  const auto rep = sweep_position(b, spec, ref_factory(), CascadeConfig{});
  ASSERT_EQ(rep.cells.size(), 1u);
  EXPECT_EQ(rep.cells[0].seed_start, 19);
  ASSERT_TRUE(rep.cells[0].forward_mean && rep.cells[0].backward_mean);
  EXPECT_NEAR(*rep.cells[0].forward_mean, *rep.cells[0].backward_mean, 1e-9);
}

TEST(Report, FormattingAndDeterminism) {
  EXPECT_EQ(fixed6(0.5), "0.500000");
  const auto b = small_constant(4);
  RefSegmenter ref;
  const auto spec = InitialSupportSpec::block(2, 1);
  const auto res = run_ics(b, spec, ref, CascadeConfig{});
  RunReport r = make_report(Method::Ics, b, spec, CascadeConfig{}, ref.id(), res);
  r.case_id = "c";
  r.region = "LV";
  const std::string csv = per_slice_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("c,LV,ics,1,2,1,1.000000\n"), std::string::npos) << csv;

  fixture::TempDir one("report");
  fixture::TempDir two("report");
  const auto d1 = write_run_report(r, one.path());
  const auto d2 = write_run_report(r, two.path());
  EXPECT_EQ(d1.filename(), "c_LV_ics_m1_s2");
  for (const char* f : {"masks.nii.gz", "per_slice.csv", "report.txt"}) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  const Volume masks = read_nifti(d1 / "masks.nii.gz");
  EXPECT_EQ(masks.count(), 4);
}

TEST(Report, TwoRowCsv) {
  RunReport r;
  r.case_id = "x";
  r.region = "PA";
  r.method = "baseline";
  r.per_slice = {{1, 0.5}, {3, 0.25}};
  const std::string csv = per_slice_csv(r);
  EXPECT_EQ(csv, "case,region,method,m,seed_start,slice,dsc\nx,PA,baseline,0,0,1,0.500000\nx,PA,baseline,0,0,3,0.250000\n");
}
