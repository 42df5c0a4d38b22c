#include <gtest/gtest.h>

#include <random>

#include "ics/eval.hpp"
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

Mask row(std::vector<std::uint8_t> v) {
  const int n = static_cast<int>(v.size());
  return Mask(n, 1, std::move(v));
}

CaseBundle bundle_with_empty(std::vector<bool> nonempty) {
  CaseBundle b;
  for (std::size_t i = 0; i < nonempty.size(); ++i) {
    b.image.slices.push_back({Grid<float>(2, 2), static_cast<int>(i) + 1});
    Mask m(2, 2);
    if (nonempty[i]) m(1, 1) = 1;
    b.labels.push_back(m);
  }
  return b;
}

}  // namespace

TEST(Dsc, Examples) {
  EXPECT_EQ(dsc(row({1, 1, 0}), row({1, 1, 0})), 1.0);
  EXPECT_EQ(dsc(row({1, 0}), row({0, 1})), 0.0);
  EXPECT_EQ(dsc(row({1, 1, 0}), row({1, 0, 1})), 0.5);
  EXPECT_EQ(dsc(row({0, 0}), row({0, 0})), 1.0);
  expect_code(ErrorCode::DimMismatch, [] { dsc(row({1}), row({1, 0})); });
}

TEST(Dsc, MatchesBruteForceCounter) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const Mask a = fixture::random_mask(rng, 16, 16, 0.3);
    const Mask b = fixture::random_mask(rng, 16, 16, 0.3);
    EXPECT_EQ(dsc(a, b), oracle::dsc(a, b));
  }
}

TEST(DropEmpty, RemovesEndsAndKeepsOriginalIndex) {
  const auto out = drop_empty_slices(bundle_with_empty({false, true, true, true, false}));
  ASSERT_EQ(out.count(), 3);
  EXPECT_EQ(out.original_index, (std::vector<int>{2, 3, 4}));
  EXPECT_EQ(out.image.at(1).index, 1);
}

TEST(DropEmpty, NothingToDrop) {
  const auto in = bundle_with_empty({true, true});
  const auto out = drop_empty_slices(in);
  EXPECT_EQ(out.image.slices, in.image.slices);
  EXPECT_EQ(out.labels, in.labels);
}

TEST(DropEmpty, AllEmpty) {
  expect_code(ErrorCode::AllEmpty, [] { drop_empty_slices(bundle_with_empty({false, false})); });
}

TEST(Aggregate, Examples) {
  const std::vector<double> one{0.5};
  const auto a = aggregate(one);
  EXPECT_EQ(a.mean, 0.5);
  EXPECT_EQ(a.std, 0.0);
  const std::vector<double> two{0.0, 1.0};
  const auto b = aggregate(two);
  EXPECT_EQ(b.mean, 0.5);
  EXPECT_NEAR(b.std, 0.7071068, 1e-7);
  expect_code(ErrorCode::EmptySeries, [] { aggregate(std::vector<double>{}); });
}

TEST(Aggregate, MatchesTwoPassOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(1000);
  for (double& x : v) x = u(rng);
  const auto got = aggregate(v);
  const auto want = oracle::two_pass(v);
  EXPECT_NEAR(got.mean, want.mean, 1e-12);
  EXPECT_NEAR(got.std, want.std, 1e-12);
  EXPECT_EQ(got.n, 1000u);
}

TEST(Wilcoxon, IdenticalSeries) {
  const std::vector<double> a{0.1, 0.2, 0.3};
  expect_code(ErrorCode::TooFewPairs, [&] { paired_test(a, a); });
}

TEST(Wilcoxon, AllPositiveSix) {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};
  const std::vector<double> b(6, 0.0);
  const auto r = paired_test(a, b);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.n_effective, 6u);
  EXPECT_EQ(r.method, "wilcoxon-signed-rank-exact");
  EXPECT_DOUBLE_EQ(r.p_value, 0.03125);
  EXPECT_DOUBLE_EQ(oracle::wilcoxon_exact_p({1, 2, 3, 4, 5, 6}), 0.03125);
}

TEST(Wilcoxon, AntiSymmetric) {
  const std::vector<double> a{1, -1};
  const std::vector<double> b{0, 0};
  EXPECT_EQ(paired_test(a, b).p_value, 1.0);
}

TEST(Wilcoxon, ExactMatchesEnumerationWithTies) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> d(-4, 4);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + trial % 12;
    std::vector<double> a(static_cast<std::size_t>(n));
    std::vector<double> b(static_cast<std::size_t>(n), 0.0);
    int nonzero = 0;
    for (double& x : a) {
      x = d(rng);
      nonzero += x != 0.0;
    }
    if (nonzero < 2) continue;
    EXPECT_NEAR(paired_test(a, b, PValueMethod::Exact).p_value, oracle::wilcoxon_exact_p(a), 1e-12) << trial;
  }
}

TEST(Wilcoxon, SwappingArgumentsKeepsP) {
  const std::vector<double> a{0.9, 0.8, 0.85, 0.7, 0.95};
  const std::vector<double> b{0.6, 0.82, 0.5, 0.4, 0.3};
  EXPECT_EQ(paired_test(a, b).p_value, paired_test(b, a).p_value);
}

TEST(Wilcoxon, NormalCloseToExact) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.1, 1.0);
  for (int n = 15; n <= 20; ++n) {
    std::vector<double> a(static_cast<std::size_t>(n));
    std::vector<double> b(static_cast<std::size_t>(n), 0.0);
    for (double& x : a) x = g(rng);
    const double exact = paired_test(a, b, PValueMethod::Exact).p_value;
    const double normal = paired_test(a, b, PValueMethod::Normal).p_value;
    EXPECT_NEAR(exact, normal, 0.01) << n;
  }
}

TEST(PairedT, KnownValue) {
  // d = {1,2,3,4}: mean 2.5, sd 1.2910, t = 3.873 on 3 dof, p = 0.0305.
  const std::vector<double> a{1, 2, 3, 4};
  const std::vector<double> b(4, 0.0);
  const auto r = paired_t_test(a, b);
  EXPECT_NEAR(r.statistic, 3.872983346, 1e-8);
  EXPECT_NEAR(r.p_value, 0.030466, 1e-5);
}

TEST(Wilcoxon, NormalTailStaysPositive) {
  std::vector<double> a(30);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = 1.0 + static_cast<double>(i);
  const std::vector<double> b(30, 0.0);
  const auto r = paired_test(a, b);
  EXPECT_EQ(r.method, "wilcoxon-signed-rank-normal");
  EXPECT_GT(r.p_value, 0.0);
  EXPECT_LT(r.p_value, 1e-6);
}
