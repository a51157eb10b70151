#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dvsimc/plants.hpp"
#include "test_support.hpp"

using namespace dvsimc;

namespace {

/// exp(A t) x0 for A = [[0, 1], [-1, -4]] via its two real eigenvalues.
State2 linear_oracle(const State2& x0, double t) {
  const double l1 = -2.0 + std::sqrt(3.0), l2 = -2.0 - std::sqrt(3.0);
  const double e1 = std::exp(l1 * t), e2 = std::exp(l2 * t);
  // (e1 (A - l2 I) - e2 (A - l1 I)) / (l1 - l2)
  const double a00 = (e1 * (0.0 - l2) - e2 * (0.0 - l1)) / (l1 - l2);
  const double a01 = (e1 - e2) / (l1 - l2);
  const double a10 = -(e1 - e2) / (l1 - l2);
  const double a11 = (e1 * (-4.0 - l2) - e2 * (-4.0 - l1)) / (l1 - l2);
  return {a00 * x0[0] + a01 * x0[1], a10 * x0[0] + a11 * x0[1]};
}

double state_error(const State2& a, const State2& b) { return std::max(std::abs(a[0] - b[0]), std::abs(a[1] - b[1])); }

}  // namespace

TEST(DvsPlant, ZeroHistoryMeasuresZero) {
  DvsPlant plant(example1_params());
  EXPECT_EQ(plant.measure(), 0.0);
  EXPECT_TRUE(plant.has_direct_feedthrough());
  EXPECT_EQ(plant.output_delay(), 0u);
}

TEST(DvsPlant, StepInput) {
  DvsPlant plant(VolterraParams(0, Vector::Constant(1, 2.0), Vector::Constant(1, 1.0)));
  plant.actuate(1.0);
  EXPECT_EQ(plant.measure(), 3.0);
}

TEST(DvsPlant, CollectionMatchesSimulator) {
  const VolterraParams p = example1_params();
  DvsPlant plant(p);
  const SignalSequence u = preset_excitation(7).generate(-5, 205);
  const CollectedData d = collect(plant, u, 5, 200);
  const SignalSequence y = simulate(p, u, 0, 200);
  EXPECT_EQ(d.y, y);
  EXPECT_EQ(d.u.start_index(), -5);
  EXPECT_EQ(d.u.size(), 205u);
}

TEST(DvsPlant, FeedthroughPredictsNextSample) {
  std::mt19937_64 gen(3);
  DvsPlant plant(example1_params());
  for (int k = 0; k < 20; ++k) {
    const double u = std::uniform_real_distribution<double>(-2, 2)(gen);
    const Quadratic q = *plant.feedthrough();
    plant.actuate(u);
    EXPECT_NEAR(plant.measure(), q(u), 1e-12);
  }
}

TEST(DvsPlant, NoiseIsSeededAndBounded) {
  DvsPlant a(example1_params(), 0.05, 4), b(example1_params(), 0.05, 4);
  for (int k = 0; k < 100; ++k) {
    a.actuate(0.1 * k);
    b.actuate(0.1 * k);
    EXPECT_EQ(a.measure(), b.measure());
    EXPECT_LE(std::abs(a.measure() - a.measure_noiseless()), 0.05);
  }
}

TEST(Bilinear, EquilibriumAtOrigin) {
  const State2 x = bilinear_step({0.0, 0.0}, 0.0, 1e-4, 1.5);
  EXPECT_EQ(x[0], 0.0);
  EXPECT_EQ(x[1], 0.0);
}

TEST(Bilinear, LinearDecayMatchesMatrixExponential) {
  const State2 x = bilinear_step({1.0, 0.0}, 0.0, 1e-4, 1.5);
  EXPECT_LT(state_error(x, linear_oracle({1.0, 0.0}, 1.5)), 1e-8);
}

TEST(Bilinear, FourthOrderConvergence) {
  const State2 exact = linear_oracle({1.0, 0.0}, 1.5);
  std::vector<double> logh, loge;
  for (double h : {0.1, 0.05, 0.025, 0.0125}) {
    logh.push_back(std::log(h));
    loge.push_back(std::log(state_error(bilinear_step({1.0, 0.0}, 0.0, h, 1.5), exact)));
  }
  // Least-squares slope of log error against log step.
  const double n = static_cast<double>(logh.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < logh.size(); ++i) {
    sx += logh[i];
    sy += loge[i];
    sxx += logh[i] * logh[i];
    sxy += logh[i] * loge[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_NEAR(slope, 4.0, 0.3);
}

TEST(Bilinear, StepHalvingChangesLittle) {
  for (double u : {0.0, 0.3, -0.5}) {
    const State2 a = bilinear_step({1.0, 0.0}, u, 1e-4, 1.5);
    const State2 b = bilinear_step({1.0, 0.0}, u, 5e-5, 1.5);
    EXPECT_LT(std::abs(bilinear_output(a) - bilinear_output(b)), 1e-9);
  }
}

TEST(Bilinear, SubstepGroupingIsIrrelevant) {
  const State2 x0{0.4, -0.2};
  const State2 whole = rk4_advance(x0, 0.7, 1e-3, 1500);
  const State2 split = rk4_advance(rk4_advance(rk4_advance(x0, 0.7, 1e-3, 700), 0.7, 1e-3, 300), 0.7, 1e-3, 500);
  EXPECT_EQ(whole, split);
}

TEST(Bilinear, UnforcedNormDoesNotGrow) {
  State2 x{1.0, 0.0};
  double peak = std::hypot(x[0], x[1]);
  for (int k = 0; k < 30; ++k) {
    x = bilinear_step(x, 0.0, 1e-3, 1.5);
    const double n = std::hypot(x[0], x[1]);
    EXPECT_LE(n, peak * (1 + 1e-12));
    peak = std::max(peak, n);
  }
}

TEST(Bilinear, ConfigurationErrors) {
  EXPECT_THROW(substeps_per_sample(0.4, 1.5), Error);
  EXPECT_THROW(substeps_per_sample(0.0, 1.5), Error);
  EXPECT_EQ(substeps_per_sample(1e-4, 1.5), 15000u);
  BilinearConfig bad;
  bad.rk4_step = 0.7;
  EXPECT_THROW(BilinearPlant{bad}, Error);
}

TEST(Bilinear, DivergenceIsReported) {
  BilinearConfig c;
  c.rk4_step = 0.1;
  c.x0 = {1.0, 0.0};
  BilinearPlant plant(c);
  try {
    for (int k = 0; k < 50; ++k) plant.actuate(1e6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::instability);
  }
}

TEST(Bilinear, MeasurementNoise) {
  BilinearConfig c;
  c.rk4_step = 0.01;
  c.noise_half_width = 0.0;
  c.x0 = {1.0, 0.0};
  BilinearPlant clean(c);
  EXPECT_EQ(clean.measure(), clean.measure_noiseless());
  c.noise_half_width = 0.05;
  c.seed = 9;
  BilinearPlant a(c), b(c);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    EXPECT_EQ(a.measure(), b.measure());
    worst = std::max(worst, std::abs(a.measure() - a.measure_noiseless()));
    a.actuate(0.0);
    b.actuate(0.0);
  }
  EXPECT_LE(worst, 0.05);
  EXPECT_GT(worst, 0.04);
}

TEST(Collect, OutputDelayPairing) {
  BilinearConfig c;
  c.rk4_step = 0.01;
  c.noise_half_width = 0.0;
  c.x0 = {1.0, 0.0};
  c.output_delay = 1;
  BilinearPlant plant(c);
  const SignalSequence u = preset_excitation(5).generate(-2, 13);
  const CollectedData d = collect(plant, u, 2, 10);
  State2 x = c.x0;
  std::vector<double> after;  // sample produced by actuating u(k), k = -2 ...
  for (long long k = -2; k <= 10; ++k) {
    x = rk4_advance(x, u[k], 0.01, 150);
    after.push_back(bilinear_output(x));
  }
  for (long long k = 0; k < 10; ++k) EXPECT_EQ(d.y[k], after[static_cast<std::size_t>(k + 1 + 2)]);
  EXPECT_THROW(collect(plant, u.slice(-2, 9), 2, 10), Error);
}
