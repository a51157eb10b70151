#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dvsimc/imc.hpp"
#include "test_support.hpp"

using namespace dvsimc;
using testing_support::max_abs;

namespace {

struct Model {
  OperatorPair ops;
  InverseGain gain;
  DataDictionary dict;
};

Model identify(const VolterraParams& p, std::size_t T = 200) {
  DvsPlant plant(p);
  const SignalSequence u = preset_excitation(7).generate(-static_cast<long long>(p.M), T + p.M);
  const CollectedData data = collect(plant, u, p.M, T);
  DataRepresentation rep(build_dictionary(data.u, data.y, p.M, 1));
  Model m;
  m.ops = extract_operators(rep).ops;
  extract_y1(rep.dictionary(), m.ops);
  m.gain = build_inverse_gain(rep.dictionary());
  m.dict = rep.dictionary();
  return m;
}

ImcController controller(const Model& m, ClosureStrategy s, std::size_t delay = 0) {
  ClosureSettings cs;
  cs.strategy = s;
  return ImcController(m.ops, m.gain.K, cs, delay);
}

SignalSequence smooth_reference(std::size_t n) {
  return multisine({1.0, 0.5}, {0.011, 0.023}, {0.0, 0.7}, 0.0, 0, n);
}

}  // namespace

TEST(InverseGain, IdentityLinearPart) {
  Vector t1 = Vector::Zero(4);
  t1(0) = 1.0;
  const Model m = identify(VolterraParams(3, t1, Vector::Constant(10, 0.1)));
  RowVector expect = RowVector::Zero(4);
  expect(0) = 1.0;
  EXPECT_LT(max_abs(m.gain.K - expect), 1e-9);
}

TEST(InverseGain, Example1MatchesAnalyticFilter) {
  const VolterraParams p = example1_params();
  const Model m = identify(p);
  const InverseFilterParams f = inverse_filter(p);
  EXPECT_NEAR(m.gain.K(0), f.d, 1e-9);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(m.gain.K(i + 1), f.theta_bar(i), 1e-9);
  const std::vector<double> published{0.25, -0.75, -0.205, -0.039, 0.0035, 0.0015};
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(m.gain.K(i), published[static_cast<std::size_t>(i)], 1e-9);
}

TEST(InverseGain, RoundTripRecoversInputs) {
  const VolterraParams p = example1_params();
  const Model m = identify(p);
  std::mt19937_64 gen(21);
  const SignalSequence u = testing_support::random_signal(gen, -5, 105);
  Vector chi = Vector::Zero(5);
  for (long long k = 0; k < 100; ++k) {
    Vector mu = regressor(u, 5, k);
    const double y1 = p.theta1.dot(mu);
    Vector z(6);
    z << y1, mu.tail(5);
    EXPECT_NEAR(m.gain.K.dot(z), u[k], 1e-9);
  }
}

TEST(InverseGain, RankDeficiencyIsReported) {
  Model m = identify(example1_params());
  DataDictionary d = m.dict;
  d.X_ob.row(2) = d.X_ob.row(1);
  try {
    build_inverse_gain(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::inverse_unavailable);
    EXPECT_NE(std::string(e.what()).find("rank 5"), std::string::npos) << e.what();
  }
  DataDictionary no_y1 = m.dict;
  no_y1.Y1_ob.resize(0, 0);
  EXPECT_THROW(build_inverse_gain(no_y1), Error);
}

TEST(ClosedLoop, Example1PerfectTracking) {
  const VolterraParams p = example1_params();
  const Model m = identify(p);
  ImcController c = controller(m, ClosureStrategy::quadratic_solve);
  DvsPlant plant(p);
  const SignalSequence r = smooth_reference(300);
  const ClosedLoopResult res = run_closed_loop(c, plant, r, 300);
  ASSERT_TRUE(res.ok());
  ASSERT_EQ(res.trace.size(), 300u);
  for (const StepRecord& s : res.trace) {
    if (s.k >= 6) {
      EXPECT_LE(std::abs(s.y_meas - s.y_r), 1e-8) << "k=" << s.k;
    }
    EXPECT_EQ(s.tracking_error, s.y_r - s.y_meas);
  }
  EXPECT_EQ(res.curvature_dropped, 0u);
}

TEST(ClosedLoop, ConstantRegimeIsAFixedPoint) {
  const VolterraParams p = example1_params();
  const Model m = identify(p);
  const double u_star = 0.4;
  DvsPlant plant(p);
  plant.set_initial_inputs(Vector::Constant(6, u_star));
  const double y_star = plant.measure();
  ImcController c = controller(m, ClosureStrategy::quadratic_solve);
  c.reset(Vector::Constant(6, u_star));
  const StepOutcome o = imc_step(c, y_star, *plant.feedthrough());
  EXPECT_NEAR(o.u, u_star, 1e-10);
}

TEST(ClosedLoop, LinearPlantInvertsReference) {
  VolterraParams p = example1_params();
  p.theta2.setZero();
  const Model m = identify(p);
  ImcController c = controller(m, ClosureStrategy::quadratic_solve);
  DvsPlant plant(p);
  std::vector<double> step(40, 0.0);
  for (std::size_t k = 10; k < 40; ++k) step[k] = 1.0;
  const SignalSequence r(0, step);
  const ClosedLoopResult res = run_closed_loop(c, plant, r, 40);
  ASSERT_TRUE(res.ok());
  const SignalSequence u_oracle = apply_inverse_filter(inverse_filter(p), r, Vector::Zero(5));
  for (const StepRecord& s : res.trace) {
    EXPECT_NEAR(s.u, u_oracle[s.k], 1e-9);
    EXPECT_NEAR(s.y_meas, s.y_r, 1e-9);
  }
}

TEST(ClosedLoop, ZeroReferenceStaysAtRest) {
  const Model m = identify(example1_params());
  ImcController c = controller(m, ClosureStrategy::quadratic_solve);
  DvsPlant plant(example1_params());
  const ClosedLoopResult res = run_closed_loop(c, plant, SignalSequence(0, std::vector<double>(50, 0.0)), 50);
  ASSERT_TRUE(res.ok());
  for (const StepRecord& s : res.trace) {
    EXPECT_EQ(s.u, 0.0);
    EXPECT_EQ(s.y_meas, 0.0);
  }
}

TEST(ClosedLoop, ClosureStrategiesAgree) {
  const VolterraParams p = example1_params();
  const Model m = identify(p);
  const SignalSequence r = smooth_reference(120);
  ImcController q = controller(m, ClosureStrategy::quadratic_solve);
  ImcController f = controller(m, ClosureStrategy::fixed_point);
  ImcController d = controller(m, ClosureStrategy::delayed);
  DvsPlant pq(p), pf(p), pd(p);
  const ClosedLoopResult rq = run_closed_loop(q, pq, r, 120);
  const ClosedLoopResult rf = run_closed_loop(f, pf, r, 120);
  const ClosedLoopResult rd = run_closed_loop(d, pd, r, 120);
  ASSERT_TRUE(rq.ok() && rf.ok() && rd.ok());
  for (std::size_t k = 0; k < 120; ++k) {
    EXPECT_TRUE(rf.trace[k].converged);
    EXPECT_GT(rf.trace[k].closure_iterations, 1u);
    EXPECT_NEAR(rq.trace[k].u, rf.trace[k].u, 1e-8) << "k=" << k;
    EXPECT_NEAR(rq.trace[k].u, rd.trace[k].u, 1e-8) << "k=" << k;
  }
}

TEST(ClosedLoop, FixedPointFailureNamesAssumption) {
  const Model m = identify(example1_params());
  ClosureSettings cs;
  cs.strategy = ClosureStrategy::fixed_point;
  cs.max_iterations = 2;
  ImcController c(m.ops, m.gain.K, cs);
  DvsPlant plant(example1_params());
  const ClosedLoopResult res = run_closed_loop(c, plant, smooth_reference(20), 20);
  ASSERT_FALSE(res.ok());
  EXPECT_EQ(res.failure->kind(), ErrorKind::closure_divergence);
  EXPECT_NE(std::string(res.failure->what()).find("Assumption 1(ii)"), std::string::npos);
  EXPECT_TRUE(res.trace.empty());
}

TEST(ClosedLoop, StateHoldsLastInputs) {
  const Model m = identify(example1_params());
  ImcController c = controller(m, ClosureStrategy::quadratic_solve);
  DvsPlant plant(example1_params());
  const SignalSequence r = smooth_reference(30);
  std::vector<double> applied;
  for (long long k = 0; k < 30; ++k) {
    const StepOutcome o = imc_step(c, r[k], *plant.feedthrough());
    plant.actuate(o.u);
    applied.push_back(o.u);
    const Vector chi = c.chi();
    for (Eigen::Index i = 0; i < 5; ++i) {
      const long long j = static_cast<long long>(applied.size()) - 1 - i;
      EXPECT_EQ(chi(i), j >= 0 ? applied[static_cast<std::size_t>(j)] : 0.0);
    }
  }
}

TEST(ClosedLoop, DeterministicTrace) {
  const Model m = identify(example1_params());
  const auto run = [&] {
    ImcController c = controller(m, ClosureStrategy::quadratic_solve);
    DvsPlant plant(example1_params(), 0.01, 5);
    std::ostringstream os;
    write_trace_csv(os, run_closed_loop(c, plant, smooth_reference(80), 80).trace);
    return os.str();
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  EXPECT_EQ(a.substr(0, a.find('\n')), "k,y_r,y,u,error,closure_iterations,converged");
}

TEST(ClosedLoop, MismatchedSetupIsRejected) {
  const Model m = identify(example1_params());
  ImcController c = controller(m, ClosureStrategy::quadratic_solve);
  BilinearConfig bc;
  bc.rk4_step = 0.01;
  BilinearPlant bil(bc);
  EXPECT_THROW(run_closed_loop(c, bil, smooth_reference(5), 5), Error);
  ClosureSettings cs;
  EXPECT_THROW(ImcController(m.ops, m.gain.K, cs, 1), Error);
  EXPECT_THROW(ImcController(m.ops, RowVector::Zero(3), cs), Error);
}
