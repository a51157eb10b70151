#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dvsimc/datarep.hpp"
#include "dvsimc/signals.hpp"
#include "dvsimc/volterra.hpp"
#include "test_support.hpp"

using namespace dvsimc;

TEST(SignalSequence, IndexingAndCoverage) {
  const SignalSequence s(-2, {1, 2, 3, 4});
  EXPECT_EQ(s.end_index(), 2);
  EXPECT_TRUE(s.contains(-2));
  EXPECT_FALSE(s.contains(2));
  EXPECT_EQ(s.at(1), 4.0);
  EXPECT_THROW(s.at(2), Error);
  EXPECT_THROW(SignalSequence(0, {1.0, std::numeric_limits<double>::infinity()}), Error);
  EXPECT_EQ(s.slice(-1, 0).values(), (std::vector<double>{2, 3}));
}

TEST(Lift, ZeroInput) {
  const SignalSequence u(-2, std::vector<double>(5, 0.0));
  const LiftedSequence l = lift(u, 2, 0, 3);
  ASSERT_EQ(l.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(l.mu[t].size(), 3);
    EXPECT_EQ(l.mu2[t].size(), 6);
    EXPECT_TRUE(l.mu[t].isZero());
    EXPECT_TRUE(l.mu2[t].isZero());
  }
}

TEST(Lift, RegressorOrdering) {
  const SignalSequence u(0, {1, 2, 3});
  const LiftedSequence l = lift(u, 2, 2, 1);
  EXPECT_EQ(l.mu[0], (Vector(3) << 3, 2, 1).finished());
  EXPECT_EQ(l.mu2[0], (Vector(6) << 9, 6, 4, 3, 2, 1).finished());
}

TEST(Lift, CoverageErrorNamesIndices) {
  const SignalSequence u(0, {1, 2, 3});
  try {
    lift(u, 2, 0, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::window);
    EXPECT_NE(std::string(e.what()).find("[-2, 1]"), std::string::npos) << e.what();
  }
}

TEST(Lift, ShiftConsistency) {
  std::mt19937_64 gen(2);
  const SignalSequence u = testing_support::random_signal(gen, -4, 30);
  const std::size_t M = 4;
  const LiftedSequence l = lift(u, M, 0, 25);
  for (std::size_t t = 0; t + 1 < l.size(); ++t) {
    EXPECT_EQ(l.mu[t + 1].tail(M), l.mu[t].head(M));
    // Pairs (i, j) of mu(t+1) with i, j >= 1 reappear at (i-1, j-1) in mu(t).
    for (std::size_t i = 1; i <= M; ++i)
      for (std::size_t j = 1; j <= i; ++j)
        EXPECT_EQ(l.mu2[t + 1](static_cast<Eigen::Index>(vech_index(i, j))),
                  l.mu2[t](static_cast<Eigen::Index>(vech_index(i - 1, j - 1))));
  }
}

TEST(Hankel, Scalars) {
  const Matrix h = hankel(std::vector<double>{1, 2, 3, 4}, 2, 3);
  EXPECT_EQ(h, (Matrix(2, 3) << 1, 2, 3, 2, 3, 4).finished());
  EXPECT_EQ(hankel(std::vector<double>{5, 6, 7}, 1, 2), (Matrix(1, 2) << 5, 6).finished());
  EXPECT_THROW(hankel(std::vector<double>{1, 2}, 2, 2), Error);
}

TEST(Hankel, VectorBlocksAreConstantAlongAntiDiagonals) {
  std::mt19937_64 gen(4);
  std::vector<Vector> s;
  for (int i = 0; i < 8; ++i) s.push_back(testing_support::random_matrix(gen, 2, 1));
  const Matrix h22 = hankel(s, 2, 2);
  ASSERT_EQ(h22.rows(), 4);
  ASSERT_EQ(h22.cols(), 2);
  EXPECT_EQ(h22.block(2, 0, 2, 1), h22.block(0, 1, 2, 1));
  const Matrix h = hankel(s, 3, 5);
  for (Eigen::Index i = 1; i < 3; ++i)
    for (Eigen::Index j = 0; j + 1 < 5; ++j) EXPECT_EQ(h.block(2 * i, j, 2, 1), h.block(2 * (i - 1), j + 1, 2, 1));
}

TEST(Hankel, LiftedHankelMatchesDirectConstruction) {
  std::mt19937_64 gen(8);
  for (std::size_t M = 0; M <= 5; ++M) {
    for (std::size_t L = 1; L <= 3; ++L) {
      const std::size_t T = 20;
      const SignalSequence u = testing_support::random_signal(gen, -static_cast<long long>(M), T + M);
      const LiftedSequence l = lift(u, M, 0, T);
      const std::size_t N = T - L + 1;
      const Matrix h = hankel(l.mu, L, N);
      const Matrix h2 = hankel(l.mu2, L, N);
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
          const long long k = static_cast<long long>(i + j);
          for (std::size_t r = 0; r <= M; ++r)
            EXPECT_EQ(h(static_cast<Eigen::Index>(i * (M + 1) + r), static_cast<Eigen::Index>(j)),
                      u[k - static_cast<long long>(r)]);
          for (std::size_t a = 0; a <= M; ++a)
            for (std::size_t b = 0; b <= a; ++b)
              EXPECT_EQ(h2(static_cast<Eigen::Index>(i * vech_size(M + 1) + vech_index(a, b)), static_cast<Eigen::Index>(j)),
                        u[k - static_cast<long long>(a)] * u[k - static_cast<long long>(b)]);
        }
      }
    }
  }
}

TEST(Multisine, QuarterCycle) {
  const SignalSequence s = multisine({1.0}, {0.25}, {0.0}, 0.0, 0, 5);
  const std::vector<double> expect{0, 1, 0, -1, 0};
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(s.values()[i], expect[i], 1e-15);
}

TEST(Multisine, OffsetOnlyAndMismatch) {
  const SignalSequence s = multisine({}, {}, {}, 2.0, -3, 4);
  EXPECT_EQ(s.start_index(), -3);
  for (double v : s.values()) EXPECT_EQ(v, 2.0);
  EXPECT_THROW(multisine({1.0}, {0.1, 0.2}, {0.0}, 0.0, 0, 3), Error);
}

TEST(Multisine, PresetExcitationIsPersistentlyExciting) {
  const SignalSequence u = preset_excitation(7).generate(-5, 205);
  const SignalSequence y = simulate(example1_params(), u, 0, 200);
  const PersistenceReport p = pe_check(build_dictionary(u, y, 5, 1));
  EXPECT_TRUE(p.is_pe);
  EXPECT_EQ(p.achieved_rank, 27u);
}

TEST(Noise, ZeroWidthAndDeterminism) {
  const SignalSequence s(0, {1, 2, 3});
  EXPECT_EQ(add_uniform_noise(s, 0.0, 9), s);
  EXPECT_EQ(add_uniform_noise(s, 0.1, 9), add_uniform_noise(s, 0.1, 9));
  EXPECT_NE(add_uniform_noise(s, 0.1, 9), add_uniform_noise(s, 0.1, 10));
  EXPECT_THROW(add_uniform_noise(s, -0.1, 9), Error);
}

TEST(Noise, BoundsAndMean) {
  const std::size_t n = 100000;
  const SignalSequence zero(0, std::vector<double>(n, 0.0));
  const SignalSequence noisy = add_uniform_noise(zero, 0.05, 42);
  double sum = 0.0, worst = 0.0;
  for (double v : noisy.values()) {
    sum += v;
    worst = std::max(worst, std::abs(v));
  }
  EXPECT_LE(worst, 0.05);
  const double sigma = 0.05 / std::sqrt(3.0);
  EXPECT_LT(std::abs(sum / n), 3.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST(TrackingMetrics, Cases) {
  const SignalSequence r(0, {1, 2, 3, 4});
  const TrackingMetrics same = tracking_metrics(r, r, 0);
  EXPECT_EQ(same.rms, 0.0);
  EXPECT_EQ(same.max_abs, 0.0);
  const SignalSequence y(0, {0.9, 1.9, 2.9, 3.9});
  const TrackingMetrics m = tracking_metrics(y, r, 1);
  EXPECT_NEAR(m.rms, 0.1, 1e-12);
  EXPECT_NEAR(m.max_abs, 0.1, 1e-12);
  EXPECT_EQ(m.samples, 3u);
  EXPECT_THROW(tracking_metrics(SignalSequence(10, {1.0}), r, 0), Error);
  EXPECT_THROW(tracking_metrics(y, r, 4), Error);
}

TEST(SignalCsv, RoundTripIsExact) {
  std::mt19937_64 gen(6);
  const SignalSequence s = testing_support::random_signal(gen, -3, 40, 1e3);
  std::stringstream ss;
  write_signal_csv(ss, s);
  EXPECT_EQ(ss.str().substr(0, 8), "k,value\n");
  EXPECT_EQ(read_signal_csv(ss), s);
}

TEST(SignalCsv, RejectsMalformed) {
  std::stringstream bad_header("x,y\n0,1\n");
  EXPECT_THROW(read_signal_csv(bad_header), Error);
  std::stringstream gap("k,value\n0,1\n2,3\n");
  EXPECT_THROW(read_signal_csv(gap), Error);
  std::stringstream junk("k,value\n0,abc\n");
  EXPECT_THROW(read_signal_csv(junk), Error);
}
