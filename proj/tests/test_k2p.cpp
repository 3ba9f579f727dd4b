#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace phylosmc;

TEST(K2P, RateMatrixJukesCantor) {
  const Matrix4 q = rate_matrix(K2PModel(1.0));
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(at(q, i, j), i == j ? -0.75 : 0.25);
  }
}

TEST(K2P, RateMatrixKappaTwo) {
  const Matrix4 q = rate_matrix(K2PModel(2.0));
  EXPECT_DOUBLE_EQ(at(q, 0, 0), -1.0);
  EXPECT_DOUBLE_EQ(at(q, 0, 1), 0.25);
  EXPECT_DOUBLE_EQ(at(q, 0, 2), 0.5);
  EXPECT_DOUBLE_EQ(at(q, 0, 3), 0.25);
}

TEST(K2P, RateMatrixRowsSumToZero) {
  for (double k : {0.1, 1.0, 2.0, 7.5}) {
    const Matrix4 q = rate_matrix(K2PModel(k));
    for (int i = 0; i < 4; ++i) {
      double s = 0.0;
      for (int j = 0; j < 4; ++j) s += at(q, i, j);
      EXPECT_NEAR(s, 0.0, 1e-15);
    }
  }
}

TEST(K2P, RateMatrixMatchesOracleGenerator) {
  for (double k : {0.5, 2.0, 5.0}) {
    const Matrix4 q = rate_matrix(K2PModel(k));
    const auto o = oracle::k2p_generator(k);
    for (int e = 0; e < 16; ++e) EXPECT_DOUBLE_EQ(q[e], o[e]);
  }
}

TEST(K2P, InvalidKappa) {
  EXPECT_THROW(K2PModel(0.0), Error);
  EXPECT_THROW(K2PModel(-1.0), Error);
}

TEST(K2P, TransitionAtZeroIsIdentity) {
  const Matrix4 p = transition_probabilities(K2PModel(2.0), 0.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(at(p, i, j), i == j ? 1.0 : 0.0);
}

TEST(K2P, TransitionStationaryLimit) {
  const Matrix4 p = transition_probabilities(K2PModel(2.0), 1e4);
  for (double v : p) EXPECT_NEAR(v, 0.25, 1e-9);
}

TEST(K2P, TransitionMatchesMatrixExponential) {
  const Matrix4 p = transition_probabilities(K2PModel(2.0), 1.0);
  const auto o = oracle::transition(2.0, 1.0);
  for (int e = 0; e < 16; ++e) EXPECT_NEAR(p[e], o[e], 1e-10);
}

TEST(K2P, NegativeBranchIsDomainError) {
  try {
    transition_probabilities(K2PModel(2.0), -0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDomain);
  }
}

TEST(K2P, KappaLogPrior) {
  EXPECT_DOUBLE_EQ(kappa_log_prior({1.0}, 0.5), -0.5);
  EXPECT_DOUBLE_EQ(kappa_log_prior({2.0}, 1.0), std::log(2.0) - 2.0);
  EXPECT_EQ(kappa_log_prior({1.0}, -1.0), -std::numeric_limits<double>::infinity());
}

TEST(K2P, MhIdentityMultiplierAlwaysAccepts) {
  Rng rng(1);
  int calls = 0;
  for (int i = 0; i < 100; ++i) {
    const auto s = mh_update_kappa_with_multiplier(
        1.7, 1.0, {1.0}, [&](double) { return static_cast<double>(++calls % 7); }, rng, 3.0);
    (void)s;
  }
  for (int i = 0; i < 100; ++i) {
    const auto s =
        mh_update_kappa_with_multiplier(1.7, 1.0, {1.0}, [](double k) { return -10 * k; }, rng);
    EXPECT_TRUE(s.accepted);
    EXPECT_DOUBLE_EQ(s.kappa, 1.7);
    EXPECT_DOUBLE_EQ(s.log_alpha, 0.0);
  }
}

TEST(K2P, MhAcceptanceFlatLikelihood) {
  Rng rng(2);
  const auto flat = [](double) { return 0.0; };
  const auto up = mh_update_kappa_with_multiplier(2.0, 2.0, {1.0}, flat, rng);
  EXPECT_NEAR(std::exp(up.log_alpha), std::min(1.0, std::exp(-2.0) * 2.0), 1e-15);
  const auto down = mh_update_kappa_with_multiplier(2.0, 0.5, {1.0}, flat, rng);
  EXPECT_DOUBLE_EQ(std::exp(down.log_alpha), 1.0);
  EXPECT_TRUE(down.accepted);
  EXPECT_DOUBLE_EQ(down.kappa, 1.0);
}

TEST(K2P, MhMultiplierRange) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto s = mh_update_kappa(1.0, {1.5}, {1.0}, [](double) { return 0.0; }, rng);
    EXPECT_GE(s.multiplier, 1.0 / 1.5);
    EXPECT_LE(s.multiplier, 1.5);
  }
}

TEST(K2PProperty, ChapmanKolmogorov) {
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const K2PModel m(0.2 + 6 * rng.uniform());
    const double b1 = 5 * rng.uniform();
    const double b2 = 5 * rng.uniform();
    const Matrix4 lhs = multiply(transition_probabilities(m, b1), transition_probabilities(m, b2));
    const Matrix4 rhs = transition_probabilities(m, b1 + b2);
    for (int e = 0; e < 16; ++e) ASSERT_NEAR(lhs[e], rhs[e], 1e-10);
  }
}

TEST(K2PProperty, SymmetricAndStochastic) {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    const Matrix4 p = transition_probabilities(K2PModel(0.2 + 6 * rng.uniform()), 3 * rng.uniform());
    for (int i = 0; i < 4; ++i) {
      double row = 0.0;
      for (int j = 0; j < 4; ++j) {
        EXPECT_GE(at(p, i, j), 0.0);
        EXPECT_LE(at(p, i, j), 1.0);
        EXPECT_NEAR(0.25 * at(p, i, j), 0.25 * at(p, j, i), 1e-16);
        row += at(p, i, j);
      }
      EXPECT_NEAR(row, 1.0, 1e-14);
    }
  }
}

TEST(K2PProperty, ClosedFormMatchesExpmGrid) {
  for (double k : {0.5, 1.0, 2.0, 5.0}) {
    for (double b : {0.01, 0.1, 1.0, 10.0}) {
      const Matrix4 p = transition_probabilities(K2PModel(k), b);
      const auto o = oracle::transition(k, b);
      for (int e = 0; e < 16; ++e) EXPECT_NEAR(p[e], o[e], 1e-10) << k << ' ' << b;
    }
  }
}

TEST(K2PProperty, FlatLikelihoodChainTargetsPrior) {
  // Exp(mu0) prior, flat likelihood: chain mean of kappa is 1 / mu0.
  for (double mu0 : {1.0, 2.0}) {
    Rng rng(6 + static_cast<std::uint64_t>(mu0));
    double kappa = 1.0;
    std::vector<double> draws;
    for (int i = 0; i < 50000; ++i) {
      kappa = mh_update_kappa(kappa, {1.5}, {mu0}, [](double) { return 0.0; }, rng).kappa;
      draws.push_back(kappa);
    }
    const double m = oracle::mean(draws);
    const double se = oracle::batch_means_se(draws, 50);
    EXPECT_LT(std::fabs(m - 1.0 / mu0), 3 * se) << "mean " << m << " se " << se;
  }
}
