#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "error.hpp"
#include "random.hpp"

namespace phylosmc {

/// Row-major 4x4 matrix over nucleotides (A, C, G, T).
using Matrix4 = std::array<double, 16>;

inline double& at(Matrix4& m, int i, int j) { return m[4 * i + j]; }
inline double at(const Matrix4& m, int i, int j) { return m[4 * i + j]; }

inline Matrix4 multiply(const Matrix4& a, const Matrix4& b) {
  Matrix4 c{};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k)
      for (int j = 0; j < 4; ++j) c[4 * i + j] += a[4 * i + k] * b[4 * k + j];
  return c;
}

// A<->G and C<->T are transitions; everything else off-diagonal is a transversion.
inline constexpr bool is_transition(int i, int j) { return i != j && (i ^ j) == 2; }

/// Kimura two-parameter model with equal base frequencies.
struct K2PModel {
  double kappa = 2.0;

  explicit K2PModel(double k = 2.0) : kappa(k) {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) {
      throw Error(ErrorKind::kDomain, "kappa must be positive and finite");
    }
  }
};

/// Instantaneous rates: transversions 1/4, transitions kappa/4, rows sum to 0.
/// Not renormalized to one expected substitution per unit time.
inline Matrix4 rate_matrix(const K2PModel& model) {
  Matrix4 q{};
  for (int i = 0; i < 4; ++i) {
    double row = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (i == j) continue;
      at(q, i, j) = 0.25 * (is_transition(i, j) ? model.kappa : 1.0);
      row += at(q, i, j);
    }
    at(q, i, i) = -row;
  }
  return q;
}

/// P(b) = exp(Q b) in closed form.
inline Matrix4 transition_probabilities(const K2PModel& model, double branch_length) {
  if (!(branch_length >= 0.0)) {
    throw Error(ErrorKind::kDomain, "negative branch length");
  }
  const double e1 = std::exp(-branch_length);
  const double e2 = std::exp(-(model.kappa + 1.0) * branch_length / 2.0);
  const double same = 0.25 + 0.25 * e1 + 0.5 * e2;
  const double transition = 0.25 + 0.25 * e1 - 0.5 * e2;
  const double transversion = 0.25 - 0.25 * e1;
  Matrix4 p{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      at(p, i, j) = i == j ? same : (is_transition(i, j) ? transition : transversion);
  return p;
}

struct KappaPrior {
  double mu0 = 1.0;
};

struct KappaProposal {
  double a = 1.5;
};

inline double kappa_log_prior(const KappaPrior& prior, double kappa) {
  if (!(kappa > 0.0)) return -std::numeric_limits<double>::infinity();
  return std::log(prior.mu0) - prior.mu0 * kappa;
}

struct KappaStep {
  double kappa = 0.0;
  bool accepted = false;
  double multiplier = 1.0;
  double log_alpha = 0.0;
};

template <typename LogLik>
KappaStep mh_update_kappa_with_multiplier(double kappa, double m, const KappaPrior& prior,
                                          LogLik&& loglik_at, Rng& rng,
                                          std::optional<double> current_loglik = std::nullopt) {
  const double proposed = m * kappa;
  const double here = current_loglik ? *current_loglik : loglik_at(kappa);
  const double there = loglik_at(proposed);
  // prior ratio exp(mu0 kappa (1 - m)) times proposal Jacobian m
  const double log_alpha =
      std::min(0.0, there - here + prior.mu0 * kappa * (1.0 - m) + std::log(m));
  const bool accept = std::log(rng.uniform()) < log_alpha;
  return {accept ? proposed : kappa, accept, m, log_alpha};
}


/// One multiplicative-proposal Metropolis-Hastings update of kappa.
/// `loglik_at` returns log p(y | kappa', t) for the fixed tree t.
/// `current_loglik` may be supplied to avoid re-evaluating at the current kappa.
template <typename LogLik>
KappaStep mh_update_kappa(double kappa, const KappaProposal& proposal, const KappaPrior& prior,
                          LogLik&& loglik_at, Rng& rng,
                          std::optional<double> current_loglik = std::nullopt) {
  // log-uniform on [1/a, a]: the Hastings factor of this multiplier is exactly m
  const double m = std::pow(proposal.a, rng.uniform(-1.0, 1.0));
  return mh_update_kappa_with_multiplier(kappa, m, prior, loglik_at, rng, current_loglik);
}

}  // namespace phylosmc
