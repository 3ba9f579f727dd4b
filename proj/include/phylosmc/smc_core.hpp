#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "error.hpp"
#include "random.hpp"

namespace phylosmc {

inline double log_sum_exp(const std::vector<double>& x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

inline std::vector<double> normalize_log_weights(const std::vector<double>& log_w) {
  const double z = log_sum_exp(log_w);
  std::vector<double> w(log_w.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(log_w[k] - z);
  return w;
}

/// Effective sample size 1 / sum W^2.
inline double ess(const std::vector<double>& W) {
  double s = 0.0;
  for (double w : W) s += w * w;
  return 1.0 / s;
}

/// Relative effective sample size (K sum W^2)^-1.
inline double rel_ess(const std::vector<double>& W) {
  return ess(W) / static_cast<double>(W.size());
}

enum class ResampleScheme { kStratified, kMultinomial };

/// One uniform per stratum ((u_i + i) / K) inverted through the cumulative weights.
inline std::vector<std::size_t> stratified_resample(const std::vector<double>& W, std::size_t K,
                                                    Rng& rng) {
  std::vector<std::size_t> out(K);
  const std::size_t n = W.size();
  double cum = W.empty() ? 0.0 : W[0];
  std::size_t idx = 0;
  for (std::size_t i = 0; i < K; ++i) {
    const double u = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(K);
    while (u > cum && idx + 1 < n) cum += W[++idx];
    std::size_t pick = idx;
    while (pick > 0 && W[pick] == 0.0) --pick;  // rounding in the cumulative sum
    out[i] = pick;
  }
  return out;
}

inline std::size_t sample_categorical(const std::vector<double>& W, Rng& rng) {
  const double u = rng.uniform() * std::accumulate(W.begin(), W.end(), 0.0);
  double cum = 0.0;
  for (std::size_t k = 0; k < W.size(); ++k) {
    cum += W[k];
    if (u <= cum && W[k] > 0.0) return k;
  }
  for (std::size_t k = W.size(); k-- > 0;) {
    if (W[k] > 0.0) return k;
  }
  return 0;
}

inline std::vector<std::size_t> multinomial_resample(const std::vector<double>& W, std::size_t K,
                                                     Rng& rng) {
  std::vector<double> cdf(W.size());
  std::partial_sum(W.begin(), W.end(), cdf.begin());
  const double total = cdf.empty() ? 0.0 : cdf.back();
  std::vector<std::size_t> out(K);
  for (std::size_t i = 0; i < K; ++i) {
    const double u = rng.uniform() * total;
    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    out[i] = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), W.size() - 1);
  }
  return out;
}

inline std::vector<std::size_t> resample(const std::vector<double>& W, std::size_t K,
                                         ResampleScheme scheme, Rng& rng) {
  return scheme == ResampleScheme::kStratified ? stratified_resample(W, K, rng)
                                               : multinomial_resample(W, K, rng);
}

struct ResampleOutcome {
  std::vector<std::size_t> ancestors;
  bool resampled = false;
  double rel_ess = 1.0;
};

/// Adaptive resampling of ancestor indices. With `protected_index` set, that
/// slot keeps its own particle and the remaining K-1 slots are drawn from
/// the full weighted distribution.
inline ResampleOutcome maybe_resample_indices(const std::vector<double>& log_w, double epsilon,
                                              ResampleScheme scheme,
                                              std::optional<std::size_t> protected_index,
                                              Rng& rng) {
  const std::size_t K = log_w.size();
  const auto W = normalize_log_weights(log_w);
  ResampleOutcome out;
  out.rel_ess = rel_ess(W);
  out.ancestors.resize(K);
  std::iota(out.ancestors.begin(), out.ancestors.end(), std::size_t{0});
  if (!(out.rel_ess < epsilon)) return out;
  out.resampled = true;
  if (!protected_index) {
    out.ancestors = resample(W, K, scheme, rng);
    return out;
  }
  const std::size_t p = *protected_index;
  const auto drawn = resample(W, K - 1, scheme, rng);
  std::size_t d = 0;
  for (std::size_t k = 0; k < K; ++k) out.ancestors[k] = k == p ? p : drawn[d++];
  return out;
}

/// K weighted particles at a common rank with a running marginal-likelihood
/// estimate. Order per rank: weight, update_logZ, maybe_resample.
template <typename State>
class ParticleSystem {
 public:
  ParticleSystem() = default;
  ParticleSystem(std::vector<State> particles, std::size_t rank)
      : particles_(std::move(particles)),
        log_w_(particles_.size(), 0.0),
        rank_(rank),
        base_lse_(std::log(static_cast<double>(particles_.size()))) {
    if (particles_.empty()) throw Error(ErrorKind::kConfiguration, "need at least one particle");
  }

  std::size_t size() const { return particles_.size(); }
  std::size_t rank() const { return rank_; }
  const std::vector<State>& particles() const { return particles_; }
  std::vector<State>& particles() { return particles_; }
  const std::vector<double>& log_weights() const { return log_w_; }
  std::vector<double>& log_weights() { return log_w_; }
  double logZ() const { return logZ_; }

  std::vector<double> normalized_weights() const { return normalize_log_weights(log_w_); }

  /// Installs the particles of the next rank with incremental log weights
  /// applied to the (possibly reset) weights of their ancestors.
  void advance(std::vector<State> next, const std::vector<std::size_t>& ancestors,
               const std::vector<double>& incremental) {
    std::vector<double> w(next.size());
    for (std::size_t k = 0; k < next.size(); ++k) w[k] = log_w_[ancestors[k]] + incremental[k];
    particles_ = std::move(next);
    log_w_ = std::move(w);
    ++rank_;
  }

  /// Adds log of the mean incremental weight at the current rank.
  void update_logZ() {
    if (accumulated_rank_ && *accumulated_rank_ == rank_) {
      throw Error(ErrorKind::kUsage, "logZ already accumulated at this rank");
    }
    logZ_ += log_sum_exp(log_w_) - base_lse_;
    accumulated_rank_ = rank_;
  }

  /// Resamples when rESS < epsilon and resets the weights. Returns the
  /// ancestor of each slot; the particles themselves are not yet moved.
  ResampleOutcome maybe_resample(double epsilon, ResampleScheme scheme,
                                 std::optional<std::size_t> protected_index, Rng& rng) {
    auto out = maybe_resample_indices(log_w_, epsilon, scheme, protected_index, rng);
    if (out.resampled) {
      std::fill(log_w_.begin(), log_w_.end(), 0.0);
      base_lse_ = std::log(static_cast<double>(log_w_.size()));
    } else {
      base_lse_ = log_sum_exp(log_w_);
    }
    return out;
  }

  /// Convenience: resample and move particles in place.
  ResampleOutcome resample_in_place(double epsilon, ResampleScheme scheme,
                                    std::optional<std::size_t> protected_index, Rng& rng) {
    auto out = maybe_resample(epsilon, scheme, protected_index, rng);
    if (out.resampled) {
      std::vector<State> moved;
      moved.reserve(particles_.size());
      for (std::size_t a : out.ancestors) moved.push_back(particles_[a]);
      particles_ = std::move(moved);
    }
    return out;
  }

 private:
  std::vector<State> particles_;
  std::vector<double> log_w_;
  std::size_t rank_ = 1;
  double base_lse_ = 0.0;
  double logZ_ = 0.0;
  std::optional<std::size_t> accumulated_rank_;
};

}  // namespace phylosmc
