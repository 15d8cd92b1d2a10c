#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "tempo/core.hpp"

namespace tempo {

inline constexpr double widening_gamma = 1e100;
inline constexpr double widening_floor = -1e300;

// Likelihood factors of one state: the sum of the positive ones in log scale
// and how many are exactly zero.
struct LikelihoodSummary {
  double log_positive = 0.0;
  std::size_t zeros = 0;

  double log_likelihood() const { return zeros > 0 ? neg_inf : log_positive; }
  friend bool operator==(const LikelihoodSummary&, const LikelihoodSummary&) = default;
};

inline double widening(std::size_t zeros, double t) {
  if (zeros == 0) return 0.0;
  if (t >= 1.0) return neg_inf;
  if (t == 0.0) return 0.0;
  return std::max(-widening_gamma * t * static_cast<double>(zeros), widening_floor);
}

// sum_i A_t(i) for the likelihood part
inline double annealed_likelihood(const LikelihoodSummary& s, double t) {
  double w = widening(s.zeros, t);
  if (w == neg_inf) return neg_inf;
  return (t == 0.0 ? 0.0 : t * s.log_positive) + w;
}

class AnnealedDensity {
 public:
  explicit AnnealedDensity(const Model& m) : model_(&m), is_likelihood_(m.factors().size(), 0) {
    for (FactorId f : m.likelihood_factors()) is_likelihood_[f] = 1;
  }

  const Model& model() const { return *model_; }
  bool is_likelihood(FactorId f) const { return is_likelihood_[f] != 0; }

  double log_prior(const State& s) const {
    double total = 0.0;
    for (FactorId f : model_->prior_factors()) {
      double v = safe_log_density(model_->factor(f), s);
      if (v == neg_inf) return neg_inf;
      total += v;
    }
    return total;
  }

  LikelihoodSummary likelihood_summary(const State& s) const {
    LikelihoodSummary out;
    for (FactorId f : model_->likelihood_factors()) {
      double v = safe_log_density(model_->factor(f), s);
      if (v == neg_inf)
        ++out.zeros;
      else
        out.log_positive += v;
    }
    return out;
  }

  double log_likelihood_part(const State& s) const { return likelihood_summary(s).log_likelihood(); }

  double annealed_log_density(const State& s, double t) const {
    check_t(t);
    double p = log_prior(s);
    if (p == neg_inf) return neg_inf;
    double l = annealed_likelihood(likelihood_summary(s), t);
    if (l == neg_inf) return neg_inf;
    return p + l;
  }

  double incremental_log_weight(const State& s, double t_prev, double t) const {
    return incremental_log_weight(likelihood_summary(s), t_prev, t);
  }

  static double incremental_log_weight(const LikelihoodSummary& ls, double t_prev, double t) {
    if (!(t_prev <= t)) throw std::invalid_argument("incremental_log_weight: t_prev must not exceed t");
    check_t(t_prev);
    check_t(t);
    if (t == t_prev) return 0.0;
    if (ls.zeros > 0 && t >= 1.0) return neg_inf;
    return (t - t_prev) * ls.log_positive + (widening(ls.zeros, t) - widening(ls.zeros, t_prev));
  }

  // Annealed sum restricted to `factors`, as used by local kernels.
  double local_log_density(std::span<const FactorId> factors, const State& s, double t) const {
    double prior = 0.0, lik = 0.0;
    std::size_t zeros = 0;
    for (FactorId f : factors) {
      double v = model_->factor(f).log_density(s);
      if (std::isnan(v)) v = neg_inf;
      if (is_likelihood_[f]) {
        if (v == neg_inf) {
          if (t >= 1.0) return neg_inf;
          ++zeros;
        } else {
          lik += v;
        }
      } else {
        if (v == neg_inf) return neg_inf;
        prior += v;
      }
    }
    return prior + (t == 0.0 ? 0.0 : t * lik) + widening(zeros, t);
  }

 private:
  static void check_t(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("annealing parameter outside [0,1]");
  }

  const Model* model_;
  std::vector<char> is_likelihood_;
};

}  // namespace tempo
