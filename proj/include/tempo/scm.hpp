#pragma once

// Sequential change of measure: adaptive annealed SMC, and AIS as the
// special case without resampling.

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tempo/anneal.hpp"
#include "tempo/core.hpp"
#include "tempo/parallel.hpp"
#include "tempo/random.hpp"
#include "tempo/samplers.hpp"

namespace tempo {

enum class ResamplingScheme { stratified, multinomial };

inline double log_sum_exp(std::span<const double> xs) {
  double m = neg_inf;
  for (double x : xs) m = std::max(m, x);
  if (m == neg_inf) return neg_inf;
  if (m == std::numeric_limits<double>::infinity()) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline std::vector<double> normalized_weights(std::span<const double> log_w) {
  double lse = log_sum_exp(log_w);
  if (lse == neg_inf) throw std::invalid_argument("all weights are zero");
  std::vector<double> w(log_w.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_w[i] - lse);
  return w;
}

// (sum w)^2 / (N sum w^2)
inline double relative_ess(std::span<const double> log_w) {
  if (log_w.empty()) throw std::invalid_argument("relative_ess: no weights");
  double a = log_sum_exp(log_w);
  if (a == neg_inf) throw std::invalid_argument("relative_ess: all weights are zero");
  std::vector<double> twice(log_w.size());
  for (std::size_t i = 0; i < twice.size(); ++i) twice[i] = 2.0 * log_w[i];
  double b = log_sum_exp(twice);
  return std::exp(2.0 * a - b) / static_cast<double>(log_w.size());
}

// Relative conditional ESS of moving the population from t to t_next.
inline double relative_conditional_ess(std::span<const double> log_w, std::span<const LikelihoodSummary> summaries, double t,
                                       double t_next) {
  double lse_w = log_sum_exp(log_w);
  std::vector<double> a(log_w.size()), b(log_w.size());
  for (std::size_t m = 0; m < log_w.size(); ++m) {
    double lw = log_w[m] - lse_w;
    double inc = AnnealedDensity::incremental_log_weight(summaries[m], t, t_next);
    a[m] = lw + inc;
    b[m] = lw + 2.0 * inc;
  }
  double la = log_sum_exp(a);
  if (la == neg_inf) return 0.0;
  return std::exp(2.0 * la - log_sum_exp(b));
}

inline double next_temperature(std::span<const double> log_w, std::span<const LikelihoodSummary> summaries, double t,
                               double threshold) {
  if (!(t < 1.0)) throw std::invalid_argument("next_temperature: already at t = 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("next_temperature: threshold outside (0,1)");
  auto f = [&](double x) { return relative_conditional_ess(log_w, summaries, t, x); };
  if (f(1.0) >= threshold) return 1.0;
  // coarse scan so that the leftmost crossing is bracketed
  double lo = t, hi = 1.0;
  const int grid = 64;
  for (int k = 1; k <= grid; ++k) {
    double x = k == grid ? 1.0 : t + (1.0 - t) * k / grid;
    if (f(x) < threshold) {
      hi = x;
      break;
    }
    lo = x;
  }
  while (hi - lo > 1e-10) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) >= threshold)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

// Ancestor indices for N offspring.
inline std::vector<std::size_t> resample_indices(std::span<const double> log_w, ResamplingScheme scheme, RandomSource& rng) {
  auto w = normalized_weights(log_w);
  std::size_t n = w.size();
  std::vector<std::size_t> out(n);
  if (scheme == ResamplingScheme::multinomial) {
    for (auto& a : out) a = rng.categorical(w);
    return out;
  }
  // Stratified: u_i uniform on [i/N, (i+1)/N). The offspring of stratum i is
  // drawn from the overlaps of the stratum with the cumulative weight
  // intervals, which is the same law and needs only a categorical draw.
  std::vector<double> upper(n);
  double cum = 0.0;
  for (std::size_t j = 0; j < n; ++j) upper[j] = cum += w[j];
  upper[n - 1] = 1.0;
  std::size_t first = 0;
  std::vector<double> overlap;
  for (std::size_t i = 0; i < n; ++i) {
    double a = static_cast<double>(i) / static_cast<double>(n), b = static_cast<double>(i + 1) / static_cast<double>(n);
    while (first + 1 < n && upper[first] <= a) ++first;
    overlap.clear();
    for (std::size_t j = first; j < n; ++j) {
      double lo = j == 0 ? 0.0 : upper[j - 1];
      double len = std::min(b, upper[j]) - std::max(a, lo);
      overlap.push_back(w[j] > 0.0 && len > 0.0 ? len : 0.0);
      if (upper[j] >= b) break;
    }
    out[i] = first + rng.categorical(overlap);
  }
  return out;
}

struct ScmConfig {
  std::size_t n_particles = 1000;
  double ess_threshold = 0.5;
  double schedule_threshold = 0.9999;
  std::optional<std::vector<double>> fixed_schedule;
  std::size_t n_final_rejuvenations = 5;
  ResamplingScheme scheme = ResamplingScheme::stratified;
  std::uint64_t seed = 1;
  double passes_per_move = 1.0;
  bool resampling = true;
  bool force_resampling = false;  // resample after every reweighting
  std::size_t threads = 1;
  const std::vector<KernelInstance>* kernels = nullptr;  // defaults to match_samplers
  // temperatures the adaptive schedule must visit, and a hook called there
  std::vector<double> visit_temperatures;
  std::function<void(double, const std::vector<State>&, std::span<const double>, RandomSource&)> on_visit;
};

struct ScmResult {
  std::vector<State> particles;
  std::vector<double> log_weights;  // all zero after a final resampling
  double log_z = 0.0;
  std::vector<double> schedule;
  std::vector<double> relative_ess;
  std::vector<char> resampled;
};

inline ScmResult run_scm(const Model& model, const ScmConfig& cfg, RandomSource& rng) {
  if (!model.normal_form().ok || !model.generate_order()) {
    std::string msg = "SCM needs a model in generative normal form";
    for (const auto& v : model.normal_form().violations) msg += "\n  " + v;
    if (model.normal_form().ok) msg += "\n  " + model.order_error();
    throw ModelError(msg);
  }
  if (cfg.n_particles < 1) throw std::invalid_argument("need at least one particle");
  const std::size_t n = cfg.n_particles;
  AnnealedDensity density(model);

  MatchResult matched;
  const std::vector<KernelInstance>* kernels = cfg.kernels;
  if (!kernels) {
    matched = match_samplers(model);
    kernels = &matched.kernels;
  }
  std::size_t threads = rng.parallel_safe() ? cfg.threads : 1;

  std::vector<std::unique_ptr<RandomSource>> streams(n);
  for (std::size_t i = 0; i < n; ++i) streams[i] = rng.split(i);

  ScmResult out;
  out.particles.assign(n, model.initial_state());
  std::vector<LikelihoodSummary> summaries(n);
  parallel_for(n, threads, [&](std::size_t i) {
    forward_simulate(model, out.particles[i], *streams[i]);
    summaries[i] = density.likelihood_summary(out.particles[i]);
  });

  std::vector<double> logw(n, 0.0);
  double t = 0.0;
  out.schedule.push_back(t);

  std::vector<double> visits = cfg.visit_temperatures;
  std::sort(visits.begin(), visits.end());
  std::size_t next_visit = 0;
  auto maybe_visit = [&] {
    while (next_visit < visits.size() && visits[next_visit] <= t) {
      if (visits[next_visit] == t && cfg.on_visit) cfg.on_visit(t, out.particles, logw, rng);
      ++next_visit;
    }
  };
  maybe_visit();

  std::size_t fixed_index = 0;
  auto do_resample = [&] {
    out.log_z += log_sum_exp(logw) - std::log(static_cast<double>(n));
    auto idx = resample_indices(logw, cfg.scheme, rng);
    std::vector<State> next;
    std::vector<LikelihoodSummary> next_sum;
    next.reserve(n);
    for (std::size_t a : idx) {
      next.push_back(out.particles[a]);
      next_sum.push_back(summaries[a]);
    }
    out.particles = std::move(next);
    summaries = std::move(next_sum);
    std::fill(logw.begin(), logw.end(), 0.0);
  };

  bool just_resampled = false;
  while (t < 1.0) {
    double t_next;
    if (cfg.fixed_schedule) {
      const auto& grid = *cfg.fixed_schedule;
      while (fixed_index < grid.size() && grid[fixed_index] <= t) ++fixed_index;
      if (fixed_index >= grid.size()) throw std::invalid_argument("fixed schedule must end at 1");
      t_next = grid[fixed_index];
    } else {
      t_next = next_temperature(logw, summaries, t, cfg.schedule_threshold);
      if (next_visit < visits.size() && visits[next_visit] < t_next) t_next = visits[next_visit];
    }
    for (std::size_t i = 0; i < n; ++i) logw[i] += AnnealedDensity::incremental_log_weight(summaries[i], t, t_next);
    t = t_next;
    out.schedule.push_back(t);
    double ress = log_sum_exp(logw) == neg_inf ? 0.0 : relative_ess(logw);
    out.relative_ess.push_back(ress);
    just_resampled = false;
    if (cfg.resampling && (cfg.force_resampling || ress < cfg.ess_threshold)) {
      do_resample();
      just_resampled = true;
    }
    out.resampled.push_back(just_resampled ? 1 : 0);
    maybe_visit();
    if (t < 1.0) {
      parallel_for(n, threads, [&](std::size_t i) {
        sweep(*kernels, out.particles[i], density, t, *streams[i], cfg.passes_per_move);
        summaries[i] = density.likelihood_summary(out.particles[i]);
      });
    }
  }

  if (cfg.resampling) {
    if (!just_resampled) do_resample();
  } else {
    out.log_z = log_sum_exp(logw) - std::log(static_cast<double>(n));
  }
  if (cfg.n_final_rejuvenations > 0) {
    parallel_for(n, threads, [&](std::size_t i) {
      // without resampling a particle may sit where the posterior is zero; its weight is zero too
      if (logw[i] == neg_inf) return;
      sweep(*kernels, out.particles[i], density, 1.0, *streams[i], static_cast<double>(cfg.n_final_rejuvenations));
    });
  }
  out.log_weights = logw;
  return out;
}

inline ScmResult run_scm(const Model& model, const ScmConfig& cfg) {
  MersenneRandom rng(cfg.seed);
  return run_scm(model, cfg, rng);
}

inline ScmResult run_ais(const Model& model, ScmConfig cfg, RandomSource& rng) {
  cfg.resampling = false;
  return run_scm(model, cfg, rng);
}

inline ScmResult run_ais(const Model& model, ScmConfig cfg) {
  MersenneRandom rng(cfg.seed);
  return run_ais(model, std::move(cfg), rng);
}

}  // namespace tempo
