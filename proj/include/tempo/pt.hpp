#pragma once

// Non-reversible parallel tempering (DEO swaps), schedule adaptation over
// doubling rounds, and the evidence estimators built on it.

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tempo/anneal.hpp"
#include "tempo/core.hpp"
#include "tempo/parallel.hpp"
#include "tempo/random.hpp"
#include "tempo/samplers.hpp"
#include "tempo/scm.hpp"

namespace tempo {

// log of the MH ratio for exchanging the states held at temperatures t_i, t_j
inline double swap_log_ratio(double t_i, double t_j, const LikelihoodSummary& x_i, const LikelihoodSummary& x_j) {
  if (t_i == t_j) return 0.0;
  if (x_i == x_j) return 0.0;
  double proposed_a = annealed_likelihood(x_j, t_i), proposed_b = annealed_likelihood(x_i, t_j);
  double current_a = annealed_likelihood(x_i, t_i), current_b = annealed_likelihood(x_j, t_j);
  if (proposed_a == neg_inf || proposed_b == neg_inf) return neg_inf;
  if (current_a == neg_inf || current_b == neg_inf) return std::numeric_limits<double>::infinity();
  if (x_i.zeros == 0 && x_j.zeros == 0) return (t_i - t_j) * (x_j.log_positive - x_i.log_positive);
  return (proposed_a + proposed_b) - (current_a + current_b);
}

inline double swap_acceptance(double log_ratio) { return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio); }

// Fritsch-Carlson monotone cubic Hermite interpolant.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(std::vector<double> xs, std::vector<double> ys) : x_(std::move(xs)), y_(std::move(ys)) {
    std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw std::invalid_argument("MonotoneCubic: need at least two knots");
    for (std::size_t k = 0; k + 1 < n; ++k)
      if (!(x_[k] < x_[k + 1])) throw std::invalid_argument("MonotoneCubic: knots must increase");
    std::vector<double> d(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) d[k] = (y_[k + 1] - y_[k]) / (x_[k + 1] - x_[k]);
    m_.assign(n, 0.0);
    m_[0] = d[0];
    m_[n - 1] = d[n - 2];
    for (std::size_t k = 1; k + 1 < n; ++k) m_[k] = d[k - 1] * d[k] <= 0.0 ? 0.0 : 0.5 * (d[k - 1] + d[k]);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (d[k] == 0.0) {
        m_[k] = m_[k + 1] = 0.0;
        continue;
      }
      double a = m_[k] / d[k], b = m_[k + 1] / d[k];
      double h = a * a + b * b;
      if (h > 9.0) {
        double tau = 3.0 / std::sqrt(h);
        m_[k] = tau * a * d[k];
        m_[k + 1] = tau * b * d[k];
      }
    }
  }

  const std::vector<double>& knots_x() const { return x_; }
  const std::vector<double>& knots_y() const { return y_; }

  double operator()(double x) const {
    std::size_t k = interval(x);
    double h = x_[k + 1] - x_[k], s = (x - x_[k]) / h;
    double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y_[k] + (s3 - 2 * s2 + s) * h * m_[k] + (-2 * s3 + 3 * s2) * y_[k + 1] +
           (s3 - s2) * h * m_[k + 1];
  }

  double derivative(double x) const {
    std::size_t k = interval(x);
    double h = x_[k + 1] - x_[k], s = (x - x_[k]) / h;
    double s2 = s * s;
    return (6 * s2 - 6 * s) / h * y_[k] + (3 * s2 - 4 * s + 1) * m_[k] + (-6 * s2 + 6 * s) / h * y_[k + 1] +
           (3 * s2 - 2 * s) * m_[k + 1];
  }

  // smallest x with value y, for y within the knot range
  double inverse(double y) const {
    std::size_t n = x_.size();
    if (y <= y_[0]) return x_[0];
    if (y >= y_[n - 1]) return x_[n - 1];
    std::size_t k = 0;
    while (k + 2 < n && y_[k + 1] < y) ++k;
    if (y == y_[k + 1]) return x_[k + 1];
    double lo = x_[k], hi = x_[k + 1];
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      double mid = 0.5 * (lo + hi);
      if ((*this)(mid) < y)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  std::size_t interval(double x) const {
    std::size_t n = x_.size();
    if (x <= x_[0]) return 0;
    if (x >= x_[n - 2]) return n - 2;
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    return static_cast<std::size_t>(it - x_.begin()) - 1;
  }

  std::vector<double> x_, y_, m_;
};

struct CommunicationBarrier {
  MonotoneCubic interpolant;
  double global() const { return interpolant.knots_y().back(); }
};

inline std::vector<double> uniform_schedule(std::size_t n) {
  if (n == 1) return {1.0};
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  g.back() = 1.0;
  return g;
}

inline CommunicationBarrier barrier_from_rejections(const std::vector<double>& rates, const std::vector<double>& grid) {
  if (grid.size() < 2 || rates.size() + 1 != grid.size()) throw std::invalid_argument("need one rejection rate per adjacent pair");
  std::vector<double> lam(grid.size(), 0.0);
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(rates[i] >= 0.0 && rates[i] <= 1.0)) throw std::invalid_argument("rejection rate outside [0,1]");
    lam[i + 1] = lam[i] + rates[i];
  }
  return {MonotoneCubic(grid, lam)};
}

struct ScheduleUpdate {
  std::vector<double> schedule;
  CommunicationBarrier barrier;
};

inline ScheduleUpdate update_schedule(const std::vector<double>& rates, const std::vector<double>& grid) {
  ScheduleUpdate out{grid, barrier_from_rejections(rates, grid)};
  const std::size_t n = grid.size();
  const double total = out.barrier.global();
  if (total < 1e-6) {
    out.schedule = uniform_schedule(n);
    return out;
  }
  const auto& ys = out.barrier.interpolant.knots_y();
  out.schedule.assign(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    double level = total * static_cast<double>(i) / static_cast<double>(n - 1);
    // exact knot hits keep an equi-rejection grid fixed
    std::optional<double> snapped;
    for (std::size_t k = 0; k < n; ++k)
      if (std::abs(ys[k] - level) <= 1e-12 * total) {
        snapped = grid[k];
        break;
      }
    out.schedule[i] = snapped ? *snapped : out.barrier.interpolant.inverse(level);
  }
  out.schedule.back() = 1.0;
  return out;
}

// (t, lambda(t)) on an evenly spaced grid over [0, 1]
inline std::vector<std::pair<double, double>> local_barrier(const CommunicationBarrier& b, std::size_t points = 1000) {
  std::vector<std::pair<double, double>> out;
  out.reserve(points);
  for (std::size_t k = 0; k < points; ++k) {
    double t = points == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(points - 1);
    out.emplace_back(t, std::max(0.0, b.interpolant.derivative(t)));
  }
  return out;
}

// sum_i log mean_m gamma_{t_{i+1}}(x_m) / gamma_{t_i}(x_m), x_m drawn at t_i
inline double stepping_stone_logZ(const std::vector<std::vector<LikelihoodSummary>>& per_chain, const std::vector<double>& grid) {
  if (per_chain.size() != grid.size()) throw std::invalid_argument("stepping stone: one sample list per chain");
  double total = 0.0;
  std::vector<double> terms;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (per_chain[i].empty()) throw std::invalid_argument("stepping stone: empty chain");
    terms.clear();
    for (const auto& s : per_chain[i]) terms.push_back(AnnealedDensity::incremental_log_weight(s, grid[i], grid[i + 1]));
    total += log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
  }
  return total;
}

inline double stepping_stone_logZ(const std::vector<std::vector<double>>& per_chain_ell, const std::vector<double>& grid) {
  std::vector<std::vector<LikelihoodSummary>> s(per_chain_ell.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    for (double l : per_chain_ell[i]) s[i].push_back(l == neg_inf ? LikelihoodSummary{0.0, 1} : LikelihoodSummary{l, 0});
  return stepping_stone_logZ(s, grid);
}

// trapezoid rule over the grid; nullopt when a zero likelihood was seen
inline std::optional<double> thermodynamic_logZ(const std::vector<double>& mean_ell, const std::vector<double>& grid) {
  if (mean_ell.size() != grid.size()) throw std::invalid_argument("thermodynamic: one mean per chain");
  double total = 0.0;
  for (std::size_t i = 0; i < mean_ell.size(); ++i)
    if (!std::isfinite(mean_ell[i])) return std::nullopt;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) total += 0.5 * (grid[i + 1] - grid[i]) * (mean_ell[i] + mean_ell[i + 1]);
  return total;
}

inline std::optional<double> thermodynamic_logZ(const std::vector<std::vector<LikelihoodSummary>>& per_chain,
                                                const std::vector<double>& grid) {
  std::vector<double> means;
  for (const auto& c : per_chain) {
    if (c.empty()) throw std::invalid_argument("thermodynamic: empty chain");
    double acc = 0.0;
    for (const auto& s : c) {
      if (s.zeros > 0) return std::nullopt;
      acc += s.log_positive;
    }
    means.push_back(acc / static_cast<double>(c.size()));
  }
  return thermodynamic_logZ(means, grid);
}

// Replica bookkeeping for the swap phase. States live by chain; swaps
// exchange them and the replica labels together.
class ReplicaEnsemble {
 public:
  std::vector<State> states;
  std::vector<LikelihoodSummary> summaries;
  std::vector<double> schedule;
  std::vector<std::size_t> replica_at;  // chain -> replica
  std::vector<std::size_t> chain_of;    // replica -> chain
  std::vector<double> rejection_sums;   // per adjacent pair
  std::vector<double> acceptance_sums;
  std::vector<std::size_t> pair_counts;
  std::vector<std::size_t> restarts;    // per replica
  std::size_t scans = 0;
  bool indicator_statistics = false;

  ReplicaEnsemble() = default;
  ReplicaEnsemble(std::vector<State> s, std::vector<LikelihoodSummary> l, std::vector<double> grid)
      : states(std::move(s)), summaries(std::move(l)), schedule(std::move(grid)) {
    std::size_t n = schedule.size();
    if (states.size() != n || summaries.size() != n) throw std::invalid_argument("ReplicaEnsemble: size mismatch");
    replica_at.resize(n);
    chain_of.resize(n);
    for (std::size_t c = 0; c < n; ++c) replica_at[c] = chain_of[c] = c;
    restarts.assign(n, 0);
    visited_bottom_.assign(n, 0);
    if (n > 0) visited_bottom_[0] = 1;
    reset_statistics();
  }

  std::size_t size() const { return schedule.size(); }

  void reset_statistics() {
    std::size_t pairs = size() > 0 ? size() - 1 : 0;
    rejection_sums.assign(pairs, 0.0);
    acceptance_sums.assign(pairs, 0.0);
    pair_counts.assign(pairs, 0);
    scans = 0;
  }

  double log_ratio(std::size_t i, std::size_t j) const {
    if (j != i + 1 && i != j + 1) throw std::invalid_argument("swap_log_ratio: chains are not adjacent");
    return swap_log_ratio(schedule[i], schedule[j], summaries[i], summaries[j]);
  }

  std::vector<double> rejection_rates() const {
    std::vector<double> r(rejection_sums.size(), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i)
      if (pair_counts[i] > 0) r[i] = std::clamp(rejection_sums[i] / static_cast<double>(pair_counts[i]), 0.0, 1.0);
    return r;
  }

  std::vector<double> acceptance_rates() const {
    std::vector<double> r(acceptance_sums.size(), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i)
      if (pair_counts[i] > 0) r[i] = acceptance_sums[i] / static_cast<double>(pair_counts[i]);
    return r;
  }

  std::size_t total_restarts() const {
    std::size_t s = 0;
    for (auto r : restarts) s += r;
    return s;
  }

  // Even scans propose (0,1),(2,3),...; odd scans (1,2),(3,4),...
  // `accept` overrides the coin flip (tests force accept-all dynamics).
  void deo_swap_phase(std::size_t scan_index, RandomSource& rng, const std::function<bool(double)>* accept = nullptr) {
    const std::size_t n = size();
    std::vector<double> acc(n > 0 ? n - 1 : 0);
    for (std::size_t i = 0; i + 1 < n; ++i) acc[i] = swap_acceptance(log_ratio(i, i + 1));
    if (!indicator_statistics) {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        rejection_sums[i] += 1.0 - acc[i];
        acceptance_sums[i] += acc[i];
        ++pair_counts[i];
      }
    }
    for (std::size_t i = scan_index % 2; i + 1 < n; i += 2) {
      bool ok = accept ? (*accept)(acc[i]) : rng.bernoulli(acc[i]);
      if (indicator_statistics) {
        rejection_sums[i] += ok ? 0.0 : 1.0;
        acceptance_sums[i] += ok ? 1.0 : 0.0;
        ++pair_counts[i];
      }
      if (!ok) continue;
      std::swap(states[i], states[i + 1]);
      std::swap(summaries[i], summaries[i + 1]);
      std::swap(replica_at[i], replica_at[i + 1]);
      chain_of[replica_at[i]] = i;
      chain_of[replica_at[i + 1]] = i + 1;
    }
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t c = chain_of[r];
      if (c == 0) visited_bottom_[r] = 1;
      if (c + 1 == n && n > 1 && visited_bottom_[r]) {
        ++restarts[r];
        visited_bottom_[r] = 0;
      }
    }
    ++scans;
  }

 private:
  std::vector<char> visited_bottom_;
};

enum class ThreadMode { single, max, fixed };

struct PtConfig {
  std::size_t n_chains = 8;
  std::size_t n_scans = 1000;
  double n_passes_per_scan = 3.0;
  std::size_t thinning = 1;
  bool use_prior_samples = true;
  double adapt_fraction = 0.5;  // 0 disables adaptation
  std::uint64_t seed = 1;
  std::size_t scm_init_particles = 100;  // 0: forward simulate each chain
  std::size_t threads = 1;
  bool indicator_statistics = false;
  bool keep_samples = true;
  std::optional<std::vector<double>> initial_schedule;
  std::function<void(std::size_t, const State&)> on_sample;  // final round, chain N-1
};

struct RoundRecord {
  std::size_t round = 0;
  std::size_t scans = 0;
  std::vector<double> schedule;
  std::vector<double> rejection;
  std::vector<double> acceptance;
  double global_barrier = 0.0;
  std::size_t restarts = 0;
  double log_z = 0.0;
  std::optional<double> log_z_thermodynamic;
  double milliseconds = 0.0;
};

struct PtResult {
  std::vector<State> samples;
  std::vector<std::vector<LikelihoodSummary>> chain_summaries;  // final round, every scan
  std::vector<double> schedule;                                 // used in the final round
  std::vector<RoundRecord> rounds;
  CommunicationBarrier barrier;
  std::optional<double> log_z;  // stepping stone, final round
  std::optional<double> log_z_thermodynamic;
  std::size_t total_restarts = 0;
  std::vector<std::size_t> restarts_per_replica;
};

// Rounds of 1, 2, 4, ... scans; the leftover is folded into the last round so
// that it is always the longest (at least half of all scans).
inline std::size_t pt_round_count(std::size_t n_scans) {
  std::size_t r = 1;
  while ((std::size_t{1} << (r + 1)) <= n_scans + 1) ++r;
  return r;
}

inline std::size_t pt_round_scans(std::size_t n_scans, std::size_t round) {
  std::size_t rounds = pt_round_count(n_scans);
  if (round < rounds) return std::size_t{1} << (round - 1);
  return n_scans - ((std::size_t{1} << (rounds - 1)) - 1);
}

namespace detail {

inline std::vector<State> scm_initial_states(const Model& model, const std::vector<double>& grid, const PtConfig& cfg) {
  std::vector<State> out(grid.size());
  std::vector<char> filled(grid.size(), 0);
  ScmConfig sc;
  sc.n_particles = cfg.scm_init_particles;
  sc.seed = mix64(cfg.seed, 0x5c31);
  sc.threads = cfg.threads;
  sc.n_final_rejuvenations = 0;
  sc.visit_temperatures = grid;
  sc.on_visit = [&](double t, const std::vector<State>& particles, std::span<const double> logw, RandomSource& rng) {
    auto w = normalized_weights(logw);
    for (std::size_t c = 0; c < grid.size(); ++c)
      if (grid[c] == t && !filled[c]) {
        out[c] = particles[rng.categorical(w)];
        filled[c] = 1;
      }
  };
  run_scm(model, sc);
  for (char f : filled)
    if (!f) throw std::logic_error("initialization run missed a chain temperature");
  return out;
}

}  // namespace detail

inline PtResult run_nrpt(const Model& model, const PtConfig& cfg) {
  if (cfg.n_chains < 1) throw std::invalid_argument("need at least one chain");
  if (cfg.thinning < 1) throw std::invalid_argument("thinning must be at least 1");
  const std::size_t n = cfg.n_chains;
  const bool generative = model.normal_form().ok && model.generate_order().has_value();
  if (n > 1 && !generative) {
    std::string msg = "parallel tempering needs a model in generative normal form; use --engine MCMC";
    for (const auto& v : model.normal_form().violations) msg += "\n  " + v;
    throw ModelError(msg);
  }
  AnnealedDensity density(model);
  auto matched = match_samplers(model);
  const auto& kernels = matched.kernels;

  std::vector<double> grid = cfg.initial_schedule ? *cfg.initial_schedule : uniform_schedule(n);
  if (grid.size() != n || grid.front() != (n == 1 ? 1.0 : 0.0) || grid.back() != 1.0)
    throw std::invalid_argument("schedule must have one point per chain, from 0 to 1");

  std::vector<State> init;
  if (n > 1 && cfg.scm_init_particles > 0) {
    init = detail::scm_initial_states(model, grid, cfg);
  } else {
    init.assign(n, model.initial_state());
    if (generative)
      for (std::size_t c = 0; c < n; ++c) {
        MersenneRandom r(mix64(cfg.seed, 0x1417, c));
        forward_simulate(model, init[c], r);
      }
  }
  std::vector<LikelihoodSummary> sums(n);
  for (std::size_t c = 0; c < n; ++c) sums[c] = density.likelihood_summary(init[c]);
  ReplicaEnsemble ens(std::move(init), std::move(sums), grid);
  ens.indicator_statistics = cfg.indicator_statistics;

  PtResult out;
  const std::size_t rounds = pt_round_count(cfg.n_scans);
  std::size_t restarts_before = 0;
  for (std::size_t round = 1; round <= rounds; ++round) {
    auto started = std::chrono::steady_clock::now();
    std::size_t scans = pt_round_scans(cfg.n_scans, round);
    const bool final_round = round == rounds;
    ens.reset_statistics();
    std::vector<std::unique_ptr<RandomSource>> streams(n);
    for (std::size_t c = 0; c < n; ++c) streams[c] = std::make_unique<MersenneRandom>(mix64(cfg.seed, round, c));
    MersenneRandom swap_rng(mix64(cfg.seed, round, 0xdeadbeefULL));
    std::vector<std::vector<LikelihoodSummary>> per_chain(n);
    for (auto& v : per_chain) v.reserve(scans);

    for (std::size_t scan = 0; scan < scans; ++scan) {
      parallel_for(n, cfg.threads, [&](std::size_t c) {
        State& s = ens.states[c];
        if (c == 0 && n > 1 && cfg.use_prior_samples && ens.schedule[0] == 0.0)
          forward_simulate(model, s, *streams[c]);
        else
          sweep(kernels, s, density, ens.schedule[c], *streams[c], cfg.n_passes_per_scan);
        ens.summaries[c] = density.likelihood_summary(s);
      });
      for (std::size_t c = 0; c < n; ++c) per_chain[c].push_back(ens.summaries[c]);
      if (final_round && scan % cfg.thinning == 0) {
        const State& top = ens.states[n - 1];
        if (cfg.on_sample) cfg.on_sample(scan / cfg.thinning, top);
        if (cfg.keep_samples) out.samples.push_back(top);
      }
      if (n > 1) ens.deo_swap_phase(scan, swap_rng);
    }

    RoundRecord rec;
    rec.round = round;
    rec.scans = scans;
    rec.schedule = ens.schedule;
    if (n > 1) {
      rec.rejection = ens.rejection_rates();
      rec.acceptance = ens.acceptance_rates();
      rec.log_z = stepping_stone_logZ(per_chain, ens.schedule);
      rec.log_z_thermodynamic = thermodynamic_logZ(per_chain, ens.schedule);
      auto upd = update_schedule(rec.rejection, ens.schedule);
      rec.global_barrier = upd.barrier.global();
      out.barrier = upd.barrier;
      rec.restarts = ens.total_restarts() - restarts_before;
      restarts_before = ens.total_restarts();
      if (!final_round && cfg.adapt_fraction > 0.0) ens.schedule = upd.schedule;
    }
    rec.milliseconds = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    out.rounds.push_back(rec);
    if (final_round) {
      out.schedule = rec.schedule;
      out.chain_summaries = std::move(per_chain);
      if (n > 1) {
        out.log_z = rec.log_z;
        out.log_z_thermodynamic = rec.log_z_thermodynamic;
      }
    }
  }
  out.total_restarts = ens.total_restarts();
  out.restarts_per_replica = ens.restarts;
  return out;
}

}  // namespace tempo
