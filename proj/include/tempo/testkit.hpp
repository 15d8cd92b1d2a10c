#pragma once

// Correctness tooling: exhaustive enumeration of random programs, SMC
// unbiasedness, transition-matrix tests for discrete models, and the exact
// invariance test.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tempo/anneal.hpp"
#include "tempo/core.hpp"
#include "tempo/parallel.hpp"
#include "tempo/random.hpp"
#include "tempo/samplers.hpp"
#include "tempo/scm.hpp"

namespace tempo {

struct EnumerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Depth-first enumeration of every branch sequence of a program that only
// uses discrete primitives. Drive it with begin_trace / next_trace.
class ExhaustiveRandom final : public RandomSource {
 public:
  explicit ExhaustiveRandom(std::size_t max_traces = 10'000'000) : max_traces_(max_traces) {}

  double uniform01() override { throw EnumerationError("exhaustive enumeration cannot draw continuous variates"); }

  bool bernoulli(double p) override {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bernoulli: probability outside [0,1]");
    double probs[2] = {p, 1.0 - p};
    return choose(probs) == 0;
  }

  std::size_t categorical(std::span<const double> weights) override {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("categorical: negative or NaN weight");
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("categorical: weights sum to zero");
    std::vector<double> probs(weights.size());
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = weights[i] / total;
    return choose(probs);
  }

  std::int64_t int_below(std::int64_t n) override {
    if (n <= 0) throw std::invalid_argument("int_below: n must be positive");
    std::vector<double> probs(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
    return static_cast<std::int64_t>(choose(probs));
  }

  std::unique_ptr<RandomSource> split(std::uint64_t) override;
  bool parallel_safe() const override { return false; }

  void begin_trace() {
    pos_ = 0;
    probability_ = 1.0;
  }

  // Advances to the next unexplored branch sequence; false when done.
  bool next_trace() {
    if (pos_ != trace_.size()) throw EnumerationError("program consumed fewer choices than on its previous run");
    ++traces_;
    while (!trace_.empty()) {
      auto& c = trace_.back();
      std::size_t k = c.index + 1;
      while (k < c.probs.size() && c.probs[k] <= 0.0) ++k;
      if (k < c.probs.size()) {
        c.index = k;
        if (traces_ >= max_traces_) throw EnumerationError("trace count exceeds the cap of " + std::to_string(max_traces_));
        return true;
      }
      trace_.pop_back();
    }
    return false;
  }

  double last_probability() const { return probability_; }
  std::size_t traces() const { return traces_; }

 private:
  struct Choice {
    std::vector<double> probs;
    std::size_t index;
  };

  std::size_t choose(std::span<const double> probs) {
    if (pos_ < trace_.size()) {
      auto& c = trace_[pos_];
      if (c.probs.size() != probs.size()) throw EnumerationError("program is not deterministic given its random choices");
      ++pos_;
      probability_ *= probs[c.index];
      return c.index;
    }
    std::size_t k = 0;
    while (k < probs.size() && probs[k] <= 0.0) ++k;
    if (k == probs.size()) throw EnumerationError("no branch with positive probability");
    trace_.push_back({std::vector<double>(probs.begin(), probs.end()), k});
    ++pos_;
    probability_ *= probs[k];
    return k;
  }

  std::vector<Choice> trace_;
  std::size_t pos_ = 0;
  double probability_ = 1.0;
  std::size_t traces_ = 0;
  std::size_t max_traces_;
};

namespace detail {

class ForwardingRandom final : public RandomSource {
 public:
  explicit ForwardingRandom(RandomSource& target) : t_(&target) {}
  double uniform01() override { return t_->uniform01(); }
  bool bernoulli(double p) override { return t_->bernoulli(p); }
  std::size_t categorical(std::span<const double> w) override { return t_->categorical(w); }
  std::int64_t int_below(std::int64_t n) override { return t_->int_below(n); }
  std::unique_ptr<RandomSource> split(std::uint64_t) override { return std::make_unique<ForwardingRandom>(*t_); }
  bool parallel_safe() const override { return false; }

 private:
  RandomSource* t_;
};

}  // namespace detail

inline std::unique_ptr<RandomSource> ExhaustiveRandom::split(std::uint64_t) {
  return std::make_unique<detail::ForwardingRandom>(*this);
}

// Calls visit(value, probability) once per trace.
template <class Program, class Visit>
std::size_t for_each_trace(Program&& program, Visit&& visit, std::size_t max_traces = 10'000'000) {
  ExhaustiveRandom rng(max_traces);
  do {
    rng.begin_trace();
    auto value = program(static_cast<RandomSource&>(rng));
    visit(value, rng.last_probability());
  } while (rng.next_trace());
  return rng.traces();
}

template <class T>
std::vector<std::pair<T, double>> enumerate_traces(const std::function<T(RandomSource&)>& program,
                                                  std::size_t max_traces = 10'000'000) {
  std::vector<std::pair<T, double>> out;
  for_each_trace(program, [&](const T& v, double p) { out.emplace_back(v, p); }, max_traces);
  return out;
}

struct ExpectedZ {
  double expectation = 0.0;
  double total_probability = 0.0;
  std::size_t n_traces = 0;
};

inline ExpectedZ expected_z_estimate(const std::function<double(RandomSource&)>& log_z_estimator,
                                     std::optional<double> true_z = std::nullopt, std::ostream* report = nullptr,
                                     std::size_t max_traces = 10'000'000) {
  ExpectedZ out;
  out.n_traces = for_each_trace(
      log_z_estimator,
      [&](double log_z, double p) {
        if (std::isnan(log_z)) throw EnumerationError("estimator returned NaN");
        out.expectation += std::exp(log_z) * p;
        out.total_probability += p;
      },
      max_traces);
  if (report) {
    *report << "nProgramTraces = " << out.n_traces << "\n";
    if (true_z) *report << "true normalization constant Z: " << std::setprecision(17) << *true_z << "\n";
    *report << "expected Z estimate over all traces: " << std::setprecision(17) << out.expectation << "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// transition-matrix tests

struct DiscreteMcConfig {
  double t = 1.0;
  double passes = 1.0;
  std::size_t max_states = 100'000;
  std::size_t max_traces_per_row = 10'000'000;
  std::function<State(const State&)> identity;  // canonical form; default: the state itself
};

struct DiscreteMcReport {
  std::vector<State> states;
  std::vector<double> pi;  // exact target over `states`
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  std::size_t support_size = 0;  // states of positive target mass
  std::size_t reachable = 0;     // reached from the first state
  double max_row_error = 0.0;
  double invariance_residual = 0.0;
  bool left_support = false;  // a kernel moved to a zero-mass state
  bool irreducible = false;

  bool rows_stochastic(double tol = 1e-12) const { return max_row_error <= tol; }
  bool invariant(double tol = 1e-10) const { return invariance_residual <= tol && !left_support; }

  std::string summary() const {
    std::ostringstream o;
    o << "states = " << states.size() << ", support = " << support_size << ", reachable = " << reachable
      << ", max row error = " << max_row_error << ", |piP - pi|_inf = " << invariance_residual
      << ", irreducible = " << (irreducible ? "yes" : "no");
    return o.str();
  }
};

namespace detail {

class StateIndex {
 public:
  explicit StateIndex(std::function<State(const State&)> canon) : canon_(std::move(canon)) {}

  std::optional<std::size_t> find(const State& s) const {
    State c = canon_ ? canon_(s) : s;
    auto it = buckets_.find(c.hash());
    if (it == buckets_.end()) return std::nullopt;
    for (std::size_t i : it->second)
      if (keys_[i] == c) return i;
    return std::nullopt;
  }

  std::pair<std::size_t, bool> insert(const State& s) {
    State c = canon_ ? canon_(s) : s;
    auto& b = buckets_[c.hash()];
    for (std::size_t i : b)
      if (keys_[i] == c) return {i, false};
    keys_.push_back(std::move(c));
    b.push_back(keys_.size() - 1);
    return {keys_.size() - 1, true};
  }

  std::size_t size() const { return keys_.size(); }

 private:
  std::function<State(const State&)> canon_;
  std::unordered_map<std::size_t, std::vector<std::size_t>> buckets_;
  std::vector<State> keys_;
};

inline bool reaches_all(const std::vector<std::vector<std::size_t>>& adj, std::size_t from, const std::vector<char>& members) {
  std::vector<char> seen(adj.size(), 0);
  std::deque<std::size_t> q{from};
  seen[from] = 1;
  while (!q.empty()) {
    auto u = q.front();
    q.pop_front();
    for (auto v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        q.push_back(v);
      }
  }
  for (std::size_t i = 0; i < adj.size(); ++i)
    if (members[i] && !seen[i]) return false;
  return true;
}

}  // namespace detail

// Builds the exact transition matrix of one sweep of `kernels` over the
// states of positive prior mass and checks it against the annealed target.
inline DiscreteMcReport discrete_mc_test(const Model& model, const std::vector<KernelInstance>& kernels,
                                         const DiscreteMcConfig& cfg = {}) {
  for (const auto& d : model.variables())
    if (d.kind.real_storage() && d.any_latent())
      throw std::invalid_argument("discrete_mc_test: latent variable '" + d.name + "' is not discrete");
  if (!model.generate_order()) throw ModelError("discrete_mc_test: support enumeration needs a forward-simulable model");
  AnnealedDensity density(model);
  DiscreteMcReport rep;
  detail::StateIndex index(cfg.identity);

  // support: every prior draw with positive annealed density
  for_each_trace(
      [&](RandomSource& r) {
        State s = model.initial_state();
        forward_simulate(model, s, r);
        return s;
      },
      [&](const State& s, double) {
        if (density.annealed_log_density(s, cfg.t) == neg_inf) return;
        auto [i, fresh] = index.insert(s);
        if (fresh) rep.states.push_back(s);
        if (index.size() > cfg.max_states) throw EnumerationError("state count exceeds the cap");
      });
  rep.support_size = rep.states.size();
  if (rep.support_size == 0) throw ModelError("discrete_mc_test: target has empty support");

  // Rows, discovering states reached from the support. A sweep is the
  // composition of its kernel steps, so each kernel's transition out of a
  // state is enumerated once and the steps are multiplied out.
  auto intern = [&](const State& s) {
    auto [j, fresh] = index.insert(s);
    if (fresh) {
      rep.states.push_back(s);
      if (index.size() > cfg.max_states) throw EnumerationError("state count exceeds the cap");
    }
    return j;
  };
  using Row = std::vector<std::pair<std::size_t, double>>;
  std::vector<std::unordered_map<std::size_t, Row>> memo(kernels.size());
  auto kernel_row = [&](std::size_t k, std::size_t i) -> const Row& {
    auto it = memo[k].find(i);
    if (it != memo[k].end()) return it->second;
    Row row;
    const State from = rep.states[i];
    for_each_trace(
        [&](RandomSource& r) {
          State s = from;
          kernels[k](s, density, cfg.t, r);
          return s;
        },
        [&](const State& s, double p) { row.emplace_back(intern(s), p); }, cfg.max_traces_per_row);
    return memo[k].emplace(i, std::move(row)).first->second;
  };
  if (cfg.passes < 0) throw std::invalid_argument("discrete_mc_test: negative number of passes");
  const auto full = static_cast<long>(std::floor(cfg.passes));
  const double frac = cfg.passes - static_cast<double>(full);
  std::vector<std::pair<std::size_t, double>> steps;  // (kernel, probability it runs)
  for (long p = 0; p < full; ++p)
    for (std::size_t k = 0; k < kernels.size(); ++k) steps.emplace_back(k, 1.0);
  if (frac > 0.0)
    for (std::size_t k = 0; k < kernels.size(); ++k) steps.emplace_back(k, frac);

  std::size_t next = 0;
  while (next < rep.states.size()) {
    std::size_t i = next++;
    std::map<std::size_t, double> dist{{i, 1.0}};
    for (auto [k, run] : steps) {
      std::map<std::size_t, double> out;
      for (auto [from, p] : dist) {
        if (run < 1.0) out[from] += p * (1.0 - run);
        for (auto [to, q] : kernel_row(k, from)) out[to] += p * run * q;
      }
      dist = std::move(out);
    }
    rep.rows.emplace_back(dist.begin(), dist.end());
  }
  const std::size_t n = rep.states.size();
  rep.left_support = n > rep.support_size;

  std::vector<double> logp(n, neg_inf);
  for (std::size_t i = 0; i < rep.support_size; ++i) logp[i] = density.annealed_log_density(rep.states[i], cfg.t);
  double lse = log_sum_exp(logp);
  rep.pi.assign(n, 0.0);
  for (std::size_t i = 0; i < rep.support_size; ++i) rep.pi[i] = std::exp(logp[i] - lse);

  std::vector<double> pip(n, 0.0);
  std::vector<std::vector<std::size_t>> adj(n), radj(n);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (auto [j, p] : rep.rows[i]) {
      total += p;
      pip[j] += rep.pi[i] * p;
      if (p > 0.0 && i != j) {
        adj[i].push_back(j);
        radj[j].push_back(i);
      }
    }
    rep.max_row_error = std::max(rep.max_row_error, std::abs(total - 1.0));
  }
  for (std::size_t j = 0; j < n; ++j) rep.invariance_residual = std::max(rep.invariance_residual, std::abs(pip[j] - rep.pi[j]));

  std::vector<char> support(n, 0);
  for (std::size_t i = 0; i < rep.support_size; ++i) support[i] = 1;
  {
    std::vector<char> seen(n, 0);
    std::deque<std::size_t> q{0};
    seen[0] = 1;
    while (!q.empty()) {
      auto u = q.front();
      q.pop_front();
      for (auto v : adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          q.push_back(v);
        }
    }
    rep.reachable = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
  }
  rep.irreducible = detail::reaches_all(adj, 0, support) && detail::reaches_all(radj, 0, support);
  return rep;
}

// A deliberately small kernel for enumeration-heavy checks: pick one of
// `units` uniformly, propose x -> x +/- 1 (mod n_states), Metropolis accept.
// About 4 branches per application against hundreds for the slice sampler.
inline KernelInstance cyclic_mh_kernel(const Model& m, std::vector<UnitId> units, std::int64_t n_states) {
  if (units.empty() || n_states < 2) throw std::invalid_argument("cyclic_mh_kernel: nothing to move");
  KernelInstance k;
  k.target = units.front();
  for (UnitId u : units)
    for (FactorId f : m.neighbors(u))
      if (std::find(k.connected.begin(), k.connected.end(), f) == k.connected.end()) k.connected.push_back(f);
  k.sampler_name = "CyclicMH";
  k.type_name = "IntScalar";
  const Model* mp = &m;
  k.execute = [mp, units, n_states](State& s, const AnnealedDensity& d, double t, RandomSource& rng) {
    UnitId u = units[static_cast<std::size_t>(rng.int_below(static_cast<std::int64_t>(units.size())))];
    auto fs = mp->neighbors(u);
    std::int64_t& slot = detail::int_slot(*mp, s, u);
    std::int64_t x0 = slot;
    double before = d.local_log_density(fs, s, t);
    slot = ((x0 + (rng.bernoulli(0.5) ? 1 : n_states - 1)) % n_states + n_states) % n_states;
    double ratio = std::exp(d.local_log_density(fs, s, t) - before);
    if (std::isnan(ratio)) ratio = 0.0;
    if (!rng.bernoulli(std::min(1.0, ratio))) slot = x0;
  };
  return k;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

// P(K > lambda) for the Kolmogorov distribution
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// two-sample test, p-value from the asymptotic law with Stephens' correction
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  double en = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_survival((en + 0.12 + 0.11 / en) * d)};
}

// ---------------------------------------------------------------------------
// exact invariance test

struct TestFunction {
  std::string name;
  std::function<double(const State&)> f;
};

struct EitConfig {
  std::size_t m1 = 10000;  // forward draws
  std::size_t m3 = 10000;  // kernel-perturbed draws
  std::size_t k = 10;      // kernel/regeneration steps per draw
  double alpha = 0.005;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct EitTest {
  std::string kernel;
  std::string function;
  double statistic = 0.0;
  double p_value = 1.0;
  bool passed = true;
};

struct EitReport {
  std::vector<EitTest> tests;
  double corrected_alpha = 0.0;
  bool passed = true;

  double min_p_value() const {
    double m = 1.0;
    for (const auto& t : tests) m = std::min(m, t.p_value);
    return m;
  }

  std::string csv() const {
    std::ostringstream o;
    o << "kernel,function,statistic,pValue,verdict\n";
    o << std::setprecision(10);
    for (const auto& t : tests)
      o << t.kernel << "," << t.function << "," << t.statistic << "," << t.p_value << "," << (t.passed ? "pass" : "fail") << "\n";
    return o.str();
  }
};

// Each kernel is tested on its own: F draws are plain joint forward
// simulations; H draws alternate the kernel with regeneration of the data.
inline EitReport exact_invariance_test(const Model& model, const std::vector<KernelInstance>& kernels,
                                       const std::vector<TestFunction>& functions, const EitConfig& cfg = {}) {
  if (!model.normal_form().ok || !model.generate_order()) throw ModelError("exact invariance test needs a generative model");
  if (kernels.empty() || functions.empty()) throw std::invalid_argument("exact invariance test: nothing to test");
  AnnealedDensity density(model);
  ForwardOptions all;
  all.include_observed = true;

  std::vector<std::vector<double>> f_samples(functions.size(), std::vector<double>(cfg.m1));
  parallel_for(cfg.m1, cfg.threads, [&](std::size_t m) {
    MersenneRandom r(mix64(cfg.seed, 0xF0F0, m));
    State s = model.initial_state();
    forward_simulate(model, s, r, all);
    for (std::size_t q = 0; q < functions.size(); ++q) f_samples[q][m] = functions[q].f(s);
  });

  EitReport rep;
  std::size_t n_tests = kernels.size() * functions.size();
  rep.corrected_alpha = cfg.alpha / static_cast<double>(n_tests);
  for (std::size_t ki = 0; ki < kernels.size(); ++ki) {
    const auto& kernel = kernels[ki];
    std::vector<std::vector<double>> h_samples(functions.size(), std::vector<double>(cfg.m3));
    parallel_for(cfg.m3, cfg.threads, [&](std::size_t m) {
      MersenneRandom r(mix64(cfg.seed, 0x4848 + ki, m));
      State s = model.initial_state();
      forward_simulate(model, s, r, all);
      for (std::size_t step = 0; step < cfg.k; ++step) {
        kernel(s, density, 1.0, r);
        regenerate_data(model, s, r);
      }
      for (std::size_t q = 0; q < functions.size(); ++q) h_samples[q][m] = functions[q].f(s);
    });
    for (std::size_t q = 0; q < functions.size(); ++q) {
      auto ks = ks_two_sample(f_samples[q], h_samples[q]);
      EitTest t{kernel.sampler_name + "(" + model.unit_name(kernel.target) + ")", functions[q].name, ks.statistic, ks.p_value,
                ks.p_value >= rep.corrected_alpha};
      rep.passed = rep.passed && t.passed;
      rep.tests.push_back(std::move(t));
    }
  }
  return rep;
}

}  // namespace tempo
