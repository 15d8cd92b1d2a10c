#pragma once

// Example models assembled with the library API.

#include <cmath>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "tempo/core.hpp"
#include "tempo/laws.hpp"

namespace tempo::models {

inline Kind real_scalar() { return Kind{VarKind::real_scalar, 1}; }
inline Kind int_scalar() { return Kind{VarKind::int_scalar, 1}; }
inline Kind real_list(std::size_t n) { return Kind{VarKind::real_list, n}; }
inline Kind int_list(std::size_t n) { return Kind{VarKind::int_list, n}; }
inline Kind simplex(std::size_t n) { return Kind{VarKind::simplex, n}; }
inline Kind permutation(std::size_t n) { return Kind{VarKind::permutation, n}; }

// z ~ Exponential(rate); y | z ~ ContinuousUniform(0, z)
inline Model doomsday(double rate = 1.0, std::optional<double> y = 1.2) {
  ModelBuilder b;
  VarId yv = b.add_variable("y", real_scalar(), y ? Status::observed : Status::latent, y ? InitialValue{*y} : InitialValue{});
  VarId zv = b.add_variable("z", real_scalar(), Status::latent, InitialValue{});
  add_distribution_law(b, "Exponential", VarRef{zv}, {constant(rate)});
  add_distribution_law(b, "ContinuousUniform", VarRef{yv}, {constant(0.0), scalar_of(b, VarRef{zv})});
  return b.build();
}

// theta ~ Normal(0, 1); y | theta ~ Normal(theta, 1)
inline Model conjugate_normal(double y = 0.0) {
  ModelBuilder b;
  VarId th = b.add_variable("theta", real_scalar(), Status::latent);
  VarId yv = b.add_variable("y", real_scalar(), Status::observed, y);
  add_distribution_law(b, "Normal", VarRef{th}, {constant(0.0), constant(1.0)});
  add_distribution_law(b, "Normal", VarRef{yv}, {scalar_of(b, VarRef{th}), constant(1.0)});
  return b.build();
}

using Matrix = std::vector<std::vector<double>>;

namespace detail {

// row `prev` of a fixed row-stochastic matrix; empty (invalid) out of range
inline ParamExpr matrix_row(std::shared_ptr<const Matrix> m, VarId v, int entry) {
  return {[m, v, entry](const State& s) {
            auto k = s.integer(v, static_cast<std::size_t>(entry));
            if (k < 0 || static_cast<std::size_t>(k) >= m->size()) return Arg::of(std::span<const double>{});
            return Arg::of(std::span<const double>((*m)[static_cast<std::size_t>(k)]));
          },
          {VarRef{v, entry}}};
}

}  // namespace detail

// chain[0] ~ Categorical(init); chain[k] | chain[k-1] ~ Categorical(P row)
inline Model markov_chain(std::vector<double> init, Matrix transition, std::size_t length) {
  ModelBuilder b;
  VarId c = b.add_variable("chain", int_list(length), Status::latent);
  auto tm = std::make_shared<const Matrix>(std::move(transition));
  add_distribution_law(b, "Categorical", VarRef{c, 0}, {constant_vector(std::move(init))});
  for (std::size_t k = 1; k < length; ++k)
    add_distribution_law(b, "Categorical", VarRef{c, static_cast<int>(k)}, {detail::matrix_row(tm, c, static_cast<int>(k) - 1)});
  return b.build();
}

// Hidden Markov model with categorical emissions; observations are fixed.
inline Model hmm(std::vector<double> init, Matrix transition, Matrix emission, std::vector<std::int64_t> observations) {
  ModelBuilder b;
  std::size_t n = observations.size();
  VarId x = b.add_variable("x", int_list(n), Status::latent);
  VarId y = b.add_variable("y", int_list(n), Status::observed, observations);
  auto tm = std::make_shared<const Matrix>(std::move(transition));
  auto em = std::make_shared<const Matrix>(std::move(emission));
  add_distribution_law(b, "Categorical", VarRef{x, 0}, {constant_vector(std::move(init))});
  for (std::size_t k = 1; k < n; ++k)
    add_distribution_law(b, "Categorical", VarRef{x, static_cast<int>(k)}, {detail::matrix_row(tm, x, static_cast<int>(k) - 1)});
  for (std::size_t k = 0; k < n; ++k)
    add_distribution_law(b, "Categorical", VarRef{y, static_cast<int>(k)}, {detail::matrix_row(em, x, static_cast<int>(k))});
  return b.build();
}

// forward algorithm
inline double hmm_evidence(const std::vector<double>& init, const Matrix& transition, const Matrix& emission,
                           const std::vector<std::int64_t>& obs) {
  std::size_t s = init.size();
  std::vector<double> alpha(s);
  for (std::size_t i = 0; i < s; ++i) alpha[i] = init[i] * emission[i][static_cast<std::size_t>(obs[0])];
  for (std::size_t k = 1; k < obs.size(); ++k) {
    std::vector<double> next(s, 0.0);
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t i = 0; i < s; ++i) next[j] += alpha[i] * transition[i][j];
      next[j] *= emission[j][static_cast<std::size_t>(obs[k])];
    }
    alpha = next;
  }
  double z = 0.0;
  for (double a : alpha) z += a;
  return z;
}

// Two-component (or K) Gaussian mixture with Dirichlet weights.
inline Model gaussian_mixture(std::vector<double> y, std::size_t k_components = 2) {
  ModelBuilder b;
  const std::size_t n = y.size();
  const int K = static_cast<int>(k_components);
  VarId yv = b.add_variable("y", real_list(n), Status::observed, y);
  VarId z = b.add_variable("z", int_list(n), Status::latent);
  VarId pi = b.add_variable("pi", simplex(k_components), Status::latent);
  VarId mu = b.add_variable("mu", real_list(k_components), Status::latent);
  VarId sd = b.add_variable("sd", real_list(k_components), Status::latent, std::vector<double>(k_components, 1.0));

  add_distribution_law(b, "Dirichlet", VarRef{pi}, {constant_vector(std::vector<double>(k_components, 1.0))});
  for (int k = 0; k < K; ++k) {
    add_distribution_law(b, "Normal", VarRef{mu, k}, {constant(0.0), constant(100.0)});
    add_distribution_law(b, "ContinuousUniform", VarRef{sd, k}, {constant(0.0), constant(10.0)});
  }
  for (std::size_t i = 0; i < n; ++i) {
    int e = static_cast<int>(i);
    add_distribution_law(b, "Categorical", VarRef{z, e}, {vector_of(b, VarRef{pi})});
    ParamExpr mean{[mu, z, i, K](const State& s) {
                     auto k = s.integer(z, i);
                     return Arg::of(k >= 0 && k < K ? s.real(mu, static_cast<std::size_t>(k)) : std::nan(""));
                   },
                   {VarRef{mu}, VarRef{z, e}}};
    ParamExpr var{[sd, z, i, K](const State& s) {
                    auto k = s.integer(z, i);
                    if (k < 0 || k >= K) return Arg::of(std::nan(""));
                    double v = s.real(sd, static_cast<std::size_t>(k));
                    return Arg::of(v * v);
                  },
                  {VarRef{sd}, VarRef{z, e}}};
    add_distribution_law(b, "Normal", VarRef{yv, e}, {mean, var});
  }
  return b.build();
}

// Synthetic, well separated two-component data set.
inline std::vector<double> synthetic_mixture_data(std::size_t n = 300, std::uint64_t seed = 2019) {
  MersenneRandom rng(seed);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = i % 2 == 0 ? gen::normal(rng, -2.0, 1.0) : gen::normal(rng, 2.0, 1.0);
  return y;
}

inline std::vector<std::pair<std::size_t, std::size_t>> square_ising_edges(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t v = r * n + c;
      if (c + 1 < n) out.emplace_back(v, v + 1);
      if (r + 1 < n) out.emplace_back(v, v + n);
    }
  return out;
}

inline double critical_ising_beta() { return std::log(1.0 + std::sqrt(2.0)) / 2.0; }

// Bernoulli pseudo-prior times pairwise potentials (target-less laws).
inline Model ising(std::size_t n = 3, double beta = critical_ising_beta(), double moment = 0.0) {
  ModelBuilder b;
  VarId v = b.add_variable("vertices", int_list(n * n), Status::latent);
  for (auto [a, c] : square_ising_edges(n)) {
    int ea = static_cast<int>(a), ec = static_cast<int>(c);
    ParamExpr pot{[v, a, c, beta](const State& s) {
                    auto x = s.integer(v, a), y = s.integer(v, c);
                    if (x < 0 || x > 1 || y < 0 || y > 1) return Arg::of(neg_inf);
                    return Arg::of(beta * static_cast<double>((2 * x - 1) * (2 * y - 1)));
                  },
                  {VarRef{v, ea}, VarRef{v, ec}}};
    add_distribution_law(b, "LogPotential", std::nullopt, {pot});
  }
  double p = 1.0 / (1.0 + std::exp(2.0 * moment));
  for (std::size_t i = 0; i < n * n; ++i) add_distribution_law(b, "Bernoulli", VarRef{v, static_cast<int>(i)}, {constant(p)});
  return b.build();
}

inline double ising_abs_magnetization(const State& s, VarId v) {
  auto xs = s.ints(v);
  double m = 0.0;
  for (auto x : xs) m += static_cast<double>(2 * x - 1);
  return std::abs(m) / static_cast<double>(xs.size());
}

// exact E|m| by enumerating all 2^(n*n) configurations
inline double ising_exact_abs_magnetization(std::size_t n, double beta) {
  std::size_t sites = n * n;
  auto edges = square_ising_edges(n);
  double num = 0.0, den = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << sites); ++mask) {
    double e = 0.0;
    for (auto [a, c] : edges) e += ((mask >> a) & 1) == ((mask >> c) & 1) ? 1.0 : -1.0;
    double w = std::exp(beta * e);
    double m = 0.0;
    for (std::size_t i = 0; i < sites; ++i) m += ((mask >> i) & 1) ? 1.0 : -1.0;
    num += w * std::abs(m) / static_cast<double>(sites);
    den += w;
  }
  return num / den;
}

// permutation ~ UniformPermutation; y[i] | permutation ~ Normal(connections[i], 0.3)
inline Model permutation_composite(std::vector<double> y = {2.1, -0.3, 0.8}) {
  ModelBuilder b;
  std::size_t n = y.size();
  VarId yv = b.add_variable("y", real_list(n), Status::observed, y);
  VarId p = b.add_variable("permutation", permutation(n), Status::latent);
  add_distribution_law(b, "UniformPermutation", VarRef{p}, {});
  for (std::size_t i = 0; i < n; ++i)
    add_distribution_law(b, "Normal", VarRef{yv, static_cast<int>(i)}, {scalar_of(b, VarRef{p, static_cast<int>(i)}), constant(0.3)});
  return b.build();
}

}  // namespace tempo::models
