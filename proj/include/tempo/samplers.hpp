#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tempo/anneal.hpp"
#include "tempo/core.hpp"
#include "tempo/random.hpp"

namespace tempo {

struct SamplerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using KernelFn = std::function<void(State&, const AnnealedDensity&, double, RandomSource&)>;

struct KernelInstance {
  UnitId target = 0;
  std::vector<FactorId> connected;
  bool handles_constrained = false;
  std::string sampler_name;
  std::string type_name;
  KernelFn execute;

  void operator()(State& s, const AnnealedDensity& d, double t, RandomSource& rng) const { execute(s, d, t, rng); }
};

struct SliceOptions {
  double width = 1.0;
  int max_doublings = 30;
};

// One univariate slice-sampling update (doubling, then shrinkage with the
// acceptance test for doubled intervals).
template <class LogF>
double slice_update(double x0, double lf0, LogF&& logf, RandomSource& rng, SliceOptions opt = {}) {
  if (lf0 == neg_inf || std::isnan(lf0)) throw SamplerError("slice sampler started at a point of zero density");
  const double w = opt.width;
  const double logy = lf0 - gen::exponential(rng);

  double L = x0 - w * rng.uniform01();
  double R = L + w;
  double fL = logf(L), fR = logf(R);
  int k = opt.max_doublings;
  bool doubled = false;
  while (k > 0 && (logy < fL || logy < fR)) {
    if (rng.uniform01() < 0.5) {
      L -= R - L;
      fL = logf(L);
    } else {
      R += R - L;
      fR = logf(R);
    }
    doubled = true;
    --k;
  }

  auto acceptable = [&](double x1) {
    if (!doubled) return true;
    double lh = L, rh = R;
    bool differ = false;
    while (rh - lh > 1.1 * w) {
      double m = 0.5 * (lh + rh);
      if ((x0 < m && x1 >= m) || (x0 >= m && x1 < m)) differ = true;
      if (x1 < m)
        rh = m;
      else
        lh = m;
      if (differ && logy >= logf(lh) && logy >= logf(rh)) return false;
    }
    return true;
  };

  double lb = L, rb = R;
  for (int it = 0; it < 10000; ++it) {
    double x1 = lb + rng.uniform01() * (rb - lb);
    double f1 = logf(x1);
    if (logy < f1 && acceptable(x1)) return x1;
    if (x1 < x0)
      lb = x1;
    else
      rb = x1;
  }
  return x0;
}

// Integer analogue on the lattice. The interval is the integer set [L, R);
// doubling continues while a point just outside it (L - 1 or R) is in the
// slice. Instead of shrinking, the new value is uniform over the points of
// the final interval that are in the slice and from which the same interval
// could have been built; that set does not depend on x0, so the move is
// reversible. The slice height is drawn lazily: the uniform variate
// v = height / f(x0) is only narrowed to an interval by Bernoulli comparisons,
// so the update uses discrete primitives only and can be enumerated exactly.
template <class LogF>
std::int64_t slice_update_int(std::int64_t x0, double lf0, LogF&& logf, RandomSource& rng, int max_doublings = 30) {
  if (lf0 == neg_inf || std::isnan(lf0)) throw SamplerError("integer slice sampler started at a point of zero density");
  double lo = 0.0, hi = 1.0;
  std::unordered_map<std::int64_t, double> cache;
  auto density = [&](std::int64_t y) {
    auto [it, fresh] = cache.try_emplace(y, 0.0);
    if (fresh) {
      double v = logf(y);
      it->second = std::isnan(v) ? neg_inf : v;
    }
    return it->second;
  };
  auto in_slice = [&](std::int64_t y) {
    if (y == x0) return true;
    double r = std::exp(density(y) - lf0);
    if (r >= hi) return true;
    if (r <= lo) return false;
    bool below = rng.bernoulli((r - lo) / (hi - lo));
    if (below)
      hi = r;
    else
      lo = r;
    return below;
  };

  std::int64_t L = x0, R = x0 + 1;
  int k = max_doublings;
  while (k > 0 && (in_slice(L - 1) || in_slice(R))) {
    if (rng.bernoulli(0.5))
      L -= R - L;
    else
      R += R - L;
    --k;
  }

  // Walk the dyadic halves of [L, R). A half without x0 whose outer
  // neighbours are both out of the slice would have stopped the doubling, so
  // none of its points can have produced [L, R) and the whole half is skipped.
  std::vector<std::int64_t> candidates;
  auto collect = [&](auto&& self, std::int64_t lo, std::int64_t hi) -> void {
    if (hi - lo == 1) {
      if (lo == x0 || in_slice(lo)) candidates.push_back(lo);
      return;
    }
    std::int64_t m = lo + (hi - lo) / 2;
    for (auto [a, b] : {std::pair{lo, m}, std::pair{m, hi}}) {
      bool mine = a <= x0 && x0 < b;
      if (!mine && !in_slice(a - 1) && !in_slice(b)) continue;
      self(self, a, b);
    }
  };
  collect(collect, L, R);
  if (candidates.size() == 1) return x0;
  return candidates[static_cast<std::size_t>(rng.int_below(static_cast<std::int64_t>(candidates.size())))];
}

namespace detail {

inline double& real_slot(const Model& m, State& s, UnitId u) {
  const auto& ur = m.units()[u];
  return s.real(ur.var, ur.entry < 0 ? 0 : static_cast<std::size_t>(ur.entry));
}

inline std::int64_t& int_slot(const Model& m, State& s, UnitId u) {
  const auto& ur = m.units()[u];
  return s.integer(ur.var, ur.entry < 0 ? 0 : static_cast<std::size_t>(ur.entry));
}

}  // namespace detail

inline KernelInstance real_slice_kernel(const Model& m, UnitId u, SliceOptions opt = {}) {
  KernelInstance k;
  k.target = u;
  k.connected = m.neighbors(u);
  k.sampler_name = "RealSliceSampler";
  k.type_name = "RealScalar";
  const Model* mp = &m;
  auto fs = k.connected;
  k.execute = [mp, u, fs, opt](State& s, const AnnealedDensity& d, double t, RandomSource& rng) {
    double& slot = detail::real_slot(*mp, s, u);
    double x0 = slot;
    auto logf = [&](double x) {
      slot = x;
      return d.local_log_density(fs, s, t);
    };
    double lf0 = logf(x0);
    double x1 = slice_update(x0, lf0, logf, rng, opt);
    slot = x1;
  };
  return k;
}

inline KernelInstance int_slice_kernel(const Model& m, UnitId u) {
  KernelInstance k;
  k.target = u;
  k.connected = m.neighbors(u);
  k.sampler_name = "IntSliceSampler";
  k.type_name = "IntScalar";
  const Model* mp = &m;
  auto fs = k.connected;
  k.execute = [mp, u, fs](State& s, const AnnealedDensity& d, double t, RandomSource& rng) {
    std::int64_t& slot = detail::int_slot(*mp, s, u);
    std::int64_t x0 = slot;
    auto logf = [&](std::int64_t x) {
      slot = x;
      return d.local_log_density(fs, s, t);
    };
    double lf0 = logf(x0);
    std::int64_t x1 = slice_update_int(x0, lf0, logf, rng);
    slot = x1;
  };
  return k;
}

// Pairwise mass reallocation: pick i != j, slice-sample p_i on (0, p_i + p_j)
// with p_j taking the remainder.
inline KernelInstance simplex_kernel(const Model& m, UnitId u) {
  const auto& ur = m.units()[u];
  const auto& decl = m.variable(ur.var);
  std::size_t dim = decl.kind.size;
  if (dim < 2) throw SamplerError("simplex sampler needs dimension at least 2 for '" + decl.name + "'");
  std::size_t offset = decl.kind.tag == VarKind::transition_matrix ? static_cast<std::size_t>(ur.entry) * dim : 0;
  KernelInstance k;
  k.target = u;
  k.connected = m.neighbors(u);
  k.handles_constrained = true;
  k.sampler_name = "SimplexSampler";
  k.type_name = kind_name(decl.kind);
  auto fs = k.connected;
  VarId var = ur.var;
  k.execute = [fs, var, dim, offset](State& s, const AnnealedDensity& d, double t, RandomSource& rng) {
    auto p = s.reals(var).subspan(offset, dim);
    auto i = static_cast<std::size_t>(rng.int_below(static_cast<std::int64_t>(dim)));
    auto j = static_cast<std::size_t>(rng.int_below(static_cast<std::int64_t>(dim - 1)));
    if (j >= i) ++j;
    const double total = p[i] + p[j];
    if (!(total > 0.0)) return;
    auto logf = [&](double x) {
      if (!(x > 0.0 && x < total)) return neg_inf;
      p[i] = x;
      p[j] = total - x;
      return d.local_log_density(fs, s, t);
    };
    double x0 = p[i];
    double lf0 = logf(x0);
    if (lf0 == neg_inf) {
      // boundary start (an entry at exactly 0 or 1): leave unchanged
      p[i] = x0;
      p[j] = total - x0;
      return;
    }
    SliceOptions opt;
    opt.width = total;
    double x1 = slice_update(x0, lf0, logf, rng, opt);
    p[i] = x1;
    p[j] = total - x1;
  };
  return k;
}

// Metropolis swap of two connections; i and j independent, i == j allowed.
inline KernelInstance permutation_kernel(const Model& m, UnitId u) {
  const auto& ur = m.units()[u];
  const auto& decl = m.variable(ur.var);
  KernelInstance k;
  k.target = u;
  k.connected = m.neighbors(u);
  k.sampler_name = "PermutationSampler";
  k.type_name = "Permutation";
  auto fs = k.connected;
  VarId var = ur.var;
  auto n = static_cast<std::int64_t>(decl.kind.size);
  k.execute = [fs, var, n](State& s, const AnnealedDensity& d, double t, RandomSource& rng) {
    auto c = s.ints(var);
    auto i = static_cast<std::size_t>(rng.int_below(n));
    auto j = static_cast<std::size_t>(rng.int_below(n));
    double before = d.local_log_density(fs, s, t);
    std::swap(c[i], c[j]);
    double after = d.local_log_density(fs, s, t);
    double ratio = std::exp(after - before);
    if (std::isnan(ratio)) ratio = 0.0;
    if (!rng.bernoulli(std::min(1.0, ratio))) std::swap(c[i], c[j]);
  };
  return k;
}

struct MatchResult {
  std::vector<KernelInstance> kernels;
  std::vector<std::pair<std::string, std::string>> prototypes;  // (type, sampler)

  std::string summary() const {
    std::string out = std::to_string(prototypes.size()) + " samplers constructed with following prototypes:";
    for (const auto& [type, sampler] : prototypes) out += "\n  " + type + " sampled via: [" + sampler + "]";
    return out;
  }
};

// One kernel per latent unit, in declaration order.
inline MatchResult match_samplers(const Model& m) {
  MatchResult out;
  std::vector<std::string> problems;
  for (UnitId u = 0; u < m.units().size(); ++u) {
    if (m.unit_observed(u)) continue;
    const auto& decl = m.variable(m.units()[u].var);
    KernelInstance k;
    switch (decl.kind.tag) {
      case VarKind::real_scalar:
      case VarKind::real_list:
        k = real_slice_kernel(m, u);
        break;
      case VarKind::int_scalar:
      case VarKind::int_list:
        k = int_slice_kernel(m, u);
        break;
      case VarKind::simplex:
      case VarKind::transition_matrix:
        k = simplex_kernel(m, u);
        break;
      case VarKind::permutation:
        k = permutation_kernel(m, u);
        break;
    }
    if ((m.has_constrained_factor(u) || decl.constrained) && !k.handles_constrained) {
      problems.push_back("no admissible sampler for constrained variable " + m.unit_name(u));
      continue;
    }
    std::pair<std::string, std::string> proto{k.type_name, k.sampler_name};
    if (std::find(out.prototypes.begin(), out.prototypes.end(), proto) == out.prototypes.end()) out.prototypes.push_back(proto);
    out.kernels.push_back(std::move(k));
  }
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "\n") + p;
    throw SamplerError(msg);
  }
  return out;
}

inline void sweep(const std::vector<KernelInstance>& kernels, State& s, const AnnealedDensity& d, double t, RandomSource& rng,
                  double passes = 3.0) {
  if (passes < 0) throw std::invalid_argument("negative number of passes");
  auto full = static_cast<long>(std::floor(passes));
  double frac = passes - static_cast<double>(full);
  for (long p = 0; p < full; ++p)
    for (const auto& k : kernels) k(s, d, t, rng);
  if (frac > 0.0)
    for (const auto& k : kernels)
      if (rng.bernoulli(frac)) k(s, d, t, rng);
}

}  // namespace tempo
