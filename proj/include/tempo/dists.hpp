#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tempo/core.hpp"
#include "tempo/random.hpp"
#include "tempo/special.hpp"

namespace tempo {

enum class ParamKind { real, integer, vector };
enum class Support { real, integer, simplex, permutation, none };

struct Arg {
  double scalar = 0.0;
  std::span<const double> vec{};
  bool is_vector = false;

  static Arg of(double x) { return Arg{x, {}, false}; }
  static Arg of(std::span<const double> v) { return Arg{0.0, v, true}; }
};

using TermFn = double (*)(const Arg* params, const Arg& x);

struct Term {
  std::vector<int> params;  // indices of parameters read by the term
  bool uses_realization = true;
  TermFn fn = nullptr;
};

struct Draw {
  double scalar = 0.0;
  std::vector<double> vec;
  std::vector<std::int64_t> perm;
};

using SampleFn = void (*)(const Arg* params, const Arg& realization_shape, RandomSource&, Draw&);

struct ParamSlot {
  std::string name;
  ParamKind kind;
};

struct DistributionSpec {
  std::string name;
  std::vector<ParamSlot> params;
  Support support = Support::real;
  std::vector<Term> terms;
  SampleFn sample = nullptr;
  bool constrained_realization = false;
};

struct DistributionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace dist_detail {

using special::ln_gamma;
using special::log_binomial;
using special::log_factorial;

inline bool integral(double x) { return std::isfinite(x) && x == std::floor(x); }
inline bool prob(double p) { return p >= 0.0 && p <= 1.0; }

inline double simplex_check(std::span<const double> p) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0 && x <= 1.0)) return neg_inf;
    s += x;
  }
  return std::abs(s - 1.0) <= 1e-6 ? 0.0 : neg_inf;
}

inline double bernoulli(const Arg* p, const Arg& x) {
  double q = p[0].scalar;
  if (!prob(q)) return neg_inf;
  if (x.scalar == 1.0) return std::log(q);
  if (x.scalar == 0.0) return std::log1p(-q);
  return neg_inf;
}

inline double binomial(const Arg* p, const Arg& x) {
  double n = p[0].scalar, q = p[1].scalar, k = x.scalar;
  if (!integral(n) || n < 0 || !prob(q)) return neg_inf;
  if (k < 0 || k > n) return neg_inf;
  auto ni = static_cast<std::int64_t>(n), ki = static_cast<std::int64_t>(k);
  return log_binomial(ni, ki) + special::xlogy(k, q) + special::xlogy(n - k, 1.0 - q);
}

inline double beta_binomial(const Arg* p, const Arg& x) {
  double n = p[0].scalar, a = p[1].scalar, b = p[2].scalar, k = x.scalar;
  if (!integral(n) || n < 0 || !(a > 0) || !(b > 0)) return neg_inf;
  if (k < 0 || k > n) return neg_inf;
  auto ni = static_cast<std::int64_t>(n), ki = static_cast<std::int64_t>(k);
  return log_binomial(ni, ki) + special::log_beta(k + a, n - k + b) - special::log_beta(a, b);
}

inline double categorical(const Arg* p, const Arg& x) {
  const auto& probs = p[0].vec;
  double k = x.scalar;
  if (k < 0 || k >= static_cast<double>(probs.size())) return neg_inf;
  double q = probs[static_cast<std::size_t>(k)];
  if (!(q >= 0.0)) return neg_inf;
  return std::log(q);
}

inline double discrete_uniform(const Arg* p, const Arg& x) {
  double lo = p[0].scalar, hi = p[1].scalar;
  if (!integral(lo) || !integral(hi) || hi <= lo) return neg_inf;
  if (x.scalar < lo || x.scalar >= hi) return neg_inf;
  return -std::log(hi - lo);
}

inline double geometric(const Arg* p, const Arg& x) {
  double q = p[0].scalar, k = x.scalar;
  if (!(q > 0.0 && q <= 1.0) || k < 0) return neg_inf;
  return special::xlogy(k, 1.0 - q) + std::log(q);
}

inline double negative_binomial(const Arg* p, const Arg& x) {
  double r = p[0].scalar, q = p[1].scalar, k = x.scalar;
  if (!(r > 0.0) || !(q >= 0.0 && q < 1.0) || k < 0) return neg_inf;
  return ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0) + special::xlogy(k, q) + r * std::log1p(-q);
}

inline double poisson(const Arg* p, const Arg& x) {
  double m = p[0].scalar, k = x.scalar;
  if (!(m >= 0.0) || k < 0) return neg_inf;
  return special::xlogy(k, m) - m - ln_gamma(k + 1.0);
}

inline double beta(const Arg* p, const Arg& x) {
  double a = p[0].scalar, b = p[1].scalar, v = x.scalar;
  if (!(a > 0) || !(b > 0) || !(v > 0.0 && v < 1.0)) return neg_inf;
  return (a - 1.0) * std::log(v) + (b - 1.0) * std::log1p(-v) - special::log_beta(a, b);
}

inline double gamma_density(double shape, double rate, double v) {
  if (!(shape > 0) || !(rate > 0) || !(v > 0)) return neg_inf;
  return shape * std::log(rate) - ln_gamma(shape) + (shape - 1.0) * std::log(v) - rate * v;
}

inline double chi_squared(const Arg* p, const Arg& x) {
  double nu = p[0].scalar;
  if (!integral(nu) || nu <= 0) return neg_inf;
  return gamma_density(nu / 2.0, 0.5, x.scalar);
}

inline double uniform_width(const Arg* p, const Arg&) {
  double w = p[1].scalar - p[0].scalar;
  if (!(w > 0.0)) return neg_inf;
  return -std::log(w);
}

inline double uniform_indicator(const Arg* p, const Arg& x) {
  return (p[0].scalar <= x.scalar && x.scalar <= p[1].scalar) ? 0.0 : neg_inf;
}

inline double exponential(const Arg* p, const Arg& x) { return gamma_density(1.0, p[0].scalar, x.scalar); }

inline double gamma(const Arg* p, const Arg& x) { return gamma_density(p[0].scalar, p[1].scalar, x.scalar); }

inline double student_t_density(double nu, double mu, double sigma, double v) {
  if (!(nu > 0) || !(sigma > 0)) return neg_inf;
  double z = (v - mu) / sigma;
  return ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * std::log(nu * std::numbers::pi) - std::log(sigma) -
         (nu + 1.0) / 2.0 * std::log1p(z * z / nu);
}

inline double half_student_t(const Arg* p, const Arg& x) {
  if (!(x.scalar > 0.0)) return neg_inf;
  return std::log(2.0) + student_t_density(p[0].scalar, 0.0, p[1].scalar, x.scalar);
}

inline double student_t(const Arg* p, const Arg& x) {
  return student_t_density(p[0].scalar, p[1].scalar, p[2].scalar, x.scalar);
}

inline double laplace(const Arg* p, const Arg& x) {
  double b = p[1].scalar;
  if (!(b > 0)) return neg_inf;
  return -std::log(2.0 * b) - std::abs(x.scalar - p[0].scalar) / b;
}

inline double logistic(const Arg* p, const Arg& x) {
  double s = p[1].scalar;
  if (!(s > 0)) return neg_inf;
  double z = (x.scalar - p[0].scalar) / s;
  return -z - std::log(s) - 2.0 * special::log1p_exp(-z);
}

inline double normal_constant(const Arg*, const Arg&) { return -special::log_two_pi / 2.0; }

inline double normal_variance(const Arg* p, const Arg&) {
  double v = p[1].scalar;
  if (!(v > 0.0)) return neg_inf;
  return -0.5 * std::log(v);
}

inline double normal_kernel(const Arg* p, const Arg& x) {
  double v = p[1].scalar;
  if (!(v > 0.0)) return neg_inf;
  double d = p[0].scalar - x.scalar;
  return -0.5 * d * d / v;
}

inline double weibull(const Arg* p, const Arg& x) {
  double lambda = p[0].scalar, k = p[1].scalar, v = x.scalar;
  if (!(lambda > 0) || !(k > 0) || !(v > 0)) return neg_inf;
  double r = v / lambda;
  return std::log(k) - std::log(lambda) + (k - 1.0) * std::log(r) - std::pow(r, k);
}

inline double dirichlet_density(std::span<const double> alpha, std::span<const double> x) {
  if (alpha.size() != x.size() || alpha.empty()) return neg_inf;
  if (simplex_check(x) == neg_inf) return neg_inf;
  double total = 0.0, out = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0)) return neg_inf;
    total += alpha[i];
    out += (alpha[i] - 1.0) * std::log(x[i]) - ln_gamma(alpha[i]);
  }
  return out + ln_gamma(total);
}

inline double dirichlet(const Arg* p, const Arg& x) { return dirichlet_density(p[0].vec, x.vec); }

inline double simplex_uniform(const Arg* p, const Arg& x) {
  double d = p[0].scalar;
  if (!integral(d) || d < 1 || static_cast<std::size_t>(d) != x.vec.size()) return neg_inf;
  if (simplex_check(x.vec) == neg_inf) return neg_inf;
  return ln_gamma(d);
}

inline double symmetric_dirichlet(const Arg* p, const Arg& x) {
  double d = p[0].scalar, c = p[1].scalar;
  if (!integral(d) || d < 1 || static_cast<std::size_t>(d) != x.vec.size() || !(c > 0)) return neg_inf;
  std::vector<double> alpha(static_cast<std::size_t>(d), c / d);
  return dirichlet_density(alpha, x.vec);
}

inline double log_potential(const Arg* p, const Arg&) { return p[0].scalar; }

inline double uniform_permutation(const Arg*, const Arg& x) {
  return -log_factorial(static_cast<std::int64_t>(x.scalar));
}

// ---- generators

inline void require(bool ok, const char* what) {
  if (!ok) throw DistributionError(std::string("cannot sample: invalid parameters for ") + what);
}

inline void s_bernoulli(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(prob(p[0].scalar), "Bernoulli");
  d.scalar = r.bernoulli(p[0].scalar) ? 1.0 : 0.0;
}
inline void s_binomial(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(integral(p[0].scalar) && p[0].scalar >= 0 && prob(p[1].scalar), "Binomial");
  d.scalar = static_cast<double>(gen::binomial(r, static_cast<std::int64_t>(p[0].scalar), p[1].scalar));
}
inline void s_beta_binomial(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(integral(p[0].scalar) && p[0].scalar >= 0 && p[1].scalar > 0 && p[2].scalar > 0, "BetaBinomial");
  double q = gen::beta(r, p[1].scalar, p[2].scalar);
  d.scalar = static_cast<double>(gen::binomial(r, static_cast<std::int64_t>(p[0].scalar), q));
}
inline void s_categorical(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(simplex_check(p[0].vec) == 0.0, "Categorical");
  d.scalar = static_cast<double>(r.categorical(p[0].vec));
}
inline void s_discrete_uniform(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(integral(p[0].scalar) && integral(p[1].scalar) && p[1].scalar > p[0].scalar, "DiscreteUniform");
  auto lo = static_cast<std::int64_t>(p[0].scalar), hi = static_cast<std::int64_t>(p[1].scalar);
  d.scalar = static_cast<double>(lo + r.int_below(hi - lo));
}
inline void s_geometric(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  d.scalar = static_cast<double>(gen::geometric(r, p[0].scalar));
}
inline void s_negative_binomial(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  d.scalar = static_cast<double>(gen::negative_binomial(r, p[0].scalar, p[1].scalar));
}
inline void s_poisson(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  d.scalar = static_cast<double>(gen::poisson(r, p[0].scalar));
}
inline void s_beta(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(p[0].scalar > 0 && p[1].scalar > 0, "Beta");
  d.scalar = gen::beta(r, p[0].scalar, p[1].scalar);
}
inline void s_chi_squared(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(integral(p[0].scalar) && p[0].scalar > 0, "ChiSquared");
  d.scalar = gen::gamma(r, p[0].scalar / 2.0, 0.5);
}
inline void s_continuous_uniform(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(p[1].scalar > p[0].scalar, "ContinuousUniform");
  d.scalar = gen::uniform(r, p[0].scalar, p[1].scalar);
}
inline void s_exponential(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(p[0].scalar > 0, "Exponential");
  d.scalar = gen::exponential(r, p[0].scalar);
}
inline void s_gamma(const Arg* p, const Arg&, RandomSource& r, Draw& d) { d.scalar = gen::gamma(r, p[0].scalar, p[1].scalar); }
inline void s_half_student_t(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(p[0].scalar > 0 && p[1].scalar > 0, "HalfStudentT");
  d.scalar = std::abs(gen::student_t(r, p[0].scalar)) * p[1].scalar;
}
inline void s_laplace(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(p[1].scalar > 0, "Laplace");
  double e = gen::exponential(r, 1.0);
  d.scalar = p[0].scalar + (r.bernoulli(0.5) ? e : -e) * p[1].scalar;
}
inline void s_logistic(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(p[1].scalar > 0, "Logistic");
  double u = gen::uniform_open(r);
  d.scalar = p[0].scalar + p[1].scalar * std::log(u / (1.0 - u));
}
inline void s_normal(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(p[1].scalar > 0, "Normal");
  d.scalar = gen::normal(r, p[0].scalar, p[1].scalar);
}
inline void s_student_t(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(p[0].scalar > 0 && p[2].scalar > 0, "StudentT");
  d.scalar = p[1].scalar + p[2].scalar * gen::student_t(r, p[0].scalar);
}
inline void s_weibull(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(p[0].scalar > 0 && p[1].scalar > 0, "Weibull");
  d.scalar = p[0].scalar * std::pow(-std::log(gen::uniform_open(r)), 1.0 / p[1].scalar);
}
inline void s_dirichlet(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  for (double a : p[0].vec) require(a > 0, "Dirichlet");
  d.vec = gen::dirichlet(r, p[0].vec);
}
inline void s_simplex_uniform(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(integral(p[0].scalar) && p[0].scalar >= 1, "SimplexUniform");
  std::vector<double> alpha(static_cast<std::size_t>(p[0].scalar), 1.0);
  d.vec = gen::dirichlet(r, alpha);
}
inline void s_symmetric_dirichlet(const Arg* p, const Arg&, RandomSource& r, Draw& d) {
  require(integral(p[0].scalar) && p[0].scalar >= 1 && p[1].scalar > 0, "SymmetricDirichlet");
  std::vector<double> alpha(static_cast<std::size_t>(p[0].scalar), p[1].scalar / p[0].scalar);
  d.vec = gen::dirichlet(r, alpha);
}
// sort, then shuffle: the output never depends on the previous value
inline void s_uniform_permutation(const Arg*, const Arg& shape, RandomSource& r, Draw& d) {
  auto n = static_cast<std::size_t>(shape.scalar);
  d.perm.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.perm[i] = static_cast<std::int64_t>(i);
  gen::shuffle(r, std::span<std::int64_t>(d.perm));
}

inline std::vector<DistributionSpec> build_catalog() {
  using K = ParamKind;
  auto one = [](TermFn f, std::vector<int> ps) { return std::vector<Term>{Term{std::move(ps), true, f}}; };
  std::vector<DistributionSpec> c;
  c.push_back({"Bernoulli", {{"probability", K::real}}, Support::integer, one(bernoulli, {0}), s_bernoulli});
  c.push_back({"Binomial", {{"numberOfTrials", K::integer}, {"probabilityOfSuccess", K::real}}, Support::integer,
               one(binomial, {0, 1}), s_binomial});
  c.push_back({"BetaBinomial", {{"numberOfTrials", K::integer}, {"alpha", K::real}, {"beta", K::real}}, Support::integer,
               one(beta_binomial, {0, 1, 2}), s_beta_binomial});
  c.push_back({"Categorical", {{"probabilities", K::vector}}, Support::integer, one(categorical, {0}), s_categorical});
  c.push_back({"DiscreteUniform", {{"minInclusive", K::integer}, {"maxExclusive", K::integer}}, Support::integer,
               one(discrete_uniform, {0, 1}), s_discrete_uniform});
  c.push_back({"Geometric", {{"p", K::real}}, Support::integer, one(geometric, {0}), s_geometric});
  c.push_back({"NegativeBinomial", {{"r", K::real}, {"p", K::real}}, Support::integer, one(negative_binomial, {0, 1}),
               s_negative_binomial});
  c.push_back({"Poisson", {{"mean", K::real}}, Support::integer, one(poisson, {0}), s_poisson});
  c.push_back({"Beta", {{"alpha", K::real}, {"beta", K::real}}, Support::real, one(beta, {0, 1}), s_beta});
  c.push_back({"ChiSquared", {{"nu", K::integer}}, Support::real, one(chi_squared, {0}), s_chi_squared});
  c.push_back({"ContinuousUniform",
               {{"min", K::real}, {"max", K::real}},
               Support::real,
               {Term{{0, 1}, false, uniform_width}, Term{{0, 1}, true, uniform_indicator}},
               s_continuous_uniform});
  c.push_back({"Exponential", {{"rate", K::real}}, Support::real, one(exponential, {0}), s_exponential});
  c.push_back({"Gamma", {{"shape", K::real}, {"rate", K::real}}, Support::real, one(gamma, {0, 1}), s_gamma});
  c.push_back({"HalfStudentT", {{"nu", K::real}, {"sigma", K::real}}, Support::real, one(half_student_t, {0, 1}),
               s_half_student_t});
  c.push_back({"Laplace", {{"location", K::real}, {"scale", K::real}}, Support::real, one(laplace, {0, 1}), s_laplace});
  c.push_back({"Logistic", {{"location", K::real}, {"scale", K::real}}, Support::real, one(logistic, {0, 1}), s_logistic});
  c.push_back({"Normal",
               {{"mean", K::real}, {"variance", K::real}},
               Support::real,
               {Term{{}, false, normal_constant}, Term{{1}, false, normal_variance}, Term{{0, 1}, true, normal_kernel}},
               s_normal});
  c.push_back({"StudentT", {{"nu", K::real}, {"mu", K::real}, {"sigma", K::real}}, Support::real, one(student_t, {0, 1, 2}),
               s_student_t});
  c.push_back({"Weibull", {{"scale", K::real}, {"shape", K::real}}, Support::real, one(weibull, {0, 1}), s_weibull});
  c.push_back({"Dirichlet", {{"concentrations", K::vector}}, Support::simplex, one(dirichlet, {0}), s_dirichlet, true});
  c.push_back({"SimplexUniform", {{"dim", K::integer}}, Support::simplex, one(simplex_uniform, {0}), s_simplex_uniform, true});
  c.push_back({"SymmetricDirichlet", {{"dim", K::integer}, {"concentration", K::real}}, Support::simplex,
               one(symmetric_dirichlet, {0, 1}), s_symmetric_dirichlet, true});
  c.push_back({"LogPotential", {{"logPotential", K::real}}, Support::none, {Term{{0}, false, log_potential}}, nullptr});
  c.push_back({"UniformPermutation", {}, Support::permutation, {Term{{}, true, uniform_permutation}}, s_uniform_permutation});
  return c;
}

inline const std::vector<std::string_view>& out_of_scope_names() {
  static const std::vector<std::string_view> names{"MultivariateNormal", "NormalField", "PlatedMatrix", "F",
                                                   "Gompertz", "Gumbel", "LogLogistic", "HyperGeometric", "YuleSimon"};
  return names;
}

}  // namespace dist_detail

inline const std::vector<DistributionSpec>& catalog() {
  static const std::vector<DistributionSpec> c = dist_detail::build_catalog();
  return c;
}

inline const DistributionSpec& distribution(std::string_view name) {
  for (const auto& d : catalog())
    if (d.name == name) return d;
  for (auto n : dist_detail::out_of_scope_names())
    if (n == name) throw DistributionError("distribution " + std::string(name) + " is not implemented");
  throw DistributionError("unknown distribution " + std::string(name));
}

inline double log_density(const DistributionSpec& d, std::span<const Arg> params, const Arg& x) {
  if (params.size() != d.params.size())
    throw DistributionError(d.name + " expects " + std::to_string(d.params.size()) + " parameters, got " +
                            std::to_string(params.size()));
  double total = 0.0;
  for (const auto& t : d.terms) {
    double v = t.fn(params.data(), x);
    if (std::isnan(v)) v = neg_inf;
    if (v == neg_inf) return neg_inf;
    total += v;
  }
  return total;
}

inline double log_density(std::string_view name, std::span<const Arg> params, const Arg& x) {
  return log_density(distribution(name), params, x);
}

inline double log_density(std::string_view name, std::initializer_list<double> params, double x) {
  std::vector<Arg> ps;
  for (double p : params) ps.push_back(Arg::of(p));
  return log_density(name, ps, Arg::of(x));
}

inline Draw sample(const DistributionSpec& d, std::span<const Arg> params, RandomSource& rng, const Arg& shape = {}) {
  if (params.size() != d.params.size()) throw DistributionError(d.name + ": arity mismatch");
  if (!d.sample) throw DistributionError(d.name + " has no generator");
  Draw out;
  d.sample(params.data(), shape, rng, out);
  return out;
}

inline double sample_scalar(std::string_view name, std::initializer_list<double> params, RandomSource& rng) {
  std::vector<Arg> ps;
  for (double p : params) ps.push_back(Arg::of(p));
  return sample(distribution(name), ps, rng).scalar;
}

// ---------------------------------------------------------------------------
// Distributions as values: a handle with lazily evaluated parameters.

using ParamFn = std::function<Arg(const State&)>;

class DistributionHandle {
 public:
  DistributionHandle(const DistributionSpec& spec, std::vector<ParamFn> params) : spec_(&spec), params_(std::move(params)) {
    if (spec.support != Support::real && spec.support != Support::integer)
      throw DistributionError(spec.name + " cannot be used as a distribution object");
    if (params_.size() != spec.params.size()) throw DistributionError(spec.name + ": arity mismatch");
  }
  static DistributionHandle constant(std::string_view name, std::vector<double> values) {
    std::vector<ParamFn> ps;
    for (double v : values) ps.push_back([v](const State&) { return Arg::of(v); });
    return DistributionHandle(distribution(name), std::move(ps));
  }

  const DistributionSpec& spec() const { return *spec_; }

  double log_density(const State& s, double x) const {
    std::vector<Arg> args;
    args.reserve(params_.size());
    for (const auto& p : params_) args.push_back(p(s));
    return tempo::log_density(*spec_, args, Arg::of(x));
  }
  double sample(const State& s, RandomSource& rng) const {
    std::vector<Arg> args;
    for (const auto& p : params_) args.push_back(p(s));
    return tempo::sample(*spec_, args, rng).scalar;
  }

 private:
  const DistributionSpec* spec_;
  std::vector<ParamFn> params_;
};

// log sum_k prop_k * exp(component_k(x)); -inf when a proportion leaves [0,1].
inline double int_mixture_log_density(std::span<const double> proportions, const std::vector<DistributionHandle>& components,
                                      const State& s, double x) {
  if (proportions.size() != components.size()) return neg_inf;
  double m = neg_inf;
  std::vector<double> terms(components.size());
  for (std::size_t k = 0; k < components.size(); ++k) {
    double p = proportions[k];
    if (p < 0.0 || p > 1.0) return neg_inf;
    terms[k] = (p == 0.0) ? neg_inf : std::log(p) + components[k].log_density(s, x);
    m = std::max(m, terms[k]);
  }
  if (m == neg_inf) return neg_inf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

inline double int_mixture_sample(std::span<const double> proportions, const std::vector<DistributionHandle>& components,
                                 const State& s, RandomSource& rng) {
  std::size_t k = rng.categorical(proportions);
  return components[k].sample(s, rng);
}

}  // namespace tempo
