#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace tempo {

// 64-bit finalizer from splitmix64; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(mix64(a) ^ (b + 0x632be59bd9b4e019ULL)); }

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return mix64(mix64(a, b), c); }

class RandomSource {
 public:
  virtual ~RandomSource() = default;

  // uniform on [0, 1)
  virtual double uniform01() = 0;
  virtual bool bernoulli(double p) = 0;
  // weights need not be normalized; zero entries are never selected
  virtual std::size_t categorical(std::span<const double> weights) = 0;
  virtual std::int64_t int_below(std::int64_t n) = 0;

  // An independent stream keyed by `stream`. Sources that cannot be split
  // (exhaustive enumeration) return a forwarding view of themselves.
  virtual std::unique_ptr<RandomSource> split(std::uint64_t stream) = 0;
  virtual bool parallel_safe() const { return true; }
};

class MersenneRandom final : public RandomSource {
 public:
  explicit MersenneRandom(std::uint64_t seed = 1) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  double uniform01() override { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) override {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bernoulli: probability outside [0,1]");
    return uniform01() < p;
  }

  std::size_t categorical(std::span<const double> weights) override {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("categorical: negative or NaN weight");
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("categorical: weights sum to zero");
    double u = uniform01() * total;
    std::size_t last = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      last = i;
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return last;
  }

  std::int64_t int_below(std::int64_t n) override {
    if (n <= 0) throw std::invalid_argument("int_below: n must be positive");
    auto bound = static_cast<std::uint64_t>(n);
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::int64_t>(x % bound);
  }

  std::unique_ptr<RandomSource> split(std::uint64_t stream) override {
    return std::make_unique<MersenneRandom>(mix64(seed_, stream));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Continuous and composite generators built on the primitives. These avoid
// <random> distributions so streams are reproducible across standard libraries.
namespace gen {

inline double uniform_open(RandomSource& r) {
  double u;
  do {
    u = r.uniform01();
  } while (u == 0.0);
  return u;
}

inline double uniform(RandomSource& r, double lo, double hi) { return lo + (hi - lo) * r.uniform01(); }

inline double exponential(RandomSource& r, double rate = 1.0) { return -std::log(uniform_open(r)) / rate; }

// Marsaglia polar method; the second variate is discarded to keep the
// generator stateless.
inline double normal(RandomSource& r) {
  for (;;) {
    double a = 2.0 * r.uniform01() - 1.0;
    double b = 2.0 * r.uniform01() - 1.0;
    double s = a * a + b * b;
    if (s > 0.0 && s < 1.0) return a * std::sqrt(-2.0 * std::log(s) / s);
  }
}

inline double normal(RandomSource& r, double mean, double variance) { return mean + std::sqrt(variance) * normal(r); }

// Marsaglia and Tsang, with the shape < 1 boost.
inline double gamma(RandomSource& r, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw std::invalid_argument("gamma: shape and rate must be positive");
  if (shape < 1.0) {
    double g = gamma(r, shape + 1.0, 1.0);
    return g * std::pow(uniform_open(r), 1.0 / shape) / rate;
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal(r);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform_open(r);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

inline double beta(RandomSource& r, double a, double b) {
  double x = gamma(r, a, 1.0);
  double y = gamma(r, b, 1.0);
  return x / (x + y);
}

inline std::int64_t poisson(RandomSource& r, double mean) {
  if (!(mean >= 0.0)) throw std::invalid_argument("poisson: negative mean");
  if (mean == 0.0) return 0;
  if (mean < 30.0) {
    double limit = std::exp(-mean);
    double prod = uniform_open(r);
    std::int64_t k = 0;
    while (prod > limit) {
      prod *= uniform_open(r);
      ++k;
    }
    return k;
  }
  // split large means through the gamma/binomial recursion
  auto m = static_cast<std::int64_t>(std::floor(mean * 7.0 / 8.0));
  double g = gamma(r, static_cast<double>(m), 1.0);
  if (g > mean) {
    // binomial(m - 1, mean / g)
    double p = mean / g;
    std::int64_t k = 0;
    for (std::int64_t i = 0; i < m - 1; ++i)
      if (r.uniform01() < p) ++k;
    return k;
  }
  return m + poisson(r, mean - g);
}

inline std::int64_t binomial(RandomSource& r, std::int64_t n, double p) {
  if (n < 0 || !(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial: invalid parameters");
  std::int64_t k = 0;
  for (std::int64_t i = 0; i < n; ++i)
    if (r.bernoulli(p)) ++k;
  return k;
}

inline std::int64_t geometric(RandomSource& r, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("geometric: p outside (0,1]");
  if (p == 1.0) return 0;
  return static_cast<std::int64_t>(std::floor(std::log(uniform_open(r)) / std::log1p(-p)));
}

// successes before r failures, success probability p
inline std::int64_t negative_binomial(RandomSource& r, double failures, double p) {
  if (!(failures > 0.0) || !(p >= 0.0 && p < 1.0)) throw std::invalid_argument("negative_binomial: invalid parameters");
  if (p == 0.0) return 0;
  double lambda = gamma(r, failures, (1.0 - p) / p);
  return poisson(r, lambda);
}

inline std::vector<double> dirichlet(RandomSource& r, std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) total += out[i] = gamma(r, alpha[i], 1.0);
  for (double& x : out) x /= total;
  return out;
}

inline double student_t(RandomSource& r, double nu) {
  double z = normal(r);
  double chi2 = 2.0 * gamma(r, nu / 2.0, 1.0);
  return z / std::sqrt(chi2 / nu);
}

// Fisher-Yates over the current contents.
template <class T>
void shuffle(RandomSource& r, std::span<T> xs) {
  for (std::size_t i = xs.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(r.int_below(static_cast<std::int64_t>(i)));
    std::swap(xs[i - 1], xs[j]);
  }
}

}  // namespace gen
}  // namespace tempo
