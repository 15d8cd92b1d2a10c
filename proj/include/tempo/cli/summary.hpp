#pragma once

// Posterior summaries: shortest empirical interval and batch-means ESS.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tempo::cli {

// Shortest window holding ceil(level * n) sorted points; ties go to the
// leftmost window.
inline std::pair<double, double> hdi(std::vector<double> xs, double level = 0.90) {
  if (xs.size() < 2) throw std::invalid_argument("hdi: need at least two samples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("hdi: level must be in (0,1)");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  auto m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
  m = std::clamp<std::size_t>(m, 1, n);
  std::size_t best = 0;
  double width = xs[m - 1] - xs[0];
  for (std::size_t j = 1; j + m <= n; ++j) {
    double w = xs[j + m - 1] - xs[j];
    if (w < width) {
      width = w;
      best = j;
    }
  }
  return {xs[best], xs[best + m - 1]};
}

inline double sample_variance(const std::vector<double>& xs) {
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

// sqrt(n)-size batches: ESS = n s^2 / (b Var(batch means)).
inline double ess_batch(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  if (n < 9) throw std::invalid_argument("ess_batch: need at least 9 samples");
  auto b = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  std::size_t k = n / b;
  std::vector<double> means(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < b; ++i) means[j] += xs[j * b + i];
    means[j] /= static_cast<double>(b);
  }
  double batch_var = sample_variance(means);
  if (!(batch_var > 0.0)) return static_cast<double>(n);
  return static_cast<double>(n) * sample_variance(xs) / (static_cast<double>(b) * batch_var);
}

struct Summary {
  double mean = 0, sd = 0, min = 0, median = 0, max = 0, hdi_lower = 0, hdi_upper = 0;
};

inline Summary summarize(std::vector<double> xs, double level = 0.90) {
  if (xs.empty()) throw std::invalid_argument("summarize: no samples");
  Summary s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  s.sd = xs.size() > 1 ? std::sqrt(sample_variance(xs)) : 0.0;
  std::sort(xs.begin(), xs.end());
  s.min = xs.front();
  s.max = xs.back();
  std::size_t n = xs.size();
  s.median = n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  if (n >= 2) {
    std::tie(s.hdi_lower, s.hdi_upper) = hdi(xs, level);
  } else {
    s.hdi_lower = s.hdi_upper = xs[0];
  }
  return s;
}

}  // namespace tempo::cli
