#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>

#include "tempo/dists.hpp"
#include "tempo/laws.hpp"
#include "tempo/models.hpp"

using namespace tempo;

namespace {

double ld(std::string_view name, std::initializer_list<double> p, double x) { return log_density(name, p, x); }

double ld_vec(std::string_view name, std::vector<Arg> params, std::vector<double> x) {
  return log_density(name, params, Arg::of(std::span<const double>(x)));
}

}  // namespace

TEST(Dists, SpecExamples) {
  EXPECT_NEAR(ld("Normal", {0, 1}, 0), -0.9189385332046727, 1e-14);
  EXPECT_EQ(ld("ContinuousUniform", {2, 1}, 1.5), neg_inf);
  EXPECT_EQ(ld("ContinuousUniform", {2, 1}, -10), neg_inf);
  EXPECT_NEAR(ld("Exponential", {1}, 1), -1.0, 1e-14);
  EXPECT_NEAR(ld("Poisson", {2}, 3), 3 * std::log(2.0) - 2 - std::log(6.0), 1e-13);
  std::vector<double> alpha{1, 1};
  EXPECT_NEAR(ld_vec("Dirichlet", {Arg::of(std::span<const double>(alpha))}, {0.3, 0.7}), 0.0, 1e-13);
}

TEST(Dists, InvalidParametersGiveNegInfNotNaN) {
  EXPECT_EQ(ld("Normal", {0, -1}, 0), neg_inf);
  EXPECT_EQ(ld("Normal", {0, 0}, 0), neg_inf);
  EXPECT_EQ(ld("Bernoulli", {1.5}, 1), neg_inf);
  EXPECT_EQ(ld("Poisson", {-1}, 1), neg_inf);
  EXPECT_EQ(ld("Gamma", {-1, 1}, 1), neg_inf);
  EXPECT_EQ(ld("Beta", {1, 0}, 0.5), neg_inf);
  EXPECT_EQ(ld("Binomial", {3.5, 0.5}, 1), neg_inf);
  EXPECT_EQ(ld("Exponential", {1}, -1), neg_inf);
  EXPECT_EQ(ld("Geometric", {0}, 1), neg_inf);
  EXPECT_EQ(ld("StudentT", {-1, 0, 1}, 0), neg_inf);
  EXPECT_EQ(ld("Laplace", {0, 0}, 0), neg_inf);
  EXPECT_EQ(ld("Weibull", {-1, 1}, 1), neg_inf);
}

TEST(Dists, ErrorsForUnknownAndArity) {
  EXPECT_THROW(distribution("NoSuchThing"), DistributionError);
  try {
    distribution("Gumbel");
    FAIL();
  } catch (const DistributionError& e) {
    EXPECT_NE(std::string(e.what()).find("not implemented"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("Gumbel"), std::string::npos);
  }
  EXPECT_THROW(ld("Normal", {0}, 0), DistributionError);
}

TEST(Dists, ExponentialIsGammaOne) {
  for (double rate : {0.3, 1.0, 4.5})
    for (double x : {0.01, 0.5, 2.0, 17.0}) EXPECT_NEAR(ld("Exponential", {rate}, x), ld("Gamma", {1.0, rate}, x), 1e-12);
}

TEST(Dists, SampleExamples) {
  MersenneRandom rng(1);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(sample_scalar("Bernoulli", {1.0}, rng), 1.0);
    EXPECT_EQ(sample_scalar("DiscreteUniform", {0, 1}, rng), 0.0);
  }
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_scalar("Normal", {5, 4}, rng);
  EXPECT_NEAR(sum / n, 5.0, 0.03);
  EXPECT_THROW(sample_scalar("Normal", {0, -1}, rng), DistributionError);
}

TEST(Dists, SampleIsDeterministicGivenStream) {
  MersenneRandom a(77), b(77);
  for (const auto& name : {"Gamma", "Beta", "Weibull", "Laplace"}) {
    double x = sample_scalar(name, {2.0, 3.0}, a);
    double y = sample_scalar(name, {2.0, 3.0}, b);
    EXPECT_EQ(x, y) << name;
  }
}

// Normalization over the support: quadrature for continuous entries.
TEST(Dists, ContinuousDensitiesIntegrateToOne) {
  using boost::math::quadrature::exp_sinh;
  using boost::math::quadrature::tanh_sinh;
  struct Case {
    std::string name;
    std::vector<double> params;
    double lo, hi;  // hi = inf for half lines, lo = -inf for the real line
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Case> cases{
      {"Beta", {2.5, 1.5}, 0, 1},           {"ChiSquared", {3}, 0, inf},      {"ContinuousUniform", {-1, 2}, -1, 2},
      {"Exponential", {1.7}, 0, inf},       {"Gamma", {2.2, 0.7}, 0, inf},    {"HalfStudentT", {3, 1.5}, 0, inf},
      {"Laplace", {0.5, 2}, -inf, inf},     {"Logistic", {1, 0.5}, -inf, inf}, {"Normal", {1, 2.5}, -inf, inf},
      {"StudentT", {4, 1, 2}, -inf, inf},   {"Weibull", {1.5, 2.0}, 0, inf},
  };
  for (const auto& c : cases) {
    std::vector<Arg> ps;
    for (double p : c.params) ps.push_back(Arg::of(p));
    auto f = [&](double x) { return std::exp(log_density(c.name, ps, Arg::of(x))); };
    double total;
    if (std::isinf(c.lo)) {
      exp_sinh<double> half;
      total = half.integrate([&](double x) { return f(x) + f(-x); }, 0.0, inf);
    } else if (std::isinf(c.hi)) {
      exp_sinh<double> half;
      total = half.integrate(f, c.lo, inf);
    } else {
      tanh_sinh<double> finite;
      total = finite.integrate(f, c.lo, c.hi);
    }
    EXPECT_NEAR(total, 1.0, 1e-4) << c.name;
  }
  // two-dimensional simplex entries integrate over the first coordinate
  tanh_sinh<double> finite;
  std::vector<double> alpha{2.0, 3.5};
  double dir = finite.integrate(
      [&](double p) { return std::exp(ld_vec("Dirichlet", {Arg::of(std::span<const double>(alpha))}, {p, 1 - p})); }, 0.0, 1.0);
  EXPECT_NEAR(dir, 1.0, 1e-4);
  double sym = finite.integrate([&](double p) { return std::exp(ld_vec("SymmetricDirichlet", {Arg::of(2.0), Arg::of(3.0)}, {p, 1 - p})); },
                                0.0, 1.0);
  EXPECT_NEAR(sym, 1.0, 1e-4);
  double uni = finite.integrate([&](double p) { return std::exp(ld_vec("SimplexUniform", {Arg::of(2.0)}, {p, 1 - p})); }, 0.0, 1.0);
  EXPECT_NEAR(uni, 1.0, 1e-4);
}

TEST(Dists, DiscreteMassesSumToOne) {
  struct Case {
    std::string name;
    std::vector<double> params;
    int lo, hi;
  };
  std::vector<Case> cases{
      {"Bernoulli", {0.3}, 0, 1},          {"Binomial", {12, 0.35}, 0, 12},       {"BetaBinomial", {9, 1.5, 2.5}, 0, 9},
      {"DiscreteUniform", {-2, 5}, -2, 4}, {"Geometric", {0.4}, 0, 200},          {"NegativeBinomial", {3.5, 0.4}, 0, 400},
      {"Poisson", {4.2}, 0, 200},
  };
  for (const auto& c : cases) {
    std::vector<Arg> ps;
    for (double p : c.params) ps.push_back(Arg::of(p));
    double total = 0.0;
    for (int k = c.lo; k <= c.hi; ++k) total += std::exp(log_density(c.name, ps, Arg::of(static_cast<double>(k))));
    EXPECT_NEAR(total, 1.0, 1e-12) << c.name;
  }
  std::vector<double> probs{0.2, 0.3, 0.5};
  double total = 0.0;
  for (int k = 0; k < 3; ++k) total += std::exp(log_density("Categorical", std::vector<Arg>{Arg::of(std::span<const double>(probs))}, Arg::of(k)));
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Dists, NormalTermsSumToFullDensity) {
  const auto& spec = distribution("Normal");
  ASSERT_EQ(spec.terms.size(), 3u);
  std::vector<Arg> ps{Arg::of(1.0), Arg::of(2.0)};
  double total = 0.0;
  for (const auto& t : spec.terms) total += t.fn(ps.data(), Arg::of(0.3));
  double direct = -0.5 * std::log(2 * M_PI * 2.0) - 0.5 * std::pow(0.3 - 1.0, 2) / 2.0;
  EXPECT_NEAR(total, direct, 1e-14);
}

TEST(Dists, HandlesAndMixtures) {
  auto pois = DistributionHandle::constant("Poisson", {3.0});
  State empty;
  EXPECT_NEAR(pois.log_density(empty, 2), 2 * std::log(3.0) - 3 - std::log(2.0), 1e-13);

  std::vector<DistributionHandle> same{pois, pois};
  std::vector<double> props{0.4, 0.6};
  for (int x = 0; x < 10; ++x) EXPECT_NEAR(int_mixture_log_density(props, same, empty, x), pois.log_density(empty, x), 1e-13);

  std::vector<double> bad{1.5, -0.5};
  EXPECT_EQ(int_mixture_log_density(bad, same, empty, 1), neg_inf);
  EXPECT_THROW(DistributionHandle(distribution("Dirichlet"), {[](const State&) { return Arg{}; }}), DistributionError);
}

TEST(Dists, HandleParametersAreLazy) {
  ModelBuilder b;
  VarId lam = b.add_variable("lambda", Kind::real_scalar(), Status::latent, 2.0);
  Model m = b.build();
  State s = m.initial_state();
  DistributionHandle h(distribution("Poisson"), {[lam](const State& st) { return Arg::of(st.real(lam)); }});
  double before = h.log_density(s, 1);
  s.real(lam) = 5.0;
  EXPECT_NE(h.log_density(s, 1), before);
  EXPECT_NEAR(h.log_density(s, 1), std::log(5.0) - 5.0, 1e-13);
}

TEST(Dists, SampleMomentsMatchDensities) {
  MersenneRandom rng(11);
  const int n = 200000;
  auto mean_of = [&](std::string_view name, std::initializer_list<double> p) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sample_scalar(name, p, rng);
    return s / n;
  };
  EXPECT_NEAR(mean_of("Gamma", {3.0, 2.0}), 1.5, 0.01);
  EXPECT_NEAR(mean_of("Beta", {2.0, 6.0}), 0.25, 0.005);
  EXPECT_NEAR(mean_of("Poisson", {4.0}), 4.0, 0.02);
  EXPECT_NEAR(mean_of("Poisson", {55.0}), 55.0, 0.1);
  EXPECT_NEAR(mean_of("Geometric", {0.25}), 3.0, 0.05);
  EXPECT_NEAR(mean_of("NegativeBinomial", {3.0, 0.4}), 2.0, 0.03);
  EXPECT_NEAR(mean_of("Binomial", {10, 0.3}), 3.0, 0.02);
  EXPECT_NEAR(mean_of("Weibull", {2.0, 1.0}), 2.0, 0.02);
  EXPECT_NEAR(mean_of("ChiSquared", {5}), 5.0, 0.05);
}
