#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "tempo/laws.hpp"
#include "tempo/models.hpp"
#include "tempo/scm.hpp"
#include "tempo/testkit.hpp"

using namespace tempo;

namespace {

const double conjugate_log_z = -0.5 * std::log(2 * M_PI * 2.0);  // log N(0; 0, 2)

std::vector<LikelihoodSummary> summaries_of(std::vector<double> ell) {
  std::vector<LikelihoodSummary> out;
  for (double l : ell) out.push_back({l, 0});
  return out;
}

// two hidden binary states, one binary observation each; the first emission
// factor carries an extra constant c
Model tiny_hmm(double c = 0.0) {
  ModelBuilder b;
  VarId x = b.add_variable("x", Kind::int_list(2), Status::latent);
  VarId y = b.add_variable("y", Kind::int_list(2), Status::observed, std::vector<std::int64_t>{1, 0});
  const models::Matrix P{{0.7, 0.3}, {0.2, 0.8}}, E{{0.9, 0.1}, {0.25, 0.75}};
  add_distribution_law(b, "Categorical", VarRef{x, 0}, {constant_vector({0.4, 0.6})});
  add_distribution_law(b, "Categorical", VarRef{x, 1}, {models::detail::matrix_row(std::make_shared<models::Matrix>(P), x, 0)});
  b.add_factor({VarRef{x, 0}, VarRef{y, 0}},
               [x, y, E, c](const State& s) {
                 auto h = s.integer(x, 0);
                 if (h < 0 || h > 1) return neg_inf;
                 return std::log(E[h][s.integer(y, 0)]) + c;
               },
               [x, y, E](State& s, RandomSource& r) { s.integer(y, 0) = static_cast<std::int64_t>(r.categorical(E[s.integer(x, 0)])); },
               {VarRef{y, 0}});
  add_distribution_law(b, "Categorical", VarRef{y, 1}, {models::detail::matrix_row(std::make_shared<models::Matrix>(E), x, 1)});
  return b.build();
}

double tiny_hmm_z() {
  return models::hmm_evidence({0.4, 0.6}, {{0.7, 0.3}, {0.2, 0.8}}, {{0.9, 0.1}, {0.25, 0.75}}, {1, 0});
}

}  // namespace

TEST(Scm, RelativeEssExamples) {
  std::vector<double> eq(7, -3.2);
  EXPECT_NEAR(relative_ess(eq), 1.0, 1e-14);
  std::vector<double> one{neg_inf, 0.0, neg_inf, neg_inf};
  EXPECT_NEAR(relative_ess(one), 0.25, 1e-14);
  std::vector<double> w{std::log(0.5), std::log(0.25), std::log(0.25)};
  EXPECT_NEAR(relative_ess(w), 1.0 / (3 * 0.375), 1e-14);
  std::vector<double> dead{neg_inf, neg_inf};
  EXPECT_THROW(relative_ess(dead), std::invalid_argument);
}

TEST(Scm, NextTemperatureIdenticalLikelihoodsJumpToOne) {
  std::vector<double> lw(5, 0.0);
  auto s = summaries_of({-4, -4, -4, -4, -4});
  EXPECT_EQ(next_temperature(lw, s, 0.0, 0.9999), 1.0);
  EXPECT_EQ(next_temperature(lw, s, 0.37, 0.5), 1.0);
}

TEST(Scm, NextTemperatureMatchesGridScan) {
  std::vector<double> lw{0.0, 0.0};
  auto s = summaries_of({0.0, -10.0});
  double tn = next_temperature(lw, s, 0.0, 0.9999);
  // oracle: rCESS(t') = (1 + e^{-10t'})^2 / (2 (1 + e^{-20t'})), first grid point below threshold
  auto rcess = [](double x) { return std::pow(1 + std::exp(-10 * x), 2) / (2 * (1 + std::exp(-20 * x))); };
  double grid = 0.0;
  for (double x = 0.0; x <= 1.0; x += 1e-6)
    if (rcess(x) < 0.9999) {
      grid = x;
      break;
    }
  EXPECT_NEAR(tn, grid, 1e-6);
  EXPECT_NEAR(relative_conditional_ess(lw, s, 0.0, tn), 0.9999, 1e-6);
  EXPECT_GT(tn, 0.0);
}

TEST(Scm, NextTemperatureShrinksAsThresholdApproachesOne) {
  std::vector<double> lw{0.0, -0.3, 0.1};
  auto s = summaries_of({-1.0, -7.0, -3.0});
  double prev = 1.0;
  for (double thr : {0.5, 0.9, 0.99, 0.999, 0.99999, 0.9999999}) {
    double tn = next_temperature(lw, s, 0.2, thr);
    EXPECT_GT(tn, 0.2);
    EXPECT_LE(tn, prev);
    prev = tn;
  }
  EXPECT_LT(prev - 0.2, 1e-2);
  EXPECT_THROW(next_temperature(lw, s, 1.0, 0.5), std::invalid_argument);
  EXPECT_THROW(next_temperature(lw, s, 0.1, 1.0), std::invalid_argument);
}

TEST(Scm, ResampleExamples) {
  MersenneRandom rng(1);
  std::vector<double> single{-5.0};
  EXPECT_EQ(resample_indices(single, ResamplingScheme::stratified, rng), std::vector<std::size_t>{0});
  EXPECT_EQ(resample_indices(single, ResamplingScheme::multinomial, rng), std::vector<std::size_t>{0});
  std::vector<double> eq(6, 0.0);
  for (int rep = 0; rep < 50; ++rep) EXPECT_EQ(resample_indices(eq, ResamplingScheme::stratified, rng), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));

  // (0.75, 0.25): particle 0 gets 2 offspring with probability 1/2, else 1
  std::vector<double> w{std::log(0.75), std::log(0.25)};
  std::map<int, double> counts;
  for_each_trace(
      [&](RandomSource& r) {
        auto idx = resample_indices(w, ResamplingScheme::stratified, r);
        return static_cast<int>(std::count(idx.begin(), idx.end(), 0u));
      },
      [&](int c, double p) { counts[c] += p; });
  ASSERT_EQ(counts.size(), 2u);
  EXPECT_NEAR(counts[1], 0.5, 1e-15);
  EXPECT_NEAR(counts[2], 0.5, 1e-15);
}

TEST(Scm, ResamplingPreservesWeightedMeanInExpectation) {
  std::vector<double> f{1.5, -2.0, 7.0};
  for (auto scheme : {ResamplingScheme::stratified, ResamplingScheme::multinomial})
    for (std::vector<double> w : {std::vector<double>{0.2, 0.8}, std::vector<double>{0.1, 0.6, 0.3}, std::vector<double>{0.0, 0.5, 0.5}}) {
      std::vector<double> lw;
      double target = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        lw.push_back(std::log(w[i]));
        target += w[i] * f[i];
      }
      double expect = 0.0;
      for_each_trace(
          [&](RandomSource& r) {
            auto idx = resample_indices(lw, scheme, r);
            double m = 0.0;
            for (auto a : idx) m += f[a];
            return m / static_cast<double>(idx.size());
          },
          [&](double m, double p) { expect += m * p; });
      EXPECT_NEAR(expect, target, 1e-12);
    }
}

TEST(Scm, StratifiedMatchesContinuousStrataInDistribution) {
  // compare offspring frequencies with the textbook uniform-per-stratum rule
  std::vector<double> w{0.05, 0.4, 0.15, 0.3, 0.1};
  std::vector<double> lw;
  for (double x : w) lw.push_back(std::log(x));
  MersenneRandom rng(3), ref(4);
  const int reps = 40000;
  std::vector<double> ours(5, 0.0), theirs(5, 0.0);
  for (int r = 0; r < reps; ++r) {
    for (auto a : resample_indices(lw, ResamplingScheme::stratified, rng)) ours[a] += 1;
    double cum = 0.0;
    std::size_t j = 0;
    cum = w[0];
    for (int i = 0; i < 5; ++i) {
      double u = (i + ref.uniform01()) / 5.0;
      while (u >= cum && j + 1 < 5) cum += w[++j];
      theirs[j] += 1;
    }
  }
  for (int j = 0; j < 5; ++j) {
    EXPECT_NEAR(ours[j] / (5.0 * reps), w[j], 0.005);
    EXPECT_NEAR(theirs[j] / (5.0 * reps), w[j], 0.005);
  }
}

TEST(Scm, NoLikelihoodMeansLogZZeroInOneStep) {
  ModelBuilder b;
  VarId x = b.add_variable("x", Kind::real_scalar(), Status::latent);
  add_distribution_law(b, "Normal", VarRef{x}, {constant(0.0), constant(1.0)});
  Model m = b.build();
  ScmConfig cfg;
  cfg.n_particles = 50;
  auto r = run_scm(m, cfg);
  EXPECT_EQ(r.log_z, 0.0);
  EXPECT_EQ(r.schedule, (std::vector<double>{0.0, 1.0}));
  auto a = run_ais(m, cfg);
  EXPECT_EQ(a.log_z, 0.0);
}

TEST(Scm, ConjugateNormalEvidence) {
  Model m = models::conjugate_normal(0.0);
  ScmConfig cfg;
  cfg.n_particles = 10000;
  std::vector<double> est;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    cfg.seed = seed;
    est.push_back(run_scm(m, cfg).log_z);
  }
  double mean = 0.0, var = 0.0;
  for (double e : est) mean += e;
  mean /= static_cast<double>(est.size());
  for (double e : est) var += (e - mean) * (e - mean);
  double se = std::sqrt(var / static_cast<double>(est.size() - 1));
  EXPECT_NEAR(est[0], conjugate_log_z, std::max(3 * se, 1e-3));
  EXPECT_NEAR(mean, conjugate_log_z, std::max(3 * se / std::sqrt(8.0), 1e-3));
}

TEST(Scm, AisConjugateEvidenceAndUnequalWeights) {
  Model m = models::conjugate_normal(0.0);
  ScmConfig cfg;
  cfg.n_particles = 10000;
  cfg.fixed_schedule = std::vector<double>{0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> est;
  ScmResult first;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    cfg.seed = seed;
    auto r = run_ais(m, cfg);
    if (seed == 1) first = r;
    est.push_back(r.log_z);
  }
  double mean = 0.0, var = 0.0;
  for (double e : est) mean += e;
  mean /= static_cast<double>(est.size());
  for (double e : est) var += (e - mean) * (e - mean);
  double se = std::sqrt(var / static_cast<double>(est.size() - 1));
  EXPECT_NEAR(est[0], conjugate_log_z, std::max(3 * se, 1e-3));
  EXPECT_TRUE(std::any_of(first.resampled.begin(), first.resampled.end(), [](char c) { return c; }) == false);
  auto [lo, hi] = std::minmax_element(first.log_weights.begin(), first.log_weights.end());
  EXPECT_LT(*lo, *hi);
}

TEST(Scm, AdaptiveScheduleIncreasesToOne) {
  for (const Model& m : {models::conjugate_normal(3.0), models::doomsday()}) {
    ScmConfig cfg;
    cfg.n_particles = 500;
    auto r = run_scm(m, cfg);
    ASSERT_GE(r.schedule.size(), 2u);
    EXPECT_EQ(r.schedule.front(), 0.0);
    EXPECT_EQ(r.schedule.back(), 1.0);
    for (std::size_t i = 1; i < r.schedule.size(); ++i) EXPECT_LT(r.schedule[i - 1], r.schedule[i]);
    for (double e : r.relative_ess) {
      EXPECT_GT(e, 0.0);
      EXPECT_LE(e, 1.0 + 1e-12);
    }
    EXPECT_EQ(r.particles.size(), 500u);
  }
}

TEST(Scm, NonGenerativeModelRejected) {
  ModelBuilder b;
  VarId x = b.add_variable("orphan", Kind::real_scalar(), Status::latent);
  b.add_factor({VarRef{x}}, [x](const State& s) { return -s.real(x) * s.real(x); });
  Model m = b.build();
  EXPECT_THROW(run_scm(m, ScmConfig{}), ModelError);
}

TEST(Scm, UnbiasedOverAllTraces) {
  Model m = tiny_hmm();
  std::vector<UnitId> hidden{m.unit_of(m.id_of("x"), 0), m.unit_of(m.id_of("x"), 1)};
  std::vector<KernelInstance> kernels{cyclic_mh_kernel(m, hidden, 2)};
  for (auto scheme : {ResamplingScheme::multinomial, ResamplingScheme::stratified}) {
    ScmConfig cfg;
    cfg.n_particles = 2;
    cfg.fixed_schedule = std::vector<double>{0.0, 0.3, 0.6, 1.0};
    cfg.scheme = scheme;
    cfg.force_resampling = true;
    cfg.n_final_rejuvenations = 0;
    cfg.kernels = &kernels;
    auto ez = expected_z_estimate([&](RandomSource& r) { return run_scm(m, cfg, r).log_z; });
    EXPECT_NEAR(ez.total_probability, 1.0, 1e-12);
    EXPECT_NEAR(ez.expectation, tiny_hmm_z(), 1e-10);
  }
  // AIS is unbiased too
  ScmConfig ais;
  ais.n_particles = 2;
  ais.fixed_schedule = std::vector<double>{0.0, 0.5, 1.0};
  ais.n_final_rejuvenations = 0;
  ais.kernels = &kernels;
  auto ez = expected_z_estimate([&](RandomSource& r) { return run_ais(m, ais, r).log_z; });
  EXPECT_NEAR(ez.expectation, tiny_hmm_z(), 1e-10);
}

TEST(Scm, UnbiasedWithEssTriggeredResampling) {
  Model m = tiny_hmm();
  std::vector<UnitId> hidden{m.unit_of(m.id_of("x"), 0), m.unit_of(m.id_of("x"), 1)};
  std::vector<KernelInstance> kernels{cyclic_mh_kernel(m, hidden, 2)};
  ScmConfig cfg;
  cfg.n_particles = 2;
  cfg.fixed_schedule = std::vector<double>{0.0, 0.5, 1.0};
  cfg.ess_threshold = 0.9;
  cfg.n_final_rejuvenations = 0;
  cfg.kernels = &kernels;
  std::ostringstream report;
  auto ez = expected_z_estimate([&](RandomSource& r) { return run_scm(m, cfg, r).log_z; }, tiny_hmm_z(), &report);
  EXPECT_NEAR(ez.expectation, tiny_hmm_z(), 1e-10);
  EXPECT_NE(report.str().find("nProgramTraces = "), std::string::npos);
  EXPECT_NE(report.str().find("expected Z estimate over all traces: "), std::string::npos);
}

TEST(Scm, ConstantLikelihoodFactorShiftsLogZExactly) {
  const double c = 1.7;
  Model a = tiny_hmm(), b = tiny_hmm(c);
  auto kern = [](const Model& m) {
    std::vector<UnitId> hidden{m.unit_of(m.id_of("x"), 0), m.unit_of(m.id_of("x"), 1)};
    return std::vector<KernelInstance>{cyclic_mh_kernel(m, hidden, 2)};
  };
  auto ka = kern(a), kb = kern(b);
  ScmConfig cfg;
  cfg.n_particles = 2;
  cfg.fixed_schedule = std::vector<double>{0.0, 0.5, 1.0};
  cfg.force_resampling = true;
  cfg.n_final_rejuvenations = 0;
  cfg.kernels = &ka;
  auto za = enumerate_traces<double>([&](RandomSource& r) { return run_scm(a, cfg, r).log_z; });
  cfg.kernels = &kb;
  auto zb = enumerate_traces<double>([&](RandomSource& r) { return run_scm(b, cfg, r).log_z; });
  // rounding can add or drop zero-probability branches, so compare the law
  // of log Z rather than trace by trace
  auto law = [](const std::vector<std::pair<double, double>>& traces, double shift) {
    std::map<long long, double> out;
    for (auto [lz, p] : traces) out[std::llround((lz - shift) * 1e8)] += p;
    return out;
  };
  auto la = law(za, 0.0), lb = law(zb, c);
  ASSERT_EQ(la.size(), lb.size());
  for (auto ia = la.begin(), ib = lb.begin(); ia != la.end(); ++ia, ++ib) {
    EXPECT_EQ(ia->first, ib->first);
    EXPECT_NEAR(ia->second, ib->second, 1e-12);
  }
}

TEST(Scm, OutputIndependentOfThreadCount) {
  Model m = models::doomsday();
  ScmConfig cfg;
  cfg.n_particles = 200;
  cfg.threads = 1;
  auto a = run_scm(m, cfg);
  cfg.threads = 4;
  auto b = run_scm(m, cfg);
  EXPECT_EQ(a.log_z, b.log_z);
  EXPECT_EQ(a.schedule, b.schedule);
  EXPECT_EQ(a.particles, b.particles);
}

TEST(Scm, VisitHookSeesRequestedTemperatures) {
  Model m = models::conjugate_normal(1.0);
  ScmConfig cfg;
  cfg.n_particles = 100;
  cfg.visit_temperatures = {0.0, 0.25, 0.5, 1.0};
  std::vector<double> seen;
  cfg.on_visit = [&](double t, const std::vector<State>& ps, std::span<const double> lw, RandomSource&) {
    seen.push_back(t);
    EXPECT_EQ(ps.size(), lw.size());
  };
  auto r = run_scm(m, cfg);
  EXPECT_EQ(seen, cfg.visit_temperatures);
  for (double v : cfg.visit_temperatures) EXPECT_NE(std::find(r.schedule.begin(), r.schedule.end(), v), r.schedule.end());
}
