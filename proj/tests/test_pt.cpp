#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "tempo/laws.hpp"
#include "tempo/models.hpp"
#include "tempo/pt.hpp"
#include "tempo/testkit.hpp"

using namespace tempo;

namespace {

const double conjugate_log_z = -0.5 * std::log(2 * M_PI * 2.0);

ReplicaEnsemble identical_ensemble(std::size_t n) {
  std::vector<State> st(n);
  std::vector<LikelihoodSummary> ls(n, LikelihoodSummary{-1.0, 0});
  return ReplicaEnsemble(st, ls, uniform_schedule(n));
}

// Accept-all DEO moves every replica around a cycle of 2N phases: phases
// 0..N-1 climb chains 0..N-1, phases N..2N-1 descend N-1..0 (one idle scan at
// each end). Restarts are arrivals at the top after a visit to the bottom.
std::size_t closed_form_restarts(std::size_t n, std::size_t scans) {
  if (n < 2) return 0;
  std::size_t period = 2 * n, total = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t phi0 = c % 2 == 0 ? c : 2 * n - 1 - c;
    std::size_t first_bottom = scans + 1;
    for (std::size_t k = 0; k <= scans; ++k) {
      std::size_t ph = (phi0 + k) % period;
      if (ph == 0 || ph == period - 1) {
        first_bottom = k;
        break;
      }
    }
    for (std::size_t k = 1; k <= scans; ++k)
      if ((phi0 + k) % period == n - 1 && k > first_bottom) ++total;
  }
  return total;
}

}  // namespace

TEST(Pt, SwapLogRatioExamples) {
  LikelihoodSummary a{-1.0, 0}, b{-5.0, 0};
  // oracle: log gamma_ti(x_j) + log gamma_tj(x_i) - log gamma_ti(x_i) - log gamma_tj(x_j)
  double direct = (0.2 * -5.0 + 0.8 * -1.0) - (0.2 * -1.0 + 0.8 * -5.0);
  EXPECT_NEAR(direct, 2.4, 1e-12);
  EXPECT_NEAR(swap_log_ratio(0.2, 0.8, a, b), direct, 1e-12);
  EXPECT_EQ(swap_log_ratio(0.2, 0.8, a, a), 0.0);
  EXPECT_EQ(swap_log_ratio(0.5, 0.5, a, b), 0.0);
  EXPECT_EQ(swap_acceptance(0.0), 1.0);
  EXPECT_NEAR(swap_acceptance(-2.4), std::exp(-2.4), 1e-15);
  // a zero-likelihood state cannot be swapped into t = 1
  LikelihoodSummary z{0.0, 1};
  EXPECT_EQ(swap_log_ratio(0.5, 1.0, z, a), neg_inf);
  EXPECT_EQ(swap_log_ratio(0.5, 1.0, a, z), std::numeric_limits<double>::infinity());
  // widening terms agree with the generic formula
  double generic = (annealed_likelihood(a, 0.3) + annealed_likelihood(z, 0.6)) - (annealed_likelihood(z, 0.3) + annealed_likelihood(a, 0.6));
  EXPECT_DOUBLE_EQ(swap_log_ratio(0.3, 0.6, z, a), generic);
}

TEST(Pt, NonAdjacentPairIsAnError) {
  auto e = identical_ensemble(4);
  EXPECT_THROW(e.log_ratio(0, 2), std::invalid_argument);
  EXPECT_NO_THROW(e.log_ratio(2, 1));
}

TEST(Pt, DeoParity) {
  auto e = identical_ensemble(2);
  MersenneRandom rng(1);
  std::vector<std::size_t> swaps;
  for (std::size_t s = 0; s < 6; ++s) {
    auto before = e.replica_at;
    e.deo_swap_phase(s, rng);
    swaps.push_back(before != e.replica_at);
  }
  EXPECT_EQ(swaps, (std::vector<std::size_t>{1, 0, 1, 0, 1, 0}));
}

TEST(Pt, IdenticalStatesAlwaysSwap) {
  auto e = identical_ensemble(5);
  MersenneRandom rng(1);
  e.deo_swap_phase(0, rng);
  e.deo_swap_phase(1, rng);
  // replica 0 climbs two chains, replica 4 descends two (4 -> 3 on odd scan only)
  EXPECT_EQ(e.chain_of[0], 2u);
  EXPECT_EQ(e.chain_of[1], 0u);
  EXPECT_EQ(e.chain_of[4], 3u);
  for (double r : e.rejection_sums) EXPECT_EQ(r, 0.0);
}

TEST(Pt, ThreeChainRestartAfterTwoScans) {
  auto e = identical_ensemble(3);
  MersenneRandom rng(1);
  e.deo_swap_phase(0, rng);
  EXPECT_EQ(e.total_restarts(), 0u);
  e.deo_swap_phase(1, rng);
  EXPECT_EQ(e.chain_of[0], 2u);
  EXPECT_EQ(e.restarts[0], 1u);
  EXPECT_EQ(e.total_restarts(), 1u);
}

TEST(Pt, AcceptAllRestartsMatchClosedForm) {
  std::function<bool(double)> yes = [](double) { return true; };
  for (std::size_t n : {2u, 3u, 4u, 5u}) {
    auto e = identical_ensemble(n);
    MersenneRandom rng(1);
    for (std::size_t s = 1; s <= 100; ++s) {
      e.deo_swap_phase(s - 1, rng, &yes);
      ASSERT_EQ(e.total_restarts(), closed_form_restarts(n, s)) << "N=" << n << " S=" << s;
    }
  }
  // long-run restart rate 1/(2 + Lambda) with Lambda = 0
  auto e = identical_ensemble(6);
  MersenneRandom rng(1);
  const std::size_t S = 12000;
  for (std::size_t s = 0; s < S; ++s) e.deo_swap_phase(s, rng, &yes);
  EXPECT_NEAR(static_cast<double>(e.total_restarts()) / S, 0.5, 0.002);
}

TEST(Pt, EnsembleInvariantsUnderRandomSwaps) {
  std::vector<State> st(6);
  std::vector<LikelihoodSummary> ls;
  MersenneRandom rng(4);
  for (int i = 0; i < 6; ++i) ls.push_back({-10.0 * rng.uniform01(), 0});
  ReplicaEnsemble e(st, ls, uniform_schedule(6));
  for (std::size_t s = 0; s < 500; ++s) {
    e.deo_swap_phase(s, rng);
    for (std::size_t c = 0; c < 6; ++c) ASSERT_EQ(e.chain_of[e.replica_at[c]], c);
    for (double r : e.rejection_sums) {
      ASSERT_GE(r, 0.0);
      ASSERT_LE(r, static_cast<double>(e.scans));
    }
    // shuffle likelihoods to keep swaps interesting
    for (auto& l : e.summaries) l.log_positive = -10.0 * rng.uniform01();
  }
  for (double r : e.rejection_rates()) {
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Pt, IndicatorStatisticsCountOnlyProposedPairs) {
  std::vector<State> st(3);
  std::vector<LikelihoodSummary> ls{{-1, 0}, {-3, 0}, {-2, 0}};
  ReplicaEnsemble e(st, ls, uniform_schedule(3));
  e.indicator_statistics = true;
  MersenneRandom rng(2);
  e.deo_swap_phase(0, rng);
  EXPECT_EQ(e.pair_counts, (std::vector<std::size_t>{1, 0}));
}

TEST(Pt, UpdateScheduleExamples) {
  std::vector<double> grid{0.0, 0.5, 1.0};
  EXPECT_EQ(update_schedule({0.5, 0.5}, grid).schedule, grid);
  auto flat = update_schedule({0.0, 0.0, 0.0}, {0.0, 0.1, 0.2, 1.0});
  EXPECT_EQ(flat.schedule, uniform_schedule(4));

  auto upd = update_schedule({0.9, 0.1}, grid);
  double t1 = upd.schedule[1];
  EXPECT_LT(t1, 0.5);
  // oracle: invert the interpolant from a dense table by linear interpolation
  const auto& f = upd.barrier.interpolant;
  const int dense = 100000;
  double prev_x = 0.0, prev_y = f(0.0), oracle = -1.0;
  for (int k = 1; k <= dense; ++k) {
    double x = static_cast<double>(k) / dense, y = f(x);
    if (y >= 0.5 && prev_y < 0.5) {
      oracle = prev_x + (0.5 - prev_y) / (y - prev_y) * (x - prev_x);
      break;
    }
    prev_x = x;
    prev_y = y;
  }
  EXPECT_NEAR(t1, oracle, 1e-3);
  EXPECT_THROW(update_schedule({1.5, 0.1}, grid), std::invalid_argument);
}

TEST(Pt, EquiRejectionGridIsAFixedPoint) {
  MersenneRandom rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 2 + static_cast<std::size_t>(rng.int_below(12));
    std::vector<double> grid{0.0};
    for (std::size_t i = 1; i + 1 < n; ++i) grid.push_back(0.0);
    grid.back() = 0.0;
    std::vector<double> cuts;
    for (std::size_t i = 1; i + 1 < n; ++i) cuts.push_back(rng.uniform01());
    std::sort(cuts.begin(), cuts.end());
    grid.assign(1, 0.0);
    for (double c : cuts) grid.push_back(c);
    grid.push_back(1.0);
    bool distinct = std::adjacent_find(grid.begin(), grid.end()) == grid.end();
    if (!distinct) continue;
    double r = 0.05 + 0.9 * rng.uniform01();
    auto upd = update_schedule(std::vector<double>(n - 1, r), grid);
    EXPECT_EQ(upd.schedule, grid);
  }
}

TEST(Pt, BarrierKnotsAndLocalBarrier) {
  std::vector<double> grid = uniform_schedule(6);
  auto lin = barrier_from_rejections({0.2, 0.2, 0.2, 0.2, 0.2}, grid);
  for (auto [t, lam] : local_barrier(lin)) EXPECT_NEAR(lam, 1.0, 1e-12) << t;
  auto zero = barrier_from_rejections({0, 0, 0, 0, 0}, grid);
  for (auto [t, lam] : local_barrier(zero)) EXPECT_EQ(lam, 0.0);

  auto spike = barrier_from_rejections({0.01, 0.01, 0.9, 0.01, 0.01}, grid);
  auto pts = local_barrier(spike);
  ASSERT_EQ(pts.size(), 1000u);
  auto best = std::max_element(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.second < b.second; });
  EXPECT_GT(best->first, grid[2]);
  EXPECT_LT(best->first, grid[3]);
  for (auto [t, lam] : pts) EXPECT_GE(lam, 0.0);

  MersenneRandom rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> rates;
    for (int i = 0; i < 5; ++i) rates.push_back(rng.uniform01());
    auto b = barrier_from_rejections(rates, grid);
    const auto& ys = b.interpolant.knots_y();
    EXPECT_EQ(ys.front(), 0.0);
    for (std::size_t i = 1; i < ys.size(); ++i) EXPECT_LE(ys[i - 1], ys[i]);
    double prev = b.interpolant(0.0);
    for (int k = 1; k <= 1000; ++k) {
      double v = b.interpolant(k / 1000.0);
      EXPECT_GE(v, prev - 1e-12);
      prev = v;
    }
    for (auto [t, lam] : local_barrier(b)) EXPECT_GE(lam, 0.0);
  }
}

TEST(Pt, EvidenceEstimatorExamples) {
  std::vector<double> grid{0.0, 0.3, 1.0};
  std::vector<std::vector<double>> constant(3, std::vector<double>(10, -2.5));
  EXPECT_NEAR(stepping_stone_logZ(constant, grid), -2.5, 1e-12);
  EXPECT_NEAR(*thermodynamic_logZ(std::vector<double>{-2.5, -2.5, -2.5}, grid), -2.5, 1e-12);
  EXPECT_NEAR(stepping_stone_logZ(std::vector<std::vector<double>>{{0.0}, {}}, {0.0, 1.0}), 0.0, 1e-15);
  std::vector<std::vector<LikelihoodSummary>> with_zero{{{-1, 0}}, {{0, 1}}, {{-1, 0}}};
  EXPECT_FALSE(thermodynamic_logZ(with_zero, grid).has_value());
  EXPECT_THROW(stepping_stone_logZ(std::vector<std::vector<double>>{{}, {1.0}}, {0.0, 1.0}), std::invalid_argument);
}

TEST(Pt, RoundStructure) {
  EXPECT_EQ(pt_round_count(1), 1u);
  EXPECT_EQ(pt_round_count(2), 1u);
  EXPECT_EQ(pt_round_count(3), 2u);
  EXPECT_EQ(pt_round_count(1000), 9u);
  for (std::size_t n = 1; n <= 5000; ++n) {
    std::size_t rounds = pt_round_count(n), total = 0;
    for (std::size_t k = 1; k <= rounds; ++k) total += pt_round_scans(n, k);
    ASSERT_EQ(total, n);
    ASSERT_GE(2 * pt_round_scans(n, rounds), n) << n;
  }
  Model m = models::conjugate_normal(0.0);
  PtConfig cfg;
  cfg.n_chains = 4;
  cfg.n_scans = 1;
  auto r = run_nrpt(m, cfg);
  EXPECT_EQ(r.rounds.size(), 1u);
  EXPECT_EQ(r.schedule, uniform_schedule(4));
  cfg.n_scans = 100;
  r = run_nrpt(m, cfg);
  ASSERT_EQ(r.rounds.size(), 6u);
  EXPECT_EQ(r.rounds.back().scans, 69u);
  std::size_t total = 0;
  for (std::size_t k = 0; k < r.rounds.size(); ++k) {
    total += r.rounds[k].scans;
    if (k + 1 < r.rounds.size()) {
      EXPECT_EQ(r.rounds[k].scans, std::size_t{1} << k);
    }
  }
  EXPECT_EQ(total, 100u);
  EXPECT_EQ(r.samples.size(), r.rounds.back().scans);
  cfg.adapt_fraction = 0.0;
  r = run_nrpt(m, cfg);
  EXPECT_EQ(r.schedule, uniform_schedule(4));
}

TEST(Pt, ConjugateEvidence) {
  Model m = models::conjugate_normal(0.0);
  PtConfig cfg;
  cfg.n_chains = 16;
  cfg.n_scans = 4096;
  std::vector<double> ss, ti;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    cfg.seed = seed;
    auto r = run_nrpt(m, cfg);
    ss.push_back(*r.log_z);
    ti.push_back(*r.log_z_thermodynamic);
    EXPECT_GT(r.barrier.global(), 0.0);
  }
  for (double v : ss) EXPECT_NEAR(v, conjugate_log_z, 0.05);
  for (double v : ti) EXPECT_NEAR(v, conjugate_log_z, 0.05);
}

TEST(Pt, PosteriorMatchesEnumerationOnDiscreteModel) {
  const std::vector<double> init{0.5, 0.5};
  const models::Matrix P{{0.8, 0.2}, {0.3, 0.7}}, E{{0.9, 0.1}, {0.2, 0.8}};
  const std::vector<std::int64_t> obs{0, 1, 1};
  Model m = models::hmm(init, P, E, obs);
  VarId x = m.id_of("x");
  // exact posterior over the 8 hidden paths
  std::vector<double> exact(8, 0.0);
  double z = 0.0;
  for (int mask = 0; mask < 8; ++mask) {
    double p = init[mask & 1] * E[mask & 1][obs[0]];
    for (int k = 1; k < 3; ++k) {
      int a = (mask >> (k - 1)) & 1, b = (mask >> k) & 1;
      p *= P[a][b] * E[b][obs[k]];
    }
    exact[mask] = p;
    z += p;
  }
  for (double& e : exact) e /= z;
  EXPECT_NEAR(z, models::hmm_evidence(init, P, E, obs), 1e-14);

  PtConfig cfg;
  cfg.n_chains = 4;
  cfg.n_scans = 40000;
  std::vector<double> counts(8, 0.0);
  cfg.keep_samples = false;
  cfg.on_sample = [&](std::size_t, const State& s) {
    int mask = 0;
    for (int k = 0; k < 3; ++k) mask |= static_cast<int>(s.integer(x, static_cast<std::size_t>(k))) << k;
    counts[static_cast<std::size_t>(mask)] += 1;
  };
  auto r = run_nrpt(m, cfg);
  double n = 0.0;
  for (double c : counts) n += c;
  EXPECT_EQ(n, static_cast<double>(r.rounds.back().scans));
  // 3 sigma multinomial bounds, inflated for autocorrelation
  for (int k = 0; k < 8; ++k) {
    double sd = std::sqrt(exact[k] * (1 - exact[k]) / n);
    EXPECT_NEAR(counts[k] / n, exact[k], 3 * sd * 2.0) << k;
  }
  EXPECT_NEAR(*r.log_z, std::log(z), 0.05);
}

TEST(Pt, OutputIndependentOfThreadCount) {
  Model m = models::doomsday();
  PtConfig cfg;
  cfg.n_chains = 6;
  cfg.n_scans = 300;
  cfg.threads = 1;
  auto a = run_nrpt(m, cfg);
  cfg.threads = 4;
  auto b = run_nrpt(m, cfg);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.log_z, b.log_z);
  EXPECT_EQ(a.schedule, b.schedule);
}

TEST(Pt, SingleChainMcmcAllowsNonGenerativeModels) {
  ModelBuilder b;
  VarId x = b.add_variable("x", Kind::real_scalar(), Status::latent, 0.0);
  b.add_factor({VarRef{x}}, [x](const State& s) { return -0.5 * s.real(x) * s.real(x); });
  Model m = b.build();
  PtConfig cfg;
  cfg.n_chains = 1;
  cfg.n_scans = 20000;
  auto r = run_nrpt(m, cfg);
  EXPECT_FALSE(r.log_z.has_value());
  double mean = 0.0, sq = 0.0;
  for (const auto& s : r.samples) {
    mean += s.real(x);
    sq += s.real(x) * s.real(x);
  }
  mean /= static_cast<double>(r.samples.size());
  sq /= static_cast<double>(r.samples.size());
  EXPECT_NEAR(mean, 0.0, 0.1);
  EXPECT_NEAR(sq, 1.0, 0.1);
  cfg.n_chains = 3;
  EXPECT_THROW(run_nrpt(m, cfg), ModelError);
}

TEST(Pt, ScmInitializationCoversEveryChain) {
  Model m = models::doomsday();
  PtConfig cfg;
  cfg.n_chains = 5;
  auto states = detail::scm_initial_states(m, uniform_schedule(5), cfg);
  ASSERT_EQ(states.size(), 5u);
  AnnealedDensity d(m);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_GT(d.annealed_log_density(states[c], uniform_schedule(5)[c]), neg_inf);
}
