#pragma once

// The experiment driver behind the command-line tool.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "tempo/cli/args.hpp"
#include "tempo/cli/output.hpp"
#include "tempo/cli/summary.hpp"
#include "tempo/dsl.hpp"
#include "tempo/pt.hpp"
#include "tempo/scm.hpp"
#include "tempo/testkit.hpp"

namespace tempo::cli {

struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelSource {
  std::string text;
  std::string file;
};

inline ModelSource resolve_model(const std::string& name) {
  namespace fs = std::filesystem;
  if (name.size() > 3 && name.substr(name.size() - 3) == ".bl") {
    std::ifstream in(name);
    if (!in) throw RunError("cannot read model file '" + name + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return {ss.str(), name};
  }
  std::string simple = name.substr(name.find_last_of('.') == std::string::npos ? 0 : name.find_last_of('.') + 1);
  const auto& bundled = dsl::bundled_models();
  auto it = bundled.find(simple);
  if (it == bundled.end()) {
    std::vector<std::string> names;
    for (const auto& [n, s] : bundled) names.push_back(n);
    std::string known;
    for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
    throw RunError(with_suggestion("unknown model '" + name + "' (bundled: " + known + ", or a path to a .bl file)", simple, names));
  }
  return {std::string(it->second), simple + ".bl"};
}

namespace run_detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t) { return std::chrono::duration<double, std::milli>(Clock::now() - t).count(); }

class Phase {
 public:
  Phase(std::ostream& out, const std::string& name) : out_(out), start_(Clock::now()) { out_ << name << " {\n"; }
  ~Phase() { out_ << "} [ timeElapsed: " << static_cast<long long>(ms_since(start_)) << "ms ]\n"; }
  std::ostream& log() { return out_ << "  "; }

 private:
  std::ostream& out_;
  Clock::time_point start_;
};

struct Recorded {
  std::vector<State> samples;
  std::vector<double> log_density;             // per sample, when meaningful
  std::optional<std::vector<double>> weights;  // log weights (AIS) or log probabilities (Exact)
  bool chain = false;                          // successive samples of one Markov chain
};

inline std::vector<VarId> output_variables(const Model& m, bool all_random, const std::set<std::string>& exclude) {
  std::vector<VarId> out;
  for (const auto& v : m.variables())
    if (!v.param && (all_random || v.any_latent()) && !exclude.count(v.name)) out.push_back(v.id);
  return out;
}

inline void write_samples(const Model& m, const Recorded& rec, const std::vector<VarId>& vars, const ExperimentFolder& f,
                          bool compressed) {
  for (VarId v : vars) {
    const auto& decl = m.variable(v);
    CsvWriter w(f.samples() / (decl.name + ".csv"), tidy_header(decl.kind), compressed);
    for (std::size_t i = 0; i < rec.samples.size(); ++i) write_tidy(decl.kind, rec.samples[i], v, i, w);
  }
  if (!rec.log_density.empty()) {
    CsvWriter w(f.samples() / "logDensity.csv", {"sample", "value"}, compressed);
    for (std::size_t i = 0; i < rec.log_density.size(); ++i) w.row({std::to_string(i), format_number(rec.log_density[i])});
  }
}

inline void write_summaries(const Model& m, const std::vector<State>& samples, const std::vector<VarId>& vars,
                            const ExperimentFolder& f, bool chain) {
  std::unique_ptr<CsvWriter> ess;
  if (chain && samples.size() >= 9) ess = std::make_unique<CsvWriter>(f.summaries() / "ess.csv", std::vector<std::string>{"variable", "key", "ess"});
  for (VarId v : vars) {
    const auto& decl = m.variable(v);
    auto header = tidy_keys(decl.kind);
    for (const char* h : {"variable", "mean", "sd", "min", "median", "max", "HDI.lower", "HDI.upper"}) header.push_back(h);
    CsvWriter w(f.summaries() / (decl.name + ".csv"), header);
    auto first = tidy_entries(decl.kind, samples.at(0), v);
    std::vector<std::vector<double>> columns(first.size());
    for (const auto& s : samples) {
      auto e = tidy_entries(decl.kind, s, v);
      for (std::size_t k = 0; k < e.size(); ++k) columns[k].push_back(e[k].value);
    }
    for (std::size_t k = 0; k < columns.size(); ++k) {
      auto sm = summarize(columns[k]);
      auto row = first[k].keys;
      row.push_back(decl.name);
      for (double x : {sm.mean, sm.sd, sm.min, sm.median, sm.max, sm.hdi_lower, sm.hdi_upper}) row.push_back(format_number(x));
      w.row(row);
      if (ess) {
        std::string key;
        for (const auto& part : first[k].keys) key += (key.empty() ? "" : ":") + part;
        ess->row({decl.name, key, format_number(ess_batch(columns[k]))});
      }
    }
  }
}

inline std::string state_key(const Model& m, const State& s) {
  std::ostringstream o;
  o << std::setprecision(17);
  for (const auto& v : m.variables()) {
    if (v.kind.real_storage())
      for (double x : s.reals(v.id)) o << x << ',';
    else
      for (std::size_t i = 0; i < v.kind.storage_size(); ++i) o << s.integer(v.id, i) << ',';
    o << ';';
  }
  return o.str();
}

// every latent configuration reachable by the generators, weighted by the joint
inline Recorded enumerate_posterior(const Model& m, double& log_z) {
  Recorded rec;
  std::map<std::string, std::size_t> index;
  std::vector<double> lw;
  ExhaustiveRandom rng(1'000'000);
  try {
    do {
      rng.begin_trace();
      State s = m.initial_state();
      forward_simulate(m, s, rng);
      auto key = state_key(m, s);
      if (index.emplace(key, rec.samples.size()).second) {
        double l = log_joint(m, s);
        rec.samples.push_back(s);
        lw.push_back(l);
      }
    } while (rng.next_trace());
  } catch (const EnumerationError& e) {
    throw RunError(std::string("Exact needs every latent variable to be discrete with finite support (") + e.what() + ")");
  }
  log_z = log_sum_exp(lw);
  if (log_z == neg_inf) throw RunError("Exact: every configuration has zero probability");
  for (double& x : lw) x -= log_z;
  rec.weights = lw;
  return rec;
}

}  // namespace run_detail

// Runs one experiment; returns the process exit code.
inline int run_experiment(const RunConfig& cfg, std::ostream& out, std::ostream& err,
                          std::filesystem::path* folder_out = nullptr) {
  using namespace run_detail;
  auto started = Clock::now();
  std::optional<dsl::LoweredModel> lowered;
  std::optional<ExperimentFolder> folder;
  try {
    {
      Phase ph(out, "Preprocess");
      ModelSource src = resolve_model(cfg.model);
      auto ast = dsl::parse_model(src.text, src.file);
      std::vector<std::string> declared;
      for (const auto& d : ast.declarations) declared.push_back(d.name);
      auto is_declared = [&](const std::string& n) { return std::find(declared.begin(), declared.end(), n) != declared.end(); };
      for (const auto& [name, v] : cfg.bindings)
        if (!is_declared(name)) throw RunError(with_suggestion("model " + ast.name + " has no variable '" + name + "'", name, declared, "--model."));
      for (const auto& [name, v] : cfg.model_options)
        throw RunError("--model." + name + ": model " + ast.name + " has no plates; variable options are not available");
      lowered = dsl::lower(ast, cfg.bindings);
      const Model& m = lowered->model;
      for (const auto& x : cfg.exclude)
        if (!m.find(x)) throw RunError(with_suggestion("--excludeFromOutput: unknown variable '" + x + "'", x, declared));
      ph.log() << "Model: " << ast.name << "\n";
      for (const auto& v : m.variables())
        ph.log() << (v.any_latent() ? "latent   " : "observed ") << v.name << " : " << kind_name(v.kind) << "\n";
      for (const auto& [name, value] : lowered->params) {
        if (auto x = value.num()) ph.log() << "param    " << name << " = " << format_number(*x) << "\n";
      }
      bool generative = m.normal_form().ok && m.generate_order().has_value();
      bool needs_generative = cfg.engine == Engine::PT || cfg.engine == Engine::SCM || cfg.engine == Engine::AIS ||
                              cfg.engine == Engine::Forward || cfg.engine == Engine::Exact;
      if (needs_generative && !generative) {
        std::string msg = "engine " + engine_name(cfg.engine) + " needs a model in generative normal form:";
        for (const auto& v : m.normal_form().violations) msg += "\n  " + v;
        if (m.normal_form().ok) msg += "\n  " + m.order_error();
        msg += "\nuse --engine MCMC instead";
        throw RunError(msg);
      }
      if (cfg.engine == Engine::Exact && cfg.post_processor == "DefaultPostProcessor")
        throw RunError("DefaultPostProcessor should not be used with the Exact engine: its samples are weighted by logProbability");
      folder.emplace(cfg.results_root);
      std::ofstream tsv(folder->root() / "arguments.tsv");
      for (const auto& [k, v] : cfg.arguments) tsv << "--" << k << '\t' << v << '\n';
    }

    const Model& m = lowered->model;
    Recorded rec;
    std::vector<std::pair<std::string, double>> log_z;
    {
      Phase ph(out, "Inference");
      ph.log() << "Engine: " << engine_name(cfg.engine) << "\n";
      switch (cfg.engine) {
        case Engine::PT:
        case Engine::MCMC: {
          auto res = run_nrpt(m, cfg.pt);
          for (const auto& r : res.rounds) {
            ph.log() << "Round(" << r.round << "/" << res.rounds.size() << ") scans=" << r.scans;
            if (cfg.pt.n_chains > 1)
              out << " globalLambda=" << format_number(r.global_barrier) << " restarts=" << r.restarts
                  << " logNormalization=" << format_number(r.log_z);
            out << " [ " << static_cast<long long>(r.milliseconds) << "ms ]\n";
          }
          rec.samples = std::move(res.samples);
          rec.chain = true;
          for (const auto& s : rec.samples) rec.log_density.push_back(log_joint(m, s));
          if (cfg.pt.n_chains > 1) {
            if (res.log_z) log_z.push_back({"steppingStone", *res.log_z});
            if (res.log_z_thermodynamic && std::isfinite(*res.log_z_thermodynamic))
              log_z.push_back({"thermodynamicIntegration", *res.log_z_thermodynamic});
            CsvWriter restarts(folder->monitoring() / "actualTemperedRestarts.csv", {"round", "count"});
            CsvWriter progress(folder->monitoring() / "logNormalizationConstantProgress.csv", {"round", "value"});
            CsvWriter lambda(folder->monitoring() / "globalLambda.csv", {"round", "value"});
            CsvWriter params(folder->monitoring() / "annealingParameters.csv", {"round", "chain", "value"});
            CsvWriter swaps(folder->monitoring() / "swapStatistics.csv", {"round", "chain", "value"});
            for (const auto& r : res.rounds) {
              auto rd = std::to_string(r.round);
              restarts.row({rd, std::to_string(r.restarts)});
              progress.row({rd, format_number(r.log_z)});
              lambda.row({rd, format_number(r.global_barrier)});
              for (std::size_t c = 0; c < r.schedule.size(); ++c) params.row({rd, std::to_string(c), format_number(r.schedule[c])});
              for (std::size_t c = 0; c < r.acceptance.size(); ++c) swaps.row({rd, std::to_string(c), format_number(r.acceptance[c])});
            }
            CsvWriter barrier(folder->monitoring() / "cumulativeLambda.csv", {"annealingParameter", "value"});
            const auto& xs = res.barrier.interpolant.knots_x();
            const auto& ys = res.barrier.interpolant.knots_y();
            for (std::size_t i = 0; i < xs.size(); ++i) barrier.row({format_number(xs[i]), format_number(ys[i])});
          }
          break;
        }
        case Engine::SCM:
        case Engine::AIS: {
          auto res = cfg.engine == Engine::SCM ? run_scm(m, cfg.scm) : run_ais(m, cfg.scm);
          ph.log() << "iterations=" << res.schedule.size() - 1 << " logNormalization=" << format_number(res.log_z) << "\n";
          log_z.push_back({cfg.engine == Engine::SCM ? "SCM" : "AIS", res.log_z});
          CsvWriter params(folder->monitoring() / "annealingParameters.csv", {"iteration", "value"});
          for (std::size_t i = 0; i < res.schedule.size(); ++i) params.row({std::to_string(i), format_number(res.schedule[i])});
          CsvWriter ress(folder->monitoring() / "relativeESS.csv", {"iteration", "value", "resampled"});
          for (std::size_t i = 0; i < res.relative_ess.size(); ++i)
            ress.row({std::to_string(i + 1), format_number(res.relative_ess[i]), res.resampled[i] ? "true" : "false"});
          rec.samples = std::move(res.particles);
          for (const auto& s : rec.samples) rec.log_density.push_back(log_joint(m, s));
          if (cfg.engine == Engine::AIS) rec.weights = res.log_weights;
          break;
        }
        case Engine::Forward: {
          MersenneRandom rng(cfg.seed);
          ForwardOptions opt;
          opt.include_observed = true;
          for (std::size_t i = 0; i < cfg.n_samples; ++i) {
            State s = m.initial_state();
            forward_simulate(m, s, rng, opt);
            rec.samples.push_back(std::move(s));
          }
          ph.log() << "samples=" << cfg.n_samples << "\n";
          break;
        }
        case Engine::Exact: {
          double z = 0;
          rec = enumerate_posterior(m, z);
          log_z.push_back({"exact", z});
          ph.log() << "configurations=" << rec.samples.size() << " logNormalization=" << format_number(z) << "\n";
          break;
        }
      }
      auto vars = output_variables(m, cfg.engine == Engine::Forward, cfg.exclude);
      write_samples(m, rec, vars, *folder, cfg.compressed);
      if (rec.weights) {
        std::string name = cfg.engine == Engine::Exact ? "logProbability.csv" : "logWeight.csv";
        CsvWriter w(folder->samples() / name, {"sample", "value"}, cfg.compressed);
        for (std::size_t i = 0; i < rec.weights->size(); ++i) w.row({std::to_string(i), format_number((*rec.weights)[i])});
      }
      CsvWriter z(folder->root() / "logNormalizationEstimate.csv", {"estimator", "value"});
      for (const auto& [k, v] : log_z) z.row({k, format_number(v)});
    }

    if (cfg.post_processor == "DefaultPostProcessor" && !rec.samples.empty()) {
      Phase ph(out, "Postprocess");
      auto vars = output_variables(m, cfg.engine == Engine::Forward, cfg.exclude);
      std::vector<State> pool = rec.samples;
      if (rec.weights) {
        // equally weighted copies for the summaries
        MersenneRandom r(mix64(cfg.seed, 0x5eed));
        auto idx = resample_indices(*rec.weights, ResamplingScheme::stratified, r);
        pool.clear();
        for (auto i : idx) pool.push_back(rec.samples[i]);
      }
      for (VarId v : vars) ph.log() << "Post-processing " << m.variable(v).name << "\n";
      write_summaries(m, pool, vars, *folder, rec.chain);
      if (rec.chain) ph.log() << "MC diagnostics\n";
    }
  } catch (const ArgsError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const dsl::DslError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const RunError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  out << "executionMilliseconds : " << static_cast<long long>(ms_since(started)) << "\n";
  out << "outputFolder : " << folder->root().string() << "\n";
  if (folder_out) *folder_out = folder->root();
  return 0;
}

inline int run_main(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err,
                    std::filesystem::path* folder_out = nullptr) {
  RunConfig cfg;
  try {
    cfg = parse_args(argv);
  } catch (const ArgsError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  if (cfg.help) {
    out << help_text(cfg);
    if (!cfg.model.empty()) {
      try {
        auto src = resolve_model(cfg.model);
        auto ast = dsl::parse_model(src.text, src.file);
        out << "\nModel " << ast.name << " variables (--model.<name> value | NA | file <path>)\n";
        for (const auto& d : ast.declarations) {
          out << "  --model." << d.name << "  " << (d.random ? "random " : "param ") << d.type;
          if (d.init) out << " (default " << dsl::to_source(d.init) << ")";
          out << "\n";
        }
      } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
      }
    }
    return 0;
  }
  return run_experiment(cfg, out, err, folder_out);
}

}  // namespace tempo::cli
