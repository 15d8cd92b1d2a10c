#pragma once

// Command-line parsing: "--key value..." pairs with dotted keys.
// --model.<var> binds model variables, --engine.<opt> configures the engine.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tempo/pt.hpp"
#include "tempo/scm.hpp"

namespace tempo::cli {

struct ArgsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Engine { PT, SCM, AIS, MCMC, Forward, Exact };

inline const std::vector<std::pair<std::string, Engine>>& engine_names() {
  static const std::vector<std::pair<std::string, Engine>> e = {{"PT", Engine::PT},     {"SCM", Engine::SCM},
                                                               {"AIS", Engine::AIS},   {"MCMC", Engine::MCMC},
                                                               {"Forward", Engine::Forward}, {"Exact", Engine::Exact}};
  return e;
}

inline std::string engine_name(Engine e) {
  for (const auto& [n, v] : engine_names())
    if (v == e) return n;
  return "?";
}

struct RunConfig {
  std::string model;
  std::map<std::string, std::string> bindings;       // --model.<var>, file contents already read
  std::map<std::string, std::string> model_options;  // --model.<var>.<opt>, e.g. plates
  Engine engine = Engine::PT;
  PtConfig pt;
  ScmConfig scm;
  std::size_t n_samples = 1;  // Forward
  std::size_t n_temperatures = 0;  // fixed SCM schedule when > 0
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool compressed = false;
  std::string post_processor = "NoPostProcessor";
  std::set<std::string> exclude;
  std::filesystem::path results_root = "results";
  bool help = false;
  std::vector<std::pair<std::string, std::string>> arguments;  // as given, for arguments.tsv
};

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// closest candidate, if reasonably close
inline std::optional<std::string> suggest(const std::string& word, const std::vector<std::string>& candidates) {
  std::optional<std::string> best;
  std::size_t best_d = std::max<std::size_t>(3, word.size() / 3) + 1;
  for (const auto& c : candidates) {
    std::size_t d = edit_distance(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline std::string with_suggestion(std::string msg, const std::string& word, const std::vector<std::string>& candidates,
                                   const std::string& prefix = "") {
  if (auto s = suggest(word, candidates)) msg += "; did you mean '" + prefix + *s + "'?";
  return msg;
}

namespace args_detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ArgsError("--" + key + ": cannot parse '" + v + "' as a number");
}

inline std::uint64_t to_count(const std::string& key, const std::string& v, bool allow_zero = false) {
  double x = to_double(key, v);
  if (x != std::floor(x) || x < (allow_zero ? 0 : 1) || x > 1e15)
    throw ArgsError("--" + key + ": expected a " + std::string(allow_zero ? "nonnegative" : "positive") + " integer, got '" + v + "'");
  return static_cast<std::uint64_t>(x);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ArgsError("--" + key + ": expected true or false, got '" + v + "'");
}

inline double to_fraction(const std::string& key, const std::string& v, bool open_low = true) {
  double x = to_double(key, v);
  if (!(open_low ? x > 0.0 : x >= 0.0) || !(x < 1.0)) throw ArgsError("--" + key + ": must lie in " + (open_low ? "(0,1)" : "[0,1)"));
  return x;
}

inline std::string read_file(const std::string& key, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgsError("--" + key + ": cannot read file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

struct Option {
  std::string help;
  std::set<Engine> engines;
  Setter set;
};

inline const std::map<std::string, Option>& engine_options() {
  using E = Engine;
  static const std::set<E> pt{E::PT, E::MCMC}, scm{E::SCM, E::AIS}, random{E::PT, E::MCMC, E::SCM, E::AIS, E::Forward};
  static const std::map<std::string, Option> opts = {
      {"nChains", {"number of annealed chains (default 8)", {E::PT}, [](RunConfig& c, auto& k, auto& v) { c.pt.n_chains = to_count(k, v); }}},
      {"nScans", {"number of scans, all rounds together (default 1000)", pt, [](RunConfig& c, auto& k, auto& v) { c.pt.n_scans = to_count(k, v); }}},
      {"nPassesPerScan",
       {"local exploration passes between swaps, fractional allowed (default 3)", pt,
        [](RunConfig& c, auto& k, auto& v) {
          double x = to_double(k, v);
          if (!(x > 0)) throw ArgsError("--" + k + ": must be positive");
          c.pt.n_passes_per_scan = x;
        }}},
      {"thinning", {"keep one scan out of this many (default 1)", pt, [](RunConfig& c, auto& k, auto& v) { c.pt.thinning = to_count(k, v); }}},
      {"usePriorSamples",
       {"refresh the prior chain with independent draws (default true)", {E::PT},
        [](RunConfig& c, auto& k, auto& v) { c.pt.use_prior_samples = to_bool(k, v); }}},
      {"adaptFraction",
       {"positive: adapt the schedule after every round but the last; 0 disables (default 0.5)", pt,
        [](RunConfig& c, auto& k, auto& v) { c.pt.adapt_fraction = to_fraction(k, v, false); }}},
      {"scmInit.nParticles",
       {"particles of the initialization run; 0 forward simulates instead (default 100)", {E::PT},
        [](RunConfig& c, auto& k, auto& v) { c.pt.scm_init_particles = to_count(k, v, true); }}},
      {"nParticles", {"number of particles (default 1000)", scm, [](RunConfig& c, auto& k, auto& v) { c.scm.n_particles = to_count(k, v); }}},
      {"resamplingESSThreshold",
       {"resample when the relative ESS falls below this (default 0.5)", {E::SCM},
        [](RunConfig& c, auto& k, auto& v) { c.scm.ess_threshold = to_fraction(k, v); }}},
      {"resamplingScheme",
       {"STRATIFIED or MULTINOMIAL (default STRATIFIED)", {E::SCM},
        [](RunConfig& c, auto& k, auto& v) {
          if (v == "STRATIFIED")
            c.scm.scheme = ResamplingScheme::stratified;
          else if (v == "MULTINOMIAL")
            c.scm.scheme = ResamplingScheme::multinomial;
          else
            throw ArgsError("--" + k + ": expected STRATIFIED or MULTINOMIAL, got '" + v + "'");
        }}},
      {"temperatureSchedule",
       {"AdaptiveTemperatureSchedule or FixedTemperatureSchedule", scm,
        [](RunConfig& c, auto& k, auto& v) {
          if (v == "AdaptiveTemperatureSchedule")
            c.n_temperatures = 0;
          else if (v == "FixedTemperatureSchedule")
            c.n_temperatures = c.n_temperatures ? c.n_temperatures : 100;
          else
            throw ArgsError("--" + k + ": expected AdaptiveTemperatureSchedule or FixedTemperatureSchedule, got '" + v + "'");
        }}},
      {"temperatureSchedule.threshold",
       {"targeted relative conditional ESS decay (default 0.9999)", scm,
        [](RunConfig& c, auto& k, auto& v) { c.scm.schedule_threshold = to_fraction(k, v); }}},
      {"temperatureSchedule.nTemperatures",
       {"grid size of the fixed schedule (default 100)", scm,
        [](RunConfig& c, auto& k, auto& v) {
          c.n_temperatures = to_count(k, v);
          if (c.n_temperatures < 2) throw ArgsError("--" + k + ": need at least 2 temperatures");
        }}},
      {"nFinalRejuvenations",
       {"rejuvenation sweeps after the final resampling (default 5)", scm,
        [](RunConfig& c, auto& k, auto& v) { c.scm.n_final_rejuvenations = to_count(k, v, true); }}},
      {"nFinalRejuvenation",
       {"same as nFinalRejuvenations", scm, [](RunConfig& c, auto& k, auto& v) { c.scm.n_final_rejuvenations = to_count(k, v, true); }}},
      {"nSamples", {"number of forward draws (default 1)", {E::Forward}, [](RunConfig& c, auto& k, auto& v) { c.n_samples = to_count(k, v); }}},
      {"random", {"seed (default 1)", random, [](RunConfig& c, auto& k, auto& v) { c.seed = to_count(k, v, true); }}},
      {"nThreads",
       {"Single, Max or Fixed (default Single)", {E::PT, E::MCMC, E::SCM, E::AIS},
        [](RunConfig& c, auto& k, auto& v) {
          if (v == "Single")
            c.threads = 1;
          else if (v == "Max")
            c.threads = std::max(1u, std::thread::hardware_concurrency());
          else if (v == "Fixed")
            c.threads = std::max<std::size_t>(c.threads, 1);
          else if (v == "Dynamic")
            throw ArgsError("--" + k + ": Dynamic is not available; use Single, Max or Fixed");
          else
            throw ArgsError("--" + k + ": expected Single, Max or Fixed, got '" + v + "'");
        }}},
      {"nThreads.number",
       {"thread count with --engine.nThreads Fixed", {E::PT, E::MCMC, E::SCM, E::AIS},
        [](RunConfig& c, auto& k, auto& v) { c.threads = to_count(k, v); }}},
  };
  return opts;
}

inline const std::map<std::string, std::string>& general_options() {
  static const std::map<std::string, std::string> g = {
      {"model", "bundled model name (optionally package-qualified) or path to a .bl file"},
      {"engine", "PT, SCM, AIS, MCMC, Forward or Exact (default PT)"},
      {"postProcessor", "DefaultPostProcessor or NoPostProcessor (default NoPostProcessor)"},
      {"excludeFromOutput", "space-separated variables not to write"},
      {"experimentConfigs.tabularWriter", "CSV"},
      {"experimentConfigs.tabularWriter.compressed", "gzip the sample files (default false)"},
      {"experimentConfigs.resultsFolder", "where results/all and results/latest live (default results)"},
      {"help", "print the options that apply to the current model and engine"},
  };
  return g;
}

}  // namespace args_detail

inline std::vector<std::pair<std::string, std::vector<std::string>>> split_arguments(const std::vector<std::string>& argv) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (const auto& a : argv) {
    if (a.rfind("--", 0) == 0 && a.size() > 2) {
      out.push_back({a.substr(2), {}});
    } else {
      if (out.empty()) throw ArgsError("unexpected argument '" + a + "'; options start with --");
      out.back().second.push_back(a);
    }
  }
  return out;
}

inline RunConfig parse_args(const std::vector<std::string>& argv) {
  using namespace args_detail;
  RunConfig c;
  auto items = split_arguments(argv);
  auto joined = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
    return s;
  };
  auto single = [](const std::string& key, const std::vector<std::string>& v) -> const std::string& {
    if (v.size() != 1) throw ArgsError("--" + key + " takes exactly one value");
    return v[0];
  };

  for (const auto& [key, vals] : items)
    if (key == "engine") {
      const auto& name = single(key, vals);
      auto it = std::find_if(engine_names().begin(), engine_names().end(), [&](auto& p) { return p.first == name; });
      if (it == engine_names().end()) {
        std::vector<std::string> known;
        for (const auto& p : engine_names()) known.push_back(p.first);
        throw ArgsError(with_suggestion("unknown engine '" + name + "' (known: PT, SCM, AIS, MCMC, Forward, Exact)", name, known));
      }
      c.engine = it->second;
    }
  if (c.engine == Engine::MCMC) {
    c.pt.n_chains = 1;
    c.pt.scm_init_particles = 0;
  }

  std::set<std::string> seen;
  for (const auto& [key, vals] : items) {
    c.arguments.push_back({key, joined(vals)});
    if (!seen.insert(key).second && key != "help") throw ArgsError("--" + key + " given twice");
    if (key == "help") {
      c.help = true;
    } else if (key == "engine") {
    } else if (key == "model") {
      c.model = single(key, vals);
    } else if (key.rfind("model.", 0) == 0) {
      std::string rest = key.substr(6);
      if (rest.empty()) throw ArgsError("--model. needs a variable name");
      if (rest.find('.') != std::string::npos) {
        c.model_options[rest] = joined(vals);
        continue;
      }
      if (vals.empty()) throw ArgsError("--" + key + " needs a value (NA for latent)");
      if (vals[0] == "file") {
        if (vals.size() != 2) throw ArgsError("--" + key + " file takes one path");
        c.bindings[rest] = read_file(key, vals[1]);
      } else {
        c.bindings[rest] = joined(vals);
      }
    } else if (key.rfind("engine.", 0) == 0) {
      std::string opt = key.substr(7);
      auto it = engine_options().find(opt);
      if (it == engine_options().end() || !it->second.engines.count(c.engine)) {
        std::vector<std::string> known;
        for (const auto& [n, o] : engine_options())
          if (o.engines.count(c.engine)) known.push_back(n);
        std::string msg = it == engine_options().end() ? "unknown option --" + key
                                                        : "--" + key + " does not apply to engine " + engine_name(c.engine);
        throw ArgsError(with_suggestion(msg, opt, known, "--engine."));
      }
      it->second.set(c, key, single(key, vals));
    } else if (key == "postProcessor") {
      const auto& v = single(key, vals);
      if (v != "DefaultPostProcessor" && v != "NoPostProcessor")
        throw ArgsError(with_suggestion("unknown post-processor '" + v + "'", v, {"DefaultPostProcessor", "NoPostProcessor"}));
      c.post_processor = v;
    } else if (key == "excludeFromOutput") {
      c.exclude.insert(vals.begin(), vals.end());
    } else if (key == "experimentConfigs.tabularWriter") {
      if (single(key, vals) != "CSV") throw ArgsError("--" + key + ": only CSV is available");
    } else if (key == "experimentConfigs.tabularWriter.compressed") {
      c.compressed = to_bool(key, single(key, vals));
    } else if (key == "experimentConfigs.resultsFolder") {
      c.results_root = single(key, vals);
    } else {
      std::vector<std::string> known;
      for (const auto& [n, h] : general_options()) known.push_back(n);
      for (const auto& [n, o] : engine_options())
        if (o.engines.count(c.engine)) known.push_back("engine." + n);
      throw ArgsError(with_suggestion("unknown option --" + key, key, known, "--"));
    }
  }
  if (c.engine == Engine::MCMC && c.pt.n_chains != 1) throw ArgsError("MCMC runs a single chain");
  if (c.threads < 1) c.threads = 1;
  c.pt.seed = c.scm.seed = c.seed;
  c.pt.threads = c.scm.threads = c.threads;
  if (c.n_temperatures > 0) {
    std::vector<double> grid(c.n_temperatures);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(i) / static_cast<double>(grid.size() - 1);
    c.scm.fixed_schedule = grid;
  }
  if (!c.help && c.model.empty()) throw ArgsError("missing --model");
  return c;
}

inline std::string help_text(const RunConfig& c) {
  std::ostringstream o;
  o << "General options\n";
  for (const auto& [n, h] : args_detail::general_options()) o << "  --" << n << "  " << h << "\n";
  o << "\nEngine " << engine_name(c.engine) << " options\n";
  for (const auto& [n, opt] : args_detail::engine_options())
    if (opt.engines.count(c.engine)) o << "  --engine." << n << "  " << opt.help << "\n";
  return o.str();
}

}  // namespace tempo::cli
