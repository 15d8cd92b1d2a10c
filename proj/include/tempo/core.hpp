#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "tempo/random.hpp"

namespace tempo {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class VarKind { real_scalar, int_scalar, simplex, transition_matrix, permutation, real_list, int_list };

struct Kind {
  VarKind tag = VarKind::real_scalar;
  std::size_t size = 1;  // dim for simplex/matrix, n for permutation, length for lists

  static Kind real_scalar() { return {VarKind::real_scalar, 1}; }
  static Kind int_scalar() { return {VarKind::int_scalar, 1}; }
  static Kind simplex(std::size_t d) { return {VarKind::simplex, d}; }
  static Kind transition_matrix(std::size_t d) { return {VarKind::transition_matrix, d}; }
  static Kind permutation(std::size_t n) { return {VarKind::permutation, n}; }
  static Kind real_list(std::size_t n) { return {VarKind::real_list, n}; }
  static Kind int_list(std::size_t n) { return {VarKind::int_list, n}; }

  bool real_storage() const {
    return tag == VarKind::real_scalar || tag == VarKind::simplex || tag == VarKind::transition_matrix ||
           tag == VarKind::real_list;
  }
  std::size_t storage_size() const { return tag == VarKind::transition_matrix ? size * size : size; }
  // Number of independently addressable sampling units.
  std::size_t unit_count() const {
    switch (tag) {
      case VarKind::transition_matrix:
      case VarKind::real_list:
      case VarKind::int_list:
        return size;
      default:
        return 1;
    }
  }
  bool per_entry_units() const {
    return tag == VarKind::transition_matrix || tag == VarKind::real_list || tag == VarKind::int_list;
  }
  bool discrete() const { return !real_storage(); }
  friend bool operator==(const Kind&, const Kind&) = default;
};

inline std::string kind_name(const Kind& k) {
  switch (k.tag) {
    case VarKind::real_scalar: return "RealScalar";
    case VarKind::int_scalar: return "IntScalar";
    case VarKind::simplex: return "DenseSimplex";
    case VarKind::transition_matrix: return "DenseTransitionMatrix";
    case VarKind::permutation: return "Permutation";
    case VarKind::real_list: return "RealScalar";
    case VarKind::int_list: return "IntScalar";
  }
  return "?";
}

enum class Status { latent, observed };

using VarId = std::uint32_t;
using FactorId = std::uint32_t;
using LawId = std::uint32_t;
using UnitId = std::uint32_t;

// A variable or one entry of it (list element, matrix row). entry = -1
// addresses the whole variable.
struct VarRef {
  VarId var = 0;
  int entry = -1;
  VarRef() = default;
  VarRef(VarId v, int e = -1) : var(v), entry(e) {}
  VarRef at(int e) const { return {var, e}; }
  friend bool operator==(const VarRef&, const VarRef&) = default;
  friend auto operator<=>(const VarRef&, const VarRef&) = default;
};

struct VariableDecl {
  VarId id = 0;
  std::string name;
  Kind kind;
  Status status = Status::latent;
  bool constrained = false;
  bool param = false;                // a fixed input rather than a random variable
  std::vector<char> unit_observed;   // per unit
  std::size_t first_unit = 0;

  bool observed(std::size_t unit = 0) const { return unit_observed[unit] != 0; }
  bool any_latent() const { return std::find(unit_observed.begin(), unit_observed.end(), 0) != unit_observed.end(); }
};

class State {
 public:
  State() = default;

  void add(const Kind& k) {
    reals_.emplace_back(k.real_storage() ? k.storage_size() : 0, 0.0);
    ints_.emplace_back(k.real_storage() ? 0 : k.storage_size(), 0);
  }

  std::size_t size() const { return reals_.size(); }

  double real(VarId v, std::size_t i = 0) const { return reals_[v][i]; }
  double& real(VarId v, std::size_t i = 0) { return reals_[v][i]; }
  std::int64_t integer(VarId v, std::size_t i = 0) const { return ints_[v][i]; }
  std::int64_t& integer(VarId v, std::size_t i = 0) { return ints_[v][i]; }

  std::span<const double> reals(VarId v) const { return reals_[v]; }
  std::span<double> reals(VarId v) { return reals_[v]; }
  std::span<const std::int64_t> ints(VarId v) const { return ints_[v]; }
  std::span<std::int64_t> ints(VarId v) { return ints_[v]; }

  std::size_t hash() const {
    std::uint64_t h = 0x12345;
    for (const auto& r : reals_)
      for (double x : r) {
        std::uint64_t b;
        std::memcpy(&b, &x, sizeof b);
        h = mix64(h, b);
      }
    for (const auto& r : ints_)
      for (auto x : r) h = mix64(h, static_cast<std::uint64_t>(x));
    return h;
  }

  friend bool operator==(const State&, const State&) = default;

 private:
  std::vector<std::vector<double>> reals_;
  std::vector<std::vector<std::int64_t>> ints_;
};

// Value semantics: a copy shares nothing with the original.
inline State deep_copy(const State& s) { return s; }

using LogDensity = std::function<double(const State&)>;
using Generator = std::function<void(State&, RandomSource&)>;

enum class FactorKind { numeric, constrained };
enum class FactorRole { likelihood, prior, none };

struct Factor {
  FactorId id = 0;
  std::vector<VarRef> scope;
  std::vector<VarRef> outgoing;
  LogDensity log_density;
  FactorKind kind = FactorKind::numeric;
  LawId law = 0;
  std::string label;
  std::vector<UnitId> scope_units;
  std::vector<UnitId> outgoing_units;
};

struct Law {
  LawId id = 0;
  std::vector<VarRef> outputs;
  Generator generator;
  std::vector<FactorId> factors;
  std::string label;
  std::vector<UnitId> output_units;
  std::vector<UnitId> input_units;
};

struct UnitRef {
  VarId var;
  int entry;  // -1 for single-unit variables
};

using InitialValue = std::variant<std::monostate, double, std::int64_t, std::vector<double>, std::vector<std::int64_t>>;

struct FactorSpec {
  std::vector<VarRef> scope;
  LogDensity log_density;
  Generator generator{};
  std::vector<VarRef> output_vars{};
  std::optional<std::vector<VarRef>> outgoing{};
  std::optional<LawId> law{};
  std::string label{};
};

class Model;

class ModelBuilder {
 public:
  VarId add_variable(const std::string& name, Kind kind, Status status, InitialValue initial = {});
  VarId add_variable(const std::string& name, Kind kind, Status status, InitialValue initial, bool param) {
    VarId id = add_variable(name, kind, status, std::move(initial));
    vars_[id].param = param;
    return id;
  }
  void set_entry_observed(VarId v, std::size_t unit, bool observed);
  void mark_constrained(VarId v);

  LawId add_law(std::vector<VarRef> outputs, Generator generator, std::string label = {});
  FactorId add_factor(FactorSpec spec);
  FactorId add_factor(std::vector<VarRef> scope, LogDensity f, Generator generator = {}, std::vector<VarRef> output_vars = {}) {
    return add_factor(FactorSpec{std::move(scope), std::move(f), std::move(generator), std::move(output_vars)});
  }

  const VariableDecl& variable(VarId v) const { return vars_.at(v); }
  std::optional<VarId> find(const std::string& name) const {
    for (const auto& d : vars_)
      if (d.name == name) return d.id;
    return std::nullopt;
  }
  State& initial_state() { return init_; }
  std::size_t variable_count() const { return vars_.size(); }

  Model build() const;

 private:
  void check_ref(const VarRef& r) const;
  std::vector<VariableDecl> vars_;
  State init_;
  std::vector<Factor> factors_;
  std::vector<Law> laws_;
};

struct NormalFormReport {
  bool ok = true;
  std::vector<std::string> violations;
};

struct ForwardOptions {
  bool include_observed = false;  // also regenerate observed (data) variables
  bool poison_outputs = false;    // fill outputs with NaN before generation
};

class Model {
 public:
  const std::vector<VariableDecl>& variables() const { return vars_; }
  const VariableDecl& variable(VarId v) const { return vars_.at(v); }
  std::optional<VarId> find(const std::string& name) const {
    for (const auto& d : vars_)
      if (d.name == name) return d.id;
    return std::nullopt;
  }
  VarId id_of(const std::string& name) const {
    auto v = find(name);
    if (!v) throw ModelError("unknown variable '" + name + "'");
    return *v;
  }
  const std::vector<Factor>& factors() const { return factors_; }
  const Factor& factor(FactorId f) const { return factors_.at(f); }
  const std::vector<Law>& laws() const { return laws_; }
  const std::vector<UnitRef>& units() const { return units_; }
  const State& initial_state() const { return init_; }

  UnitId unit_of(VarId v, int entry = -1) const {
    const auto& d = vars_.at(v);
    // entries of a single-unit variable (simplex coordinate, permutation slot) map to that unit
    if (!d.kind.per_entry_units()) return static_cast<UnitId>(d.first_unit);
    if (entry < 0) throw ModelError("variable '" + d.name + "' needs an entry index");
    if (static_cast<std::size_t>(entry) >= d.kind.unit_count()) throw ModelError("entry out of range for '" + d.name + "'");
    return static_cast<UnitId>(d.first_unit + static_cast<std::size_t>(entry));
  }
  std::vector<UnitId> units_of(const VarRef& r) const {
    const auto& d = vars_.at(r.var);
    std::vector<UnitId> out;
    if (r.entry >= 0) {
      out.push_back(unit_of(r.var, r.entry));
    } else {
      for (std::size_t i = 0; i < d.kind.unit_count(); ++i) out.push_back(static_cast<UnitId>(d.first_unit + i));
    }
    return out;
  }
  bool unit_observed(UnitId u) const {
    const auto& ur = units_[u];
    const auto& d = vars_[ur.var];
    return d.unit_observed[u - d.first_unit] != 0;
  }
  std::string unit_name(UnitId u) const {
    const auto& ur = units_[u];
    std::string n = vars_[ur.var].name;
    if (ur.entry >= 0) n += "[" + std::to_string(ur.entry) + "]";
    return n;
  }

  // numeric factors touching the unit
  const std::vector<FactorId>& neighbors(UnitId u) const { return numeric_neighbors_.at(u); }
  std::vector<FactorId> neighbors(const VarRef& r) const {
    std::set<FactorId> out;
    for (UnitId u : units_of(r))
      for (FactorId f : numeric_neighbors_[u]) out.insert(f);
    return {out.begin(), out.end()};
  }
  bool has_constrained_factor(UnitId u) const { return constrained_units_.count(u) != 0; }

  FactorRole role(FactorId f) const { return roles_.at(f); }
  const std::vector<FactorId>& likelihood_factors() const { return likelihood_; }
  const std::vector<FactorId>& prior_factors() const { return prior_; }

  const NormalFormReport& normal_form() const { return normal_form_; }
  // empty unless the model is forward-simulable
  const std::optional<std::vector<LawId>>& generate_order() const { return order_; }
  const std::string& order_error() const { return order_error_; }

 private:
  friend class ModelBuilder;
  std::vector<VariableDecl> vars_;
  std::vector<Factor> factors_;
  std::vector<Law> laws_;
  std::vector<UnitRef> units_;
  State init_;
  std::vector<std::vector<FactorId>> numeric_neighbors_;
  std::set<UnitId> constrained_units_;
  std::vector<FactorRole> roles_;
  std::vector<FactorId> likelihood_;
  std::vector<FactorId> prior_;
  NormalFormReport normal_form_;
  std::optional<std::vector<LawId>> order_;
  std::string order_error_;
};

// ---------------------------------------------------------------------------

namespace detail {

inline bool is_simplex(std::span<const double> p, double tol = 1e-9) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

inline bool is_permutation(std::span<const std::int64_t> p) {
  std::vector<char> seen(p.size(), 0);
  for (auto x : p) {
    if (x < 0 || static_cast<std::size_t>(x) >= p.size() || seen[static_cast<std::size_t>(x)]) return false;
    seen[static_cast<std::size_t>(x)] = 1;
  }
  return true;
}

}  // namespace detail

inline VarId ModelBuilder::add_variable(const std::string& name, Kind kind, Status status, InitialValue initial) {
  if (name.empty()) throw ModelError("variable name must be nonempty");
  if (find(name)) throw ModelError("duplicate variable name '" + name + "'");
  if ((kind.tag == VarKind::simplex || kind.tag == VarKind::transition_matrix) && kind.size < 1)
    throw ModelError("simplex dimension must be at least 1");
  if (kind.tag == VarKind::permutation && kind.size < 1) throw ModelError("permutation size must be at least 1");

  VariableDecl d;
  d.id = static_cast<VarId>(vars_.size());
  d.name = name;
  d.kind = kind;
  d.status = status;
  d.unit_observed.assign(kind.unit_count(), status == Status::observed ? 1 : 0);
  // built aside so a rejected declaration leaves the builder untouched
  State tmp;
  tmp.add(kind);
  const VarId id = d.id;
  d.id = 0;

  auto mismatch = [&](const std::string& why) { return ModelError("initial value for '" + name + "': " + why); };
  std::size_t n = kind.storage_size();

  // defaults
  if (kind.tag == VarKind::simplex)
    for (std::size_t i = 0; i < n; ++i) tmp.real(d.id, i) = 1.0 / static_cast<double>(kind.size);
  if (kind.tag == VarKind::transition_matrix)
    for (std::size_t i = 0; i < n; ++i) tmp.real(d.id, i) = 1.0 / static_cast<double>(kind.size);
  if (kind.tag == VarKind::permutation)
    for (std::size_t i = 0; i < n; ++i) tmp.integer(d.id, i) = static_cast<std::int64_t>(i);

  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          if (!kind.real_storage() || n != 1) throw mismatch("scalar real given");
          tmp.real(d.id) = v;
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          if (kind.real_storage()) {
            if (n != 1) throw mismatch("scalar given");
            tmp.real(d.id) = static_cast<double>(v);
          } else {
            if (n != 1) throw mismatch("scalar given");
            tmp.integer(d.id) = v;
          }
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          if (!kind.real_storage() || v.size() != n) throw mismatch("expected " + std::to_string(n) + " reals");
          std::copy(v.begin(), v.end(), tmp.reals(d.id).begin());
        } else if constexpr (std::is_same_v<T, std::vector<std::int64_t>>) {
          if (kind.real_storage() || v.size() != n) throw mismatch("expected " + std::to_string(n) + " integers");
          std::copy(v.begin(), v.end(), tmp.ints(d.id).begin());
        }
      },
      initial);

  if (kind.tag == VarKind::simplex && !detail::is_simplex(tmp.reals(d.id))) throw mismatch("not a simplex");
  if (kind.tag == VarKind::transition_matrix)
    for (std::size_t r = 0; r < kind.size; ++r)
      if (!detail::is_simplex(tmp.reals(d.id).subspan(r * kind.size, kind.size))) throw mismatch("row is not a simplex");
  if (kind.tag == VarKind::permutation && !detail::is_permutation(tmp.ints(d.id))) throw mismatch("not a permutation");

  init_.add(kind);
  if (kind.real_storage())
    std::copy(tmp.reals(0).begin(), tmp.reals(0).end(), init_.reals(id).begin());
  else
    std::copy(tmp.ints(0).begin(), tmp.ints(0).end(), init_.ints(id).begin());
  d.id = id;
  vars_.push_back(std::move(d));
  return id;
}

inline void ModelBuilder::set_entry_observed(VarId v, std::size_t unit, bool observed) {
  auto& d = vars_.at(v);
  if (unit >= d.unit_observed.size()) throw ModelError("entry out of range for '" + d.name + "'");
  d.unit_observed[unit] = observed ? 1 : 0;
  bool all = std::all_of(d.unit_observed.begin(), d.unit_observed.end(), [](char c) { return c != 0; });
  d.status = all ? Status::observed : Status::latent;
}

inline void ModelBuilder::check_ref(const VarRef& r) const {
  if (r.var >= vars_.size()) throw ModelError("unknown variable id " + std::to_string(r.var));
  const auto& d = vars_[r.var];
  std::size_t limit = d.kind.per_entry_units() ? d.kind.unit_count() : d.kind.storage_size();
  if (r.entry >= 0 && static_cast<std::size_t>(r.entry) >= limit)
    throw ModelError("entry " + std::to_string(r.entry) + " out of range for '" + d.name + "'");
}

inline void ModelBuilder::mark_constrained(VarId v) {
  check_ref(VarRef{v});
  vars_[v].constrained = true;
  Factor f;
  f.id = static_cast<FactorId>(factors_.size());
  f.scope = {VarRef{v}};
  f.outgoing = {VarRef{v}};
  f.kind = FactorKind::constrained;
  f.law = std::numeric_limits<LawId>::max();
  f.label = vars_[v].name + " is Constrained";
  f.log_density = [](const State&) { return 0.0; };
  factors_.push_back(std::move(f));
}

inline LawId ModelBuilder::add_law(std::vector<VarRef> outputs, Generator generator, std::string label) {
  for (const auto& r : outputs) check_ref(r);
  Law l;
  l.id = static_cast<LawId>(laws_.size());
  l.outputs = std::move(outputs);
  l.generator = std::move(generator);
  l.label = std::move(label);
  laws_.push_back(std::move(l));
  return laws_.back().id;
}

inline FactorId ModelBuilder::add_factor(FactorSpec spec) {
  for (const auto& r : spec.scope) check_ref(r);
  for (const auto& r : spec.output_vars) check_ref(r);
  if (spec.outgoing)
    for (const auto& r : *spec.outgoing) check_ref(r);
  if (!spec.log_density) throw ModelError("factor needs a log density");

  LawId law;
  if (spec.law) {
    if (*spec.law >= laws_.size()) throw ModelError("unknown law id");
    if (spec.generator || !spec.output_vars.empty()) throw ModelError("a factor joining a law cannot declare its own generator");
    law = *spec.law;
  } else {
    if (!spec.output_vars.empty() && !spec.generator) throw ModelError("output variables given without a generator");
    if (spec.generator) {
      // outputs must lie inside the scope
      for (const auto& o : spec.output_vars) {
        bool inside = std::any_of(spec.scope.begin(), spec.scope.end(), [&](const VarRef& s) {
          return s.var == o.var && (s.entry < 0 || s.entry == o.entry);
        });
        if (!inside) throw ModelError("output variable '" + vars_[o.var].name + "' is not in the factor scope");
      }
    }
    law = add_law(spec.output_vars, std::move(spec.generator), spec.label);
  }

  Factor f;
  f.id = static_cast<FactorId>(factors_.size());
  f.scope = std::move(spec.scope);
  f.outgoing = spec.outgoing ? *spec.outgoing : laws_[law].outputs;
  f.log_density = std::move(spec.log_density);
  f.law = law;
  f.label = spec.label.empty() ? laws_[law].label : spec.label;
  laws_[law].factors.push_back(f.id);
  factors_.push_back(std::move(f));
  return factors_.back().id;
}

inline Model ModelBuilder::build() const {
  Model m;
  m.vars_ = vars_;
  m.factors_ = factors_;
  m.laws_ = laws_;
  m.init_ = init_;

  for (auto& d : m.vars_) {
    d.first_unit = m.units_.size();
    std::size_t n = d.kind.unit_count();
    for (std::size_t i = 0; i < n; ++i)
      m.units_.push_back({d.id, d.kind.per_entry_units() ? static_cast<int>(i) : -1});
  }
  auto expand = [&](const std::vector<VarRef>& refs) {
    std::set<UnitId> s;
    for (const auto& r : refs)
      for (UnitId u : m.units_of(r)) s.insert(u);
    return std::vector<UnitId>(s.begin(), s.end());
  };

  m.numeric_neighbors_.assign(m.units_.size(), {});
  for (auto& f : m.factors_) {
    f.scope_units = expand(f.scope);
    f.outgoing_units = expand(f.outgoing);
    for (UnitId u : f.scope_units) {
      if (f.kind == FactorKind::numeric)
        m.numeric_neighbors_[u].push_back(f.id);
      else
        m.constrained_units_.insert(u);
    }
  }

  // likelihood iff every out-going edge reaches an observed unit
  m.roles_.assign(m.factors_.size(), FactorRole::none);
  for (const auto& f : m.factors_) {
    if (f.kind != FactorKind::numeric) continue;
    bool lik = std::all_of(f.outgoing_units.begin(), f.outgoing_units.end(), [&](UnitId u) { return m.unit_observed(u); });
    m.roles_[f.id] = lik ? FactorRole::likelihood : FactorRole::prior;
    (lik ? m.likelihood_ : m.prior_).push_back(f.id);
  }

  for (auto& l : m.laws_) {
    l.output_units = expand(l.outputs);
    std::set<UnitId> in;
    for (FactorId fid : l.factors)
      for (UnitId u : m.factors_[fid].scope_units) in.insert(u);
    for (UnitId u : l.output_units) in.erase(u);
    l.input_units.assign(in.begin(), in.end());
  }

  // generative normal form
  std::vector<int> producer(m.units_.size(), -1);
  for (const auto& l : m.laws_) {
    if (!l.generator) continue;
    for (UnitId u : l.output_units) {
      if (producer[u] >= 0) {
        m.normal_form_.ok = false;
        m.normal_form_.violations.push_back("unit " + m.unit_name(u) + " is generated by more than one law");
      }
      producer[u] = static_cast<int>(l.id);
    }
  }
  for (const auto& f : m.factors_) {
    if (f.kind != FactorKind::numeric) continue;
    const Law& l = m.laws_[f.law];
    bool latent_out = std::any_of(f.outgoing_units.begin(), f.outgoing_units.end(), [&](UnitId u) { return !m.unit_observed(u); });
    if (latent_out && !l.generator) {
      m.normal_form_.ok = false;
      m.normal_form_.violations.push_back("factor '" + f.label + "' (#" + std::to_string(f.id) +
                                          ") has latent output variables but no generator");
    }
  }
  for (UnitId u = 0; u < m.units_.size(); ++u) {
    if (!m.unit_observed(u) && producer[u] < 0) {
      m.normal_form_.ok = false;
      m.normal_form_.violations.push_back("latent unit " + m.unit_name(u) + " is not produced by any generator");
    }
  }

  if (!m.normal_form_.ok) {
    m.order_error_ = "model is not in generative normal form";
    return m;
  }

  // Kahn's algorithm, smallest law id first for a deterministic order
  std::size_t nl = m.laws_.size();
  std::vector<std::set<LawId>> succ(nl);
  std::vector<std::size_t> indeg(nl, 0);
  for (const auto& l : m.laws_) {
    if (!l.generator) continue;
    for (UnitId u : l.input_units) {
      if (producer[u] < 0) {
        if (!m.unit_observed(u)) {
          m.order_error_ = "law '" + l.label + "' reads " + m.unit_name(u) + " which nothing generates";
          return m;
        }
        continue;
      }
      auto p = static_cast<LawId>(producer[u]);
      if (p == l.id) continue;
      if (succ[p].insert(l.id).second) ++indeg[l.id];
    }
  }
  std::priority_queue<LawId, std::vector<LawId>, std::greater<>> ready;
  std::size_t generators = 0;
  for (const auto& l : m.laws_) {
    if (!l.generator) continue;
    ++generators;
    if (indeg[l.id] == 0) ready.push(l.id);
  }
  std::vector<LawId> order;
  while (!ready.empty()) {
    LawId l = ready.top();
    ready.pop();
    order.push_back(l);
    for (LawId s : succ[l])
      if (--indeg[s] == 0) ready.push(s);
  }
  if (order.size() != generators) {
    m.order_error_ = "cycle detected among generators; the model is not forward-simulable";
    return m;
  }
  m.order_ = std::move(order);
  return m;
}

// ---------------------------------------------------------------------------

inline double safe_log_density(const Factor& f, const State& s) {
  double v = f.log_density(s);
  if (std::isnan(v)) return neg_inf;
  return v;
}

inline double log_joint(const Model& m, const State& s) {
  double total = 0.0;
  for (const auto& f : m.factors()) {
    if (f.kind != FactorKind::numeric) continue;
    double v = safe_log_density(f, s);
    if (v == neg_inf) return neg_inf;
    total += v;
  }
  return total;
}

inline NormalFormReport check_generative_normal_form(const Model& m) { return m.normal_form(); }

inline std::vector<LawId> topological_generate_order(const Model& m) {
  if (!m.generate_order()) throw ModelError(m.order_error());
  return *m.generate_order();
}

namespace detail {

inline void poison(const Model& m, State& s, UnitId u) {
  const auto& ur = m.units()[u];
  const auto& d = m.variable(ur.var);
  if (d.kind.real_storage()) {
    auto xs = s.reals(ur.var);
    if (d.kind.tag == VarKind::transition_matrix) {
      for (std::size_t i = 0; i < d.kind.size; ++i) xs[static_cast<std::size_t>(ur.entry) * d.kind.size + i] = std::nan("");
    } else if (ur.entry >= 0) {
      xs[static_cast<std::size_t>(ur.entry)] = std::nan("");
    } else {
      std::fill(xs.begin(), xs.end(), std::nan(""));
    }
  } else {
    auto xs = s.ints(ur.var);
    if (ur.entry >= 0)
      xs[static_cast<std::size_t>(ur.entry)] = std::numeric_limits<std::int64_t>::min();
    else
      std::fill(xs.begin(), xs.end(), std::numeric_limits<std::int64_t>::min());
  }
}

}  // namespace detail

inline void forward_simulate(const Model& m, State& s, RandomSource& rng, ForwardOptions opt = {}) {
  const auto& order = m.generate_order();
  if (!order) throw ModelError(m.order_error());
  for (LawId lid : *order) {
    const Law& l = m.laws()[lid];
    bool any_latent = std::any_of(l.output_units.begin(), l.output_units.end(), [&](UnitId u) { return !m.unit_observed(u); });
    if (!any_latent && !opt.include_observed) continue;
    std::optional<State> saved;
    bool mixed = !opt.include_observed &&
                 std::any_of(l.output_units.begin(), l.output_units.end(), [&](UnitId u) { return m.unit_observed(u); });
    if (mixed) saved = s;
    if (opt.poison_outputs)
      for (UnitId u : l.output_units) detail::poison(m, s, u);
    l.generator(s, rng);
    if (mixed) {
      for (UnitId u : l.output_units) {
        if (!m.unit_observed(u)) continue;
        const auto& ur = m.units()[u];
        const auto& d = m.variable(ur.var);
        if (d.kind.real_storage()) {
          auto dst = s.reals(ur.var);
          auto src = saved->reals(ur.var);
          if (d.kind.tag == VarKind::transition_matrix) {
            auto off = static_cast<std::size_t>(ur.entry) * d.kind.size;
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(off), d.kind.size, dst.begin() + static_cast<std::ptrdiff_t>(off));
          } else if (ur.entry >= 0) {
            dst[static_cast<std::size_t>(ur.entry)] = src[static_cast<std::size_t>(ur.entry)];
          } else {
            std::copy(src.begin(), src.end(), dst.begin());
          }
        } else {
          auto dst = s.ints(ur.var);
          auto src = saved->ints(ur.var);
          if (ur.entry >= 0)
            dst[static_cast<std::size_t>(ur.entry)] = src[static_cast<std::size_t>(ur.entry)];
          else
            std::copy(src.begin(), src.end(), dst.begin());
        }
      }
    }
  }
}

// Regenerate only the observed (data) variables given the current latent values.
inline void regenerate_data(const Model& m, State& s, RandomSource& rng) {
  const auto& order = m.generate_order();
  if (!order) throw ModelError(m.order_error());
  for (LawId lid : *order) {
    const Law& l = m.laws()[lid];
    bool all_observed = !l.output_units.empty() &&
                        std::all_of(l.output_units.begin(), l.output_units.end(), [&](UnitId u) { return m.unit_observed(u); });
    if (all_observed) l.generator(s, rng);
  }
}

inline std::vector<FactorId> neighbors(const Model& m, const VarRef& v) { return m.neighbors(v); }

}  // namespace tempo
