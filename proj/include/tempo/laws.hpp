#pragma once

// Instantiating catalog distributions as laws of a model under construction.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "tempo/core.hpp"
#include "tempo/dists.hpp"

namespace tempo {

struct ParamExpr {
  ParamFn eval;
  std::vector<VarRef> scope;
};

inline ParamExpr constant(double v) {
  return {[v](const State&) { return Arg::of(v); }, {}};
}

inline ParamExpr constant_vector(std::vector<double> v) {
  auto data = std::make_shared<const std::vector<double>>(std::move(v));
  return {[data](const State&) { return Arg::of(std::span<const double>(*data)); }, {}};
}

// reads a scalar variable or one list entry
inline ParamExpr scalar_of(const ModelBuilder& b, VarRef r) {
  const auto& d = b.variable(r.var);
  std::size_t idx = r.entry < 0 ? 0 : static_cast<std::size_t>(r.entry);
  VarId v = r.var;
  if (d.kind.real_storage()) return {[v, idx](const State& s) { return Arg::of(s.real(v, idx)); }, {r}};
  return {[v, idx](const State& s) { return Arg::of(static_cast<double>(s.integer(v, idx))); }, {r}};
}

// reads a simplex, a real list, or one transition-matrix row as a vector
inline ParamExpr vector_of(const ModelBuilder& b, VarRef r) {
  const auto& d = b.variable(r.var);
  if (!d.kind.real_storage()) throw ModelError("'" + d.name + "' is not a real vector");
  VarId v = r.var;
  if (d.kind.tag == VarKind::transition_matrix) {
    if (r.entry < 0) throw ModelError("transition matrix parameter needs a row");
    std::size_t n = d.kind.size, off = static_cast<std::size_t>(r.entry) * n;
    return {[v, off, n](const State& s) { return Arg::of(s.reals(v).subspan(off, n)); }, {r}};
  }
  return {[v](const State& s) { return Arg::of(s.reals(v)); }, {VarRef{v}}};
}

namespace detail {

struct Realization {
  VarId var = 0;
  VarKind kind = VarKind::real_scalar;
  std::size_t offset = 0;
  std::size_t length = 1;

  Arg read(const State& s) const {
    switch (kind) {
      case VarKind::real_scalar:
      case VarKind::real_list:
        return Arg::of(s.real(var, offset));
      case VarKind::int_scalar:
      case VarKind::int_list:
        return Arg::of(static_cast<double>(s.integer(var, offset)));
      case VarKind::simplex:
      case VarKind::transition_matrix:
        return Arg::of(s.reals(var).subspan(offset, length));
      case VarKind::permutation:
        return Arg::of(static_cast<double>(length));
    }
    return {};
  }

  void write(State& s, const Draw& d) const {
    switch (kind) {
      case VarKind::real_scalar:
      case VarKind::real_list:
        s.real(var, offset) = d.scalar;
        break;
      case VarKind::int_scalar:
      case VarKind::int_list:
        s.integer(var, offset) = static_cast<std::int64_t>(d.scalar);
        break;
      case VarKind::simplex:
      case VarKind::transition_matrix:
        std::copy(d.vec.begin(), d.vec.end(), s.reals(var).begin() + static_cast<std::ptrdiff_t>(offset));
        break;
      case VarKind::permutation:
        std::copy(d.perm.begin(), d.perm.end(), s.ints(var).begin());
        break;
    }
  }
};

inline Realization realization_of(const ModelBuilder& b, VarRef r) {
  const auto& d = b.variable(r.var);
  Realization out{r.var, d.kind.tag, 0, 1};
  switch (d.kind.tag) {
    case VarKind::real_list:
    case VarKind::int_list:
      if (r.entry < 0) throw ModelError("list '" + d.name + "' cannot be a realization; use an entry");
      out.offset = static_cast<std::size_t>(r.entry);
      break;
    case VarKind::transition_matrix:
      if (r.entry < 0) throw ModelError("transition matrix '" + d.name + "' is a realization row by row");
      out.offset = static_cast<std::size_t>(r.entry) * d.kind.size;
      out.length = d.kind.size;
      break;
    case VarKind::simplex:
    case VarKind::permutation:
      out.length = d.kind.size;
      break;
    default:
      break;
  }
  return out;
}

inline bool support_matches(Support s, VarKind k) {
  switch (s) {
    case Support::real: return k == VarKind::real_scalar || k == VarKind::real_list;
    case Support::integer: return k == VarKind::int_scalar || k == VarKind::int_list;
    case Support::simplex: return k == VarKind::simplex || k == VarKind::transition_matrix;
    case Support::permutation: return k == VarKind::permutation;
    case Support::none: return false;
  }
  return false;
}

}  // namespace detail

// Adds `target ~ Dist(params)` (or a target-less potential) as one law whose
// factors follow the distribution's decomposition. Each factor reads only the
// parameters its term uses.
inline LawId add_distribution_law(ModelBuilder& b, const DistributionSpec& spec, std::optional<VarRef> target,
                                  std::vector<ParamExpr> params, std::string label = {}) {
  if (params.size() != spec.params.size())
    throw DistributionError(spec.name + " expects " + std::to_string(spec.params.size()) + " argument(s), got " +
                            std::to_string(params.size()));
  if (spec.params.size() > 4) throw DistributionError("too many parameters");
  if (label.empty()) label = spec.name;

  std::optional<detail::Realization> real;
  if (spec.support == Support::none) {
    if (target) throw DistributionError(spec.name + " does not take a realization");
  } else {
    if (!target) throw DistributionError(spec.name + " needs a realization");
    const auto& d = b.variable(target->var);
    if (!detail::support_matches(spec.support, d.kind.tag))
      throw DistributionError(spec.name + " cannot generate variable '" + d.name + "' of its type");
    real = detail::realization_of(b, *target);
  }

  auto fns = std::make_shared<std::vector<ParamFn>>();
  for (auto& p : params) fns->push_back(p.eval);

  Generator g;
  if (spec.sample && real) {
    const DistributionSpec* sp = &spec;
    auto rz = *real;
    g = [sp, fns, rz](State& s, RandomSource& rng) {
      std::array<Arg, 4> args{};
      for (std::size_t i = 0; i < fns->size(); ++i) args[i] = (*fns)[i](s);
      Draw d;
      Arg shape = Arg::of(static_cast<double>(rz.length));
      sp->sample(args.data(), shape, rng, d);
      rz.write(s, d);
    };
  }
  std::vector<VarRef> outs;
  if (target) outs.push_back(*target);
  LawId law = b.add_law(outs, std::move(g), label);

  for (const auto& term : spec.terms) {
    std::vector<VarRef> scope;
    for (int i : term.params)
      for (const auto& r : params[static_cast<std::size_t>(i)].scope) scope.push_back(r);
    if (term.uses_realization && target) scope.push_back(*target);
    std::sort(scope.begin(), scope.end());
    scope.erase(std::unique(scope.begin(), scope.end()), scope.end());

    TermFn fn = term.fn;
    std::vector<int> used = term.params;
    LogDensity ld;
    if (real) {
      auto rz = *real;
      ld = [fn, fns, used, rz](const State& s) {
        std::array<Arg, 4> args{};
        for (int i : used) args[static_cast<std::size_t>(i)] = (*fns)[static_cast<std::size_t>(i)](s);
        return fn(args.data(), rz.read(s));
      };
    } else {
      ld = [fn, fns, used](const State& s) {
        std::array<Arg, 4> args{};
        for (int i : used) args[static_cast<std::size_t>(i)] = (*fns)[static_cast<std::size_t>(i)](s);
        return fn(args.data(), Arg{});
      };
    }
    FactorSpec fs;
    fs.scope = std::move(scope);
    fs.log_density = std::move(ld);
    fs.law = law;
    fs.label = label;
    b.add_factor(std::move(fs));
  }
  if (spec.constrained_realization && target && !b.variable(target->var).constrained) b.mark_constrained(target->var);
  return law;
}

inline LawId add_distribution_law(ModelBuilder& b, std::string_view name, std::optional<VarRef> target,
                                  std::vector<ParamExpr> params, std::string label = {}) {
  return add_distribution_law(b, distribution(name), target, std::move(params), std::move(label));
}

}  // namespace tempo
