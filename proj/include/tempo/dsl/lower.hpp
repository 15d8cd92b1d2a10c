#pragma once

// Lowering a parsed model to a core Model: bind declarations, unroll loops,
// and turn each composite law into a catalog law whose arguments are closures
// over the conditioning variables.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "tempo/core.hpp"
#include "tempo/dists.hpp"
#include "tempo/dsl/ast.hpp"
#include "tempo/dsl/parser.hpp"
#include "tempo/laws.hpp"

namespace tempo::dsl {

struct Range {
  std::int64_t lo = 0, hi = 0;
};
using ConstVec = std::shared_ptr<const std::vector<double>>;
using ConstMat = std::shared_ptr<const std::vector<std::vector<double>>>;

// A value known at lowering time: a number, constant data, a reference to a
// model variable (or one entry), or an integer range.
struct Value {
  std::variant<double, ConstVec, ConstMat, VarRef, Range> v;
  bool integer = false;

  static Value number(double x, bool is_int = false) { return {x, is_int}; }
  const double* num() const { return std::get_if<double>(&v); }
  const VarRef* ref() const { return std::get_if<VarRef>(&v); }
};

// Raw text per variable name, as given on the command line or read from a
// file: "NA", "1.2", "1, 2, NA", rows separated by ';' or newlines.
using Bindings = std::map<std::string, std::string>;

struct LoweredModel {
  Model model;
  std::string name;
  std::map<std::string, Value> params;
  std::vector<std::string> random_variables;
};

namespace detail {

inline std::optional<double> parse_number(std::string_view s) {
  std::string tmp(s);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) return std::nullopt;
  return v;
}

// rows of entries; entries split on commas or blanks, rows on ';' or newlines
inline std::vector<std::vector<std::string>> split_rows(std::string_view text) {
  std::vector<std::vector<std::string>> rows(1);
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) rows.back().push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    if (c == ';' || c == '\n') {
      flush();
      if (!rows.back().empty()) rows.emplace_back();
    } else if (c == ',' || c == ' ' || c == '\t' || c == '\r') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  if (rows.back().empty() && rows.size() > 1) rows.pop_back();
  return rows;
}

inline bool is_na(std::string_view s) { return s == "NA" || s == "na" || s == "NaN"; }

// A compiled argument: a scalar or vector closure plus the variables it reads.
struct Compiled {
  bool is_vector = false;
  std::optional<double> constant;
  std::function<double(const State&)> scalar;
  std::function<std::span<const double>(const State&)> vec;
  std::vector<VarRef> deps;

  double at(const State& s) const { return constant ? *constant : scalar(s); }
};

inline Compiled constant_scalar(double x) {
  Compiled c;
  c.constant = x;
  c.scalar = [x](const State&) { return x; };
  return c;
}

inline void merge_deps(std::vector<VarRef>& into, const std::vector<VarRef>& from) {
  into.insert(into.end(), from.begin(), from.end());
  std::sort(into.begin(), into.end());
  into.erase(std::unique(into.begin(), into.end()), into.end());
}

inline double apply_binary(char op, double a, double b) {
  switch (op) {
    case '+': return a + b;
    case '-': return a - b;
    case '*': return a * b;
    case '/': return b == 0.0 ? std::nan("") : a / b;
  }
  return std::nan("");
}

inline double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

using ScalarFn = double (*)(const double*);

inline std::optional<ScalarFn> scalar_function(const std::string& name, std::size_t arity) {
  if (arity == 1) {
    if (name == "exp") return [](const double* a) { return std::exp(a[0]); };
    if (name == "log") return [](const double* a) { return a[0] > 0 ? std::log(a[0]) : (a[0] == 0 ? neg_inf : std::nan("")); };
    if (name == "sqrt") return [](const double* a) { return a[0] >= 0 ? std::sqrt(a[0]) : std::nan(""); };
    if (name == "logistic") return [](const double* a) { return logistic(a[0]); };
    if (name == "abs") return [](const double* a) { return std::abs(a[0]); };
  }
  if (arity == 2) {
    if (name == "pow") return [](const double* a) { return std::pow(a[0], a[1]); };
    if (name == "min") return [](const double* a) { return std::min(a[0], a[1]); };
    if (name == "max") return [](const double* a) { return std::max(a[0], a[1]); };
  }
  return std::nullopt;
}

inline bool known_function(const std::string& n) {
  return n == "exp" || n == "log" || n == "sqrt" || n == "logistic" || n == "abs" || n == "pow" || n == "min" || n == "max";
}

}  // namespace detail

class Lowerer {
 public:
  Lowerer(const ModelAST& ast, Bindings bindings) : ast_(ast), bindings_(std::move(bindings)) {}

  LoweredModel run() {
    std::set<std::string> seen;
    for (const auto& d : ast_.declarations) {
      if (!seen.insert(d.name).second) fail(d.pos, "duplicate declaration of '" + d.name + "'");
      declare(d);
    }
    for (const auto& [name, text] : bindings_)
      if (!seen.count(name)) unknown_binding_ = name;
    if (!unknown_binding_.empty()) {
      std::string msg = "model " + ast_.name + " has no variable '" + unknown_binding_ + "'";
      throw DslError(ast_.file, {}, msg);
    }
    for (const auto& l : ast_.laws) lower(l, globals_, "");
    std::stable_sort(instances_.begin(), instances_.end(), [](const Instance& a, const Instance& b) { return a.key < b.key; });
    for (auto& i : instances_) i.add();
    for (VarId v : constrained_) builder_.mark_constrained(v);

    LoweredModel out{builder_.build(), ast_.name, params_, randoms_};
    return out;
  }

 private:
  struct VarInfo {
    VarId id = 0;
    TypeClass type = TypeClass::real_var;
    Kind kind;
    std::vector<double> data;
    std::vector<char> observed;
  };
  struct Instance {
    std::string key;
    std::function<void()> add;
  };
  using Env = std::map<std::string, Value>;

  [[noreturn]] void fail(Position p, const std::string& msg) const { throw DslError(ast_.file, p, msg); }

  // -- declarations ---------------------------------------------------------

  struct InitSpec {
    bool latent = false;
    std::size_t size = 1;
    std::vector<double> values;
    std::vector<char> observed;
  };

  std::optional<InitSpec> init_from_default(const Declaration& d, TypeClass tc) {
    if (!d.init) return std::nullopt;
    InitSpec s;
    const Expr& e = *d.init;
    auto size_arg = [&](const std::vector<ExprPtr>& args, const std::string& fn) -> std::size_t {
      if (args.size() != 1) fail(e.pos, fn + " takes one size argument");
      double n = as_number(eval(args[0], globals_), args[0]->pos);
      if (!(n >= 0 && n == std::floor(n))) fail(args[0]->pos, fn + ": size must be a nonnegative integer");
      return static_cast<std::size_t>(n);
    };
    if (auto c = std::get_if<Call>(&e.node)) {
      const auto& n = c->name;
      if (n == "latentReal" || n == "latentInt") {
        s.latent = true;
        s.values = {0.0};
        return s;
      }
      if (n == "latentRealList" || n == "latentIntList" || n == "latentSimplex") {
        s.latent = true;
        s.size = size_arg(c->args, n);
        double fill = n == "latentSimplex" && s.size > 0 ? 1.0 / static_cast<double>(s.size) : 0.0;
        s.values.assign(s.size, fill);
        return s;
      }
    }
    if (auto nw = std::get_if<New>(&e.node)) {
      if (nw->type != "Permutation") fail(e.pos, "unsupported constructor 'new " + nw->type + "'");
      s.latent = true;
      s.size = size_arg(nw->args, "new Permutation");
      for (std::size_t i = 0; i < s.size; ++i) s.values.push_back(static_cast<double>(i));
      return s;
    }
    Value v = eval(d.init, globals_);
    if (auto x = v.num()) {
      s.values = {*x};
    } else if (auto cv = std::get_if<ConstVec>(&v.v)) {
      s.values = **cv;
      s.size = s.values.size();
    } else {
      fail(e.pos, "default of '" + d.name + "' must be a constant or a latent constructor");
    }
    (void)tc;
    return s;
  }

  InitSpec init_from_binding(const Declaration& d, TypeClass tc, const std::string& text,
                             const std::optional<InitSpec>& fallback) {
    auto rows = detail::split_rows(text);
    InitSpec s;
    std::vector<std::string> flat;
    for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    if (flat.size() == 1 && detail::is_na(flat[0]) && tc != TypeClass::real_var && tc != TypeClass::int_var) {
      if (!fallback) fail(d.pos, "cannot infer the size of latent '" + d.name + "'; give it a default such as latentRealList(n)");
      s = *fallback;
      s.latent = true;
      s.observed.clear();
      return s;
    }
    for (const auto& tok : flat) {
      if (detail::is_na(tok)) {
        s.values.push_back(tc == TypeClass::simplex ? 0.0 : 0.0);
        s.observed.push_back(0);
        continue;
      }
      auto x = detail::parse_number(tok);
      if (!x) fail(d.pos, "cannot parse '" + tok + "' as a value of '" + d.name + "'");
      s.values.push_back(*x);
      s.observed.push_back(1);
    }
    s.size = s.values.size();
    s.latent = std::none_of(s.observed.begin(), s.observed.end(), [](char c) { return c != 0; });
    return s;
  }

  void declare(const Declaration& d) {
    auto tc = classify_type(d.type);
    if (!tc) fail(d.pos, "unknown type name '" + d.type + "'");
    auto it = bindings_.find(d.name);
    if (!d.random) {
      declare_param(d, *tc, it == bindings_.end() ? nullptr : &it->second);
      return;
    }
    if (*tc == TypeClass::real_const || *tc == TypeClass::int_const || *tc == TypeClass::matrix)
      fail(d.pos, "random variable '" + d.name + "' needs a RealVar, IntVar, Simplex, List or Permutation type");

    auto dflt = init_from_default(d, *tc);
    InitSpec spec;
    if (it != bindings_.end())
      spec = init_from_binding(d, *tc, it->second, dflt);
    else if (dflt)
      spec = *dflt;
    else
      fail(d.pos, "no value for '" + d.name + "'; bind it (NA for latent)");
    if (spec.observed.empty()) spec.observed.assign(spec.values.size(), spec.latent ? 0 : 1);

    Kind kind;
    switch (*tc) {
      case TypeClass::real_var:
      case TypeClass::int_var:
        if (spec.values.size() != 1) fail(d.pos, "'" + d.name + "' is a scalar but got " + std::to_string(spec.values.size()) + " values");
        kind = *tc == TypeClass::real_var ? Kind::real_scalar() : Kind::int_scalar();
        break;
      case TypeClass::real_list: kind = Kind::real_list(spec.values.size()); break;
      case TypeClass::int_list: kind = Kind::int_list(spec.values.size()); break;
      case TypeClass::simplex: kind = Kind::simplex(spec.values.size()); break;
      case TypeClass::permutation: kind = Kind::permutation(spec.values.size()); break;
      default: break;
    }
    bool per_entry = kind.per_entry_units();
    bool mixed = std::any_of(spec.observed.begin(), spec.observed.end(), [](char c) { return c; }) &&
                 std::any_of(spec.observed.begin(), spec.observed.end(), [](char c) { return !c; });
    if (mixed && !per_entry) fail(d.pos, "'" + d.name + "' cannot be partially observed");
    bool all_observed = std::all_of(spec.observed.begin(), spec.observed.end(), [](char c) { return c; });

    InitialValue init;
    if (kind.real_storage()) {
      init = spec.values;
      if (kind.tag == VarKind::real_scalar) init = spec.values[0];
    } else {
      std::vector<std::int64_t> iv;
      for (double x : spec.values) {
        if (x != std::floor(x)) fail(d.pos, "'" + d.name + "' takes integer values");
        iv.push_back(static_cast<std::int64_t>(x));
      }
      init = iv;
      if (kind.tag == VarKind::int_scalar) init = iv[0];
    }
    VarId id;
    try {
      id = builder_.add_variable(d.name, kind, all_observed ? Status::observed : Status::latent, init);
      if (mixed)
        for (std::size_t i = 0; i < spec.observed.size(); ++i) builder_.set_entry_observed(id, i, spec.observed[i] != 0);
    } catch (const ModelError& e) {
      fail(d.pos, e.what());
    }
    vars_[d.name] = VarInfo{id, *tc, kind, spec.values, spec.observed};
    globals_[d.name] = Value{VarRef{id}};
    randoms_.push_back(d.name);
  }

  void declare_param(const Declaration& d, TypeClass tc, const std::string* text) {
    if (tc == TypeClass::permutation) fail(d.pos, "Permutation parameters are not supported");
    Value v;
    if (text) {
      auto rows = detail::split_rows(*text);
      std::vector<std::vector<double>> m;
      for (const auto& r : rows) {
        m.emplace_back();
        for (const auto& tok : r) {
          if (detail::is_na(tok)) fail(d.pos, "param '" + d.name + "' cannot be NA");
          auto x = detail::parse_number(tok);
          if (!x) fail(d.pos, "cannot parse '" + tok + "' as a value of '" + d.name + "'");
          m.back().push_back(*x);
        }
      }
      if (m.empty() || m[0].empty()) fail(d.pos, "empty value for '" + d.name + "'");
      bool scalar_type = tc == TypeClass::real_var || tc == TypeClass::int_var || tc == TypeClass::real_const || tc == TypeClass::int_const;
      if (scalar_type) {
        if (m.size() != 1 || m[0].size() != 1) fail(d.pos, "'" + d.name + "' takes a single value");
        v = Value::number(m[0][0], tc == TypeClass::int_var || tc == TypeClass::int_const);
      } else if (tc == TypeClass::matrix && m.size() > 1 &&
                 std::any_of(m.begin(), m.end(), [](const auto& r) { return r.size() > 1; })) {
        for (const auto& r : m)
          if (r.size() != m[0].size()) fail(d.pos, "rows of '" + d.name + "' differ in length");
        v = Value{std::make_shared<const std::vector<std::vector<double>>>(m)};
      } else {
        // one row, or one value per line
        std::vector<double> flat;
        for (const auto& r : m) flat.insert(flat.end(), r.begin(), r.end());
        v = Value{std::make_shared<const std::vector<double>>(std::move(flat))};
      }
    } else if (d.init) {
      if (auto c = std::get_if<Call>(&d.init->node); c && c->name.rfind("latent", 0) == 0)
        fail(d.pos, "param '" + d.name + "' cannot be latent");
      v = eval(d.init, globals_);
    } else {
      fail(d.pos, "no value for param '" + d.name + "'");
    }
    if ((tc == TypeClass::int_var || tc == TypeClass::int_const)) {
      const double* x = v.num();
      if (!x || *x != std::floor(*x)) fail(d.pos, "param '" + d.name + "' must be an integer");
      v.integer = true;
    }
    globals_[d.name] = v;
    params_[d.name] = v;
  }

  // -- lowering-time evaluation --------------------------------------------

  double as_number(const Value& v, Position p) const {
    if (auto x = v.num()) return *x;
    if (auto r = v.ref()) {
      // observed data can be read at lowering time
      for (const auto& [name, info] : vars_) {
        if (info.id != r->var) continue;
        std::size_t idx = r->entry < 0 ? 0 : static_cast<std::size_t>(r->entry);
        bool scalar = r->entry >= 0 || info.kind.storage_size() == 1;
        if (scalar && idx < info.observed.size() && info.observed[idx]) return info.data[idx];
        fail(p, "'" + name + "' is random here; ranges, defaults and local bindings must not depend on latent variables");
      }
    }
    fail(p, "expected a number");
  }

  const VarInfo& info_of(VarId id) const {
    for (const auto& [name, info] : vars_)
      if (info.id == id) return info;
    throw std::logic_error("unknown variable id");
  }

  std::string name_of(VarId id) const {
    for (const auto& [name, info] : vars_)
      if (info.id == id) return name;
    return "?";
  }

  Value eval(const ExprPtr& e, const Env& env) const {
    return std::visit(
        [&](const auto& x) -> Value {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Number>) {
            return Value::number(x.value, x.integer);
          } else if constexpr (std::is_same_v<T, Ident>) {
            auto it = env.find(x.name);
            if (it == env.end()) fail(e->pos, "unknown identifier '" + x.name + "'");
            return it->second;
          } else if constexpr (std::is_same_v<T, Unary>) {
            Value a = eval(x.operand, env);
            return Value::number(-as_number(a, e->pos), a.integer);
          } else if constexpr (std::is_same_v<T, Binary>) {
            Value a = eval(x.lhs, env), b = eval(x.rhs, env);
            double l = as_number(a, x.lhs->pos), r = as_number(b, x.rhs->pos);
            if (x.op == 'r') {
              if (l != std::floor(l) || r != std::floor(r)) fail(e->pos, "range bounds must be integers");
              return Value{Range{static_cast<std::int64_t>(l), static_cast<std::int64_t>(r)}};
            }
            if (x.op == '/' && r == 0.0) fail(e->pos, "division by zero");
            bool ints = a.integer && b.integer;
            double out = detail::apply_binary(x.op, l, r);
            if (ints && x.op == '/') out = std::trunc(l / r);
            return Value::number(out, ints);
          } else if constexpr (std::is_same_v<T, Call>) {
            if (x.name == "fixedVector" || x.name == "fixedRealList" || x.name == "fixedIntList" || x.name == "fixedSimplex") {
              std::vector<double> xs;
              for (const auto& a : x.args) xs.push_back(as_number(eval(a, env), a->pos));
              return Value{std::make_shared<const std::vector<double>>(std::move(xs))};
            }
            auto f = detail::scalar_function(x.name, x.args.size());
            if (!f) {
              if (detail::known_function(x.name)) fail(e->pos, "wrong number of arguments to " + x.name);
              fail(e->pos, "unknown function '" + x.name + "'");
            }
            std::vector<double> args;
            for (const auto& a : x.args) args.push_back(as_number(eval(a, env), a->pos));
            double out = (*f)(args.data());
            if (std::isnan(out)) fail(e->pos, x.name + " is undefined here");
            return Value::number(out);
          } else if constexpr (std::is_same_v<T, Member>) {
            return eval_member(*e, x, env);
          } else {
            fail(e->pos, "constructors are only allowed as declaration defaults");
          }
        },
        e->node);
  }

  Value eval_member(const Expr& e, const Member& m, const Env& env) const {
    Value obj = eval(m.object, env);
    if (m.name == "getConnections" && !m.call) return obj;
    if (m.name == "size" && !m.call) {
      if (auto r = obj.ref()) {
        if (r->entry >= 0) fail(e.pos, "'.size' of a single entry");
        return Value::number(static_cast<double>(info_of(r->var).kind.size), true);
      }
      if (auto cv = std::get_if<ConstVec>(&obj.v)) return Value::number(static_cast<double>((*cv)->size()), true);
      if (auto cm = std::get_if<ConstMat>(&obj.v)) return Value::number(static_cast<double>((*cm)->size()), true);
      if (auto rg = std::get_if<Range>(&obj.v)) return Value::number(static_cast<double>(rg->hi - rg->lo), true);
      fail(e.pos, "'.size' of a number");
    }
    if ((m.name == "get" || m.name == "row") && m.call) {
      if (m.args.size() != 1) fail(e.pos, "'." + m.name + "' takes one index");
      double di = as_number(eval(m.args[0], env), m.args[0]->pos);
      if (di != std::floor(di) || di < 0) fail(m.args[0]->pos, "index must be a nonnegative integer");
      auto i = static_cast<std::size_t>(di);
      if (auto r = obj.ref()) {
        const auto& info = info_of(r->var);
        if (r->entry >= 0) fail(e.pos, "'.get' of a single entry");
        if (i >= info.kind.size) fail(e.pos, "index " + std::to_string(i) + " out of range for '" + name_of(r->var) + "'");
        if (!info.kind.per_entry_units()) fail(e.pos, "entries of '" + name_of(r->var) + "' cannot be addressed separately");
        return Value{VarRef{r->var, static_cast<int>(i)}};
      }
      if (auto cv = std::get_if<ConstVec>(&obj.v)) {
        if (i >= (*cv)->size()) fail(e.pos, "index out of range");
        return Value::number((**cv)[i]);
      }
      if (auto cm = std::get_if<ConstMat>(&obj.v)) {
        if (i >= (*cm)->size()) fail(e.pos, "row index out of range");
        return Value{std::make_shared<const std::vector<double>>((**cm)[i])};
      }
      fail(e.pos, "'." + m.name + "' of a number");
    }
    fail(e.pos, "unsupported member '" + m.name + "'");
  }

  // -- density-time compilation ---------------------------------------------

  // Arguments may only read names listed after '|'.
  detail::Compiled compile(const ExprPtr& e, const Env& scope) const {
    return std::visit(
        [&](const auto& x) -> detail::Compiled {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Number>) {
            return detail::constant_scalar(x.value);
          } else if constexpr (std::is_same_v<T, Ident>) {
            return compile_value(lookup(x.name, scope, e->pos), e->pos, x.name);
          } else if constexpr (std::is_same_v<T, Unary>) {
            auto a = compile(x.operand, scope);
            need_scalar(a, x.operand->pos);
            if (a.constant) return detail::constant_scalar(-*a.constant);
            detail::Compiled c;
            auto f = a.scalar;
            c.scalar = [f](const State& s) { return -f(s); };
            c.deps = a.deps;
            return c;
          } else if constexpr (std::is_same_v<T, Binary>) {
            if (x.op == 'r') fail(e->pos, "a range is not a distribution argument");
            auto a = compile(x.lhs, scope), b = compile(x.rhs, scope);
            need_scalar(a, x.lhs->pos);
            need_scalar(b, x.rhs->pos);
            char op = x.op;
            if (a.constant && b.constant) return detail::constant_scalar(detail::apply_binary(op, *a.constant, *b.constant));
            detail::Compiled c;
            c.deps = a.deps;
            detail::merge_deps(c.deps, b.deps);
            c.scalar = [op, a, b](const State& s) { return detail::apply_binary(op, a.at(s), b.at(s)); };
            return c;
          } else if constexpr (std::is_same_v<T, Call>) {
            auto f = detail::scalar_function(x.name, x.args.size());
            if (!f) {
              if (detail::known_function(x.name)) fail(e->pos, "wrong number of arguments to " + x.name);
              fail(e->pos, "unknown function '" + x.name + "'");
            }
            std::vector<detail::Compiled> args;
            detail::Compiled c;
            bool all_const = true;
            for (const auto& a : x.args) {
              args.push_back(compile(a, scope));
              need_scalar(args.back(), a->pos);
              all_const = all_const && args.back().constant.has_value();
              detail::merge_deps(c.deps, args.back().deps);
            }
            auto fn = *f;
            if (all_const) {
              std::vector<double> v;
              for (auto& a : args) v.push_back(*a.constant);
              return detail::constant_scalar(fn(v.data()));
            }
            if (args.size() == 1) {
              auto a0 = args[0];
              c.scalar = [fn, a0](const State& s) {
                double v = a0.at(s);
                return fn(&v);
              };
              return c;
            }
            auto a0 = args[0], a1 = args[1];
            // squaring is the common case and x * x is what pow returns for it
            if (x.name == "pow" && a1.constant && *a1.constant == 2.0) {
              c.scalar = [a0](const State& s) {
                double v = a0.at(s);
                return v * v;
              };
              return c;
            }
            c.scalar = [fn, a0, a1](const State& s) {
              double v[2] = {a0.at(s), a1.at(s)};
              return fn(v);
            };
            return c;
          } else if constexpr (std::is_same_v<T, Member>) {
            return compile_member(*e, x, scope);
          } else {
            fail(e->pos, "constructors are not distribution arguments");
          }
        },
        e->node);
  }

  const Value& lookup(const std::string& name, const Env& scope, Position p) const {
    auto it = scope.find(name);
    if (it != scope.end()) return it->second;
    if (globals_.count(name) || current_loop_names_.count(name))
      fail(p, "'" + name + "' is used in an argument but is not listed after '|'");
    fail(p, "unknown identifier '" + name + "'");
  }

  void need_scalar(const detail::Compiled& c, Position p) const {
    if (c.is_vector) fail(p, "expected a number, found a vector");
  }

  detail::Compiled compile_value(const Value& v, Position p, const std::string& name) const {
    detail::Compiled c;
    if (auto x = v.num()) return detail::constant_scalar(*x);
    if (auto cv = std::get_if<ConstVec>(&v.v)) {
      c.is_vector = true;
      ConstVec data = *cv;
      c.vec = [data](const State&) { return std::span<const double>(*data); };
      return c;
    }
    if (std::holds_alternative<ConstMat>(v.v)) fail(p, "matrix '" + name + "' needs '.row(i)'");
    if (std::holds_alternative<Range>(v.v)) fail(p, "a range is not a distribution argument");
    VarRef r = *v.ref();
    const auto& info = info_of(r.var);
    VarId id = r.var;
    c.deps = {r};
    if (r.entry >= 0 || info.kind.tag == VarKind::real_scalar || info.kind.tag == VarKind::int_scalar) {
      std::size_t idx = r.entry < 0 ? 0 : static_cast<std::size_t>(r.entry);
      if (info.kind.real_storage())
        c.scalar = [id, idx](const State& s) { return s.real(id, idx); };
      else
        c.scalar = [id, idx](const State& s) { return static_cast<double>(s.integer(id, idx)); };
      return c;
    }
    if (info.kind.tag == VarKind::simplex || info.kind.tag == VarKind::real_list) {
      c.is_vector = true;
      c.vec = [id](const State& s) { return s.reals(id); };
      return c;
    }
    fail(p, "'" + name + "' cannot be used as a number or a real vector here");
  }

  // object of .get / .row / .size, resolved without evaluating entries
  Value resolve_object(const ExprPtr& e, const Env& scope) const {
    if (auto id = std::get_if<Ident>(&e->node)) return lookup(id->name, scope, e->pos);
    if (auto m = std::get_if<Member>(&e->node); m && m->name == "getConnections" && !m->call) return resolve_object(m->object, scope);
    fail(e->pos, "unsupported expression before '.'");
  }

  detail::Compiled compile_member(const Expr& e, const Member& m, const Env& scope) const {
    Value obj = resolve_object(m.object, scope);
    if (m.name == "getConnections" && !m.call) return compile_value(obj, e.pos, "permutation");
    if (m.name == "size" && !m.call) {
      if (auto r = obj.ref()) return detail::constant_scalar(static_cast<double>(info_of(r->var).kind.size));
      if (auto cv = std::get_if<ConstVec>(&obj.v)) return detail::constant_scalar(static_cast<double>((*cv)->size()));
      if (auto cm = std::get_if<ConstMat>(&obj.v)) return detail::constant_scalar(static_cast<double>((*cm)->size()));
      fail(e.pos, "'.size' of a number");
    }
    if (!(m.call && (m.name == "get" || m.name == "row"))) fail(e.pos, "unsupported member '" + m.name + "'");
    if (m.args.size() != 1) fail(e.pos, "'." + m.name + "' takes one index");
    auto idx = compile(m.args[0], scope);
    need_scalar(idx, m.args[0]->pos);
    auto index_of = [idx](const State& s, std::size_t n) -> std::optional<std::size_t> {
      double d = idx.at(s);
      if (!(d >= 0) || d != std::floor(d) || d >= static_cast<double>(n)) return std::nullopt;
      return static_cast<std::size_t>(d);
    };
    detail::Compiled c;
    c.deps = idx.deps;
    if (auto cm = std::get_if<ConstMat>(&obj.v)) {
      ConstMat data = *cm;
      c.is_vector = true;
      c.vec = [data, index_of](const State& s) -> std::span<const double> {
        auto i = index_of(s, data->size());
        if (!i) return {};
        return (*data)[*i];
      };
      return c;
    }
    if (m.name == "row") fail(e.pos, "'.row' applies to a matrix");
    if (auto cv = std::get_if<ConstVec>(&obj.v)) {
      ConstVec data = *cv;
      if (idx.constant) {
        auto i = index_of(State{}, data->size());
        return detail::constant_scalar(i ? (*data)[*i] : std::nan(""));
      }
      c.scalar = [data, index_of](const State& s) {
        auto i = index_of(s, data->size());
        return i ? (*data)[*i] : std::nan("");
      };
      return c;
    }
    auto r = obj.ref();
    if (!r || r->entry >= 0) fail(e.pos, "'.get' needs a list, simplex or permutation");
    const auto& info = info_of(r->var);
    VarId id = r->var;
    std::size_t n = info.kind.size;
    bool real = info.kind.real_storage();
    if (idx.constant) {
      auto i = index_of(State{}, n);
      if (!i) fail(e.pos, "index out of range for '" + name_of(id) + "'");
      detail::merge_deps(c.deps, {info.kind.per_entry_units() ? VarRef{id, static_cast<int>(*i)} : VarRef{id}});
    } else {
      detail::merge_deps(c.deps, {VarRef{id}});
    }
    c.scalar = [id, n, real, index_of](const State& s) {
      auto i = index_of(s, n);
      if (!i) return std::nan("");
      return real ? s.real(id, *i) : static_cast<double>(s.integer(id, *i));
    };
    return c;
  }

  // -- laws ----------------------------------------------------------------

  static std::string env_signature(const Env& env, const std::set<std::string>& names) {
    std::ostringstream o;
    o.precision(17);
    for (const auto& n : names) {
      auto it = env.find(n);
      if (it == env.end()) continue;
      o << n << "=";
      if (auto x = it->second.num()) o << *x;
      if (auto r = it->second.ref()) o << "@" << r->var << ":" << r->entry;
      o << ";";
    }
    return o.str();
  }

  void lower(const LawNode& n, const Env& env, const std::string& sig) {
    if (auto l = std::get_if<Loop>(&n.node)) {
      Value range = eval(l->range, env);
      std::vector<Value> items;
      if (auto rg = std::get_if<Range>(&range.v)) {
        for (auto i = rg->lo; i < rg->hi; ++i) items.push_back(Value::number(static_cast<double>(i), true));
      } else if (auto r = range.ref(); r && r->entry < 0 && info_of(r->var).kind.per_entry_units()) {
        for (std::size_t i = 0; i < info_of(r->var).kind.size; ++i) items.push_back(Value{VarRef{r->var, static_cast<int>(i)}});
      } else if (auto cv = std::get_if<ConstVec>(&range.v)) {
        for (double x : **cv) items.push_back(Value::number(x));
      } else {
        fail(l->range->pos, "loop range must be 'a ..< b', a list variable or constant data");
      }
      if (globals_.count(l->iterator)) fail(n.pos, "loop variable '" + l->iterator + "' shadows a declaration");
      current_loop_names_.insert(l->iterator);
      for (std::size_t k = 0; k < items.size(); ++k) {
        Env inner = env;
        inner[l->iterator] = items[k];
        std::string s = sig + l->iterator + "=" + std::to_string(k) + ";";
        for (const auto& b : l->body) lower(b, inner, s);
      }
      current_loop_names_.erase(l->iterator);
      return;
    }
    if (auto c = std::get_if<ConstrainedMark>(&n.node)) {
      auto it = vars_.find(c->variable);
      if (it == vars_.end()) fail(n.pos, "unknown random variable '" + c->variable + "'");
      constrained_.insert(it->second.id);
      return;
    }
    const auto& law = std::get<CompositeLaw>(n.node);
    if (law.targets.size() > 1) fail(n.pos, "laws with several variables left of '~' are not supported");

    std::optional<VarRef> target;
    if (!law.targets.empty()) {
      Value t = eval(law.targets[0], env);
      auto r = t.ref();
      if (!r) fail(law.targets[0]->pos, "the left of '~' must be a random variable");
      target = *r;
    }

    Env scope;
    for (const auto& cond : law.conditioners) {
      if (cond.type.empty()) {
        auto it = env.find(cond.name);
        if (it == env.end()) fail(cond.pos, "unknown identifier '" + cond.name + "'");
        scope[cond.name] = it->second;
      } else {
        scope[cond.name] = eval(cond.value, env);
      }
    }

    const DistributionSpec* spec = nullptr;
    try {
      spec = &distribution(law.distribution);
    } catch (const std::exception& ex) {
      fail(n.pos, ex.what());
    }
    if (law.args.size() != spec->params.size())
      fail(n.pos, law.distribution + " expects " + std::to_string(spec->params.size()) + " argument(s), got " +
                      std::to_string(law.args.size()));

    std::vector<ParamExpr> params;
    for (std::size_t i = 0; i < law.args.size(); ++i) {
      auto c = compile(law.args[i], scope);
      bool want_vector = spec->params[i].kind == ParamKind::vector;
      if (want_vector != c.is_vector)
        fail(law.args[i]->pos, "argument " + std::to_string(i + 1) + " of " + law.distribution + " must be " +
                                   (want_vector ? "a vector" : "a number"));
      ParamExpr p;
      p.scope = c.deps;
      if (c.is_vector) {
        auto f = c.vec;
        p.eval = [f](const State& s) { return Arg::of(f(s)); };
      } else if (c.constant) {
        double x = *c.constant;
        p.eval = [x](const State&) { return Arg::of(x); };
      } else {
        auto f = c.scalar;
        p.eval = [f](const State& s) { return Arg::of(f(s)); };
      }
      params.push_back(std::move(p));
    }

    // canonical order: the law's text plus the loop indices that produced it
    LawNode printed = n;
    std::ostringstream text;
    detail::print_law(text, printed, 0);
    std::string key = text.str() + "#" + sig;
    Position pos = n.pos;
    std::string label = law.distribution;
    if (target) label = describe(*target) + " ~ " + label;
    instances_.push_back({key, [this, spec, target, params, label, pos]() mutable {
                            try {
                              add_distribution_law(builder_, *spec, target, std::move(params), label);
                            } catch (const std::exception& ex) {
                              fail(pos, ex.what());
                            }
                          }});
  }

  std::string describe(VarRef r) const {
    std::string s = name_of(r.var);
    if (r.entry >= 0) s += "[" + std::to_string(r.entry) + "]";
    return s;
  }

  const ModelAST& ast_;
  Bindings bindings_;
  ModelBuilder builder_;
  Env globals_;
  std::map<std::string, VarInfo> vars_;
  std::map<std::string, Value> params_;
  std::vector<std::string> randoms_;
  std::vector<Instance> instances_;
  std::set<VarId> constrained_;
  std::set<std::string> current_loop_names_;
  std::string unknown_binding_;
};

inline LoweredModel lower(const ModelAST& ast, const Bindings& bindings = {}) { return Lowerer(ast, bindings).run(); }

inline LoweredModel compile_model(std::string_view source, const Bindings& bindings = {}, const std::string& file = {}) {
  return lower(parse_model(source, file), bindings);
}

// Numeric evaluation against plain values, as used for defaults and tests.
using NumericEnv = std::map<std::string, std::variant<double, std::vector<double>>>;

inline double eval_expr(const ExprPtr& e, const NumericEnv& env) {
  return std::visit(
      [&](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Number>) {
          return x.value;
        } else if constexpr (std::is_same_v<T, Ident>) {
          auto it = env.find(x.name);
          if (it == env.end()) throw DslError({}, e->pos, "unknown identifier '" + x.name + "'");
          if (auto d = std::get_if<double>(&it->second)) return *d;
          throw DslError({}, e->pos, "'" + x.name + "' is a vector");
        } else if constexpr (std::is_same_v<T, Unary>) {
          return -eval_expr(x.operand, env);
        } else if constexpr (std::is_same_v<T, Binary>) {
          double a = eval_expr(x.lhs, env), b = eval_expr(x.rhs, env);
          if (x.op == 'r') throw DslError({}, e->pos, "a range is not a number");
          if (x.op == '/' && b == 0.0) throw DslError({}, e->pos, "division by zero");
          return detail::apply_binary(x.op, a, b);
        } else if constexpr (std::is_same_v<T, Call>) {
          auto f = detail::scalar_function(x.name, x.args.size());
          if (!f) throw DslError({}, e->pos, "unknown function '" + x.name + "'");
          std::vector<double> args;
          for (const auto& a : x.args) args.push_back(eval_expr(a, env));
          return (*f)(args.data());
        } else if constexpr (std::is_same_v<T, Member>) {
          auto id = std::get_if<Ident>(&x.object->node);
          if (!id) throw DslError({}, e->pos, "unsupported expression before '.'");
          auto it = env.find(id->name);
          if (it == env.end()) throw DslError({}, e->pos, "unknown identifier '" + id->name + "'");
          auto v = std::get_if<std::vector<double>>(&it->second);
          if (!v) throw DslError({}, e->pos, "'" + id->name + "' is not a vector");
          if (x.name == "size" && !x.call) return static_cast<double>(v->size());
          if (x.name == "get" && x.call && x.args.size() == 1) {
            double i = eval_expr(x.args[0], env);
            if (!(i >= 0) || i != std::floor(i) || i >= static_cast<double>(v->size())) throw DslError({}, e->pos, "index out of range");
            return (*v)[static_cast<std::size_t>(i)];
          }
          throw DslError({}, e->pos, "unsupported member '" + x.name + "'");
        } else {
          throw DslError({}, e->pos, "constructors are not numbers");
        }
      },
      e->node);
}

inline double eval_expr(std::string_view source, const NumericEnv& env = {}) { return eval_expr(parse_expression(source), env); }

}  // namespace tempo::dsl
