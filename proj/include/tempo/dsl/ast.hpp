#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tempo/dsl/lexer.hpp"

namespace tempo::dsl {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Number {
  double value = 0.0;
  bool integer = false;
  std::string text;
};
struct Ident {
  std::string name;
};
struct Unary {
  char op = '-';
  ExprPtr operand;
};
struct Binary {
  char op = '+';  // + - * /, or 'r' for a ..< b
  ExprPtr lhs, rhs;
};
struct Call {
  std::string name;
  std::vector<ExprPtr> args;
};
// object.name or object.name(args)
struct Member {
  ExprPtr object;
  std::string name;
  bool call = false;
  std::vector<ExprPtr> args;
};
struct New {
  std::string type;
  std::vector<ExprPtr> args;
};

struct Expr {
  std::variant<Number, Ident, Unary, Binary, Call, Member, New> node;
  Position pos;
};

template <class T>
ExprPtr make_expr(T node, Position pos = {}) {
  return std::make_shared<const Expr>(Expr{std::move(node), pos});
}

struct Declaration {
  bool random = true;
  std::string type;  // e.g. RealVar, List<IntVar>
  std::string name;
  ExprPtr init;      // the ?: default, may be null
  Position pos;
};

struct Conditioner {
  std::string type;  // empty for a plain name
  std::string name;
  ExprPtr value;     // set for typed local bindings
  Position pos;
};

struct LawNode;

struct CompositeLaw {
  std::vector<ExprPtr> targets;
  std::vector<Conditioner> conditioners;
  std::string distribution;
  std::vector<ExprPtr> args;
};
struct Loop {
  std::string type;
  std::string iterator;
  ExprPtr range;
  std::vector<LawNode> body;
};
struct ConstrainedMark {
  std::string variable;
};

struct LawNode {
  std::variant<CompositeLaw, Loop, ConstrainedMark> node;
  Position pos;
};

struct ModelAST {
  std::optional<std::string> package;
  std::string name;
  std::vector<Declaration> declarations;
  std::vector<LawNode> laws;
  std::string file;
};

// Structural equality, positions and number spelling ignored.
bool same(const ExprPtr& a, const ExprPtr& b);
bool same(const LawNode& a, const LawNode& b);
bool same(const ModelAST& a, const ModelAST& b);

namespace detail {

template <class T, class F>
bool same_list(const std::vector<T>& a, const std::vector<T>& b, F eq) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!eq(a[i], b[i])) return false;
  return true;
}

}  // namespace detail

inline bool same(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  if (a->node.index() != b->node.index()) return false;
  auto eq = [](const ExprPtr& x, const ExprPtr& y) { return same(x, y); };
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b->node);
        if constexpr (std::is_same_v<T, Number>) return x.value == y.value && x.integer == y.integer;
        if constexpr (std::is_same_v<T, Ident>) return x.name == y.name;
        if constexpr (std::is_same_v<T, Unary>) return x.op == y.op && same(x.operand, y.operand);
        if constexpr (std::is_same_v<T, Binary>) return x.op == y.op && same(x.lhs, y.lhs) && same(x.rhs, y.rhs);
        if constexpr (std::is_same_v<T, Call>) return x.name == y.name && detail::same_list(x.args, y.args, eq);
        if constexpr (std::is_same_v<T, Member>)
          return x.name == y.name && x.call == y.call && same(x.object, y.object) && detail::same_list(x.args, y.args, eq);
        if constexpr (std::is_same_v<T, New>) return x.type == y.type && detail::same_list(x.args, y.args, eq);
        return false;
      },
      a->node);
}

inline bool same(const LawNode& a, const LawNode& b) {
  if (a.node.index() != b.node.index()) return false;
  auto eq = [](const ExprPtr& x, const ExprPtr& y) { return same(x, y); };
  if (auto x = std::get_if<CompositeLaw>(&a.node)) {
    const auto& y = std::get<CompositeLaw>(b.node);
    auto ceq = [](const Conditioner& p, const Conditioner& q) {
      return p.type == q.type && p.name == q.name && same(p.value, q.value);
    };
    return x->distribution == y.distribution && detail::same_list(x->targets, y.targets, eq) &&
           detail::same_list(x->args, y.args, eq) && detail::same_list(x->conditioners, y.conditioners, ceq);
  }
  if (auto x = std::get_if<Loop>(&a.node)) {
    const auto& y = std::get<Loop>(b.node);
    return x->type == y.type && x->iterator == y.iterator && same(x->range, y.range) &&
           detail::same_list(x->body, y.body, [](const LawNode& p, const LawNode& q) { return same(p, q); });
  }
  return std::get<ConstrainedMark>(a.node).variable == std::get<ConstrainedMark>(b.node).variable;
}

inline bool same(const ModelAST& a, const ModelAST& b) {
  auto deq = [](const Declaration& x, const Declaration& y) {
    return x.random == y.random && x.type == y.type && x.name == y.name && same(x.init, y.init);
  };
  return a.package == b.package && a.name == b.name && detail::same_list(a.declarations, b.declarations, deq) &&
         detail::same_list(a.laws, b.laws, [](const LawNode& p, const LawNode& q) { return same(p, q); });
}

enum class TypeClass { real_var, int_var, real_const, int_const, simplex, real_list, int_list, matrix, permutation };

inline std::optional<TypeClass> classify_type(std::string_view t) {
  if (t == "RealVar") return TypeClass::real_var;
  if (t == "IntVar") return TypeClass::int_var;
  if (t == "Double" || t == "double" || t == "Real" || t == "real") return TypeClass::real_const;
  if (t == "Integer" || t == "int" || t == "Int" || t == "Long" || t == "long") return TypeClass::int_const;
  if (t == "Simplex") return TypeClass::simplex;
  if (t == "List<RealVar>" || t == "List<Double>") return TypeClass::real_list;
  if (t == "List<IntVar>" || t == "List<Integer>") return TypeClass::int_list;
  if (t == "Matrix" || t == "TransitionMatrix") return TypeClass::matrix;
  if (t == "Permutation") return TypeClass::permutation;
  return std::nullopt;
}

}  // namespace tempo::dsl
