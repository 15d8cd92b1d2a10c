#pragma once

// Recursive-descent parser for the model language subset, and a printer
// whose output parses back to the same tree.

#include <cmath>
#include <sstream>

#include "tempo/dsl/ast.hpp"
#include "tempo/dsl/lexer.hpp"

namespace tempo::dsl {

class Parser {
 public:
  Parser(std::vector<Token> toks, std::string file) : t_(std::move(toks)), file_(std::move(file)) {}

  ModelAST model() {
    ModelAST m;
    m.file = file_;
    if (accept(Tok::kw_package)) m.package = qualified_name();
    if (peek().kind == Tok::kw_import) fail(peek(), "import statements are not supported");
    expect(Tok::kw_model, "'model'");
    m.name = expect(Tok::ident, "model name").text;
    expect(Tok::lbrace, "'{'");
    while (peek().kind == Tok::kw_random || peek().kind == Tok::kw_param) m.declarations.push_back(declaration());
    bool have_laws = false;
    while (peek().kind != Tok::rbrace) {
      const Token& k = peek();
      if (k.kind == Tok::kw_laws) {
        if (have_laws) fail(k, "duplicate laws block");
        next();
        expect(Tok::lbrace, "'{'");
        while (peek().kind != Tok::rbrace) {
          if (peek().kind == Tok::end) fail(peek(), "expected '}' to close the laws block");
          m.laws.push_back(law());
        }
        next();
        have_laws = true;
      } else if (k.kind == Tok::kw_random || k.kind == Tok::kw_param) {
        fail(k, "declarations must precede the laws block");
      } else if (k.kind == Tok::ident && k.text == "generate") {
        fail(k, "generate blocks are not supported");
      } else if (k.kind == Tok::end) {
        fail(k, "expected '}' to close model '" + m.name + "'");
      } else {
        fail(k, "expected 'random', 'param' or 'laws', found " + describe(k));
      }
    }
    next();
    if (!have_laws) fail(peek(), "model '" + m.name + "' has no laws block");
    if (peek().kind == Tok::kw_model) fail(peek(), "only one model per file");
    expect(Tok::end, "end of input");
    return m;
  }

  ExprPtr expression_only() {
    auto e = expression();
    expect(Tok::end, "end of input");
    return e;
  }

 private:
  const Token& peek(std::size_t k = 0) const { return t_[std::min(pos_ + k, t_.size() - 1)]; }
  const Token& next() { return t_[pos_ < t_.size() - 1 ? pos_++ : pos_]; }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    next();
    return true;
  }
  static std::string describe(const Token& t) {
    if (t.kind == Tok::end) return "end of input";
    return "'" + t.text + "'";
  }
  [[noreturn]] void fail(const Token& t, const std::string& msg) const { throw DslError(file_, t.pos, msg); }
  const Token& expect(Tok k, const std::string& what) {
    if (peek().kind != k) fail(peek(), "expected " + what + ", found " + describe(peek()));
    return next();
  }

  std::string qualified_name() {
    std::string s = expect(Tok::ident, "name").text;
    while (accept(Tok::dot)) s += "." + expect(Tok::ident, "name").text;
    return s;
  }

  std::string type_name() {
    std::string s = expect(Tok::ident, "type name").text;
    if (accept(Tok::less)) {
      s += "<" + type_name();
      while (accept(Tok::comma)) s += ", " + type_name();
      expect(Tok::greater, "'>'");
      s += ">";
    }
    return s;
  }

  Declaration declaration() {
    Declaration d;
    d.pos = peek().pos;
    d.random = next().kind == Tok::kw_random;
    Position tp = peek().pos;
    d.type = type_name();
    if (!classify_type(d.type)) throw DslError(file_, tp, "unknown type name '" + d.type + "'");
    d.name = expect(Tok::ident, "variable name").text;
    if (accept(Tok::elvis)) d.init = expression();
    return d;
  }

  LawNode law() {
    LawNode n;
    n.pos = peek().pos;
    if (peek().kind == Tok::kw_for) {
      next();
      Loop l;
      expect(Tok::lparen, "'('");
      Position tp = peek().pos;
      l.type = type_name();
      if (!classify_type(l.type)) throw DslError(file_, tp, "unknown type name '" + l.type + "'");
      l.iterator = expect(Tok::ident, "loop variable").text;
      expect(Tok::colon, "':'");
      l.range = expression();
      expect(Tok::rparen, "')'");
      expect(Tok::lbrace, "'{'");
      while (peek().kind != Tok::rbrace) {
        if (peek().kind == Tok::end) fail(peek(), "expected '}' to close the loop");
        l.body.push_back(law());
      }
      next();
      n.node = std::move(l);
      return n;
    }
    if (peek().kind == Tok::ident && peek().text == "logf") fail(peek(), "logf blocks are not supported");
    if (peek().kind == Tok::ident && peek(1).kind == Tok::kw_is) {
      ConstrainedMark c{next().text};
      next();
      expect(Tok::kw_constrained, "'Constrained'");
      n.node = c;
      return n;
    }
    CompositeLaw c;
    if (peek().kind != Tok::pipe && peek().kind != Tok::tilde) {
      c.targets.push_back(expression());
      while (accept(Tok::comma)) c.targets.push_back(expression());
    }
    if (accept(Tok::pipe)) {
      c.conditioners.push_back(conditioner());
      while (accept(Tok::comma)) c.conditioners.push_back(conditioner());
    }
    expect(Tok::tilde, "'~'");
    c.distribution = expect(Tok::ident, "distribution name").text;
    if (accept(Tok::lparen)) {
      if (peek().kind == Tok::lbrace) fail(peek(), "block expressions are not supported");
      if (peek().kind != Tok::rparen) {
        c.args.push_back(expression());
        while (accept(Tok::comma)) c.args.push_back(expression());
      }
      expect(Tok::rparen, "')'");
    }
    n.node = std::move(c);
    return n;
  }

  Conditioner conditioner() {
    Conditioner c;
    c.pos = peek().pos;
    bool typed = peek().kind == Tok::ident && (peek(1).kind == Tok::ident || peek(1).kind == Tok::less);
    if (typed) {
      c.type = type_name();
      if (!classify_type(c.type)) throw DslError(file_, c.pos, "unknown type name '" + c.type + "'");
      c.name = expect(Tok::ident, "local name").text;
      expect(Tok::assign, "'='");
      c.value = expression();
    } else {
      c.name = expect(Tok::ident, "conditioning variable").text;
    }
    return c;
  }

  // expr := additive ['..<' additive]
  ExprPtr expression() {
    auto lhs = additive();
    if (peek().kind == Tok::range) {
      Position p = next().pos;
      lhs = make_expr(Binary{'r', lhs, additive()}, p);
    }
    return lhs;
  }

  ExprPtr additive() {
    auto lhs = multiplicative();
    while (peek().kind == Tok::plus || peek().kind == Tok::minus) {
      const Token& op = next();
      lhs = make_expr(Binary{op.text[0], lhs, multiplicative()}, op.pos);
    }
    return lhs;
  }

  ExprPtr multiplicative() {
    auto lhs = unary();
    while (peek().kind == Tok::star || peek().kind == Tok::slash) {
      const Token& op = next();
      lhs = make_expr(Binary{op.text[0], lhs, unary()}, op.pos);
    }
    return lhs;
  }

  ExprPtr unary() {
    if (peek().kind == Tok::minus) {
      Position p = next().pos;
      return make_expr(Unary{'-', unary()}, p);
    }
    if (peek().kind == Tok::plus) next();
    return postfix();
  }

  std::vector<ExprPtr> arguments() {
    std::vector<ExprPtr> args;
    expect(Tok::lparen, "'('");
    if (peek().kind != Tok::rparen) {
      args.push_back(expression());
      while (accept(Tok::comma)) args.push_back(expression());
    }
    expect(Tok::rparen, "')'");
    return args;
  }

  ExprPtr postfix() {
    auto e = primary();
    while (peek().kind == Tok::dot) {
      Position p = next().pos;
      Member m;
      m.object = e;
      m.name = expect(Tok::ident, "member name").text;
      if (peek().kind == Tok::lparen) {
        m.call = true;
        m.args = arguments();
      }
      e = make_expr(std::move(m), p);
    }
    return e;
  }

  ExprPtr primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::integer:
      case Tok::real: {
        next();
        double v = std::stod(t.text);
        return make_expr(Number{v, t.kind == Tok::integer, t.text}, t.pos);
      }
      case Tok::ident: {
        next();
        if (peek().kind == Tok::lparen) return make_expr(Call{t.text, arguments()}, t.pos);
        return make_expr(Ident{t.text}, t.pos);
      }
      case Tok::kw_new: {
        next();
        std::string type = type_name();
        return make_expr(New{type, arguments()}, t.pos);
      }
      case Tok::lparen: {
        next();
        auto e = expression();
        expect(Tok::rparen, "')'");
        return e;
      }
      case Tok::lbrace:
        fail(t, "block expressions are not supported");
      default:
        fail(t, "expected an expression, found " + describe(t));
    }
  }

  std::vector<Token> t_;
  std::string file_;
  std::size_t pos_ = 0;
};

inline ModelAST parse_model(std::string_view source, const std::string& file = {}) {
  return Parser(tokenize(source, file), file).model();
}

inline ExprPtr parse_expression(std::string_view source, const std::string& file = {}) {
  return Parser(tokenize(source, file), file).expression_only();
}

// ---------------------------------------------------------------------------
// printing

namespace detail {

inline int precedence(const Expr& e) {
  if (auto b = std::get_if<Binary>(&e.node)) {
    if (b->op == 'r') return 0;
    return b->op == '+' || b->op == '-' ? 1 : 2;
  }
  if (std::holds_alternative<Unary>(e.node)) return 3;
  return 4;
}

inline std::string number_text(const Number& n) {
  if (!n.text.empty()) return n.text;
  std::ostringstream o;
  o.precision(17);
  o << n.value;
  std::string s = o.str();
  if (!n.integer && s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

}  // namespace detail

inline std::string to_source(const ExprPtr& e);

namespace detail {

inline std::string join(const std::vector<ExprPtr>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + to_source(xs[i]);
  return s;
}

inline std::string wrapped(const ExprPtr& e, bool paren) { return paren ? "(" + to_source(e) + ")" : to_source(e); }

}  // namespace detail

inline std::string to_source(const ExprPtr& e) {
  return std::visit(
      [&](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Number>) return detail::number_text(x);
        if constexpr (std::is_same_v<T, Ident>) return x.name;
        if constexpr (std::is_same_v<T, Unary>)
          return std::string(1, x.op) + detail::wrapped(x.operand, detail::precedence(*x.operand) < 3);
        if constexpr (std::is_same_v<T, Binary>) {
          int p = detail::precedence(*e);
          std::string op = x.op == 'r' ? " ..< " : std::string(" ") + x.op + " ";
          return detail::wrapped(x.lhs, detail::precedence(*x.lhs) < p || (x.op == 'r' && detail::precedence(*x.lhs) == p)) + op +
                 detail::wrapped(x.rhs, detail::precedence(*x.rhs) <= p);
        }
        if constexpr (std::is_same_v<T, Call>) return x.name + "(" + detail::join(x.args) + ")";
        if constexpr (std::is_same_v<T, Member>) {
          std::string s = detail::wrapped(x.object, detail::precedence(*x.object) < 4) + "." + x.name;
          if (x.call) s += "(" + detail::join(x.args) + ")";
          return s;
        }
        if constexpr (std::is_same_v<T, New>) return "new " + x.type + "(" + detail::join(x.args) + ")";
        return "";
      },
      e->node);
}

namespace detail {

inline void print_law(std::ostream& o, const LawNode& n, int indent) {
  std::string pad(static_cast<std::size_t>(indent), ' ');
  if (auto l = std::get_if<Loop>(&n.node)) {
    o << pad << "for (" << l->type << " " << l->iterator << " : " << to_source(l->range) << ") {\n";
    for (const auto& b : l->body) print_law(o, b, indent + 2);
    o << pad << "}\n";
    return;
  }
  if (auto c = std::get_if<ConstrainedMark>(&n.node)) {
    o << pad << c->variable << " is Constrained\n";
    return;
  }
  const auto& c = std::get<CompositeLaw>(n.node);
  o << pad << join(c.targets);
  if (!c.conditioners.empty()) {
    o << (c.targets.empty() ? "| " : " | ");
    for (std::size_t i = 0; i < c.conditioners.size(); ++i) {
      const auto& k = c.conditioners[i];
      if (i) o << ", ";
      if (k.type.empty())
        o << k.name;
      else
        o << k.type << " " << k.name << " = " << to_source(k.value);
    }
  }
  o << (c.targets.empty() && c.conditioners.empty() ? "~ " : " ~ ") << c.distribution;
  if (!c.args.empty()) o << "(" << join(c.args) << ")";
  o << "\n";
}

}  // namespace detail

inline std::string to_source(const ModelAST& m) {
  std::ostringstream o;
  if (m.package) o << "package " << *m.package << "\n\n";
  o << "model " << m.name << " {\n";
  for (const auto& d : m.declarations) {
    o << "  " << (d.random ? "random " : "param ") << d.type << " " << d.name;
    if (d.init) o << " ?: " << to_source(d.init);
    o << "\n";
  }
  o << "  laws {\n";
  for (const auto& l : m.laws) detail::print_law(o, l, 4);
  o << "  }\n}\n";
  return o.str();
}

}  // namespace tempo::dsl
