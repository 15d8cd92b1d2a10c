#pragma once

#include <cctype>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tempo::dsl {

struct Position {
  int line = 1;
  int column = 1;
};

// Reported as file:line:col: message
struct DslError : std::runtime_error {
  std::string file;
  Position pos;
  std::string message;

  DslError(std::string file_, Position p, std::string msg)
      : std::runtime_error((file_.empty() ? std::string("<source>") : file_) + ":" + std::to_string(p.line) + ":" +
                           std::to_string(p.column) + ": " + msg),
        file(std::move(file_)),
        pos(p),
        message(std::move(msg)) {}
};

enum class Tok {
  ident,
  integer,
  real,
  string,
  // keywords
  kw_package,
  kw_import,
  kw_model,
  kw_random,
  kw_param,
  kw_laws,
  kw_for,
  kw_is,
  kw_constrained,
  kw_new,
  // punctuation
  tilde,
  pipe,
  elvis,  // ?:
  range,  // ..<
  dot,
  lparen,
  rparen,
  lbrace,
  rbrace,
  comma,
  assign,
  colon,
  plus,
  minus,
  star,
  slash,
  less,
  greater,
  end
};

inline const char* token_name(Tok t) {
  switch (t) {
    case Tok::ident: return "IDENT";
    case Tok::integer: return "INT";
    case Tok::real: return "REAL";
    case Tok::string: return "STRING";
    case Tok::kw_package: return "package";
    case Tok::kw_import: return "import";
    case Tok::kw_model: return "model";
    case Tok::kw_random: return "random";
    case Tok::kw_param: return "param";
    case Tok::kw_laws: return "laws";
    case Tok::kw_for: return "for";
    case Tok::kw_is: return "is";
    case Tok::kw_constrained: return "Constrained";
    case Tok::kw_new: return "new";
    case Tok::tilde: return "TILDE";
    case Tok::pipe: return "PIPE";
    case Tok::elvis: return "ELVIS";
    case Tok::range: return "RANGE";
    case Tok::dot: return "DOT";
    case Tok::lparen: return "LPAREN";
    case Tok::rparen: return "RPAREN";
    case Tok::lbrace: return "LBRACE";
    case Tok::rbrace: return "RBRACE";
    case Tok::comma: return "COMMA";
    case Tok::assign: return "ASSIGN";
    case Tok::colon: return "COLON";
    case Tok::plus: return "PLUS";
    case Tok::minus: return "MINUS";
    case Tok::star: return "STAR";
    case Tok::slash: return "SLASH";
    case Tok::less: return "LT";
    case Tok::greater: return "GT";
    case Tok::end: return "end of input";
  }
  return "?";
}

struct Token {
  Tok kind = Tok::end;
  std::string text;
  Position pos;
};

namespace detail {

inline Tok keyword_or_ident(std::string_view w) {
  if (w == "package") return Tok::kw_package;
  if (w == "import") return Tok::kw_import;
  if (w == "model") return Tok::kw_model;
  if (w == "random") return Tok::kw_random;
  if (w == "param") return Tok::kw_param;
  if (w == "laws") return Tok::kw_laws;
  if (w == "for") return Tok::kw_for;
  if (w == "is") return Tok::kw_is;
  if (w == "Constrained") return Tok::kw_constrained;
  if (w == "new") return Tok::kw_new;
  return Tok::ident;
}

}  // namespace detail

inline std::vector<Token> tokenize(std::string_view src, const std::string& file = {}) {
  std::vector<Token> out;
  std::size_t i = 0;
  Position p;
  auto advance = [&](std::size_t n = 1) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++p.line;
        p.column = 1;
      } else {
        ++p.column;
      }
    }
  };
  auto at = [&](std::size_t k) { return i + k < src.size() ? src[i + k] : '\0'; };

  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance();
      continue;
    }
    Position start = p;
    if (c == '/' && at(1) == '/') {
      while (i < src.size() && src[i] != '\n') advance();
      continue;
    }
    if (c == '/' && at(1) == '*') {
      advance(2);
      while (i < src.size() && !(src[i] == '*' && at(1) == '/')) advance();
      if (i >= src.size()) throw DslError(file, start, "unterminated comment");
      advance(2);
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t b = i;
      while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) advance();
      std::string w(src.substr(b, i - b));
      out.push_back({detail::keyword_or_ident(w), w, start});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t b = i;
      bool real = false;
      while (std::isdigit(static_cast<unsigned char>(at(0)))) advance();
      // a '.' starts a fraction only when a digit follows (0 ..< 10, x.get)
      if (at(0) == '.' && std::isdigit(static_cast<unsigned char>(at(1)))) {
        real = true;
        advance();
        while (std::isdigit(static_cast<unsigned char>(at(0)))) advance();
      }
      if (at(0) == 'e' || at(0) == 'E') {
        std::size_t k = 1;
        if (at(k) == '+' || at(k) == '-') ++k;
        if (std::isdigit(static_cast<unsigned char>(at(k)))) {
          real = true;
          advance(k);
          while (std::isdigit(static_cast<unsigned char>(at(0)))) advance();
        }
      }
      out.push_back({real ? Tok::real : Tok::integer, std::string(src.substr(b, i - b)), start});
      continue;
    }
    if (c == '"') {
      advance();
      std::string s;
      while (i < src.size() && src[i] != '"') {
        if (src[i] == '\n') throw DslError(file, start, "unterminated string");
        if (src[i] == '\\' && i + 1 < src.size()) advance();
        s += src[i];
        advance();
      }
      if (i >= src.size()) throw DslError(file, start, "unterminated string");
      advance();
      out.push_back({Tok::string, s, start});
      continue;
    }
    if (c == '?' && at(1) == ':') {
      advance(2);
      out.push_back({Tok::elvis, "?:", start});
      continue;
    }
    if (c == '.' && at(1) == '.' && at(2) == '<') {
      advance(3);
      out.push_back({Tok::range, "..<", start});
      continue;
    }
    Tok k;
    switch (c) {
      case '~': k = Tok::tilde; break;
      case '|': k = Tok::pipe; break;
      case '.': k = Tok::dot; break;
      case '(': k = Tok::lparen; break;
      case ')': k = Tok::rparen; break;
      case '{': k = Tok::lbrace; break;
      case '}': k = Tok::rbrace; break;
      case ',': k = Tok::comma; break;
      case '=': k = Tok::assign; break;
      case ':': k = Tok::colon; break;
      case '+': k = Tok::plus; break;
      case '-': k = Tok::minus; break;
      case '*': k = Tok::star; break;
      case '/': k = Tok::slash; break;
      case '<': k = Tok::less; break;
      case '>': k = Tok::greater; break;
      default: {
        std::string shown = std::isprint(static_cast<unsigned char>(c)) ? std::string(1, c) : "\\x" + std::to_string(int(static_cast<unsigned char>(c)));
        throw DslError(file, start, "illegal character '" + shown + "'");
      }
    }
    advance();
    out.push_back({k, std::string(1, c), start});
  }
  out.push_back({Tok::end, "", p});
  return out;
}

}  // namespace tempo::dsl
