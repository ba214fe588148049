#pragma once

// Lexer and recursive-descent parser for the automation language.
//
//   program   := deviceDecl* uncheckedDecl* "invariant" ":" expr "iteration" ":" block
//   deviceDecl:= "device" IDENT ":" IDENT ";"
//   unchecked := "def" IDENT "(" [param ("," param)*] ")" "->" type (";" | "{" ("post" ":" expr ";")* "}")
//   block     := "{" stmt* "}"
//   stmt      := "if" expr block ("elif" expr block)* ["else" block]
//              | "app_state" "." IDENT ("=" | "+=" | "-=") expr [";"]
//              | IDENT "." IDENT "(" ")" [";"]
//              | IDENT "(" args ")" [";"]
//
// Expressions follow Python precedence: or < and < not < comparison < +,- < * < unary -.

#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "knxsafe/error.hpp"
#include "knxsafe/lang/ast.hpp"

namespace knxsafe::lang {

enum class Tok {
  Ident,
  Int,
  Real,
  String,
  LBrace,
  RBrace,
  LParen,
  RParen,
  Colon,
  Semi,
  Comma,
  Dot,
  Assign,
  PlusAssign,
  MinusAssign,
  Plus,
  Minus,
  Star,
  Lt,
  Le,
  EqEq,
  Ne,
  Ge,
  Gt,
  Arrow,
  End,
};

struct Token {
  Tok kind;
  std::string text;
  Pos pos;
};

namespace detail {

inline const std::set<std::string>& loop_keywords() {
  static const std::set<std::string> words{"while", "for", "loop", "do", "goto", "lambda"};
  return words;
}

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n = 1) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  auto error = [&](const std::string& msg) { return Error(ErrorKind::Syntax, std::to_string(line) + ":" + std::to_string(col) + ": " + msg); };

  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n' || c == ' ' || c == '\t' || c == '\r' || c == '\\') {
      advance();
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance();
      continue;
    }
    const Pos pos{line, col};
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      std::string word(src.substr(i, j - i));
      if (loop_keywords().count(word)) {
        throw Error(ErrorKind::UnsupportedConstruct, pos.str() + ": '" + word + "' is not supported: apps are loop-free");
      }
      out.push_back({Tok::Ident, word, pos});
      advance(j - i);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      bool real = false;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j < src.size() && src[j] == '.' && j + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[j + 1]))) {
        real = true;
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          real = true;
          j = k;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        }
      }
      out.push_back({real ? Tok::Real : Tok::Int, std::string(src.substr(i, j - i)), pos});
      advance(j - i);
      continue;
    }
    if (c == '"' || c == '\'') {
      std::string text;
      advance();
      while (i < src.size() && src[i] != c) {
        if (src[i] == '\n') throw error("unterminated string literal");
        if (src[i] == '\\' && i + 1 < src.size()) {
          advance();
          switch (src[i]) {
            case 'n': text += '\n'; break;
            case 't': text += '\t'; break;
            default: text += src[i]; break;
          }
          advance();
          continue;
        }
        text += src[i];
        advance();
      }
      if (i >= src.size()) throw error("unterminated string literal");
      advance();
      out.push_back({Tok::String, text, pos});
      continue;
    }
    auto two = src.substr(i, 2);
    struct Op {
      std::string_view text;
      Tok kind;
    };
    static constexpr Op ops2[] = {{"<=", Tok::Le}, {">=", Tok::Ge}, {"==", Tok::EqEq}, {"!=", Tok::Ne},
                                  {"->", Tok::Arrow}, {"+=", Tok::PlusAssign}, {"-=", Tok::MinusAssign}};
    bool matched = false;
    for (const auto& op : ops2) {
      if (two == op.text) {
        out.push_back({op.kind, std::string(op.text), pos});
        advance(2);
        matched = true;
        break;
      }
    }
    if (matched) continue;
    Tok kind;
    switch (c) {
      case '{': kind = Tok::LBrace; break;
      case '}': kind = Tok::RBrace; break;
      case '(': kind = Tok::LParen; break;
      case ')': kind = Tok::RParen; break;
      case ':': kind = Tok::Colon; break;
      case ';': kind = Tok::Semi; break;
      case ',': kind = Tok::Comma; break;
      case '.': kind = Tok::Dot; break;
      case '=': kind = Tok::Assign; break;
      case '+': kind = Tok::Plus; break;
      case '-': kind = Tok::Minus; break;
      case '*': kind = Tok::Star; break;
      case '<': kind = Tok::Lt; break;
      case '>': kind = Tok::Gt; break;
      default: throw error(std::string("unexpected character '") + c + "'");
    }
    out.push_back({kind, std::string(1, c), pos});
    advance();
  }
  out.push_back({Tok::End, "", {line, col}});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Program program() {
    Program p;
    while (is_word("device")) p.devices.push_back(device_decl());
    while (is_word("def")) p.unchecked.push_back(unchecked_decl(p));
    expect_word("invariant");
    expect(Tok::Colon, "':'");
    p.invariant = expr();
    expect_word("iteration");
    expect(Tok::Colon, "':'");
    p.iteration = block();
    if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "' after the iteration block");
    return p;
  }

  ExprPtr standalone_expr() {
    auto e = expr();
    if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "'");
    return e;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool is(Tok k) const { return peek().kind == k; }
  bool is_word(std::string_view w, std::size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Ident && peek(ahead).text == w;
  }
  bool accept(Tok k) {
    if (!is(k)) return false;
    next();
    return true;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw Error(ErrorKind::Syntax, peek().pos.str() + ": " + msg); }
  Token expect(Tok k, const std::string& what) {
    if (!is(k)) fail("expected " + what + ", found '" + (is(Tok::End) ? std::string("end of input") : peek().text) + "'");
    return next();
  }
  void expect_word(std::string_view w) {
    if (!is_word(w)) fail("expected '" + std::string(w) + "'");
    next();
  }
  Token ident(const std::string& what) { return expect(Tok::Ident, what); }

  DeviceDecl device_decl() {
    auto kw = next();
    DeviceDecl d;
    d.pos = kw.pos;
    d.name = ident("a device instance name").text;
    expect(Tok::Colon, "':'");
    d.kind = ident("a device type").text;
    expect(Tok::Semi, "';'");
    return d;
  }

  ValueType type_name(bool& is_none) {
    auto t = ident("a type");
    is_none = false;
    if (t.text == "bool") return ValueType::Bool;
    if (t.text == "int") return ValueType::Int;
    if (t.text == "float") return ValueType::Real;
    if (t.text == "str") return ValueType::Str;
    if (t.text == "None") {
      is_none = true;
      return ValueType::Bool;
    }
    throw Error(ErrorKind::Syntax, t.pos.str() + ": unknown type '" + t.text + "'");
  }

  UncheckedDecl unchecked_decl(const Program& p) {
    next();
    UncheckedDecl d;
    auto name = ident("a function name");
    d.name = name.text;
    d.pos = name.pos;
    if (d.name.rfind("unchecked", 0) != 0) {
      throw Error(ErrorKind::Syntax, name.pos.str() + ": function '" + d.name + "' must be named unchecked...");
    }
    if (p.find_unchecked(d.name)) throw Error(ErrorKind::Syntax, name.pos.str() + ": duplicate function '" + d.name + "'");
    expect(Tok::LParen, "'('");
    if (!is(Tok::RParen)) {
      do {
        Param param;
        param.name = ident("a parameter name").text;
        expect(Tok::Colon, "':' and a parameter type");
        bool none = false;
        param.type = type_name(none);
        if (none) fail("parameters cannot have type None");
        d.params.push_back(param);
      } while (accept(Tok::Comma));
    }
    expect(Tok::RParen, "')'");
    expect(Tok::Arrow, "'->' and an explicit return type");
    bool none = false;
    auto rt = type_name(none);
    if (!none) d.return_type = rt;
    if (accept(Tok::LBrace)) {
      while (!accept(Tok::RBrace)) {
        expect_word("post");
        expect(Tok::Colon, "':'");
        d.postconditions.push_back(expr());
        accept(Tok::Semi);
      }
    } else {
      expect(Tok::Semi, "';' or a postcondition block");
    }
    return d;
  }

  Block block() {
    expect(Tok::LBrace, "'{'");
    Block b;
    while (!accept(Tok::RBrace)) {
      if (is(Tok::End)) fail("unterminated block");
      b.push_back(stmt());
    }
    return b;
  }

  Stmt stmt() {
    Stmt s;
    s.pos = peek().pos;
    if (is_word("if")) {
      next();
      s.kind = Stmt::Kind::If;
      auto cond = expr();
      s.branches.push_back({cond, block()});
      while (is_word("elif")) {
        next();
        auto c = expr();
        s.branches.push_back({c, block()});
      }
      if (is_word("else")) {
        next();
        s.else_body = block();
      }
      return s;
    }
    if (is_word("app_state") && peek(1).kind == Tok::Dot) {
      next();
      next();
      auto reg = ident("a register name");
      s.kind = Stmt::Kind::Assign;
      s.target = reg.text;
      auto op = next();
      auto rhs = expr();
      switch (op.kind) {
        case Tok::Assign: s.value = rhs; break;
        case Tok::PlusAssign: s.value = make_binary(BinOp::Add, make_register(reg.text, reg.pos), rhs, op.pos); break;
        case Tok::MinusAssign: s.value = make_binary(BinOp::Sub, make_register(reg.text, reg.pos), rhs, op.pos); break;
        default: throw Error(ErrorKind::Syntax, op.pos.str() + ": expected '=', '+=' or '-='");
      }
      accept(Tok::Semi);
      return s;
    }
    if (is(Tok::Ident) && peek(1).kind == Tok::Dot) {
      auto dev = next();
      next();
      auto m = ident("a method name");
      expect(Tok::LParen, "'('");
      expect(Tok::RParen, "')'");
      s.kind = Stmt::Kind::DeviceCall;
      s.device = dev.text;
      s.method = m.text;
      accept(Tok::Semi);
      return s;
    }
    if (is(Tok::Ident) && peek(1).kind == Tok::LParen) {
      s.kind = Stmt::Kind::Call;
      s.call = call();
      accept(Tok::Semi);
      return s;
    }
    fail("expected a statement, found '" + (is(Tok::End) ? std::string("end of input") : peek().text) + "'");
  }

  ExprPtr call() {
    auto name = next();
    expect(Tok::LParen, "'('");
    std::vector<ExprPtr> args;
    if (!is(Tok::RParen)) {
      do {
        args.push_back(expr());
      } while (accept(Tok::Comma));
    }
    expect(Tok::RParen, "')'");
    return make_call(name.text, std::move(args), name.pos);
  }

  ExprPtr expr() { return or_expr(); }

  ExprPtr or_expr() {
    auto lhs = and_expr();
    while (is_word("or")) {
      auto op = next();
      lhs = make_binary(BinOp::Or, lhs, and_expr(), op.pos);
    }
    return lhs;
  }

  ExprPtr and_expr() {
    auto lhs = not_expr();
    while (is_word("and")) {
      auto op = next();
      lhs = make_binary(BinOp::And, lhs, not_expr(), op.pos);
    }
    return lhs;
  }

  ExprPtr not_expr() {
    if (is_word("not")) {
      auto op = next();
      return make_unary(UnOp::Not, not_expr(), op.pos);
    }
    return comparison();
  }

  static std::optional<BinOp> comparison_op(Tok k) {
    switch (k) {
      case Tok::Lt: return BinOp::Lt;
      case Tok::Le: return BinOp::Le;
      case Tok::EqEq: return BinOp::Eq;
      case Tok::Ne: return BinOp::Ne;
      case Tok::Ge: return BinOp::Ge;
      case Tok::Gt: return BinOp::Gt;
      default: return std::nullopt;
    }
  }

  ExprPtr comparison() {
    auto lhs = additive();
    if (auto op = comparison_op(peek().kind)) {
      auto tok = next();
      auto rhs = additive();
      if (comparison_op(peek().kind)) fail("chained comparisons are not supported");
      return make_binary(*op, lhs, rhs, tok.pos);
    }
    return lhs;
  }

  ExprPtr additive() {
    auto lhs = multiplicative();
    while (is(Tok::Plus) || is(Tok::Minus)) {
      auto op = next();
      lhs = make_binary(op.kind == Tok::Plus ? BinOp::Add : BinOp::Sub, lhs, multiplicative(), op.pos);
    }
    return lhs;
  }

  ExprPtr multiplicative() {
    auto lhs = unary();
    while (is(Tok::Star)) {
      auto op = next();
      lhs = make_binary(BinOp::Mul, lhs, unary(), op.pos);
    }
    return lhs;
  }

  ExprPtr unary() {
    if (is(Tok::Minus)) {
      auto op = next();
      return make_unary(UnOp::Neg, unary(), op.pos);
    }
    return primary();
  }

  ExprPtr primary() {
    const auto& t = peek();
    switch (t.kind) {
      case Tok::Int: {
        auto tok = next();
        return make_number(parse_decimal(tok.text), true, tok.pos);
      }
      case Tok::Real: {
        auto tok = next();
        return make_number(parse_decimal(tok.text), false, tok.pos);
      }
      case Tok::String: {
        auto tok = next();
        return make_string(tok.text, tok.pos);
      }
      case Tok::LParen: {
        next();
        auto e = expr();
        expect(Tok::RParen, "')'");
        return e;
      }
      case Tok::Ident: {
        if (t.text == "true" || t.text == "True") return make_bool(true, next().pos);
        if (t.text == "false" || t.text == "False") return make_bool(false, next().pos);
        if (t.text == "__return__") return make_return_value(next().pos);
        if (t.text == "app_state" && peek(1).kind == Tok::Dot) {
          next();
          next();
          auto reg = ident("a register name");
          return make_register(reg.text, reg.pos);
        }
        if (peek(1).kind == Tok::Dot) {
          auto dev = next();
          next();
          auto m = ident("a method name");
          expect(Tok::LParen, "'('");
          expect(Tok::RParen, "')'");
          return make_device_method(dev.text, m.text, dev.pos);
        }
        if (peek(1).kind == Tok::LParen) return call();
        fail("unknown name '" + t.text + "'");
      }
      default:
        fail("expected an expression, found '" + (t.kind == Tok::End ? std::string("end of input") : t.text) + "'");
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Program parse_program(std::string_view text) {
  return detail::Parser(detail::tokenize(text)).program();
}

inline ExprPtr parse_expression(std::string_view text) {
  return detail::Parser(detail::tokenize(text)).standalone_expr();
}

}  // namespace knxsafe::lang
