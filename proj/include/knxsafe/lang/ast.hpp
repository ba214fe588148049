#pragma once

// Syntax tree of the automation language. Nodes are shared and immutable
// after typechecking, which fills in `type` and `call_site`.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "knxsafe/app_model.hpp"
#include "knxsafe/values.hpp"

namespace knxsafe::lang {

struct Pos {
  int line = 1;
  int column = 1;
  std::string str() const { return std::to_string(line) + ":" + std::to_string(column); }
};

enum class UnOp { Not, Neg };
enum class BinOp { Add, Sub, Mul, Lt, Le, Eq, Ne, Ge, Gt, And, Or };

inline const char* to_string(BinOp op) {
  switch (op) {
    case BinOp::Add: return "+";
    case BinOp::Sub: return "-";
    case BinOp::Mul: return "*";
    case BinOp::Lt: return "<";
    case BinOp::Le: return "<=";
    case BinOp::Eq: return "==";
    case BinOp::Ne: return "!=";
    case BinOp::Ge: return ">=";
    case BinOp::Gt: return ">";
    case BinOp::And: return "and";
    case BinOp::Or: return "or";
  }
  return "?";
}

struct Expr;
using ExprPtr = std::shared_ptr<Expr>;

struct Expr {
  enum class Kind {
    BoolLit,
    IntLit,
    RealLit,
    StrLit,
    Register,      // app_state.<text>
    DeviceMethod,  // <text>.<method>()
    Call,          // <text>(args...)
    ReturnValue,   // __return__
    Unary,
    Binary,
  };

  Kind kind = Kind::BoolLit;
  Pos pos;
  bool bool_value = false;
  Rational number;
  std::string text;
  std::string method;
  UnOp unop = UnOp::Not;
  BinOp binop = BinOp::Add;
  std::vector<ExprPtr> args;

  // Filled in by the typechecker.
  ValueType type = ValueType::Bool;
  RegisterRef reg;
  int call_site = -1;
};

struct Stmt;
using Block = std::vector<Stmt>;

struct Branch {
  ExprPtr condition;
  Block body;
};

struct Stmt {
  enum class Kind { If, Assign, DeviceCall, Call };

  Kind kind = Kind::Call;
  Pos pos;
  // If: one or more condition/body pairs (if + elifs) and an optional else.
  std::vector<Branch> branches;
  std::optional<Block> else_body;
  // Assign: register name and value (compound forms are desugared).
  std::string target;
  RegisterRef reg;
  ExprPtr value;
  // DeviceCall: instance and method (on/off).
  std::string device;
  std::string method;
  // Call: an unchecked call expression.
  ExprPtr call;
};

struct Param {
  std::string name;
  ValueType type;
};

struct UncheckedDecl {
  std::string name;
  Pos pos;
  std::vector<Param> params;
  std::optional<ValueType> return_type;  // nullopt: None
  std::vector<ExprPtr> postconditions;
};

struct DeviceDecl {
  std::string name;
  std::string kind;
  Pos pos;
};

struct Program {
  std::vector<DeviceDecl> devices;
  std::vector<UncheckedDecl> unchecked;
  ExprPtr invariant;
  Block iteration;

  const UncheckedDecl* find_unchecked(const std::string& name) const {
    for (const auto& d : unchecked) {
      if (d.name == name) return &d;
    }
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Construction helpers, used by the parser and by tests that build programs
// directly.

inline ExprPtr make_bool(bool b, Pos pos = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::BoolLit;
  e->bool_value = b;
  e->pos = pos;
  return e;
}

inline ExprPtr make_number(const Rational& r, bool integral, Pos pos = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = integral ? Expr::Kind::IntLit : Expr::Kind::RealLit;
  e->number = r;
  e->pos = pos;
  return e;
}

inline ExprPtr make_string(std::string s, Pos pos = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::StrLit;
  e->text = std::move(s);
  e->pos = pos;
  return e;
}

inline ExprPtr make_register(std::string name, Pos pos = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Register;
  e->text = std::move(name);
  e->pos = pos;
  return e;
}

inline ExprPtr make_device_method(std::string device, std::string method, Pos pos = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::DeviceMethod;
  e->text = std::move(device);
  e->method = std::move(method);
  e->pos = pos;
  return e;
}

inline ExprPtr make_call(std::string name, std::vector<ExprPtr> args, Pos pos = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Call;
  e->text = std::move(name);
  e->args = std::move(args);
  e->pos = pos;
  return e;
}

inline ExprPtr make_return_value(Pos pos = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::ReturnValue;
  e->pos = pos;
  return e;
}

inline ExprPtr make_unary(UnOp op, ExprPtr operand, Pos pos = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Unary;
  e->unop = op;
  e->args = {std::move(operand)};
  e->pos = pos;
  return e;
}

inline ExprPtr make_binary(BinOp op, ExprPtr lhs, ExprPtr rhs, Pos pos = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Binary;
  e->binop = op;
  e->args = {std::move(lhs), std::move(rhs)};
  e->pos = pos;
  return e;
}

/// Deep copy, so a program can be re-typechecked without touching the
/// annotations of another copy.
inline ExprPtr clone(const ExprPtr& e) {
  if (!e) return nullptr;
  auto c = std::make_shared<Expr>(*e);
  for (auto& a : c->args) a = clone(a);
  return c;
}

inline Block clone(const Block& block);

inline Stmt clone(const Stmt& s) {
  Stmt c = s;
  for (auto& b : c.branches) {
    b.condition = clone(b.condition);
    b.body = clone(b.body);
  }
  if (c.else_body) c.else_body = clone(*c.else_body);
  c.value = clone(c.value);
  c.call = clone(c.call);
  return c;
}

inline Block clone(const Block& block) {
  Block out;
  out.reserve(block.size());
  for (const auto& s : block) out.push_back(clone(s));
  return out;
}

inline Program clone(const Program& p) {
  Program c = p;
  for (auto& u : c.unchecked) {
    for (auto& post : u.postconditions) post = clone(post);
  }
  c.invariant = clone(c.invariant);
  c.iteration = clone(c.iteration);
  return c;
}

// ---------------------------------------------------------------------------
// Source rendering, used for reports and for generating random programs in
// tests. Output parses back to an equivalent tree.

inline std::string render(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::BoolLit: return e.bool_value ? "true" : "false";
    case Expr::Kind::IntLit: return format_rational(e.number);
    case Expr::Kind::RealLit: {
      auto s = format_rational(e.number);
      if (s.find('.') == std::string::npos && s.find('/') == std::string::npos) s += ".0";
      return s;
    }
    case Expr::Kind::StrLit: return "\"" + e.text + "\"";
    case Expr::Kind::Register: return "app_state." + e.text;
    case Expr::Kind::DeviceMethod: return e.text + "." + e.method + "()";
    case Expr::Kind::Call: {
      std::string s = e.text + "(";
      for (std::size_t i = 0; i < e.args.size(); ++i) s += (i ? ", " : "") + render(*e.args[i]);
      return s + ")";
    }
    case Expr::Kind::ReturnValue: return "__return__";
    case Expr::Kind::Unary:
      return e.unop == UnOp::Not ? "(not " + render(*e.args[0]) + ")" : "(-" + render(*e.args[0]) + ")";
    case Expr::Kind::Binary:
      return "(" + render(*e.args[0]) + " " + to_string(e.binop) + " " + render(*e.args[1]) + ")";
  }
  return "?";
}

inline void render_block(const Block& block, int indent, std::string& out);

inline void render_stmt(const Stmt& s, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  switch (s.kind) {
    case Stmt::Kind::If:
      for (std::size_t i = 0; i < s.branches.size(); ++i) {
        out += (i == 0 ? pad + "if " : " elif ") + render(*s.branches[i].condition) + " {\n";
        render_block(s.branches[i].body, indent + 1, out);
        out += pad + "}";
      }
      if (s.else_body) {
        out += " else {\n";
        render_block(*s.else_body, indent + 1, out);
        out += pad + "}";
      }
      out += "\n";
      break;
    case Stmt::Kind::Assign: out += pad + "app_state." + s.target + " = " + render(*s.value) + ";\n"; break;
    case Stmt::Kind::DeviceCall: out += pad + s.device + "." + s.method + "();\n"; break;
    case Stmt::Kind::Call: out += pad + render(*s.call) + ";\n"; break;
  }
}

inline void render_block(const Block& block, int indent, std::string& out) {
  for (const auto& s : block) render_stmt(s, indent, out);
}

inline std::string render(const Program& p) {
  std::string out;
  for (const auto& d : p.devices) out += "device " + d.name + ": " + d.kind + ";\n";
  for (const auto& u : p.unchecked) {
    out += "def " + u.name + "(";
    for (std::size_t i = 0; i < u.params.size(); ++i) {
      out += (i ? ", " : "") + u.params[i].name + ": " + to_string(u.params[i].type);
    }
    out += ") -> " + (u.return_type ? to_string(*u.return_type) : std::string("None"));
    if (u.postconditions.empty()) {
      out += ";\n";
    } else {
      out += " {\n";
      for (const auto& post : u.postconditions) out += "  post: " + render(*post) + ";\n";
      out += "}\n";
    }
  }
  out += "invariant: " + render(*p.invariant) + "\n";
  out += "iteration: {\n";
  render_block(p.iteration, 1, out);
  out += "}\n";
  return out;
}

}  // namespace knxsafe::lang
