#pragma once

// Static checks for app programs: types, name resolution against the app
// prototype, purity of the invariant and of postconditions, and linearity.

#include <string>

#include "knxsafe/app_model.hpp"
#include "knxsafe/error.hpp"
#include "knxsafe/lang/ast.hpp"

namespace knxsafe::lang {

struct TypedProgram {
  Program program;  // annotated copy
  AppPrototype proto;
  int call_sites = 0;

  const ChannelSpec& channel(const std::string& instance) const {
    return channel_of(proto.find_device(instance)->kind);
  }
};

/// Read methods per channel value type, write methods for writable channels.
inline const char* read_method(const ChannelSpec& ch) { return ch.value_type == ValueType::Bool ? "is_on" : "read"; }

inline bool is_numeric(ValueType t) { return t == ValueType::Int || t == ValueType::Real; }

/// A float slot accepts ints; everything else needs an exact match.
inline bool assignable(ValueType target, ValueType source) {
  return target == source || (target == ValueType::Real && source == ValueType::Int);
}

namespace detail {

// Expressions made only of numeric literals.
inline bool is_constant(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::IntLit:
    case Expr::Kind::RealLit: return true;
    case Expr::Kind::Unary: return e.unop == UnOp::Neg && is_constant(*e.args[0]);
    case Expr::Kind::Binary:
      return (e.binop == BinOp::Add || e.binop == BinOp::Sub || e.binop == BinOp::Mul) && is_constant(*e.args[0]) &&
             is_constant(*e.args[1]);
    default: return false;
  }
}

enum class Context { Invariant, Postcondition, Iteration };

class Checker {
 public:
  Checker(Program& p, const AppPrototype& proto) : p_(p), proto_(proto) {}

  int run() {
    for (const auto& d : p_.devices) {
      const auto* inst = proto_.find_device(d.name);
      if (!inst) {
        throw Error(ErrorKind::Resolution, d.pos.str() + ": device '" + d.name + "' is not declared by app '" +
                                               proto_.name + "'");
      }
      if (to_string(inst->kind) != d.kind) {
        throw Error(ErrorKind::Resolution, d.pos.str() + ": device '" + d.name + "' has type " +
                                               to_string(inst->kind) + ", not " + d.kind);
      }
    }
    for (auto& u : p_.unchecked) {
      current_ = &u;
      for (auto& post : u.postconditions) {
        expect(post, ValueType::Bool, Context::Postcondition, "postcondition");
      }
    }
    current_ = nullptr;
    expect(p_.invariant, ValueType::Bool, Context::Invariant, "invariant");
    block(p_.iteration);
    return sites_;
  }

 private:
  [[noreturn]] static void fail(ErrorKind k, const Pos& pos, const std::string& msg) {
    throw Error(k, pos.str() + ": " + msg);
  }

  void expect(ExprPtr& e, ValueType t, Context ctx, const std::string& what) {
    auto got = expr(*e, ctx);
    if (got != t) fail(ErrorKind::Type, e->pos, what + " must be " + to_string(t) + ", found " + to_string(got));
  }

  const ChannelSpec& device(const std::string& name, const Pos& pos) {
    const auto* inst = proto_.find_device(name);
    if (!inst) fail(ErrorKind::Resolution, pos, "unknown device '" + name + "'");
    return channel_of(inst->kind);
  }

  ValueType numeric_result(const Expr& e, ValueType a, ValueType b) {
    if (!is_numeric(a) || !is_numeric(b)) {
      fail(ErrorKind::Type, e.pos, std::string("operator ") + to_string(e.binop) + " needs numbers, found " +
                                       to_string(a) + " and " + to_string(b));
    }
    return a == ValueType::Real || b == ValueType::Real ? ValueType::Real : ValueType::Int;
  }

  ValueType expr(Expr& e, Context ctx) {
    e.type = infer(e, ctx);
    return e.type;
  }

  ValueType infer(Expr& e, Context ctx) {
    switch (e.kind) {
      case Expr::Kind::BoolLit: return ValueType::Bool;
      case Expr::Kind::IntLit: return ValueType::Int;
      case Expr::Kind::RealLit: return ValueType::Real;
      case Expr::Kind::StrLit: return ValueType::Str;
      case Expr::Kind::Register: {
        if (ctx == Context::Postcondition) {
          fail(ErrorKind::Purity, e.pos, "postconditions may only mention __return__ and constants");
        }
        auto r = RegisterRef::parse(e.text);
        if (!r) fail(ErrorKind::Resolution, e.pos, "unknown app_state field '" + e.text + "'");
        e.reg = *r;
        return r->value_type();
      }
      case Expr::Kind::DeviceMethod: {
        if (ctx == Context::Postcondition) {
          fail(ErrorKind::Purity, e.pos, "postconditions may only mention __return__ and constants");
        }
        const auto& ch = device(e.text, e.pos);
        if (e.method == "on" || e.method == "off") {
          if (ctx == Context::Invariant) {
            fail(ErrorKind::SideEffect, e.pos, "the invariant cannot call " + e.text + "." + e.method + "()");
          }
          fail(ErrorKind::Type, e.pos, e.text + "." + e.method + "() returns None and cannot be used as a value");
        }
        if (e.method != read_method(ch)) {
          fail(ErrorKind::Resolution, e.pos, "device '" + e.text + "' has no method '" + e.method + "'");
        }
        return ch.value_type;
      }
      case Expr::Kind::Call: {
        auto t = call(e, ctx);
        if (!t) fail(ErrorKind::Type, e.pos, e.text + "() returns None and cannot be used as a value");
        return *t;
      }
      case Expr::Kind::ReturnValue: {
        if (ctx != Context::Postcondition) fail(ErrorKind::Resolution, e.pos, "__return__ outside a postcondition");
        if (!current_->return_type) fail(ErrorKind::Type, e.pos, current_->name + "() returns None");
        return *current_->return_type;
      }
      case Expr::Kind::Unary: {
        auto t = expr(*e.args[0], ctx);
        if (e.unop == UnOp::Not) {
          if (t != ValueType::Bool) fail(ErrorKind::Type, e.pos, "'not' needs a bool, found " + to_string(t));
          return t;
        }
        if (!is_numeric(t)) fail(ErrorKind::Type, e.pos, "unary '-' needs a number, found " + to_string(t));
        return t;
      }
      case Expr::Kind::Binary: {
        auto a = expr(*e.args[0], ctx);
        auto b = expr(*e.args[1], ctx);
        switch (e.binop) {
          case BinOp::Add:
          case BinOp::Sub: return numeric_result(e, a, b);
          case BinOp::Mul: {
            auto t = numeric_result(e, a, b);
            if (!is_constant(*e.args[0]) && !is_constant(*e.args[1])) {
              fail(ErrorKind::Linearity, e.pos, "multiplication needs a constant operand: " + render(e));
            }
            return t;
          }
          case BinOp::Lt:
          case BinOp::Le:
          case BinOp::Ge:
          case BinOp::Gt: numeric_result(e, a, b); return ValueType::Bool;
          case BinOp::Eq:
          case BinOp::Ne:
            if (is_numeric(a) && is_numeric(b)) return ValueType::Bool;
            if (a != b) {
              fail(ErrorKind::Type, e.pos, "cannot compare " + to_string(a) + " with " + to_string(b));
            }
            if (a == ValueType::Str && e.args[0]->kind != Expr::Kind::StrLit &&
                e.args[1]->kind != Expr::Kind::StrLit) {
              fail(ErrorKind::Type, e.pos, "strings can only be compared with a literal");
            }
            return ValueType::Bool;
          case BinOp::And:
          case BinOp::Or:
            if (a != ValueType::Bool || b != ValueType::Bool) {
              fail(ErrorKind::Type, e.pos, std::string("'") + to_string(e.binop) + "' needs bools");
            }
            return ValueType::Bool;
        }
      }
    }
    return ValueType::Bool;
  }

  // Returns the declared result type, nullopt for None.
  std::optional<ValueType> call(Expr& e, Context ctx) {
    if (ctx == Context::Invariant) {
      fail(ErrorKind::Purity, e.pos, "the invariant cannot use unchecked functions (" + e.text + ")");
    }
    if (ctx == Context::Postcondition) {
      fail(ErrorKind::Purity, e.pos, "postconditions cannot use unchecked functions (" + e.text + ")");
    }
    const auto* decl = p_.find_unchecked(e.text);
    if (!decl) fail(ErrorKind::Resolution, e.pos, "unknown function '" + e.text + "'");
    e.call_site = sites_++;
    if (e.args.size() != decl->params.size()) {
      fail(ErrorKind::Type, e.pos, e.text + "() takes " + std::to_string(decl->params.size()) + " arguments, got " +
                                       std::to_string(e.args.size()));
    }
    for (std::size_t i = 0; i < e.args.size(); ++i) {
      auto t = expr(*e.args[i], ctx);
      if (!assignable(decl->params[i].type, t)) {
        fail(ErrorKind::Type, e.args[i]->pos, "argument '" + decl->params[i].name + "' of " + e.text +
                                                  "() must be " + to_string(decl->params[i].type) + ", found " +
                                                  to_string(t));
      }
    }
    e.type = decl->return_type.value_or(ValueType::Bool);
    return decl->return_type;
  }

  void block(Block& b) {
    for (auto& s : b) stmt(s);
  }

  void stmt(Stmt& s) {
    switch (s.kind) {
      case Stmt::Kind::If:
        for (auto& br : s.branches) {
          expect(br.condition, ValueType::Bool, Context::Iteration, "condition");
          block(br.body);
        }
        if (s.else_body) block(*s.else_body);
        break;
      case Stmt::Kind::Assign: {
        auto r = RegisterRef::parse(s.target);
        if (!r) fail(ErrorKind::Resolution, s.pos, "unknown app_state field '" + s.target + "'");
        s.reg = *r;
        auto t = expr(*s.value, Context::Iteration);
        if (!assignable(r->value_type(), t)) {
          fail(ErrorKind::Type, s.pos, "cannot assign " + to_string(t) + " to app_state." + s.target + " (" +
                                           to_string(r->value_type()) + ")");
        }
        break;
      }
      case Stmt::Kind::DeviceCall: {
        const auto& ch = device(s.device, s.pos);
        if ((s.method != "on" && s.method != "off") || !ch.writable) {
          fail(ErrorKind::Resolution, s.pos, "device '" + s.device + "' has no write method '" + s.method + "'");
        }
        break;
      }
      case Stmt::Kind::Call: call(*s.call, Context::Iteration); break;
    }
  }

  Program& p_;
  const AppPrototype& proto_;
  const UncheckedDecl* current_ = nullptr;
  int sites_ = 0;
};

}  // namespace detail

inline TypedProgram typecheck(const Program& p, const AppPrototype& proto) {
  TypedProgram tp{clone(p), proto, 0};
  tp.call_sites = detail::Checker(tp.program, tp.proto).run();
  return tp;
}

}  // namespace knxsafe::lang
