#pragma once

// Concrete interpreter. Runs on copies of the app state and of the physical
// state store; both operands of `and`/`or` are always evaluated so unchecked
// calls happen in a fixed order regardless of values.

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "knxsafe/error.hpp"
#include "knxsafe/lang/typecheck.hpp"
#include "knxsafe/values.hpp"
#include "knxsafe/wire.hpp"

namespace knxsafe::lang {

/// (device instance, channel name) -> group address, for one app.
using ChannelAddresses = std::map<std::pair<std::string, std::string>, wire::GroupAddress>;

struct UncheckedCall {
  std::string name;
  int call_site = -1;
  std::vector<Value> args;
};

using UncheckedImpl = std::function<std::optional<Value>(const UncheckedCall&)>;
using UncheckedImpls = std::map<std::string, UncheckedImpl>;

struct IterationResult {
  AppState app;
  PhysicalStateStore store;
  std::vector<UncheckedCall> calls;
  std::set<wire::GroupAddress> written;  // addresses this run wrote, in any order
};

inline const wire::GroupAddress& address_of(const ChannelAddresses& addrs, const std::string& instance,
                                            const std::string& channel) {
  auto it = addrs.find({instance, channel});
  if (it == addrs.end()) {
    throw Error(ErrorKind::Configuration, "no group address bound to " + instance + "." + channel);
  }
  return it->second;
}

/// Store value of a channel, defaulting when the address has never been seen.
inline Value read_channel(const PhysicalStateStore& store, const wire::GroupAddress& ga, ValueType t) {
  auto it = store.find(ga);
  if (it == store.end()) return default_value(t);
  if (!value_has_type(it->second, t)) {
    throw Error(ErrorKind::RuntimeType, "value " + format_value(it->second) + " at " + ga.to_string() +
                                            " is not a " + to_string(t));
  }
  return it->second;
}

namespace detail {

class Interpreter {
 public:
  Interpreter(const TypedProgram& tp, const ChannelAddresses& addrs, IterationResult& r, const UncheckedImpls* impls)
      : tp_(tp), addrs_(addrs), r_(r), impls_(impls) {}

  Value eval(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::BoolLit: return e.bool_value;
      case Expr::Kind::IntLit:
      case Expr::Kind::RealLit: return e.number;
      case Expr::Kind::StrLit: return e.text;
      case Expr::Kind::Register: return get_register(r_.app, e.reg);
      case Expr::Kind::DeviceMethod: {
        const auto& ch = tp_.channel(e.text);
        return read_channel(r_.store, address_of(addrs_, e.text, ch.name), ch.value_type);
      }
      case Expr::Kind::Call: return *call(e);
      case Expr::Kind::ReturnValue: throw Error(ErrorKind::InternalSoundness, "__return__ evaluated outside a postcondition");
      case Expr::Kind::Unary: {
        auto v = eval(*e.args[0]);
        if (e.unop == UnOp::Not) return !std::get<bool>(v);
        return Rational(-std::get<Rational>(v));
      }
      case Expr::Kind::Binary: {
        auto a = eval(*e.args[0]);
        auto b = eval(*e.args[1]);
        switch (e.binop) {
          case BinOp::Add: return Rational(std::get<Rational>(a) + std::get<Rational>(b));
          case BinOp::Sub: return Rational(std::get<Rational>(a) - std::get<Rational>(b));
          case BinOp::Mul: return Rational(std::get<Rational>(a) * std::get<Rational>(b));
          case BinOp::Lt: return std::get<Rational>(a) < std::get<Rational>(b);
          case BinOp::Le: return std::get<Rational>(a) <= std::get<Rational>(b);
          case BinOp::Ge: return std::get<Rational>(a) >= std::get<Rational>(b);
          case BinOp::Gt: return std::get<Rational>(a) > std::get<Rational>(b);
          case BinOp::Eq: return a == b;
          case BinOp::Ne: return a != b;
          case BinOp::And: return std::get<bool>(a) && std::get<bool>(b);
          case BinOp::Or: return std::get<bool>(a) || std::get<bool>(b);
        }
      }
    }
    return false;
  }

  void block(const Block& b) {
    for (const auto& s : b) stmt(s);
  }

 private:
  std::optional<Value> call(const Expr& e) {
    if (!impls_) throw Error(ErrorKind::Purity, e.text + "() called in a pure context");
    UncheckedCall c{e.text, e.call_site, {}};
    for (const auto& a : e.args) c.args.push_back(eval(*a));
    auto it = impls_->find(e.text);
    if (it == impls_->end() || !it->second) {
      throw Error(ErrorKind::Configuration, "no implementation for unchecked function " + e.text + "()");
    }
    r_.calls.push_back(c);
    auto out = it->second(c);
    const auto* decl = tp_.program.find_unchecked(e.text);
    if (decl->return_type) {
      if (!out || !value_has_type(*out, *decl->return_type)) {
        throw Error(ErrorKind::RuntimeType, e.text + "() must return " + to_string(*decl->return_type) + ", got " +
                                                (out ? format_value(*out) : std::string("None")));
      }
    } else if (out) {
      throw Error(ErrorKind::RuntimeType, e.text + "() must return None, got " + format_value(*out));
    }
    return out;
  }

  void stmt(const Stmt& s) {
    switch (s.kind) {
      case Stmt::Kind::If:
        for (const auto& br : s.branches) {
          if (std::get<bool>(eval(*br.condition))) {
            block(br.body);
            return;
          }
        }
        if (s.else_body) block(*s.else_body);
        break;
      case Stmt::Kind::Assign: set_register(r_.app, s.reg, eval(*s.value)); break;
      case Stmt::Kind::DeviceCall: {
        const auto& ch = tp_.channel(s.device);
        const auto& ga = address_of(addrs_, s.device, ch.name);
        r_.store[ga] = s.method == "on";
        r_.written.insert(ga);
        break;
      }
      case Stmt::Kind::Call: call(*s.call); break;
    }
  }

  const TypedProgram& tp_;
  const ChannelAddresses& addrs_;
  IterationResult& r_;
  const UncheckedImpls* impls_;
};

}  // namespace detail

inline IterationResult interpret_iteration(const TypedProgram& tp, const ChannelAddresses& addrs, const AppState& app,
                                           const PhysicalStateStore& store, const UncheckedImpls& impls) {
  IterationResult r{app, store, {}, {}};
  detail::Interpreter(tp, addrs, r, &impls).block(tp.program.iteration);
  return r;
}

inline bool evaluate_invariant(const TypedProgram& tp, const ChannelAddresses& addrs, const AppState& app,
                               const PhysicalStateStore& store) {
  IterationResult r{app, store, {}, {}};
  return std::get<bool>(detail::Interpreter(tp, addrs, r, nullptr).eval(*tp.program.invariant));
}

}  // namespace knxsafe::lang
