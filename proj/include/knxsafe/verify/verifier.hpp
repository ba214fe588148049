#pragma once

// Symbolic execution of iteration handlers and the installation check: for
// every path of every app, all invariants on the initial state together with
// the path condition must imply all invariants on the final state.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "knxsafe/error.hpp"
#include "knxsafe/lang/interp.hpp"
#include "knxsafe/lang/typecheck.hpp"
#include "knxsafe/verify/formula.hpp"
#include "knxsafe/verify/solver.hpp"

namespace knxsafe::verify {

/// A typechecked app together with the group addresses of its channels.
struct VerifiedApp {
  lang::TypedProgram tp;
  lang::ChannelAddresses addrs;

  const std::string& name() const { return tp.proto.name; }
};

inline std::string ga_symbol(const wire::GroupAddress& ga) {
  auto s = ga.to_string();
  std::replace(s.begin(), s.end(), '/', '_');
  return "GA_" + s;
}

inline std::string register_symbol(const std::string& app, RegisterRef r) { return app + "." + r.name(); }

inline std::string unchecked_symbol(const std::string& app, const std::string& fn, int site) {
  return app + "." + fn + "#" + std::to_string(site);
}

struct SymValue {
  ValueType type = ValueType::Bool;
  FormulaPtr b = f_const(false);  // Bool
  LinExpr num;                    // Int, Real
  bool str_literal = true;        // Str: literal text or symbol name
  std::string str;

  static SymValue of_bool(FormulaPtr f) {
    SymValue v;
    v.b = std::move(f);
    return v;
  }
  static SymValue of_num(ValueType t, LinExpr e) {
    SymValue v;
    v.type = t;
    v.num = std::move(e);
    return v;
  }
  static SymValue of_str(bool literal, std::string s) {
    SymValue v;
    v.type = ValueType::Str;
    v.str_literal = literal;
    v.str = std::move(s);
    return v;
  }
  static SymValue symbol(const std::string& name, ValueType t) {
    switch (t) {
      case ValueType::Bool: return of_bool(f_var(name));
      case ValueType::Int:
      case ValueType::Real: return of_num(t, LinExpr::var(name));
      case ValueType::Str: return of_str(false, name);
    }
    return {};
  }
};

/// Concrete value of a symbolic term under a model.
inline Value concretize(const SymValue& v, const Model& m) {
  switch (v.type) {
    case ValueType::Bool: return evaluate(v.b, m);
    case ValueType::Int:
    case ValueType::Real: {
      Rational r = v.num.constant;
      for (const auto& [s, c] : v.num.coeffs) r += c * std::get<Rational>(m.at(s));
      return r;
    }
    case ValueType::Str: return v.str_literal ? v.str : std::get<std::string>(m.at(v.str));
  }
  return false;
}

struct SymbolicState {
  std::map<wire::GroupAddress, SymValue> phys;
  std::map<std::string, std::map<RegisterRef, SymValue>> regs;  // app -> registers
};

struct SymPath {
  FormulaPtr condition = f_const(true);    // branch decisions
  FormulaPtr assumptions = f_const(true);  // postconditions of unchecked results
  SymbolicState state;
  std::vector<std::string> trace;
};

/// Fresh symbols for every channel address and register of `apps`,
/// registered with `solver`.
inline SymbolicState initial_state(const std::vector<const VerifiedApp*>& apps, Solver& solver) {
  SymbolicState s;
  for (const auto* app : apps) {
    for (const auto& [key, ga] : app->addrs) {
      const auto* inst = app->tp.proto.find_device(key.first);
      if (!inst) continue;
      const auto t = channel_of(inst->kind).value_type;
      auto [it, inserted] = s.phys.try_emplace(ga, SymValue::symbol(ga_symbol(ga), t));
      if (!inserted && it->second.type != t) {
        throw Error(ErrorKind::Type, "group address " + ga.to_string() + " is used as both " +
                                         to_string(it->second.type) + " and " + to_string(t));
      }
      solver.add_symbol(ga_symbol(ga), t);
    }
    auto& regs = s.regs[app->name()];
    for (auto r : all_registers()) {
      const auto name = register_symbol(app->name(), r);
      regs[r] = SymValue::symbol(name, r.value_type());
      solver.add_symbol(name, r.value_type());
    }
  }
  return s;
}

namespace detail {

class SymExec {
 public:
  SymExec(const VerifiedApp& app, Solver& solver, FormulaPtr context)
      : app_(app), solver_(solver), context_(std::move(context)) {
    std::set<std::string> lits;
    collect_program_literals(app.tp.program, lits);
    for (const auto& l : lits) solver_.reserve(l);
  }

  std::vector<SymPath> run(SymPath start) { return block(app_.tp.program.iteration, {std::move(start)}); }

  SymValue eval(const lang::Expr& e, SymPath& p, const SymValue* ret = nullptr) {
    using K = lang::Expr::Kind;
    switch (e.kind) {
      case K::BoolLit: return SymValue::of_bool(f_const(e.bool_value));
      case K::IntLit: return SymValue::of_num(ValueType::Int, LinExpr::constant_of(e.number));
      case K::RealLit: return SymValue::of_num(ValueType::Real, LinExpr::constant_of(e.number));
      case K::StrLit: return SymValue::of_str(true, e.text);
      case K::Register: return p.state.regs.at(app_.name()).at(e.reg);
      case K::DeviceMethod: {
        const auto& ga = lang::address_of(app_.addrs, e.text, app_.tp.channel(e.text).name);
        return p.state.phys.at(ga);
      }
      case K::ReturnValue: return *ret;
      case K::Call: return *call(e, p);
      case K::Unary: {
        auto v = eval(*e.args[0], p, ret);
        if (e.unop == lang::UnOp::Not) return SymValue::of_bool(f_not(v.b));
        return SymValue::of_num(v.type, -v.num);
      }
      case K::Binary: {
        auto a = eval(*e.args[0], p, ret);
        auto b = eval(*e.args[1], p, ret);
        using B = lang::BinOp;
        switch (e.binop) {
          case B::Add: return SymValue::of_num(e.type, a.num + b.num);
          case B::Sub: return SymValue::of_num(e.type, a.num - b.num);
          case B::Mul:
            return SymValue::of_num(e.type, a.num.is_constant() ? b.num * a.num.constant : a.num * b.num.constant);
          case B::Lt: return SymValue::of_bool(f_lin(a.num - b.num, LinOp::Lt));
          case B::Le: return SymValue::of_bool(f_lin(a.num - b.num, LinOp::Le));
          case B::Gt: return SymValue::of_bool(f_lin(b.num - a.num, LinOp::Lt));
          case B::Ge: return SymValue::of_bool(f_lin(b.num - a.num, LinOp::Le));
          case B::Eq: return SymValue::of_bool(equal(a, b));
          case B::Ne: return SymValue::of_bool(f_not(equal(a, b)));
          case B::And: return SymValue::of_bool(f_and(a.b, b.b));
          case B::Or: return SymValue::of_bool(f_or(a.b, b.b));
        }
      }
    }
    return {};
  }

 private:
  static void collect_program_literals(const lang::Program& p, std::set<std::string>& out) {
    std::function<void(const lang::ExprPtr&)> expr = [&](const lang::ExprPtr& e) {
      if (!e) return;
      if (e->kind == lang::Expr::Kind::StrLit) out.insert(e->text);
      for (const auto& a : e->args) expr(a);
    };
    std::function<void(const lang::Block&)> block = [&](const lang::Block& b) {
      for (const auto& s : b) {
        for (const auto& br : s.branches) {
          expr(br.condition);
          block(br.body);
        }
        if (s.else_body) block(*s.else_body);
        expr(s.value);
        expr(s.call);
      }
    };
    expr(p.invariant);
    for (const auto& u : p.unchecked) {
      for (const auto& post : u.postconditions) expr(post);
    }
    block(p.iteration);
  }

  static FormulaPtr equal(const SymValue& a, const SymValue& b) {
    if (a.type == ValueType::Bool) return f_iff(a.b, b.b);
    if (a.type == ValueType::Str) {
      if (a.str_literal && b.str_literal) return f_const(a.str == b.str);
      if (a.str_literal) return f_str_eq(b.str, a.str);
      if (b.str_literal) return f_str_eq(a.str, b.str);
      if (a.str == b.str) return f_const(true);
      throw Error(ErrorKind::InternalSoundness, "string comparison between two symbols");
    }
    return f_lin(a.num - b.num, LinOp::Eq);
  }

  // Unchecked results become fresh symbols constrained by the postconditions;
  // None-returning calls vanish.
  std::optional<SymValue> call(const lang::Expr& e, SymPath& p) {
    for (const auto& a : e.args) eval(*a, p);
    const auto* decl = app_.tp.program.find_unchecked(e.text);
    if (!decl->return_type) return std::nullopt;
    const auto name = unchecked_symbol(app_.name(), e.text, e.call_site);
    solver_.add_symbol(name, *decl->return_type);
    auto v = SymValue::symbol(name, *decl->return_type);
    for (const auto& post : decl->postconditions) {
      p.assumptions = f_and(p.assumptions, eval(*post, p, &v).b);
    }
    return v;
  }

  bool feasible(const SymPath& p) const {
    return solver_.satisfiable(f_and({context_, p.condition, p.assumptions}));
  }

  std::vector<SymPath> block(const lang::Block& b, std::vector<SymPath> paths) {
    for (const auto& s : b) {
      std::vector<SymPath> next;
      for (auto& p : paths) {
        auto out = stmt(s, std::move(p));
        next.insert(next.end(), std::make_move_iterator(out.begin()), std::make_move_iterator(out.end()));
      }
      paths = std::move(next);
    }
    return paths;
  }

  std::vector<SymPath> stmt(const lang::Stmt& s, SymPath p) {
    using K = lang::Stmt::Kind;
    switch (s.kind) {
      case K::If: {
        std::vector<SymPath> out;
        for (std::size_t i = 0; i < s.branches.size(); ++i) {
          auto cond = eval(*s.branches[i].condition, p).b;
          SymPath taken = p;
          taken.condition = f_and(p.condition, cond);
          taken.trace.push_back(s.pos.str() + (i == 0 ? " if" : " elif#" + std::to_string(i)));
          if (feasible(taken)) {
            auto r = block(s.branches[i].body, {std::move(taken)});
            out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
          }
          p.condition = f_and(p.condition, f_not(cond));
          if (!feasible(p)) return out;
        }
        p.trace.push_back(s.pos.str() + " else");
        if (s.else_body) {
          auto r = block(*s.else_body, {std::move(p)});
          out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
        } else {
          out.push_back(std::move(p));
        }
        return out;
      }
      case K::Assign: {
        auto v = eval(*s.value, p);
        v.type = s.reg.value_type();
        p.state.regs.at(app_.name())[s.reg] = std::move(v);
        return {std::move(p)};
      }
      case K::DeviceCall: {
        const auto& ga = lang::address_of(app_.addrs, s.device, app_.tp.channel(s.device).name);
        p.state.phys[ga] = SymValue::of_bool(f_const(s.method == "on"));
        return {std::move(p)};
      }
      case K::Call: call(*s.call, p); return {std::move(p)};
    }
    return {std::move(p)};
  }

  const VerifiedApp& app_;
  Solver& solver_;
  FormulaPtr context_;
};

}  // namespace detail

/// All feasible paths through the app's iteration. `context` restricts the
/// inputs considered (used for pruning only).
inline std::vector<SymPath> symexec_iteration(const VerifiedApp& app, const SymbolicState& init, Solver& solver,
                                              const FormulaPtr& context = f_const(true)) {
  SymPath start;
  start.state = init;
  return detail::SymExec(app, solver, context).run(std::move(start));
}

/// The app's invariant over a symbolic state.
inline FormulaPtr symbolic_invariant(const VerifiedApp& app, const SymbolicState& s, Solver& solver) {
  SymPath p;
  p.state = s;
  return detail::SymExec(app, solver, f_const(true)).eval(*app.tp.program.invariant, p).b;
}

// ---------------------------------------------------------------------------
// Concrete states from models

struct ConcreteState {
  PhysicalStateStore store;
  std::map<std::string, AppState> apps;
};

inline ConcreteState concrete_state(const std::vector<const VerifiedApp*>& apps, const SymbolicState& s,
                                    const Model& m) {
  ConcreteState c;
  for (const auto& [ga, v] : s.phys) c.store[ga] = concretize(v, m);
  for (const auto* app : apps) {
    AppState st;
    for (const auto& [r, v] : s.regs.at(app->name())) set_register(st, r, concretize(v, m));
    c.apps[app->name()] = st;
  }
  return c;
}

/// Unchecked implementations that return the model's value for each call site.
inline lang::UncheckedImpls model_impls(const VerifiedApp& app, const Model& m) {
  lang::UncheckedImpls impls;
  for (const auto& d : app.tp.program.unchecked) {
    const auto rt = d.return_type;
    const auto app_name = app.name();
    impls[d.name] = [rt, app_name, &m](const lang::UncheckedCall& c) -> std::optional<Value> {
      if (!rt) return std::nullopt;
      auto it = m.find(unchecked_symbol(app_name, c.name, c.call_site));
      if (it == m.end()) return default_value(*rt);
      return it->second;
    };
  }
  return impls;
}

// ---------------------------------------------------------------------------
// Checks

struct VerificationTask {
  std::vector<const VerifiedApp*> apps;  // every installed and installing app
  const VerifiedApp* target = nullptr;
  FormulaPtr assumptions = f_const(true);  // extra restriction on initial symbols
};

struct Counterexample {
  std::string app;                    // app whose iteration breaks the invariant
  Model model;                        // initial symbols and unchecked results
  std::vector<std::string> violated;  // apps whose invariant fails afterwards
  std::vector<std::string> trace;
};

struct CheckResult {
  std::string app;
  std::size_t paths = 0;
  std::optional<Counterexample> counterexample;
  std::vector<std::string> warnings;

  bool valid() const { return !counterexample; }
};

namespace detail {

inline std::vector<std::string> replay(const VerificationTask& task, const SymbolicState& init, const Model& m) {
  auto c = concrete_state(task.apps, init, m);
  const auto& target = *task.target;
  for (const auto* app : task.apps) {
    if (!lang::evaluate_invariant(app->tp, app->addrs, c.apps.at(app->name()), c.store)) {
      throw Error(ErrorKind::InternalSoundness, "counterexample for " + target.name() + " violates the invariant of " +
                                                    app->name() + " before the iteration");
    }
  }
  auto r = lang::interpret_iteration(target.tp, target.addrs, c.apps.at(target.name()), c.store,
                                     model_impls(target, m));
  c.apps[target.name()] = r.app;
  std::vector<std::string> violated;
  for (const auto* app : task.apps) {
    if (!lang::evaluate_invariant(app->tp, app->addrs, c.apps.at(app->name()), r.store)) {
      violated.push_back(app->name());
    }
  }
  return violated;
}

}  // namespace detail

inline CheckResult check_app(const VerificationTask& task) {
  Solver solver({});
  const auto init = initial_state(task.apps, solver);
  std::vector<FormulaPtr> pre_parts{task.assumptions};
  for (const auto* app : task.apps) pre_parts.push_back(symbolic_invariant(*app, init, solver));
  const auto pre = f_and(pre_parts);

  CheckResult result;
  result.app = task.target->name();

  for (const auto& d : task.target->tp.program.unchecked) {
    if (!d.return_type || d.postconditions.empty()) continue;
    Solver local({{"__return__", *d.return_type}});
    auto ret = SymValue::symbol("__return__", *d.return_type);
    SymPath p;
    std::vector<FormulaPtr> posts;
    detail::SymExec ex(*task.target, local, f_const(true));
    for (const auto& post : d.postconditions) posts.push_back(ex.eval(*post, p, &ret).b);
    if (!local.satisfiable(f_and(posts))) {
      result.warnings.push_back(task.target->name() + ": postconditions of " + d.name +
                                " are unsatisfiable; every path through a call is vacuously valid");
    }
  }

  const auto paths = symexec_iteration(*task.target, init, solver, pre);
  result.paths = paths.size();
  for (const auto& path : paths) {
    std::vector<FormulaPtr> post;
    for (const auto* app : task.apps) post.push_back(symbolic_invariant(*app, path.state, solver));
    auto query = f_and({pre, path.condition, path.assumptions, f_not(f_and(post))});
    auto model = solver.solve(query);
    if (!model) continue;
    Counterexample cex{task.target->name(), *model, {}, path.trace};
    cex.violated = detail::replay(task, init, *model);
    if (cex.violated.empty()) {
      std::ostringstream os;
      os << "counterexample for " << task.target->name() << " does not reproduce concretely:";
      for (const auto& [k, v] : *model) os << " " << k << "=" << format_value(v);
      throw Error(ErrorKind::InternalSoundness, os.str());
    }
    result.counterexample = std::move(cex);
    return result;
  }
  return result;
}

struct VerificationReport {
  std::vector<CheckResult> results;  // by app name

  bool accepted() const {
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.valid(); });
  }

  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    for (const auto& r : results) out.insert(out.end(), r.warnings.begin(), r.warnings.end());
    return out;
  }

  std::string text() const {
    std::ostringstream os;
    for (const auto& r : results) {
      if (r.valid()) {
        os << r.app << ": valid (" << r.paths << (r.paths == 1 ? " path)\n" : " paths)\n");
        continue;
      }
      const auto& c = *r.counterexample;
      os << r.app << ": counterexample, violates";
      for (const auto& v : c.violated) os << " " << v;
      os << "\n";
      for (const auto& [k, v] : c.model) os << "  " << k << " = " << format_value(v) << "\n";
      if (!c.trace.empty()) {
        os << "  path:";
        for (const auto& t : c.trace) os << " [" << t << "]";
        os << "\n";
      }
    }
    for (const auto& w : warnings()) os << "warning: " << w << "\n";
    os << (accepted() ? "accepted" : "rejected") << "\n";
    return os.str();
  }
};

/// Checks every app of both sets against the invariants of all of them.
/// Nothing to install means nothing to check.
inline VerificationReport verify_installation(const std::vector<const VerifiedApp*>& installed,
                                              const std::vector<const VerifiedApp*>& installing,
                                              const FormulaPtr& assumptions = f_const(true)) {
  VerificationReport report;
  if (installing.empty()) return report;
  std::vector<const VerifiedApp*> all = installed;
  all.insert(all.end(), installing.begin(), installing.end());
  std::sort(all.begin(), all.end(), [](const auto* a, const auto* b) { return a->name() < b->name(); });
  for (const auto* app : all) report.results.push_back(check_app({all, app, assumptions}));
  return report;
}

}  // namespace knxsafe::verify
