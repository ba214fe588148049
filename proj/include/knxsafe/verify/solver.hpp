#pragma once

// Decision procedure for the verifier's fragment: case splitting over the
// boolean structure, string (dis)equalities against literals,
// Fourier-Motzkin over the rationals and branch-and-bound for Int symbols.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "knxsafe/error.hpp"
#include "knxsafe/verify/formula.hpp"

namespace knxsafe::verify {

inline constexpr int kMaxSplitsPerSymbol = 64;

struct Constraint {
  LinExpr e;
  LinOp op;  // e op 0
  bool operator==(const Constraint&) const = default;
};

namespace detail {

inline Integer gcd_int(Integer a, Integer b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    Integer t = a % b;
    a = b;
    b = t;
  }
  return a;
}

inline Integer lcm_int(const Integer& a, const Integer& b) { return a / gcd_int(a, b) * b; }

/// Scales to a canonical form: leading coefficient magnitude 1 for mixed
/// constraints; for all-Int constraints integral coefficients with gcd 1 and
/// a tightened constant (strict becomes non-strict).
inline Constraint normalize(Constraint c, const Symbols& syms) {
  if (c.e.is_constant()) return c;
  bool all_int = true;
  for (const auto& [v, k] : c.e.coeffs) {
    auto it = syms.find(v);
    if (it == syms.end() || it->second != ValueType::Int) all_int = false;
  }
  if (!all_int) {
    Rational lead = c.e.coeffs.begin()->second;
    if (lead < 0) lead = -lead;
    c.e *= Rational(1) / lead;
    return c;
  }
  Integer den = boost::multiprecision::denominator(c.e.constant);
  for (const auto& [v, k] : c.e.coeffs) den = lcm_int(den, boost::multiprecision::denominator(k));
  c.e *= Rational(den);
  Integer g = 0;
  for (const auto& [v, k] : c.e.coeffs) g = gcd_int(g, boost::multiprecision::numerator(k));
  if (c.op == LinOp::Lt) {
    c.e.constant += 1;
    c.op = LinOp::Le;
  }
  if (c.op == LinOp::Eq) {
    if (boost::multiprecision::numerator(c.e.constant) % g != 0) return {LinExpr::constant_of(Rational(1)), LinOp::Eq};
    c.e *= Rational(1) / Rational(g);
    return c;
  }
  // sum(a x) + k <= 0 with integral a: divide by g, round k up.
  for (auto& [v, k] : c.e.coeffs) k /= Rational(g);
  c.e.constant = Rational(ceil_of(c.e.constant / Rational(g)));
  return c;
}

struct Bounds {
  std::optional<Rational> lo, hi;
  bool lo_strict = false, hi_strict = false;

  void lower(const Rational& v, bool strict) {
    if (!lo || v > *lo || (v == *lo && strict)) {
      lo = v;
      lo_strict = strict;
    }
  }
  void upper(const Rational& v, bool strict) {
    if (!hi || v < *hi || (v == *hi && strict)) {
      hi = v;
      hi_strict = strict;
    }
  }
  bool admits(const Rational& v) const {
    if (lo && (v < *lo || (lo_strict && v == *lo))) return false;
    if (hi && (v > *hi || (hi_strict && v == *hi))) return false;
    return true;
  }

  /// Prefers 0, then the integer closest to 0, then a midpoint.
  std::optional<Rational> pick() const {
    if (admits(Rational(0))) return Rational(0);
    std::optional<Rational> cand;
    if (lo && *lo > 0) {
      Integer i = ceil_of(*lo);
      if (lo_strict && Rational(i) == *lo) i += 1;
      cand = Rational(i);
    } else if (hi && *hi < 0) {
      Integer i = floor_of(*hi);
      if (hi_strict && Rational(i) == *hi) i -= 1;
      cand = Rational(i);
    }
    if (cand && admits(*cand)) return cand;
    if (lo && hi) {
      Rational mid = (*lo + *hi) / 2;
      if (admits(mid)) return mid;
      if (*lo == *hi && !lo_strict && !hi_strict) return *lo;
      return std::nullopt;
    }
    if (lo && !hi) return *lo + 1;
    if (hi && !lo) return *hi - 1;
    return std::nullopt;
  }
};

/// Rational feasibility with a witness, or nullopt when infeasible.
class LinearSolver {
 public:
  explicit LinearSolver(const Symbols& syms) : syms_(syms) {}

  std::optional<std::map<std::string, Rational>> solve(std::vector<Constraint> cs) const {
    // Equalities first: substitute one variable away, preferring reals.
    std::vector<std::pair<std::string, LinExpr>> subst;
    for (;;) {
      auto it = std::find_if(cs.begin(), cs.end(),
                             [](const Constraint& c) { return c.op == LinOp::Eq && !c.e.is_constant(); });
      if (it == cs.end()) break;
      const Constraint eq = *it;
      cs.erase(it);
      std::string pick;
      for (const auto& [v, k] : eq.e.coeffs) {
        if (type_of(v) != ValueType::Int) {
          pick = v;
          break;
        }
      }
      if (pick.empty()) {
        for (const auto& [v, k] : eq.e.coeffs) {
          if (k == 1 || k == -1) {
            pick = v;
            break;
          }
        }
      }
      if (pick.empty()) pick = eq.e.coeffs.begin()->first;
      // pick = -(rest) / a
      LinExpr rest = eq.e;
      const Rational a = rest.coeffs.at(pick);
      rest.coeffs.erase(pick);
      rest *= Rational(-1) / a;
      for (auto& c : cs) c.e = substitute(c.e, pick, rest);
      for (auto& s : subst) s.second = substitute(s.second, pick, rest);
      subst.emplace_back(pick, rest);
    }
    for (const auto& c : cs) {
      if (c.e.is_constant() && !holds(c.op, c.e.constant)) return std::nullopt;
    }
    std::erase_if(cs, [](const Constraint& c) { return c.e.is_constant(); });

    // Fourier-Motzkin: remember each stage for back-substitution.
    std::vector<std::pair<std::string, std::vector<Constraint>>> stages;
    for (;;) {
      std::map<std::string, std::pair<int, int>> counts;
      for (const auto& c : cs) {
        for (const auto& [v, k] : c.e.coeffs) (k > 0 ? counts[v].first : counts[v].second)++;
      }
      if (counts.empty()) break;
      // Cheapest elimination first: fewest new constraints.
      std::string var;
      std::optional<long> best;
      for (const auto& [v, pn] : counts) {
        const long cost = static_cast<long>(pn.first) * pn.second - pn.first - pn.second;
        if (!best || cost < *best) {
          best = cost;
          var = v;
        }
      }
      stages.emplace_back(var, cs);
      std::vector<Constraint> pos, neg, next;
      for (auto& c : cs) {
        auto it = c.e.coeffs.find(var);
        if (it == c.e.coeffs.end()) {
          next.push_back(c);
        } else if (it->second > 0) {
          pos.push_back(c);
        } else {
          neg.push_back(c);
        }
      }
      for (const auto& p : pos) {
        for (const auto& n : neg) {
          const Rational a = p.e.coeffs.at(var);
          const Rational b = -n.e.coeffs.at(var);
          Constraint c{p.e * b + n.e * a, (p.op == LinOp::Lt || n.op == LinOp::Lt) ? LinOp::Lt : LinOp::Le};
          c.e.coeffs.erase(var);
          if (c.e.is_constant()) {
            if (!holds(c.op, c.e.constant)) return std::nullopt;
            continue;
          }
          c = scale_lead(c);
          if (std::find(next.begin(), next.end(), c) == next.end()) next.push_back(c);
        }
      }
      cs = std::move(next);
    }

    std::map<std::string, Rational> values;
    for (auto it = stages.rbegin(); it != stages.rend(); ++it) {
      const auto& [var, stage] = *it;
      Bounds b;
      for (const auto& c : stage) {
        auto k = c.e.coeffs.find(var);
        if (k == c.e.coeffs.end()) continue;
        LinExpr rest = c.e;
        rest.coeffs.erase(var);
        const Rational r = rest.eval(values);
        // k*x + r op 0
        const Rational bound = -r / k->second;
        const bool strict = c.op == LinOp::Lt;
        if (k->second > 0) {
          b.upper(bound, strict);
        } else {
          b.lower(bound, strict);
        }
      }
      auto v = b.pick();
      if (!v) return std::nullopt;  // cannot happen after a successful elimination
      values[var] = *v;
    }
    for (auto it = subst.rbegin(); it != subst.rend(); ++it) values[it->first] = it->second.eval(values);
    return values;
  }

 private:
  ValueType type_of(const std::string& v) const {
    auto it = syms_.find(v);
    return it == syms_.end() ? ValueType::Real : it->second;
  }

  static LinExpr substitute(const LinExpr& e, const std::string& var, const LinExpr& by) {
    auto it = e.coeffs.find(var);
    if (it == e.coeffs.end()) return e;
    LinExpr out = e;
    const Rational k = it->second;
    out.coeffs.erase(var);
    out += by * k;
    return out;
  }

  static Constraint scale_lead(Constraint c) {
    Rational lead = c.e.coeffs.begin()->second;
    if (lead < 0) lead = -lead;
    c.e *= Rational(1) / lead;
    return c;
  }

  const Symbols& syms_;
};

struct Literals {
  std::map<std::string, bool> bools;
  std::vector<Constraint> lin;
  std::map<std::string, std::string> str_eq;
  std::map<std::string, std::set<std::string>> str_ne;
  bool lin_dirty = false;
};

}  // namespace detail

class Solver {
 public:
  /// `reserved` literals are avoided when inventing a string witness.
  explicit Solver(Symbols syms, std::set<std::string> reserved = {})
      : syms_(std::move(syms)), reserved_(std::move(reserved)) {}

  const Symbols& symbols() const { return syms_; }
  void add_symbol(const std::string& name, ValueType t) { syms_[name] = t; }
  void reserve(const std::string& literal) { reserved_.insert(literal); }

  /// Full model over every known symbol, or nullopt when unsatisfiable.
  std::optional<Model> solve(const FormulaPtr& f) const {
    std::set<std::string> reserved = reserved_;
    collect_literals(f, reserved);
    detail::Literals lits;
    std::vector<FormulaPtr> todo{nnf(f)};
    return search(std::move(todo), {}, std::move(lits), reserved);
  }

  bool satisfiable(const FormulaPtr& f) const { return solve(f).has_value(); }

 private:
  std::optional<Model> search(std::vector<FormulaPtr> todo, std::vector<FormulaPtr> splits, detail::Literals lits,
                              const std::set<std::string>& reserved) const {
    using K = Formula::Kind;
    for (;;) {
      while (!todo.empty()) {
        auto f = todo.back();
        todo.pop_back();
        switch (f->kind) {
          case K::True: break;
          case K::False: return std::nullopt;
          case K::And:
            for (auto it = f->kids.rbegin(); it != f->kids.rend(); ++it) todo.push_back(*it);
            break;
          case K::Or: splits.push_back(f); break;
          case K::Var:
            if (!assume_bool(lits, f->name, true)) return std::nullopt;
            break;
          case K::StrEq:
            if (!assume_str(lits, f->name, f->literal, true)) return std::nullopt;
            break;
          case K::Not: {
            const auto& a = f->kids[0];
            if (a->kind == K::Var) {
              if (!assume_bool(lits, a->name, false)) return std::nullopt;
            } else if (!assume_str(lits, a->name, a->literal, false)) {
              return std::nullopt;
            }
            break;
          }
          case K::Lin: {
            auto c = detail::normalize({f->lin, f->op}, syms_);
            if (c.e.is_constant()) {
              if (!holds(c.op, c.e.constant)) return std::nullopt;
              break;
            }
            if (std::find(lits.lin.begin(), lits.lin.end(), c) == lits.lin.end()) {
              lits.lin.push_back(c);
              lits.lin_dirty = true;
            }
            break;
          }
        }
      }
      if (splits.empty()) break;
      // Prune before splitting.
      if (lits.lin_dirty) {
        if (!detail::LinearSolver(syms_).solve(lits.lin)) return std::nullopt;
        lits.lin_dirty = false;
      }
      auto d = splits.front();
      splits.erase(splits.begin());
      for (std::size_t i = 0; i < d->kids.size(); ++i) {
        auto next = todo;
        next.push_back(d->kids[i]);
        if (auto m = search(std::move(next), splits, lits, reserved)) return m;
      }
      return std::nullopt;
    }
    std::map<std::string, int> splits_per_symbol;
    auto values = integer_solve(lits.lin, splits_per_symbol);
    if (!values) return std::nullopt;
    return build_model(lits, *values, reserved);
  }

  std::optional<std::map<std::string, Rational>> integer_solve(std::vector<Constraint> cs,
                                                               std::map<std::string, int>& splits) const {
    auto values = detail::LinearSolver(syms_).solve(cs);
    if (!values) return std::nullopt;
    for (const auto& [v, x] : *values) {
      auto it = syms_.find(v);
      if (it == syms_.end() || it->second != ValueType::Int || is_integral(x)) continue;
      if (++splits[v] > kMaxSplitsPerSymbol) {
        throw Error(ErrorKind::InternalSoundness, "branch-and-bound exceeded " + std::to_string(kMaxSplitsPerSymbol) +
                                                      " splits on " + v);
      }
      // v <= floor(x)  or  v >= ceil(x)
      auto down = cs;
      down.push_back(detail::normalize({LinExpr::var(v) - LinExpr::constant_of(Rational(floor_of(x))), LinOp::Le}, syms_));
      if (auto r = integer_solve(down, splits)) return r;
      auto up = cs;
      up.push_back(detail::normalize({LinExpr::constant_of(Rational(ceil_of(x))) - LinExpr::var(v), LinOp::Le}, syms_));
      return integer_solve(up, splits);
    }
    return values;
  }

  static bool assume_bool(detail::Literals& lits, const std::string& name, bool value) {
    auto [it, inserted] = lits.bools.emplace(name, value);
    return inserted || it->second == value;
  }

  static bool assume_str(detail::Literals& lits, const std::string& name, const std::string& literal, bool equal) {
    auto eq = lits.str_eq.find(name);
    if (equal) {
      if (eq != lits.str_eq.end()) return eq->second == literal;
      if (lits.str_ne[name].count(literal)) return false;
      lits.str_eq[name] = literal;
      return true;
    }
    if (eq != lits.str_eq.end()) return eq->second != literal;
    lits.str_ne[name].insert(literal);
    return true;
  }

  Model build_model(const detail::Literals& lits, const std::map<std::string, Rational>& values,
                    const std::set<std::string>& reserved) const {
    Model m;
    for (const auto& [name, type] : syms_) {
      switch (type) {
        case ValueType::Bool: {
          auto it = lits.bools.find(name);
          m[name] = it != lits.bools.end() && it->second;
          break;
        }
        case ValueType::Int:
        case ValueType::Real: {
          auto it = values.find(name);
          m[name] = it == values.end() ? Rational(0) : it->second;
          break;
        }
        case ValueType::Str: {
          if (auto it = lits.str_eq.find(name); it != lits.str_eq.end()) {
            m[name] = it->second;
            break;
          }
          auto ne = lits.str_ne.find(name);
          if (ne == lits.str_ne.end() || ne->second.empty()) {
            m[name] = std::string();
            break;
          }
          m[name] = fresh_literal(reserved);
          break;
        }
      }
    }
    // Symbols only seen in the formula (not declared) still get values.
    for (const auto& [name, v] : values) m.try_emplace(name, v);
    for (const auto& [name, v] : lits.bools) m.try_emplace(name, v);
    return m;
  }

  static std::string fresh_literal(const std::set<std::string>& reserved) {
    std::string w = "<other>";
    for (int i = 1; reserved.count(w); ++i) w = "<other" + std::to_string(i) + ">";
    return w;
  }

  Symbols syms_;
  std::set<std::string> reserved_;
};

}  // namespace knxsafe::verify
