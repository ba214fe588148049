#pragma once

// Quantifier-free formulas over boolean, linear-arithmetic and string
// symbols. Linear atoms are kept as `expr op 0`.

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "knxsafe/values.hpp"

namespace knxsafe::verify {

using Symbols = std::map<std::string, ValueType>;
using Model = std::map<std::string, Value>;

struct LinExpr {
  std::map<std::string, Rational> coeffs;  // no zero entries
  Rational constant;

  static LinExpr constant_of(const Rational& r) { return {{}, r}; }
  static LinExpr var(const std::string& name) { return {{{name, Rational(1)}}, Rational(0)}; }

  bool is_constant() const { return coeffs.empty(); }

  LinExpr& operator+=(const LinExpr& o) {
    for (const auto& [v, c] : o.coeffs) {
      auto& slot = coeffs[v];
      slot += c;
      if (slot == 0) coeffs.erase(v);
    }
    constant += o.constant;
    return *this;
  }
  LinExpr& operator*=(const Rational& k) {
    if (k == 0) {
      coeffs.clear();
      constant = 0;
      return *this;
    }
    for (auto& [v, c] : coeffs) c *= k;
    constant *= k;
    return *this;
  }
  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, LinExpr b) { return a += (b *= Rational(-1)); }
  friend LinExpr operator*(LinExpr a, const Rational& k) { return a *= k; }
  LinExpr operator-() const { return *this * Rational(-1); }

  bool operator==(const LinExpr&) const = default;

  Rational eval(const std::map<std::string, Rational>& values) const {
    Rational r = constant;
    for (const auto& [v, c] : coeffs) {
      auto it = values.find(v);
      if (it != values.end()) r += c * it->second;
    }
    return r;
  }

  std::string str() const {
    std::string out;
    for (const auto& [v, c] : coeffs) {
      if (!out.empty()) out += c < 0 ? " - " : " + ";
      else if (c < 0) out += "-";
      const Rational a = c < 0 ? Rational(-c) : c;
      if (a != 1) out += format_rational(a) + "*";
      out += v;
    }
    if (out.empty()) return format_rational(constant);
    if (constant > 0) out += " + " + format_rational(constant);
    if (constant < 0) out += " - " + format_rational(Rational(-constant));
    return out;
  }
};

enum class LinOp { Le, Lt, Eq };  // expr <= 0, expr < 0, expr == 0

inline bool holds(LinOp op, const Rational& v) {
  switch (op) {
    case LinOp::Le: return v <= 0;
    case LinOp::Lt: return v < 0;
    case LinOp::Eq: return v == 0;
  }
  return false;
}

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  enum class Kind { True, False, Var, Lin, StrEq, Not, And, Or };
  Kind kind = Kind::True;
  std::string name;     // Var, StrEq: symbol
  std::string literal;  // StrEq
  LinExpr lin;          // Lin
  LinOp op = LinOp::Le;
  std::vector<FormulaPtr> kids;
};

inline FormulaPtr f_const(bool b) {
  static const auto t = std::make_shared<const Formula>(Formula{Formula::Kind::True, {}, {}, {}, LinOp::Le, {}});
  static const auto f = std::make_shared<const Formula>(Formula{Formula::Kind::False, {}, {}, {}, LinOp::Le, {}});
  return b ? t : f;
}

inline bool is_true(const FormulaPtr& f) { return f->kind == Formula::Kind::True; }
inline bool is_false(const FormulaPtr& f) { return f->kind == Formula::Kind::False; }

inline FormulaPtr f_var(const std::string& name) {
  Formula f;
  f.kind = Formula::Kind::Var;
  f.name = name;
  return std::make_shared<const Formula>(std::move(f));
}

inline FormulaPtr f_not(const FormulaPtr& a) {
  if (is_true(a)) return f_const(false);
  if (is_false(a)) return f_const(true);
  if (a->kind == Formula::Kind::Not) return a->kids[0];
  Formula f;
  f.kind = Formula::Kind::Not;
  f.kids = {a};
  return std::make_shared<const Formula>(std::move(f));
}

inline FormulaPtr f_and(const std::vector<FormulaPtr>& parts) {
  std::vector<FormulaPtr> kids;
  for (const auto& p : parts) {
    if (is_false(p)) return f_const(false);
    if (is_true(p)) continue;
    if (p->kind == Formula::Kind::And) {
      kids.insert(kids.end(), p->kids.begin(), p->kids.end());
    } else {
      kids.push_back(p);
    }
  }
  if (kids.empty()) return f_const(true);
  if (kids.size() == 1) return kids[0];
  Formula f;
  f.kind = Formula::Kind::And;
  f.kids = std::move(kids);
  return std::make_shared<const Formula>(std::move(f));
}

inline FormulaPtr f_or(const std::vector<FormulaPtr>& parts) {
  std::vector<FormulaPtr> kids;
  for (const auto& p : parts) {
    if (is_true(p)) return f_const(true);
    if (is_false(p)) continue;
    if (p->kind == Formula::Kind::Or) {
      kids.insert(kids.end(), p->kids.begin(), p->kids.end());
    } else {
      kids.push_back(p);
    }
  }
  if (kids.empty()) return f_const(false);
  if (kids.size() == 1) return kids[0];
  Formula f;
  f.kind = Formula::Kind::Or;
  f.kids = std::move(kids);
  return std::make_shared<const Formula>(std::move(f));
}

inline FormulaPtr f_and(const FormulaPtr& a, const FormulaPtr& b) { return f_and(std::vector<FormulaPtr>{a, b}); }
inline FormulaPtr f_or(const FormulaPtr& a, const FormulaPtr& b) { return f_or(std::vector<FormulaPtr>{a, b}); }
inline FormulaPtr f_implies(const FormulaPtr& a, const FormulaPtr& b) { return f_or(f_not(a), b); }
inline FormulaPtr f_iff(const FormulaPtr& a, const FormulaPtr& b) {
  return f_or(f_and(a, b), f_and(f_not(a), f_not(b)));
}

inline FormulaPtr f_lin(LinExpr e, LinOp op) {
  if (e.is_constant()) return f_const(holds(op, e.constant));
  Formula f;
  f.kind = Formula::Kind::Lin;
  f.lin = std::move(e);
  f.op = op;
  return std::make_shared<const Formula>(std::move(f));
}

/// a != b, as a < b or a > b.
inline FormulaPtr f_ne(const LinExpr& a, const LinExpr& b) {
  return f_or(f_lin(a - b, LinOp::Lt), f_lin(b - a, LinOp::Lt));
}

inline FormulaPtr f_str_eq(const std::string& symbol, const std::string& literal) {
  Formula f;
  f.kind = Formula::Kind::StrEq;
  f.name = symbol;
  f.literal = literal;
  return std::make_shared<const Formula>(std::move(f));
}

/// Negation normal form: Not only above Var and StrEq; Lin atoms negated in
/// place (a disequality becomes a disjunction of two strict atoms).
inline FormulaPtr nnf(const FormulaPtr& f, bool negate = false) {
  using K = Formula::Kind;
  switch (f->kind) {
    case K::True:
    case K::False: return negate ? f_not(f) : f;
    case K::Var:
    case K::StrEq: return negate ? f_not(f) : f;
    case K::Not: return nnf(f->kids[0], !negate);
    case K::Lin:
      if (!negate) return f;
      switch (f->op) {
        case LinOp::Le: return f_lin(-f->lin, LinOp::Lt);
        case LinOp::Lt: return f_lin(-f->lin, LinOp::Le);
        case LinOp::Eq: return f_or(f_lin(f->lin, LinOp::Lt), f_lin(-f->lin, LinOp::Lt));
      }
      return f;
    case K::And:
    case K::Or: {
      std::vector<FormulaPtr> kids;
      for (const auto& k : f->kids) kids.push_back(nnf(k, negate));
      return (f->kind == K::And) != negate ? f_and(kids) : f_or(kids);
    }
  }
  return f;
}

inline bool evaluate(const FormulaPtr& f, const Model& m) {
  using K = Formula::Kind;
  switch (f->kind) {
    case K::True: return true;
    case K::False: return false;
    case K::Var: return std::get<bool>(m.at(f->name));
    case K::StrEq: return std::get<std::string>(m.at(f->name)) == f->literal;
    case K::Not: return !evaluate(f->kids[0], m);
    case K::Lin: {
      Rational v = f->lin.constant;
      for (const auto& [s, c] : f->lin.coeffs) v += c * std::get<Rational>(m.at(s));
      return holds(f->op, v);
    }
    case K::And:
      for (const auto& k : f->kids) {
        if (!evaluate(k, m)) return false;
      }
      return true;
    case K::Or:
      for (const auto& k : f->kids) {
        if (evaluate(k, m)) return true;
      }
      return false;
  }
  return false;
}

inline void collect_literals(const FormulaPtr& f, std::set<std::string>& out) {
  if (f->kind == Formula::Kind::StrEq) out.insert(f->literal);
  for (const auto& k : f->kids) collect_literals(k, out);
}

inline std::string to_string(const FormulaPtr& f) {
  using K = Formula::Kind;
  switch (f->kind) {
    case K::True: return "true";
    case K::False: return "false";
    case K::Var: return f->name;
    case K::StrEq: return f->name + " == \"" + f->literal + "\"";
    case K::Not: return "not " + to_string(f->kids[0]);
    case K::Lin: {
      const char* ops[] = {" <= 0", " < 0", " == 0"};
      return f->lin.str() + ops[static_cast<int>(f->op)];
    }
    case K::And:
    case K::Or: {
      std::string out = "(";
      for (std::size_t i = 0; i < f->kids.size(); ++i) {
        if (i) out += f->kind == K::And ? " and " : " or ";
        out += to_string(f->kids[i]);
      }
      return out + ")";
    }
  }
  return "?";
}

}  // namespace knxsafe::verify
