#pragma once

// Runtime values shared by the interpreter, the verifier and the runtime.
// Int and Real values are both exact rationals; the static type decides
// which one a slot holds.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include <boost/multiprecision/cpp_int.hpp>

#include "knxsafe/error.hpp"
#include "knxsafe/wire.hpp"

namespace knxsafe {

using Rational = boost::multiprecision::cpp_rational;
using Integer = boost::multiprecision::cpp_int;

enum class ValueType { Bool, Int, Real, Str };

inline std::string to_string(ValueType t) {
  switch (t) {
    case ValueType::Bool: return "bool";
    case ValueType::Int: return "int";
    case ValueType::Real: return "float";
    case ValueType::Str: return "str";
  }
  return "?";
}

inline ValueType parse_value_type(const std::string& s) {
  if (s == "bool") return ValueType::Bool;
  if (s == "int") return ValueType::Int;
  if (s == "float") return ValueType::Real;
  if (s == "str") return ValueType::Str;
  throw Error(ErrorKind::Validation, "unknown value type '" + s + "'");
}

using Value = std::variant<bool, Rational, std::string>;

inline bool is_integral(const Rational& r) { return boost::multiprecision::denominator(r) == 1; }

inline Integer floor_of(const Rational& r) {
  Integer q = boost::multiprecision::numerator(r) / boost::multiprecision::denominator(r);
  if (r < 0 && !is_integral(r)) q -= 1;
  return q;
}

inline Integer ceil_of(const Rational& r) {
  Integer q = boost::multiprecision::numerator(r) / boost::multiprecision::denominator(r);
  if (r > 0 && !is_integral(r)) q += 1;
  return q;
}

/// Exact rational value of a finite double (every double is dyadic).
inline Rational rational_from_double(double x) {
  if (!std::isfinite(x)) throw Error(ErrorKind::RuntimeType, "non-finite real value");
  int exponent = 0;
  double mantissa = std::frexp(x, &exponent);
  // Shift 53 bits of mantissa into an integer.
  auto scaled = static_cast<std::int64_t>(std::ldexp(mantissa, 53));
  exponent -= 53;
  Rational r{Integer(scaled)};
  Integer pow2 = 1;
  pow2 <<= (exponent < 0 ? -exponent : exponent);
  if (exponent < 0) {
    r /= Rational(pow2);
  } else {
    r *= Rational(pow2);
  }
  return r;
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

/// Parses decimal literals such as "20.5", "-3", "1e3" exactly.
inline Rational parse_decimal(const std::string& text) {
  std::string mantissa = text;
  long exp10 = 0;
  if (auto e = text.find_first_of("eE"); e != std::string::npos) {
    mantissa = text.substr(0, e);
    exp10 = std::stol(text.substr(e + 1));
  }
  bool negative = false;
  if (!mantissa.empty() && (mantissa[0] == '-' || mantissa[0] == '+')) {
    negative = mantissa[0] == '-';
    mantissa = mantissa.substr(1);
  }
  std::string digits;
  for (char c : mantissa) {
    if (c == '.') continue;
    digits += c;
  }
  if (auto dot = mantissa.find('.'); dot != std::string::npos) {
    exp10 -= static_cast<long>(mantissa.size() - dot - 1);
  }
  if (digits.empty()) throw Error(ErrorKind::Syntax, "malformed number '" + text + "'");
  Rational r{Integer(digits)};
  Integer pow10 = 1;
  for (long i = 0; i < (exp10 < 0 ? -exp10 : exp10); ++i) pow10 *= 10;
  if (exp10 < 0) {
    r /= Rational(pow10);
  } else {
    r *= Rational(pow10);
  }
  return negative ? Rational(-r) : r;
}

/// Renders a rational as a short decimal when it has a finite expansion,
/// "p/q" otherwise.
inline std::string format_rational(const Rational& r) {
  auto num = boost::multiprecision::numerator(r);
  auto den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  Integer d = den;
  int twos = 0, fives = 0;
  while (d % 2 == 0) d /= 2, ++twos;
  while (d % 5 == 0) d /= 5, ++fives;
  if (d != 1) return num.str() + "/" + den.str();
  const int places = std::max(twos, fives);
  Integer scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  Integer scaled = num * scale / den;
  const bool negative = scaled < 0;
  std::string digits = (negative ? Integer(-scaled) : scaled).str();
  while (static_cast<int>(digits.size()) <= places) digits.insert(digits.begin(), '0');
  digits.insert(digits.end() - places, '.');
  return (negative ? "-" : "") + digits;
}

inline std::string format_value(const Value& v) {
  struct Visitor {
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(const Rational& r) const { return format_rational(r); }
    std::string operator()(const std::string& s) const {
      std::ostringstream os;
      os << '"' << s << '"';
      return os.str();
    }
  };
  return std::visit(Visitor{}, v);
}

inline bool value_has_type(const Value& v, ValueType t) {
  switch (t) {
    case ValueType::Bool: return std::holds_alternative<bool>(v);
    case ValueType::Int: return std::holds_alternative<Rational>(v) && is_integral(std::get<Rational>(v));
    case ValueType::Real: return std::holds_alternative<Rational>(v);
    case ValueType::Str: return std::holds_alternative<std::string>(v);
  }
  return false;
}

inline Value default_value(ValueType t) {
  switch (t) {
    case ValueType::Bool: return false;
    case ValueType::Int:
    case ValueType::Real: return Rational(0);
    case ValueType::Str: return std::string();
  }
  return false;
}

/// Fixed typed registers: four per type, default 0 / 0.0 / false / "".
struct AppState {
  static constexpr int kRegisters = 4;
  std::array<Rational, kRegisters> ints{};
  std::array<Rational, kRegisters> floats{};
  std::array<bool, kRegisters> bools{};
  std::array<std::string, kRegisters> strs{};

  bool operator==(const AppState&) const = default;
};

enum class RegisterKind { Int, Float, Bool, Str };

struct RegisterRef {
  RegisterKind kind = RegisterKind::Int;
  int index = 0;

  ValueType value_type() const {
    switch (kind) {
      case RegisterKind::Int: return ValueType::Int;
      case RegisterKind::Float: return ValueType::Real;
      case RegisterKind::Bool: return ValueType::Bool;
      case RegisterKind::Str: return ValueType::Str;
    }
    return ValueType::Int;
  }

  std::string name() const {
    static constexpr const char* prefixes[] = {"INT_", "FLOAT_", "BOOL_", "STR_"};
    return prefixes[static_cast<int>(kind)] + std::to_string(index);
  }

  static std::optional<RegisterRef> parse(const std::string& name) {
    static const std::pair<const char*, RegisterKind> prefixes[] = {
        {"INT_", RegisterKind::Int}, {"FLOAT_", RegisterKind::Float},
        {"BOOL_", RegisterKind::Bool}, {"STR_", RegisterKind::Str}};
    for (auto [prefix, kind] : prefixes) {
      const std::string p(prefix);
      if (name.size() == p.size() + 1 && name.compare(0, p.size(), p) == 0 && name.back() >= '0' &&
          name.back() < '0' + AppState::kRegisters) {
        return RegisterRef{kind, name.back() - '0'};
      }
    }
    return std::nullopt;
  }

  bool operator==(const RegisterRef&) const = default;
  auto operator<=>(const RegisterRef&) const = default;
};

inline Value get_register(const AppState& s, RegisterRef r) {
  switch (r.kind) {
    case RegisterKind::Int: return s.ints[r.index];
    case RegisterKind::Float: return s.floats[r.index];
    case RegisterKind::Bool: return s.bools[r.index];
    case RegisterKind::Str: return s.strs[r.index];
  }
  return false;
}

inline void set_register(AppState& s, RegisterRef r, const Value& v) {
  switch (r.kind) {
    case RegisterKind::Int: s.ints[r.index] = std::get<Rational>(v); break;
    case RegisterKind::Float: s.floats[r.index] = std::get<Rational>(v); break;
    case RegisterKind::Bool: s.bools[r.index] = std::get<bool>(v); break;
    case RegisterKind::Str: s.strs[r.index] = std::get<std::string>(v); break;
  }
}

inline std::vector<RegisterRef> all_registers() {
  std::vector<RegisterRef> out;
  for (auto kind : {RegisterKind::Int, RegisterKind::Float, RegisterKind::Bool, RegisterKind::Str}) {
    for (int i = 0; i < AppState::kRegisters; ++i) out.push_back({kind, i});
  }
  return out;
}

/// Local mirror of group-address values.
using PhysicalStateStore = std::map<wire::GroupAddress, Value>;

/// Converts between store values and the datapoint representation used on
/// the bus for a given datatype.
inline wire::DptValue to_dpt_value(const Value& v, const wire::DptId& dpt) {
  switch (dpt.main) {
    case 1: return std::get<bool>(v);
    case 5: {
      const auto& r = std::get<Rational>(v);
      if (!is_integral(r) || r < 0 || r > 255) throw Error(ErrorKind::Encode, "value out of DPT-5 range");
      return wire::Unsigned8{static_cast<std::uint8_t>(r.convert_to<int>())};
    }
    case 9: return wire::Float16{to_double(std::get<Rational>(v))};
    case 14: return wire::Float32{static_cast<float>(to_double(std::get<Rational>(v)))};
    default: throw Error(ErrorKind::Encode, "unsupported datatype " + dpt.to_string());
  }
}

inline Value from_dpt_value(const wire::DptValue& v) {
  struct Visitor {
    Value operator()(bool b) const { return b; }
    Value operator()(wire::Unsigned8 u) const { return Rational(u.value); }
    // Exact 0.01 * M * 2^E rather than the nearest double.
    Value operator()(wire::Float16 f) const {
      const auto bytes = wire::encode_dpt(f);
      const auto word = static_cast<std::uint16_t>((bytes[0] << 8) | bytes[1]);
      int mantissa = word & 0x07FF;
      if (word & 0x8000) mantissa -= 2048;
      Integer scale = 1;
      scale <<= (word >> 11) & 0x0F;
      return Rational(Integer(mantissa) * scale, Integer(100));
    }
    Value operator()(wire::Float32 f) const { return rational_from_double(f.value); }
  };
  return std::visit(Visitor{}, v);
}

}  // namespace knxsafe
