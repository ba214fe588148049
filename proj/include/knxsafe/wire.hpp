#pragma once

// KNX wire formats: individual and group addresses, datapoint values and
// the telegram frame shared by the compiler, the runtime and the simulator.

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "knxsafe/error.hpp"

namespace knxsafe::wire {

namespace detail {

inline std::optional<unsigned> parse_uint(std::string_view s) {
  unsigned value = 0;
  if (s.empty()) return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline void check_field(std::string_view field, unsigned value, unsigned max) {
  if (value > max) {
    throw Error(ErrorKind::Range, std::string(field) + " = " + std::to_string(value) +
                                      " exceeds maximum " + std::to_string(max));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Individual addresses: AAAA.LLLL.DDDDDDDD

class IndividualAddress {
 public:
  constexpr IndividualAddress() = default;

  IndividualAddress(unsigned area, unsigned line, unsigned device) {
    detail::check_field("area", area, 15);
    detail::check_field("line", line, 15);
    detail::check_field("device", device, 255);
    raw_ = static_cast<std::uint16_t>((area << 12) | (line << 8) | device);
  }

  static constexpr IndividualAddress from_raw(std::uint16_t raw) {
    IndividualAddress a;
    a.raw_ = raw;
    return a;
  }

  /// Parses "A.L.D".
  static IndividualAddress parse(std::string_view text) {
    auto parts = detail::split(text, '.');
    if (parts.size() != 3) {
      throw Error(ErrorKind::Range, "individual address '" + std::string(text) + "' is not of the form A.L.D");
    }
    auto area = detail::parse_uint(parts[0]);
    auto line = detail::parse_uint(parts[1]);
    auto device = detail::parse_uint(parts[2]);
    if (!area || !line || !device) {
      throw Error(ErrorKind::Range, "individual address '" + std::string(text) + "' has a non-numeric field");
    }
    return IndividualAddress(*area, *line, *device);
  }

  constexpr unsigned area() const { return raw_ >> 12; }
  constexpr unsigned line() const { return (raw_ >> 8) & 0x0F; }
  constexpr unsigned device() const { return raw_ & 0xFF; }
  constexpr std::uint16_t raw() const { return raw_; }

  std::string to_string() const {
    return std::to_string(area()) + "." + std::to_string(line()) + "." + std::to_string(device());
  }

  constexpr auto operator<=>(const IndividualAddress&) const = default;

 private:
  std::uint16_t raw_ = 0;
};

inline std::uint16_t encode_individual(const IndividualAddress& addr) { return addr.raw(); }
inline IndividualAddress decode_individual(std::uint16_t word) { return IndividualAddress::from_raw(word); }

// ---------------------------------------------------------------------------
// Group addresses. The raw 16-bit word is canonical; the style only affects
// how components are presented. Equality and ordering use the raw word.

enum class GroupStyle { ThreeLevel, TwoLevel, Free };

class GroupAddress {
 public:
  constexpr GroupAddress() = default;

  static GroupAddress three_level(unsigned main, unsigned middle, unsigned sub) {
    detail::check_field("main group", main, 31);
    detail::check_field("middle group", middle, 7);
    detail::check_field("sub group", sub, 255);
    return GroupAddress(static_cast<std::uint16_t>((main << 11) | (middle << 8) | sub), GroupStyle::ThreeLevel);
  }

  static GroupAddress two_level(unsigned main, unsigned sub) {
    detail::check_field("main group", main, 31);
    detail::check_field("sub group", sub, 2047);
    return GroupAddress(static_cast<std::uint16_t>((main << 11) | sub), GroupStyle::TwoLevel);
  }

  static constexpr GroupAddress from_raw(std::uint16_t raw, GroupStyle style = GroupStyle::Free) {
    return GroupAddress(raw, style);
  }

  /// Accepts "M/I/S", "M/S" or a bare 16-bit integer (free style).
  static GroupAddress parse(std::string_view text) {
    auto parts = detail::split(text, '/');
    std::vector<unsigned> fields;
    for (auto p : parts) {
      auto v = detail::parse_uint(p);
      if (!v) throw Error(ErrorKind::Range, "group address '" + std::string(text) + "' has a non-numeric field");
      fields.push_back(*v);
    }
    switch (fields.size()) {
      case 3: return three_level(fields[0], fields[1], fields[2]);
      case 2: return two_level(fields[0], fields[1]);
      case 1:
        detail::check_field("group address", fields[0], 0xFFFF);
        return from_raw(static_cast<std::uint16_t>(fields[0]));
      default:
        throw Error(ErrorKind::Range, "group address '" + std::string(text) + "' has too many levels");
    }
  }

  constexpr std::uint16_t raw() const { return raw_; }
  constexpr GroupStyle style() const { return style_; }

  constexpr unsigned main() const { return raw_ >> 11; }
  constexpr unsigned middle() const { return (raw_ >> 8) & 0x07; }
  constexpr unsigned sub() const { return style_ == GroupStyle::TwoLevel ? (raw_ & 0x07FF) : (raw_ & 0xFF); }

  std::string to_string() const {
    switch (style_) {
      case GroupStyle::ThreeLevel:
        return std::to_string(main()) + "/" + std::to_string(middle()) + "/" + std::to_string(sub());
      case GroupStyle::TwoLevel:
        return std::to_string(main()) + "/" + std::to_string(sub());
      case GroupStyle::Free:
        return std::to_string(raw_);
    }
    return {};
  }

  constexpr bool operator==(const GroupAddress& o) const { return raw_ == o.raw_; }
  constexpr std::strong_ordering operator<=>(const GroupAddress& o) const { return raw_ <=> o.raw_; }

 private:
  constexpr GroupAddress(std::uint16_t raw, GroupStyle style) : raw_(raw), style_(style) {}

  std::uint16_t raw_ = 0;
  GroupStyle style_ = GroupStyle::ThreeLevel;
};

inline std::uint16_t encode_group(const GroupAddress& addr) { return addr.raw(); }
inline GroupAddress decode_group(std::uint16_t word, GroupStyle style) { return GroupAddress::from_raw(word, style); }

// ---------------------------------------------------------------------------
// Datapoint types

struct DptId {
  int main = 0;
  std::optional<int> sub;

  /// Compatibility compares the main number only.
  bool compatible_with(const DptId& o) const { return main == o.main; }

  std::string to_string() const {
    std::string s = "DPT-" + std::to_string(main);
    if (sub) s += "-" + std::to_string(*sub);
    return s;
  }

  /// Accepts "DPT-X" or "DPT-X-Y".
  static DptId parse(std::string_view text) {
    constexpr std::string_view prefix = "DPT-";
    if (text.substr(0, prefix.size()) != prefix) {
      throw Error(ErrorKind::Decode, "datatype '" + std::string(text) + "' does not start with DPT-");
    }
    auto parts = detail::split(text.substr(prefix.size()), '-');
    if (parts.empty() || parts.size() > 2) throw Error(ErrorKind::Decode, "malformed datatype '" + std::string(text) + "'");
    auto main = detail::parse_uint(parts[0]);
    if (!main || *main == 0) throw Error(ErrorKind::Decode, "malformed datatype '" + std::string(text) + "'");
    DptId id{static_cast<int>(*main), std::nullopt};
    if (parts.size() == 2) {
      auto sub = detail::parse_uint(parts[1]);
      if (!sub) throw Error(ErrorKind::Decode, "malformed datatype '" + std::string(text) + "'");
      id.sub = static_cast<int>(*sub);
    }
    return id;
  }

  bool operator==(const DptId&) const = default;
};

struct Unsigned8 {
  std::uint8_t value = 0;
  bool operator==(const Unsigned8&) const = default;
};

struct Float16 {
  double value = 0.0;
  bool operator==(const Float16&) const = default;
};

struct Float32 {
  float value = 0.0F;
  bool operator==(const Float32&) const = default;
};

using DptValue = std::variant<bool, Unsigned8, Float16, Float32>;

inline int dpt_main_of(const DptValue& v) {
  switch (v.index()) {
    case 0: return 1;
    case 1: return 5;
    case 2: return 9;
    default: return 14;
  }
}

/// Largest and smallest values representable by the 2-octet float. The top
/// word 0x7FFF (670760.96) is reserved as invalid data.
inline constexpr double kFloat16Max = 670433.28;
inline constexpr double kFloat16Min = -671088.64;
/// Reserved "invalid data" word of the 2-octet float.
inline constexpr std::uint16_t kFloat16Invalid = 0x7FFF;

namespace detail {

inline std::uint16_t encode_float16(double x) {
  if (!std::isfinite(x) || x > kFloat16Max || x < kFloat16Min) {
    throw Error(ErrorKind::Encode, "value " + std::to_string(x) + " overflows the 2-octet float range");
  }
  for (int exponent = 0; exponent <= 15; ++exponent) {
    const double scaled = x * 100.0 / std::ldexp(1.0, exponent);
    const long mantissa = std::lround(scaled);
    if (mantissa < -2048 || mantissa > 2047) continue;
    const auto m12 = static_cast<std::uint16_t>(mantissa & 0x0FFF);
    const std::uint16_t sign = (m12 >> 11) & 1U;
    const auto word = static_cast<std::uint16_t>((sign << 15) | (exponent << 11) | (m12 & 0x07FF));
    if (word == kFloat16Invalid) break;
    return word;
  }
  throw Error(ErrorKind::Encode, "value " + std::to_string(x) + " overflows the 2-octet float range");
}

inline double decode_float16(std::uint16_t word) {
  if (word == kFloat16Invalid) throw Error(ErrorKind::Decode, "2-octet float carries the invalid-data pattern 0x7FFF");
  const int exponent = (word >> 11) & 0x0F;
  int mantissa = word & 0x07FF;
  if (word & 0x8000) mantissa -= 2048;
  return 0.01 * mantissa * std::ldexp(1.0, exponent);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_dpt(const DptValue& value) {
  struct Visitor {
    std::vector<std::uint8_t> operator()(bool b) const { return {static_cast<std::uint8_t>(b ? 1 : 0)}; }
    std::vector<std::uint8_t> operator()(Unsigned8 u) const { return {u.value}; }
    std::vector<std::uint8_t> operator()(Float16 f) const {
      auto w = detail::encode_float16(f.value);
      return {static_cast<std::uint8_t>(w >> 8), static_cast<std::uint8_t>(w & 0xFF)};
    }
    std::vector<std::uint8_t> operator()(Float32 f) const {
      auto bits = std::bit_cast<std::uint32_t>(f.value);
      return {static_cast<std::uint8_t>(bits >> 24), static_cast<std::uint8_t>(bits >> 16),
              static_cast<std::uint8_t>(bits >> 8), static_cast<std::uint8_t>(bits)};
    }
  };
  return std::visit(Visitor{}, value);
}

inline std::size_t dpt_size(const DptId& dpt) {
  switch (dpt.main) {
    case 1:
    case 5: return 1;
    case 9: return 2;
    case 14: return 4;
    default:
      throw Error(ErrorKind::Decode, "unsupported datatype " + dpt.to_string());
  }
}

inline DptValue decode_dpt(const DptId& dpt, std::span<const std::uint8_t> bytes) {
  const std::size_t expected = dpt_size(dpt);
  if (bytes.size() != expected) {
    throw Error(ErrorKind::Decode, dpt.to_string() + " expects " + std::to_string(expected) + " byte(s), got " +
                                       std::to_string(bytes.size()));
  }
  switch (dpt.main) {
    case 1: return (bytes[0] & 0x01) != 0;
    case 5: return Unsigned8{bytes[0]};
    case 9: return Float16{detail::decode_float16(static_cast<std::uint16_t>((bytes[0] << 8) | bytes[1]))};
    default: {
      const std::uint32_t bits = (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
                                 (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
      return Float32{std::bit_cast<float>(bits)};
    }
  }
}

// ---------------------------------------------------------------------------
// Telegrams
//
// [control][src hi][src lo][dst hi][dst lo][flags][payload...][checksum]
//   control: bits 7..6 priority, bit 5 repeated, others zero
//   flags:   bit 7 destination is a group address, bits 4..0 payload length
//   checksum: complement of the XOR of every preceding octet

inline constexpr std::size_t kMaxPayload = 16;
inline constexpr std::size_t kFrameOverhead = 7;

struct Control {
  std::uint8_t priority = 0;
  bool repeated = false;
  bool operator==(const Control&) const = default;
};

using Destination = std::variant<GroupAddress, IndividualAddress>;

struct Telegram {
  Control control;
  IndividualAddress source;
  Destination destination;
  std::vector<std::uint8_t> payload;

  bool operator==(const Telegram&) const = default;
};

inline std::uint8_t checksum(std::span<const std::uint8_t> octets) {
  std::uint8_t x = 0;
  for (auto b : octets) x ^= b;
  return static_cast<std::uint8_t>(~x);
}

inline std::vector<std::uint8_t> encode_telegram(const Telegram& t) {
  if (t.payload.size() > kMaxPayload) {
    throw Error(ErrorKind::Encode, "payload of " + std::to_string(t.payload.size()) + " bytes exceeds 16");
  }
  if (t.control.priority > 3) throw Error(ErrorKind::Range, "priority = " + std::to_string(t.control.priority) + " exceeds maximum 3");
  std::vector<std::uint8_t> out;
  out.reserve(kFrameOverhead + t.payload.size());
  out.push_back(static_cast<std::uint8_t>((t.control.priority << 6) | (t.control.repeated ? 0x20 : 0)));
  out.push_back(static_cast<std::uint8_t>(t.source.raw() >> 8));
  out.push_back(static_cast<std::uint8_t>(t.source.raw() & 0xFF));
  const bool group = std::holds_alternative<GroupAddress>(t.destination);
  const std::uint16_t dst = group ? std::get<GroupAddress>(t.destination).raw()
                                  : std::get<IndividualAddress>(t.destination).raw();
  out.push_back(static_cast<std::uint8_t>(dst >> 8));
  out.push_back(static_cast<std::uint8_t>(dst & 0xFF));
  out.push_back(static_cast<std::uint8_t>((group ? 0x80 : 0x00) | t.payload.size()));
  out.insert(out.end(), t.payload.begin(), t.payload.end());
  out.push_back(checksum(out));
  return out;
}

/// Group addresses decode as free style; equality is on the raw word, so a
/// decoded telegram compares equal to the one that was encoded.
inline Telegram decode_telegram(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameOverhead) {
    throw Error(ErrorKind::Framing, "frame of " + std::to_string(bytes.size()) + " bytes is shorter than the 7-byte minimum");
  }
  if (checksum(bytes.first(bytes.size() - 1)) != bytes.back()) {
    throw Error(ErrorKind::Integrity, "checksum mismatch");
  }
  const std::uint8_t control = bytes[0];
  const std::uint8_t flags = bytes[5];
  if ((control & 0x1F) != 0 || (flags & 0x60) != 0) {
    throw Error(ErrorKind::Framing, "reserved bits set");
  }
  const std::size_t length = flags & 0x1F;
  if (length > kMaxPayload) throw Error(ErrorKind::Framing, "payload length " + std::to_string(length) + " exceeds 16");
  if (bytes.size() != kFrameOverhead + length) {
    throw Error(ErrorKind::Framing, "frame length does not match payload length " + std::to_string(length));
  }
  Telegram t;
  t.control.priority = static_cast<std::uint8_t>(control >> 6);
  t.control.repeated = (control & 0x20) != 0;
  t.source = IndividualAddress::from_raw(static_cast<std::uint16_t>((bytes[1] << 8) | bytes[2]));
  const auto dst = static_cast<std::uint16_t>((bytes[3] << 8) | bytes[4]);
  if (flags & 0x80) {
    t.destination = GroupAddress::from_raw(dst);
  } else {
    t.destination = IndividualAddress::from_raw(dst);
  }
  t.payload.assign(bytes.begin() + 6, bytes.begin() + 6 + static_cast<std::ptrdiff_t>(length));
  return t;
}

// ---------------------------------------------------------------------------
// Group services carried in the first payload octet.

enum class Service : std::uint8_t { Read = 0x00, Response = 0x40, Write = 0x80 };

struct GroupMessage {
  Service service;
  GroupAddress address;
  std::vector<std::uint8_t> data;
};

inline Telegram make_group_telegram(IndividualAddress source, GroupAddress address, Service service,
                                    std::span<const std::uint8_t> data = {}) {
  if (data.size() + 1 > kMaxPayload) throw Error(ErrorKind::Encode, "group data exceeds 15 bytes");
  Telegram t;
  t.source = source;
  t.destination = address;
  t.payload.push_back(static_cast<std::uint8_t>(service));
  t.payload.insert(t.payload.end(), data.begin(), data.end());
  return t;
}

/// Interprets a telegram as a group service; nullopt for individually
/// addressed or unrecognised frames.
inline std::optional<GroupMessage> as_group_message(const Telegram& t) {
  const auto* ga = std::get_if<GroupAddress>(&t.destination);
  if (ga == nullptr || t.payload.empty()) return std::nullopt;
  const auto code = t.payload[0];
  if (code != 0x00 && code != 0x40 && code != 0x80) return std::nullopt;
  return GroupMessage{static_cast<Service>(code), *ga, {t.payload.begin() + 1, t.payload.end()}};
}

}  // namespace knxsafe::wire
