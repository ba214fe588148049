#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "knxsafe/wire.hpp"

using namespace knxsafe;
using namespace knxsafe::wire;

namespace {

// Independent arithmetic oracles for the packed layouts.
std::uint32_t individual_oracle(unsigned a, unsigned l, unsigned d) { return a * 4096 + l * 256 + d; }
std::uint32_t three_level_oracle(unsigned m, unsigned i, unsigned s) { return m * 2048 + i * 256 + s; }

std::uint8_t xor_checksum_oracle(std::initializer_list<std::uint8_t> bytes) {
  unsigned x = 0;
  for (auto b : bytes) x = x ^ b;
  return static_cast<std::uint8_t>(0xFF - x);
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::Io;
}

}  // namespace

TEST(IndividualAddress, EncodesExamples) {
  EXPECT_EQ(encode_individual(IndividualAddress(0, 0, 0)), 0x0000);
  EXPECT_EQ(individual_oracle(1, 1, 10), 0x110Au);
  EXPECT_EQ(encode_individual(IndividualAddress(1, 1, 10)), 0x110A);
  EXPECT_EQ(individual_oracle(15, 15, 255), 0xFFFFu);
  EXPECT_EQ(encode_individual(IndividualAddress(15, 15, 255)), 0xFFFF);
}

TEST(IndividualAddress, RangeErrorNamesField) {
  try {
    IndividualAddress(16, 0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Range);
    EXPECT_NE(std::string(e.what()).find("area"), std::string::npos);
  }
  try {
    IndividualAddress(0, 0, 256);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("device"), std::string::npos);
  }
  EXPECT_EQ(kind_of([] { IndividualAddress::parse("1.16.3"); }), ErrorKind::Range);
}

TEST(IndividualAddress, ExhaustiveRoundTrip) {
  for (unsigned w = 0; w <= 0xFFFF; ++w) {
    auto a = decode_individual(static_cast<std::uint16_t>(w));
    ASSERT_EQ(individual_oracle(a.area(), a.line(), a.device()), w);
    ASSERT_EQ(IndividualAddress(a.area(), a.line(), a.device()), a);
    ASSERT_EQ(IndividualAddress::parse(a.to_string()), a);
  }
}

TEST(GroupAddress, EncodesExamples) {
  EXPECT_EQ(encode_group(GroupAddress::three_level(0, 0, 1)), 0x0001);
  EXPECT_EQ(three_level_oracle(1, 2, 3), 0x0A03u);
  EXPECT_EQ(encode_group(GroupAddress::three_level(1, 2, 3)), 0x0A03);
  EXPECT_EQ(encode_group(GroupAddress::three_level(31, 7, 255)), 0xFFFF);
  EXPECT_EQ(encode_group(GroupAddress::two_level(31, 2047)), 0xFFFF);
  EXPECT_EQ(kind_of([] { GroupAddress::three_level(0, 8, 0); }), ErrorKind::Range);
  EXPECT_EQ(kind_of([] { GroupAddress::two_level(32, 0); }), ErrorKind::Range);
}

TEST(GroupAddress, ExhaustiveRoundTripAllStyles) {
  std::set<std::uint16_t> three_level_words;
  for (unsigned m = 0; m < 32; ++m) {
    for (unsigned i = 0; i < 8; ++i) {
      for (unsigned s = 0; s < 256; ++s) {
        auto ga = GroupAddress::three_level(m, i, s);
        ASSERT_EQ(ga.raw(), three_level_oracle(m, i, s));
        three_level_words.insert(ga.raw());
      }
    }
  }
  EXPECT_EQ(three_level_words.size(), 65536u);
  for (unsigned w = 0; w <= 0xFFFF; ++w) {
    const auto word = static_cast<std::uint16_t>(w);
    auto three = decode_group(word, GroupStyle::ThreeLevel);
    ASSERT_EQ(encode_group(GroupAddress::three_level(three.main(), three.middle(), three.sub())), word);
    auto two = decode_group(word, GroupStyle::TwoLevel);
    ASSERT_EQ(encode_group(GroupAddress::two_level(two.main(), two.sub())), word);
    ASSERT_EQ(GroupAddress::parse(three.to_string()).raw(), word);
    ASSERT_EQ(GroupAddress::parse(two.to_string()).raw(), word);
    ASSERT_EQ(GroupAddress::parse(GroupAddress::from_raw(word).to_string()).raw(), word);
  }
}

TEST(Dpt, BooleanAndZero) {
  EXPECT_EQ(encode_dpt(true), (std::vector<std::uint8_t>{0x01}));
  EXPECT_EQ(encode_dpt(false), (std::vector<std::uint8_t>{0x00}));
  EXPECT_EQ(encode_dpt(Float16{0.0}), (std::vector<std::uint8_t>{0x00, 0x00}));
}

TEST(Dpt, Float16DecodeExample) {
  // sign 0, exponent 1, mantissa 1024: 0.01 * 1024 * 2 = 20.48
  const std::vector<std::uint8_t> bytes{0x0C, 0x00};
  auto v = std::get<Float16>(decode_dpt(DptId{9, {}}, bytes));
  EXPECT_DOUBLE_EQ(v.value, 20.48);
  EXPECT_EQ(encode_dpt(Float16{20.48}), bytes);
}

TEST(Dpt, Float16Extremes) {
  EXPECT_EQ(encode_dpt(Float16{670433.28}), (std::vector<std::uint8_t>{0x7F, 0xFE}));
  EXPECT_EQ(encode_dpt(Float16{-671088.64}), (std::vector<std::uint8_t>{0xF8, 0x00}));
  EXPECT_EQ(kind_of([] { encode_dpt(Float16{670760.96}); }), ErrorKind::Encode);
  EXPECT_EQ(kind_of([] { encode_dpt(Float16{-700000.0}); }), ErrorKind::Encode);
  EXPECT_EQ(kind_of([] { encode_dpt(Float16{std::nan("")}); }), ErrorKind::Encode);
  const std::vector<std::uint8_t> invalid{0x7F, 0xFF};
  EXPECT_EQ(kind_of([&] { decode_dpt(DptId{9, {}}, invalid); }), ErrorKind::Decode);
}

TEST(Dpt, Float16RoundTripErrorBound) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(kFloat16Min, kFloat16Max);
  std::uniform_real_distribution<double> small(-50.0, 50.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = (i % 2) ? dist(rng) : small(rng);
    const auto bytes = encode_dpt(Float16{x});
    const int exponent = (bytes[0] >> 3) & 0x0F;
    const double back = std::get<Float16>(decode_dpt(DptId{9, {}}, bytes)).value;
    ASSERT_LE(std::abs(back - x), 0.005 * std::ldexp(1.0, exponent) * (1 + 1e-12)) << x;
  }
}

TEST(Dpt, Float16AllWords) {
  for (unsigned w = 0; w <= 0xFFFF; ++w) {
    if (w == kFloat16Invalid) continue;
    const std::vector<std::uint8_t> bytes{static_cast<std::uint8_t>(w >> 8), static_cast<std::uint8_t>(w)};
    const double value = std::get<Float16>(decode_dpt(DptId{9, {}}, bytes)).value;
    const auto re = encode_dpt(Float16{value});
    // Value-level idempotence holds for every word.
    ASSERT_EQ(std::get<Float16>(decode_dpt(DptId{9, {}}, re)).value, value) << w;
    // Word identity holds for canonical words: mantissa not representable
    // with a smaller exponent.
    const int exponent = (w >> 11) & 0x0F;
    int mantissa = static_cast<int>(w & 0x07FF);
    if (w & 0x8000) mantissa -= 2048;
    const bool canonical = exponent == 0 || mantissa * 2 < -2048 || mantissa * 2 > 2047;
    if (canonical) {
      ASSERT_EQ(re, bytes) << w;
    }
  }
}

TEST(Dpt, ExactRoundTrips) {
  for (unsigned u = 0; u < 256; ++u) {
    DptValue v = Unsigned8{static_cast<std::uint8_t>(u)};
    EXPECT_EQ(decode_dpt(DptId{5, 1}, encode_dpt(v)), v);
  }
  for (float f : {0.0F, -1.5F, 3.14159F, 1e30F, -1e-30F}) {
    DptValue v = Float32{f};
    EXPECT_EQ(decode_dpt(DptId{14, {}}, encode_dpt(v)), v);
  }
  for (bool b : {true, false}) EXPECT_EQ(decode_dpt(DptId{1, 1}, encode_dpt(b)), DptValue{b});
}

TEST(Dpt, LengthMismatchAndUnknownFamily) {
  const std::vector<std::uint8_t> two{0, 0};
  EXPECT_EQ(kind_of([&] { decode_dpt(DptId{1, {}}, two); }), ErrorKind::Decode);
  EXPECT_EQ(kind_of([&] { decode_dpt(DptId{14, {}}, two); }), ErrorKind::Decode);
  EXPECT_EQ(kind_of([&] { decode_dpt(DptId{7, {}}, two); }), ErrorKind::Decode);
}

TEST(Dpt, IdParsingAndCompatibility) {
  auto a = DptId::parse("DPT-9");
  auto b = DptId::parse("DPT-9-1");
  EXPECT_EQ(a.main, 9);
  EXPECT_FALSE(a.sub.has_value());
  EXPECT_EQ(*b.sub, 1);
  EXPECT_TRUE(a.compatible_with(b));
  EXPECT_FALSE(a.compatible_with(DptId{1, {}}));
  EXPECT_EQ(b.to_string(), "DPT-9-1");
  EXPECT_EQ(kind_of([] { DptId::parse("9.001"); }), ErrorKind::Decode);
}

TEST(Telegram, ChecksumExample) {
  const std::vector<std::uint8_t> prefix{0xBC, 0x11, 0x0A};
  EXPECT_EQ(xor_checksum_oracle({0xBC, 0x11, 0x0A}), 0x58);
  EXPECT_EQ(checksum(prefix), 0x58);
}

TEST(Telegram, EmptyPayloadRoundTrip) {
  Telegram t;
  t.source = IndividualAddress(1, 1, 10);
  t.destination = GroupAddress::three_level(0, 0, 1);
  auto bytes = encode_telegram(t);
  EXPECT_EQ(bytes.size(), kFrameOverhead);
  EXPECT_EQ(decode_telegram(bytes), t);
}

TEST(Telegram, LayoutMatchesFieldOrder) {
  Telegram t;
  t.control = {3, true};
  t.source = IndividualAddress(1, 1, 10);
  t.destination = GroupAddress::three_level(1, 2, 3);
  t.payload = {0x80, 0x01};
  auto bytes = encode_telegram(t);
  const std::vector<std::uint8_t> prefix{0xE0, 0x11, 0x0A, 0x0A, 0x03, 0x82, 0x80, 0x01};
  ASSERT_EQ(bytes.size(), prefix.size() + 1);
  EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), bytes.begin()));
  EXPECT_EQ(bytes.back(), checksum(prefix));
}

TEST(Telegram, RandomRoundTrip) {
  std::mt19937 rng(11);
  for (int i = 0; i < 5000; ++i) {
    Telegram t;
    t.control.priority = static_cast<std::uint8_t>(rng() % 4);
    t.control.repeated = rng() % 2;
    t.source = IndividualAddress::from_raw(static_cast<std::uint16_t>(rng()));
    if (rng() % 2) {
      t.destination = GroupAddress::from_raw(static_cast<std::uint16_t>(rng()));
    } else {
      t.destination = IndividualAddress::from_raw(static_cast<std::uint16_t>(rng()));
    }
    t.payload.resize(rng() % (kMaxPayload + 1));
    for (auto& b : t.payload) b = static_cast<std::uint8_t>(rng());
    auto bytes = encode_telegram(t);
    ASSERT_EQ(decode_telegram(bytes), t);
    // Any single-byte corruption is detected.
    auto corrupted = bytes;
    const auto pos = rng() % corrupted.size();
    corrupted[pos] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    ASSERT_EQ(kind_of([&] { decode_telegram(corrupted); }), ErrorKind::Integrity);
  }
}

TEST(Telegram, EverySingleBitFlipIsAnIntegrityError) {
  auto t = make_group_telegram(IndividualAddress(1, 1, 10), GroupAddress::three_level(0, 0, 1), Service::Write,
                               encode_dpt(Float16{21.5}));
  const auto bytes = encode_telegram(t);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      auto flipped = bytes;
      flipped[i] ^= static_cast<std::uint8_t>(1U << bit);
      ASSERT_EQ(kind_of([&] { decode_telegram(flipped); }), ErrorKind::Integrity) << i << ":" << bit;
    }
  }
}

TEST(Telegram, FramingErrors) {
  const std::vector<std::uint8_t> short_frame{0, 0, 0};
  EXPECT_EQ(kind_of([&] { decode_telegram(short_frame); }), ErrorKind::Framing);
  Telegram t;
  t.destination = GroupAddress::from_raw(1);
  t.payload = {1, 2, 3};
  auto bytes = encode_telegram(t);
  bytes.pop_back();
  bytes.pop_back();
  bytes.push_back(checksum(bytes));
  EXPECT_EQ(kind_of([&] { decode_telegram(bytes); }), ErrorKind::Framing);
  t.payload.assign(17, 0);
  EXPECT_EQ(kind_of([&] { encode_telegram(t); }), ErrorKind::Encode);
}

TEST(Telegram, GroupServiceView) {
  auto t = make_group_telegram(IndividualAddress(1, 1, 1), GroupAddress::three_level(0, 0, 2), Service::Write,
                               encode_dpt(true));
  auto msg = as_group_message(decode_telegram(encode_telegram(t)));
  ASSERT_TRUE(msg.has_value());
  EXPECT_EQ(msg->service, Service::Write);
  EXPECT_EQ(msg->address, GroupAddress::three_level(0, 0, 2));
  EXPECT_EQ(msg->data, (std::vector<std::uint8_t>{0x01}));
}
