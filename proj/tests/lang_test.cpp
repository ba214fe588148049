#include <gtest/gtest.h>

#include <random>

#include "app_util.hpp"
#include "knxsafe/lang/interp.hpp"
#include "knxsafe/lang/parser.hpp"
#include "knxsafe/lang/typecheck.hpp"

using namespace knxsafe;
using namespace knxsafe::lang;
using knxsafe::testing::error_kind;
using knxsafe::testing::load_fixture_app;
using knxsafe::testing::load_source;

namespace {

AppPrototype switch_proto() {
  AppPrototype p;
  p.name = "t";
  p.devices = {{"BINARY_SENSOR", DeviceKind::Binary}, {"SWITCH", DeviceKind::Switch}, {"T", DeviceKind::Temperature}};
  return p;
}

ErrorKind check_kind(const std::string& src) {
  return error_kind([&] { typecheck(parse_program(src), switch_proto()); });
}

const wire::GroupAddress kSensor = wire::GroupAddress::three_level(1, 1, 1);
const wire::GroupAddress kSwitch = wire::GroupAddress::three_level(1, 1, 2);

}  // namespace

TEST(Parse, PaperExampleHasOneIfElse) {
  auto app = load_fixture_app("example");
  const auto& it = app.tp.program.iteration;
  ASSERT_EQ(it.size(), 1u);
  EXPECT_EQ(it[0].kind, Stmt::Kind::If);
  EXPECT_EQ(it[0].branches.size(), 1u);
  ASSERT_TRUE(it[0].else_body.has_value());
  EXPECT_EQ(it[0].branches[0].body[0].kind, Stmt::Kind::DeviceCall);
  EXPECT_EQ((*it[0].else_body)[0].method, "off");
}

TEST(Parse, TrivialProgram) {
  auto p = parse_program("invariant: true  iteration: {}");
  EXPECT_TRUE(p.unchecked.empty());
  EXPECT_TRUE(p.iteration.empty());
  EXPECT_EQ(p.invariant->kind, Expr::Kind::BoolLit);
  EXPECT_TRUE(p.invariant->bool_value);
}

TEST(Parse, LoopsAreRejected) {
  EXPECT_EQ(error_kind([] { parse_program("invariant: true iteration: { while true { } }"); }),
            ErrorKind::UnsupportedConstruct);
  EXPECT_EQ(error_kind([] { parse_program("invariant: true iteration: { for x in y { } }"); }),
            ErrorKind::UnsupportedConstruct);
  // Even inside a comment-free expression position.
  EXPECT_EQ(error_kind([] { parse_program("invariant: while iteration: {}"); }), ErrorKind::UnsupportedConstruct);
  // Comments are skipped.
  EXPECT_NO_THROW(parse_program("# while\ninvariant: true iteration: {}"));
}

TEST(Parse, SyntaxErrorsCarryPosition) {
  try {
    parse_program("invariant: true\niteration: {\n  app_state.INT_0 = \n}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Syntax);
    EXPECT_NE(std::string(e.what()).find("4:1"), std::string::npos) << e.what();
  }
  EXPECT_EQ(error_kind([] { parse_program("invariant: 1 < 2 < 3 iteration: {}"); }), ErrorKind::Syntax);
  EXPECT_EQ(error_kind([] { parse_program("def f() -> int; invariant: true iteration: {}"); }), ErrorKind::Syntax);
  EXPECT_EQ(error_kind([] { parse_program("def unchecked_f(); invariant: true iteration: {}"); }),
            ErrorKind::Syntax);
  EXPECT_EQ(error_kind([] { parse_program("invariant: true iteration: {} extra"); }), ErrorKind::Syntax);
  EXPECT_EQ(error_kind([] { parse_program("invariant: \"open iteration: {}"); }), ErrorKind::Syntax);
}

TEST(Parse, Precedence) {
  auto e = parse_expression("not a.is_on() or b.is_on() and 1 + 2 * 3 > 4");
  EXPECT_EQ(render(*e), "((not a.is_on()) or (b.is_on() and ((1 + (2 * 3)) > 4)))");
  EXPECT_EQ(render(*parse_expression("-1 - -2.5")), "((-1) - (-2.5))");
}

TEST(Parse, CompoundAssignmentDesugars) {
  auto p = parse_program("invariant: true iteration: { app_state.INT_0 += 1; app_state.FLOAT_1 -= 0.5 }");
  ASSERT_EQ(p.iteration.size(), 2u);
  EXPECT_EQ(render(*p.iteration[0].value), "(app_state.INT_0 + 1)");
  EXPECT_EQ(render(*p.iteration[1].value), "(app_state.FLOAT_1 - 0.5)");
}

TEST(Parse, PostconditionsAndRenderRoundTrip) {
  const char* src = R"(
def unchecked_get(a: int, s: str) -> int { post: __return__ > 0; post: __return__ < 10 }
def unchecked_log(s: str) -> None;
invariant: app_state.INT_0 >= 0 and T.read() != 2.5
iteration: {
  if app_state.STR_0 == "x" { app_state.INT_0 = unchecked_get(3, "y") }
  elif SWITCH.is_on() { SWITCH.off() }
  else { unchecked_log("z") }
}
)";
  auto p = parse_program(src);
  ASSERT_EQ(p.unchecked.size(), 2u);
  EXPECT_EQ(p.unchecked[0].postconditions.size(), 2u);
  EXPECT_FALSE(p.unchecked[1].return_type.has_value());
  const auto text = render(p);
  EXPECT_EQ(render(parse_program(text)), text);
  EXPECT_NO_THROW(typecheck(p, switch_proto()));
}

TEST(Typecheck, InvariantSideEffect) {
  EXPECT_EQ(check_kind("invariant: SWITCH.on() iteration: {}"), ErrorKind::SideEffect);
  EXPECT_EQ(check_kind("invariant: SWITCH.off() == true iteration: {}"), ErrorKind::SideEffect);
}

TEST(Typecheck, InvariantPurity) {
  EXPECT_EQ(check_kind("def unchecked_get() -> bool; invariant: unchecked_get() iteration: {}"), ErrorKind::Purity);
  EXPECT_EQ(check_kind("def unchecked_get() -> int { post: __return__ > unchecked_get() } invariant: true iteration: {}"),
            ErrorKind::Purity);
  EXPECT_EQ(check_kind("def unchecked_get() -> int { post: __return__ > app_state.INT_0 } invariant: true iteration: {}"),
            ErrorKind::Purity);
}

TEST(Typecheck, Resolution) {
  EXPECT_EQ(check_kind("invariant: LAMP.is_on() iteration: {}"), ErrorKind::Resolution);
  EXPECT_EQ(check_kind("invariant: BINARY_SENSOR.read() > 1 iteration: {}"), ErrorKind::Resolution);
  EXPECT_EQ(check_kind("invariant: app_state.INT_4 > 1 iteration: {}"), ErrorKind::Resolution);
  EXPECT_EQ(check_kind("invariant: true iteration: { BINARY_SENSOR.on() }"), ErrorKind::Resolution);
  EXPECT_EQ(check_kind("invariant: true iteration: { unchecked_nope() }"), ErrorKind::Resolution);
  EXPECT_EQ(check_kind("device SWITCH: binary; invariant: true iteration: {}"), ErrorKind::Resolution);
  EXPECT_EQ(check_kind("device OTHER: binary; invariant: true iteration: {}"), ErrorKind::Resolution);
  EXPECT_EQ(check_kind("invariant: __return__ iteration: {}"), ErrorKind::Resolution);
}

TEST(Typecheck, Linearity) {
  EXPECT_EQ(check_kind("invariant: app_state.INT_0 * app_state.INT_1 > 0 iteration: {}"), ErrorKind::Linearity);
  EXPECT_EQ(check_kind("invariant: T.read() * T.read() > 0 iteration: {}"), ErrorKind::Linearity);
  EXPECT_EQ(check_kind("invariant: (2 + 1) * app_state.INT_0 > 0 iteration: {}"), ErrorKind(-1));
  EXPECT_EQ(check_kind("invariant: T.read() * -0.5 > 0 iteration: {}"), ErrorKind(-1));
}

TEST(Typecheck, Types) {
  EXPECT_EQ(check_kind("invariant: 1 iteration: {}"), ErrorKind::Type);
  EXPECT_EQ(check_kind("invariant: app_state.STR_0 == app_state.STR_1 iteration: {}"), ErrorKind::Type);
  EXPECT_EQ(check_kind("invariant: app_state.STR_0 < \"a\" iteration: {}"), ErrorKind::Type);
  EXPECT_EQ(check_kind("invariant: app_state.BOOL_0 == 1 iteration: {}"), ErrorKind::Type);
  EXPECT_EQ(check_kind("invariant: true iteration: { app_state.INT_0 = 0.5 }"), ErrorKind::Type);
  EXPECT_EQ(check_kind("invariant: true iteration: { app_state.INT_0 = T.read() }"), ErrorKind::Type);
  EXPECT_EQ(check_kind("invariant: true iteration: { app_state.FLOAT_0 = app_state.INT_0 + 1 }"), ErrorKind(-1));
  EXPECT_EQ(check_kind("def unchecked_f() -> None; invariant: true iteration: { app_state.INT_0 = unchecked_f() }"),
            ErrorKind::Type);
  EXPECT_EQ(check_kind("def unchecked_f(x: int) -> None; invariant: true iteration: { unchecked_f(\"a\") }"),
            ErrorKind::Type);
  EXPECT_EQ(check_kind("def unchecked_f(x: int) -> None; invariant: true iteration: { unchecked_f() }"),
            ErrorKind::Type);
  EXPECT_EQ(check_kind("def unchecked_f() -> int { post: __return__ } invariant: true iteration: {}"),
            ErrorKind::Type);
  EXPECT_EQ(check_kind("invariant: true iteration: { if SWITCH.on() { } }"), ErrorKind::Type);
  EXPECT_EQ(check_kind("invariant: app_state.STR_0 == \"on\" iteration: {}"), ErrorKind(-1));
}

TEST(Typecheck, CallSitesNumberedInOrder) {
  auto src = R"(
def unchecked_a(x: int) -> int;
def unchecked_b() -> int;
invariant: true
iteration: {
  if unchecked_b() > 0 { app_state.INT_0 = unchecked_a(unchecked_b()) }
  unchecked_b()
}
)";
  auto tp = typecheck(parse_program(src), switch_proto());
  EXPECT_EQ(tp.call_sites, 4);
  const auto& s = tp.program.iteration[0];
  EXPECT_EQ(s.branches[0].condition->args[0]->call_site, 0);
  EXPECT_EQ(s.branches[0].body[0].value->call_site, 1);
  EXPECT_EQ(s.branches[0].body[0].value->args[0]->call_site, 2);
  EXPECT_EQ(tp.program.iteration[1].call->call_site, 3);
}

TEST(Typecheck, FixturesTypecheck) {
  for (auto name : {"example", "door_lock", "plants", "ventilation"}) {
    EXPECT_NO_THROW(load_fixture_app(name)) << name;
  }
}

// ---------------------------------------------------------------------------
// Interpreter

namespace {

struct Recorder {
  std::vector<UncheckedCall> calls;
  UncheckedImpls impls() {
    return {{"unchecked_send_message", [this](const UncheckedCall& c) -> std::optional<Value> {
               calls.push_back(c);
               return std::nullopt;
             }}};
  }
};

}  // namespace

TEST(Interpret, DoorLockCounts) {
  auto app = load_fixture_app("door_lock");
  const auto presence = app.addrs.at({"PRESENCE_DETECTOR", "state"});
  const auto lock = app.addrs.at({"DOOR_LOCK_SENSOR", "state"});
  Recorder rec;
  PhysicalStateStore store{{presence, false}, {lock, false}};

  auto r = interpret_iteration(app.tp, app.addrs, AppState{}, store, rec.impls());
  EXPECT_EQ(r.app.ints[0], 1);
  EXPECT_TRUE(r.calls.empty());
  EXPECT_EQ(r.store, store);
  EXPECT_TRUE(r.written.empty());

  AppState counting;
  counting.ints[0] = 4;
  auto present = store;
  present[presence] = true;
  r = interpret_iteration(app.tp, app.addrs, counting, present, rec.impls());
  EXPECT_EQ(r.app.ints[0], 0);

  AppState six;
  six.ints[0] = 6;
  r = interpret_iteration(app.tp, app.addrs, six, store, rec.impls());
  EXPECT_EQ(r.app.ints[0], 6);
  ASSERT_EQ(r.calls.size(), 1u);
  EXPECT_EQ(r.calls[0].name, "unchecked_send_message");
  EXPECT_EQ(r.calls[0].call_site, 0);
  ASSERT_EQ(rec.calls.size(), 1u);
  EXPECT_EQ(std::get<std::string>(rec.calls[0].args[0]),
            "The door at office INN319 is still opened but nobody is there!");
}

TEST(Interpret, DoorLockConsecutiveEvents) {
  // INT_0 counts 1..6 on the first six events; the check INT_0 > 5 first holds
  // on the seventh.
  auto app = load_fixture_app("door_lock");
  Recorder rec;
  PhysicalStateStore store;
  AppState state;
  std::vector<std::size_t> after;
  for (int i = 0; i < 7; ++i) {
    state = interpret_iteration(app.tp, app.addrs, state, store, rec.impls()).app;
    after.push_back(rec.calls.size());
  }
  EXPECT_EQ(after[5], 0u);
  EXPECT_EQ(after[6], 1u);
}

TEST(Interpret, SwitchWrites) {
  auto app = load_fixture_app("example");
  PhysicalStateStore store{{kSensor, true}, {kSwitch, false}};
  auto r = interpret_iteration(app.tp, app.addrs, AppState{}, store, {});
  EXPECT_EQ(std::get<bool>(r.store.at(kSwitch)), true);
  EXPECT_EQ(r.written, std::set<wire::GroupAddress>{kSwitch});
  // The input copy is untouched.
  EXPECT_EQ(std::get<bool>(store.at(kSwitch)), false);

  AppState s42;
  s42.ints[0] = 42;
  r = interpret_iteration(app.tp, app.addrs, s42, {{kSensor, false}}, {});
  EXPECT_EQ(std::get<bool>(r.store.at(kSwitch)), true);
  r = interpret_iteration(app.tp, app.addrs, AppState{}, {{kSensor, false}, {kSwitch, true}}, {});
  EXPECT_EQ(std::get<bool>(r.store.at(kSwitch)), false);
  EXPECT_EQ(r.written.size(), 1u);
}

TEST(Interpret, InvariantOfPaperExample) {
  auto app = load_fixture_app("example");
  EXPECT_TRUE(evaluate_invariant(app.tp, app.addrs, AppState{}, {{kSensor, true}, {kSwitch, true}}));
  EXPECT_FALSE(evaluate_invariant(app.tp, app.addrs, AppState{}, {{kSensor, false}, {kSwitch, true}}));
  EXPECT_TRUE(evaluate_invariant(app.tp, app.addrs, AppState{}, {{kSensor, false}, {kSwitch, false}}));
  EXPECT_FALSE(evaluate_invariant(app.tp, app.addrs, AppState{}, {{kSensor, true}, {kSwitch, false}}));
  AppState s42;
  s42.ints[0] = 42;
  EXPECT_TRUE(evaluate_invariant(app.tp, app.addrs, s42, {{kSensor, false}, {kSwitch, true}}));
}

TEST(Interpret, TrivialInvariantIsTrue) {
  auto app = load_source("t", switch_proto(), "invariant: true iteration: {}");
  std::mt19937 rng(7);
  for (int i = 0; i < 50; ++i) {
    AppState s;
    s.ints[0] = static_cast<int>(rng() % 100) - 50;
    EXPECT_TRUE(evaluate_invariant(app.tp, app.addrs, s, {{kSensor, rng() % 2 == 0}}));
  }
}

TEST(Interpret, UncheckedErrors) {
  auto src = "def unchecked_get() -> int; invariant: true iteration: { app_state.INT_0 = unchecked_get() }";
  auto app = load_source("t", switch_proto(), src);
  EXPECT_EQ(error_kind([&] { interpret_iteration(app.tp, app.addrs, {}, {}, {}); }), ErrorKind::Configuration);
  UncheckedImpls bad{{"unchecked_get", [](const UncheckedCall&) -> std::optional<Value> { return Rational(1, 2); }}};
  EXPECT_EQ(error_kind([&] { interpret_iteration(app.tp, app.addrs, {}, {}, bad); }), ErrorKind::RuntimeType);
  UncheckedImpls none{{"unchecked_get", [](const UncheckedCall&) -> std::optional<Value> { return std::nullopt; }}};
  EXPECT_EQ(error_kind([&] { interpret_iteration(app.tp, app.addrs, {}, {}, none); }), ErrorKind::RuntimeType);
  UncheckedImpls good{{"unchecked_get", [](const UncheckedCall&) -> std::optional<Value> { return Rational(7); }}};
  EXPECT_EQ(interpret_iteration(app.tp, app.addrs, {}, {}, good).app.ints[0], 7);

  lang::ChannelAddresses empty;
  auto reader = load_source("t", switch_proto(), "invariant: SWITCH.is_on() iteration: {}");
  EXPECT_EQ(error_kind([&] { evaluate_invariant(reader.tp, empty, {}, {}); }), ErrorKind::Configuration);
}

TEST(Interpret, EagerOperandsKeepCallOrder) {
  auto src = R"(
def unchecked_a() -> bool;
def unchecked_b() -> bool;
invariant: true
iteration: { app_state.BOOL_0 = unchecked_a() or unchecked_b() }
)";
  auto app = load_source("t", switch_proto(), src);
  UncheckedImpls impls{{"unchecked_a", [](const UncheckedCall&) -> std::optional<Value> { return true; }},
                       {"unchecked_b", [](const UncheckedCall&) -> std::optional<Value> { return false; }}};
  auto r = interpret_iteration(app.tp, app.addrs, {}, {}, impls);
  ASSERT_EQ(r.calls.size(), 2u);
  EXPECT_EQ(r.calls[0].name, "unchecked_a");
  EXPECT_EQ(r.calls[1].name, "unchecked_b");
  EXPECT_TRUE(r.app.bools[0]);
}

TEST(Interpret, Deterministic) {
  auto app = load_fixture_app("ventilation");
  std::mt19937 rng(11);
  auto co2 = app.addrs.at({"CO2_SENSOR", "read"});
  auto presence = app.addrs.at({"PRESENCE_DETECTOR", "state"});
  for (int i = 0; i < 100; ++i) {
    const bool meeting = rng() % 2;
    UncheckedImpls impls{
        {"unchecked_meeting_soon", [meeting](const UncheckedCall&) -> std::optional<Value> { return meeting; }}};
    PhysicalStateStore store{{co2, Rational(static_cast<int>(rng() % 2000))}, {presence, rng() % 2 == 0}};
    AppState s;
    s.bools[0] = rng() % 2;
    auto a = interpret_iteration(app.tp, app.addrs, s, store, impls);
    auto b = interpret_iteration(app.tp, app.addrs, s, store, impls);
    EXPECT_EQ(a.app, b.app);
    EXPECT_EQ(a.store, b.store);
    EXPECT_EQ(a.written, b.written);
    // One iteration always establishes the ventilation invariant.
    EXPECT_TRUE(evaluate_invariant(app.tp, app.addrs, a.app, a.store));
  }
}

TEST(Interpret, VentilationThreshold) {
  auto app = load_fixture_app("ventilation");
  auto co2 = app.addrs.at({"CO2_SENSOR", "read"});
  auto sw = app.addrs.at({"VENTILATION", "state"});
  UncheckedImpls no_meeting{
      {"unchecked_meeting_soon", [](const UncheckedCall&) -> std::optional<Value> { return false; }}};
  auto r = interpret_iteration(app.tp, app.addrs, {}, {{co2, Rational(950)}}, no_meeting);
  EXPECT_TRUE(std::get<bool>(r.store.at(sw)));
  r = interpret_iteration(app.tp, app.addrs, {}, {{co2, Rational(800)}, {sw, true}}, no_meeting);
  EXPECT_FALSE(std::get<bool>(r.store.at(sw)));
}
