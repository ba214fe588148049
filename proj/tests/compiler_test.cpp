#include <gtest/gtest.h>

#include <random>
#include <set>

#include "knxsafe/compiler.hpp"
#include "test_util.hpp"

using namespace knxsafe;
namespace kt = knxsafe::testing;

namespace {

const auto kLab = kt::kFixtures / "lab";

PhysicalStructure lab_structure() { return parse_physical_structure(kLab / "physical_structure.json"); }

BindingSet lab_bindings() { return binding_set_from_json(read_json_file(kLab / "apps_bindings.json")); }

std::vector<AppPrototype> lab_apps() {
  std::vector<AppPrototype> out;
  for (auto name : {"door_lock", "plants", "ventilation"}) {
    out.push_back(parse_app_prototype(kt::kFixtures / "apps" / name / kPrototypeFile, name));
  }
  return out;
}

AppPrototype proto(const std::string& name, std::vector<DeviceInstance> devices) {
  AppPrototype p;
  p.name = name;
  p.devices = std::move(devices);
  return p;
}

PhysicalStructure one_object(IoType io, std::optional<wire::DptId> dpt) {
  return PhysicalStructure({{"dev", wire::IndividualAddress(1, 1, 1), {{0, "obj", dpt, io}}}});
}

BindingSet bind_all(const std::vector<AppPrototype>& apps, int id) {
  BindingSet b;
  for (const auto& p : apps) {
    b[p.name] = unbound(p);
    for (auto& [inst, ib] : b[p.name]) {
      for (auto& [ch, v] : ib.channels) v = id;
    }
  }
  return b;
}

}  // namespace

TEST(IoCompat, AllTwelveCells) {
  using enum IoType;
  const IoType phys[] = {In, Out, InOut, Unknown};
  const IoType protos[] = {In, Out, InOut};
  const char* table[4][3] = {{"yes", "no", "no"},
                             {"yes", "yes", "yes"},
                             {"yes", "yes", "yes"},
                             {"warning", "warning", "warning"}};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 3; ++c) EXPECT_EQ(to_string(io_compat(phys[r], protos[c])), table[r][c]) << r << "," << c;
  }
  EXPECT_EQ(io_compat(Out, In), Compat::Yes);
  EXPECT_EQ(io_compat(In, Out), Compat::No);
  EXPECT_EQ(io_compat(Unknown, InOut), Compat::Warning);
}

TEST(GenerateBindings, SameStructureKeepsInstalledIds) {
  auto apps = lab_apps();
  const std::vector<AppPrototype> installed{apps[0], apps[2]};
  const std::vector<AppPrototype> installing{apps[1]};
  auto prev = lab_bindings();
  prev.erase("plants");
  auto b = generate_bindings(installing, installed, prev, lab_structure(), lab_structure());
  EXPECT_EQ(b.at("door_lock"), prev.at("door_lock"));
  EXPECT_EQ(b.at("ventilation"), prev.at("ventilation"));
  EXPECT_EQ(b.at("plants").at("HUMIDITY_SENSOR").channels.at("read"), kUnbound);
}

TEST(GenerateBindings, ChangedStructureResetsEverything) {
  auto apps = lab_apps();
  auto changed_devices = lab_structure().devices();
  changed_devices[0].comm_objects[0].name = "renamed";
  PhysicalStructure changed(changed_devices);
  auto b = generate_bindings({apps[1]}, {apps[0], apps[2]}, lab_bindings(), lab_structure(), changed);
  for (const auto& [app, instances] : b) {
    for (const auto& [inst, ib] : instances) {
      for (const auto& [ch, id] : ib.channels) EXPECT_EQ(id, kUnbound) << app << "." << inst;
    }
  }
  // No stored structure behaves like a change.
  b = generate_bindings({}, {apps[0]}, lab_bindings(), std::nullopt, lab_structure());
  EXPECT_EQ(b.at("door_lock").at("PRESENCE_DETECTOR").channels.at("state"), kUnbound);
}

TEST(GenerateBindings, FreshInstall) {
  auto p = proto("fresh", {{"A", DeviceKind::Binary}, {"B", DeviceKind::Switch}});
  auto b = generate_bindings({p}, {}, {}, std::nullopt, lab_structure());
  ASSERT_EQ(b.size(), 1u);
  ASSERT_EQ(b.at("fresh").size(), 2u);
  for (const auto& [inst, ib] : b.at("fresh")) EXPECT_EQ(ib.channels.at("state"), kUnbound);
  // JSON round trip keeps everything.
  EXPECT_EQ(binding_set_from_json(to_json(b)), b);
}

TEST(GenerateBindings, PreservationProperty) {
  std::mt19937 rng(17);
  const auto phys = lab_structure();
  for (int round = 0; round < 200; ++round) {
    std::vector<AppPrototype> installed;
    BindingSet prev;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int a = 0; a < n; ++a) {
      std::vector<DeviceInstance> devs;
      for (int d = 0; d < 1 + static_cast<int>(rng() % 4); ++d) {
        devs.push_back({"D" + std::to_string(d), all_device_kinds()[rng() % 5]});
      }
      auto p = proto("app" + std::to_string(a), devs);
      prev[p.name] = unbound(p);
      for (auto& [inst, ib] : prev[p.name]) {
        for (auto& [ch, id] : ib.channels) id = static_cast<int>(rng() % 9) - 1;
      }
      installed.push_back(p);
    }
    auto b = generate_bindings({proto("new", {{"X", DeviceKind::Co2}})}, installed, prev, phys, phys);
    for (const auto& p : installed) EXPECT_EQ(b.at(p.name), prev.at(p.name));
    EXPECT_EQ(b.at("new").at("X").channels.at("read"), kUnbound);
  }
}

TEST(VerifyBindings, Examples) {
  auto sw = proto("a", {{"S", DeviceKind::Switch}});
  auto r = verify_bindings(bind_all({sw}, 0), {sw}, one_object(IoType::InOut, wire::DptId{1, {}}));
  EXPECT_TRUE(r.findings.empty()) << r.text();

  auto temp = proto("a", {{"T", DeviceKind::Temperature}});
  r = verify_bindings(bind_all({temp}, 0), {temp}, one_object(IoType::Out, wire::DptId{1, {}}));
  ASSERT_EQ(r.findings.size(), 1u);
  EXPECT_EQ(r.findings[0].rule, Rule::Datatype);
  EXPECT_EQ(r.findings[0].severity, Severity::Error);
  EXPECT_FALSE(r.ok());

  auto bin = proto("a", {{"B", DeviceKind::Binary}});
  r = verify_bindings(bind_all({bin}, 0), {bin}, one_object(IoType::Unknown, std::nullopt));
  EXPECT_EQ(r.count(Severity::Warning), 2u);
  EXPECT_EQ(r.count(Severity::Error), 0u);
  EXPECT_TRUE(r.ok());

  // Physical "in" cannot serve a switch (in/out).
  r = verify_bindings(bind_all({sw}, 0), {sw}, one_object(IoType::In, wire::DptId{1, {}}));
  ASSERT_EQ(r.findings.size(), 1u);
  EXPECT_EQ(r.findings[0].rule, Rule::IoType);
}

TEST(VerifyBindings, SharedObjectMustAgree) {
  auto bin = proto("a", {{"B", DeviceKind::Binary}});
  auto temp = proto("b", {{"T", DeviceKind::Temperature}});
  auto r = verify_bindings(bind_all({bin, temp}, 0), {bin, temp}, one_object(IoType::Out, wire::DptId{1, {}}));
  std::set<Rule> rules;
  for (const auto& f : r.findings) rules.insert(f.rule);
  EXPECT_TRUE(rules.count(Rule::ValueType));
  EXPECT_TRUE(rules.count(Rule::MutualDatatype));
  EXPECT_TRUE(rules.count(Rule::Datatype));
  // Two temperature-like sensors on one object are fine.
  auto co2 = proto("c", {{"C", DeviceKind::Co2}});
  r = verify_bindings(bind_all({temp, co2}, 0), {temp, co2}, one_object(IoType::Out, wire::DptId{9, 1}));
  EXPECT_TRUE(r.findings.empty()) << r.text();
}

TEST(VerifyBindings, Errors) {
  auto bin = proto("a", {{"B", DeviceKind::Binary}});
  EXPECT_EQ(kt::error_kind([&] { verify_bindings(bind_all({bin}, -1), {bin}, lab_structure()); }),
            ErrorKind::IncompleteBindings);
  EXPECT_EQ(kt::error_kind([&] { verify_bindings({}, {bin}, lab_structure()); }), ErrorKind::IncompleteBindings);
  EXPECT_EQ(kt::error_kind([&] { verify_bindings(bind_all({bin}, 99), {bin}, lab_structure()); }),
            ErrorKind::Resolution);
}

TEST(VerifyBindings, LabIsClean) {
  auto r = verify_bindings(lab_bindings(), lab_apps(), lab_structure());
  EXPECT_TRUE(r.findings.empty()) << r.text();
}

TEST(AssignAddresses, SmallCases) {
  const auto phys = parse_physical_structure(kt::kFixtures / "physical/two_devices.json");
  auto a = proto("a", {{"S", DeviceKind::Switch}, {"B", DeviceKind::Binary}});
  BindingSet b{{"a", unbound(a)}};
  b["a"]["S"].channels["state"] = 0;
  b["a"]["B"].channels["state"] = 2;
  auto t = assign_group_addresses(b, {a}, phys);
  ASSERT_EQ(t.entries.size(), 2u);  // 3 objects, 2 mapped
  EXPECT_EQ(t.entries[0].address.to_string(), "0/0/1");
  EXPECT_EQ(t.entries[1].address.to_string(), "0/0/2");
  EXPECT_EQ(t.entries[0].comm_object, 0);
  EXPECT_EQ(t.entries[1].type, ValueType::Bool);
  EXPECT_EQ((t.apps.at("a").at({"B", "state"})), t.entries[1].address);

  auto none = assign_group_addresses({}, {}, phys);
  EXPECT_TRUE(none.entries.empty());
  EXPECT_EQ(assignment_csv(none), "address;name\n");
}

TEST(AssignAddresses, Lab) {
  auto t = assign_group_addresses(lab_bindings(), lab_apps(), lab_structure());
  ASSERT_EQ(t.entries.size(), 5u);
  EXPECT_EQ(t.entries[3].members.size(), 2u);
  EXPECT_EQ(t.apps.at("door_lock").at({"PRESENCE_DETECTOR", "state"}),
            t.apps.at("ventilation").at({"PRESENCE_DETECTOR", "state"}));
  EXPECT_EQ(t.entries[4].type, ValueType::Real);
  EXPECT_EQ(t.entries[4].dpt.to_string(), "DPT-9");
}

TEST(AssignAddresses, AllocationSequence) {
  // Raw i in three-level style: sub rolls into middle, middle into main.
  EXPECT_EQ(nth_group_address(1).to_string(), "0/0/1");
  EXPECT_EQ(nth_group_address(255).to_string(), "0/0/255");
  EXPECT_EQ(nth_group_address(256).to_string(), "0/1/0");
  EXPECT_EQ(nth_group_address(2048).to_string(), "1/0/0");
  EXPECT_EQ(nth_group_address(65535).to_string(), "31/7/255");
  EXPECT_EQ(kt::error_kind([] { nth_group_address(65536); }), ErrorKind::Capacity);
  std::set<std::uint16_t> seen;
  for (std::size_t i = 1; i <= kMaxGroupAddresses; ++i) {
    auto ga = nth_group_address(i);
    EXPECT_TRUE(seen.insert(ga.raw()).second);
    EXPECT_EQ(wire::GroupAddress::parse(ga.to_string()), ga);
  }
}

TEST(Artifacts, LabGoldenFiles) {
  kt::TempDir tmp;
  const auto apps = lab_apps();
  auto t = assign_group_addresses(lab_bindings(), apps, lab_structure());
  std::map<std::string, std::filesystem::path> dirs;
  for (const auto& p : apps) dirs[p.name] = tmp.path() / "app_library" / p.name;
  emit_artifacts(t, lab_structure(), apps, tmp.path() / "assignments", dirs);
  EXPECT_EQ(kt::read_file(tmp.path() / "assignments/assignment.csv"), kt::read_file(kLab / "golden/assignment.csv"));
  EXPECT_EQ(read_json_file(dirs["plants"] / kAddressesFile), read_json_file(kLab / "golden/plants_addresses.json"));
  EXPECT_NE(kt::read_file(tmp.path() / "assignments/assignment.txt").find("Presence detector (1.1.4) / Presence"),
            std::string::npos);
  // addresses.json reads back to the same channel map.
  for (const auto& p : apps) {
    EXPECT_EQ(channel_addresses_from_json(read_json_file(dirs[p.name] / kAddressesFile)), t.apps.at(p.name));
  }
}

TEST(Artifacts, Idempotent) {
  kt::TempDir a, b;
  const auto apps = lab_apps();
  auto t1 = assign_group_addresses(lab_bindings(), apps, lab_structure());
  auto t2 = assign_group_addresses(lab_bindings(), apps, lab_structure());
  EXPECT_EQ(t1, t2);
  emit_artifacts(t1, lab_structure(), apps, a.path(), {{"plants", a.path() / "plants"}});
  emit_artifacts(t2, lab_structure(), apps, b.path(), {{"plants", b.path() / "plants"}});
  for (auto f : {"assignment.csv", "assignment.txt", "plants/addresses.json"}) {
    EXPECT_EQ(kt::read_file(a.path() / f), kt::read_file(b.path() / f)) << f;
  }
}
