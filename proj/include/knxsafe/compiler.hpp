#pragma once

// Bindings between app channels and physical communication objects,
// compatibility checks, group-address allocation and the installation
// artifacts.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "knxsafe/app_model.hpp"
#include "knxsafe/error.hpp"
#include "knxsafe/lang/interp.hpp"
#include "knxsafe/physical.hpp"
#include "knxsafe/wire.hpp"

namespace knxsafe {

inline constexpr int kUnbound = -1;

struct InstanceBinding {
  DeviceKind kind = DeviceKind::Binary;
  std::map<std::string, int> channels;  // channel -> comm-object id
  bool operator==(const InstanceBinding&) const = default;
};

using AppBindings = std::map<std::string, InstanceBinding>;  // instance -> binding
using BindingSet = std::map<std::string, AppBindings>;       // app -> instances

inline nlohmann::json to_json(const BindingSet& b) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [app, instances] : b) {
    nlohmann::json ji = nlohmann::json::object();
    for (const auto& [name, inst] : instances) {
      nlohmann::json ch = nlohmann::json::object();
      for (const auto& [c, id] : inst.channels) ch[c] = id;
      ji[name] = {{"deviceType", to_string(inst.kind)}, {"channels", ch}};
    }
    out[app] = {{"instances", ji}};
  }
  return out;
}

inline BindingSet binding_set_from_json(const nlohmann::json& j) {
  BindingSet out;
  try {
    for (const auto& [app, ja] : j.items()) {
      auto& instances = out[app];
      for (const auto& [name, jinst] : ja.at("instances").items()) {
        InstanceBinding b;
        b.kind = parse_device_kind(jinst.at("deviceType").get<std::string>());
        for (const auto& [c, id] : jinst.at("channels").items()) b.channels[c] = id.get<int>();
        instances[name] = std::move(b);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed bindings: ") + e.what());
  }
  return out;
}

inline AppBindings unbound(const AppPrototype& p) {
  AppBindings out;
  for (const auto& d : p.devices) {
    InstanceBinding b{d.kind, {}};
    for (const auto& ch : channels_of(d.kind)) b.channels[ch.name] = kUnbound;
    out[d.name] = std::move(b);
  }
  return out;
}

/// Bindings for installed + installing apps. Installed apps keep their ids
/// only when the physical structure is unchanged; everything else is -1.
inline BindingSet generate_bindings(const std::vector<AppPrototype>& installing,
                                    const std::vector<AppPrototype>& installed, const BindingSet& previous,
                                    const std::optional<PhysicalStructure>& stored, const PhysicalStructure& phys) {
  const bool keep = stored && structures_equal(*stored, phys);
  BindingSet out;
  for (const auto& p : installed) {
    auto fresh = unbound(p);
    if (keep) {
      if (auto prev = previous.find(p.name); prev != previous.end()) {
        for (auto& [inst, b] : fresh) {
          auto pi = prev->second.find(inst);
          if (pi == prev->second.end() || pi->second.kind != b.kind) continue;
          for (auto& [ch, id] : b.channels) {
            if (auto pc = pi->second.channels.find(ch); pc != pi->second.channels.end()) id = pc->second;
          }
        }
      }
    }
    out[p.name] = std::move(fresh);
  }
  for (const auto& p : installing) out[p.name] = unbound(p);
  return out;
}

// ---------------------------------------------------------------------------
// Compatibility

enum class Compat { Yes, No, Warning };

inline std::string to_string(Compat c) {
  switch (c) {
    case Compat::Yes: return "yes";
    case Compat::No: return "no";
    case Compat::Warning: return "warning";
  }
  return "?";
}

/// Rows: physical io. Columns: prototype io. Prototype io is never Unknown.
inline Compat io_compat(IoType physical, IoType prototype) {
  switch (physical) {
    case IoType::In: return prototype == IoType::In ? Compat::Yes : Compat::No;
    case IoType::Out:
    case IoType::InOut: return Compat::Yes;
    case IoType::Unknown: return Compat::Warning;
  }
  return Compat::No;
}

enum class Severity { Error, Warning };
enum class Rule { IoType, ValueType, Datatype, MutualDatatype };

inline std::string to_string(Severity s) { return s == Severity::Error ? "error" : "warning"; }

inline std::string to_string(Rule r) {
  switch (r) {
    case Rule::IoType: return "io-type";
    case Rule::ValueType: return "value-type";
    case Rule::Datatype: return "datatype";
    case Rule::MutualDatatype: return "mutual-datatype";
  }
  return "?";
}

struct Finding {
  Severity severity;
  Rule rule;
  std::string locus;
  std::string message;
};

struct CompatReport {
  std::vector<Finding> findings;

  std::size_t count(Severity s) const {
    return static_cast<std::size_t>(
        std::count_if(findings.begin(), findings.end(), [s](const auto& f) { return f.severity == s; }));
  }
  bool ok() const { return count(Severity::Error) == 0; }

  std::string text() const {
    std::ostringstream os;
    for (const auto& f : findings) {
      os << to_string(f.severity) << " [" << to_string(f.rule) << "] " << f.locus << ": " << f.message << "\n";
    }
    return os.str();
  }
};

struct BoundChannel {
  std::string app, instance;
  const ChannelSpec* channel;
  int id;
  std::string label() const { return app + "." + instance + "." + channel->name; }
  std::string ga_name() const { return app + "_" + instance + "_" + channel->name; }
};

/// Every channel of `apps` with its comm-object id, in app/instance order.
/// Throws on unfilled or unknown ids.
inline std::vector<BoundChannel> bound_channels(const BindingSet& bindings, const std::vector<AppPrototype>& apps,
                                                const PhysicalStructure& phys) {
  std::vector<BoundChannel> out;
  auto sorted = apps;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (const auto& p : sorted) {
    auto ab = bindings.find(p.name);
    for (const auto& d : p.devices) {
      for (const auto& ch : channels_of(d.kind)) {
        const std::string label = p.name + "." + d.name + "." + ch.name;
        int id = kUnbound;
        if (ab != bindings.end()) {
          if (auto ib = ab->second.find(d.name); ib != ab->second.end()) {
            if (auto c = ib->second.channels.find(ch.name); c != ib->second.channels.end()) id = c->second;
          }
        }
        if (id == kUnbound) throw Error(ErrorKind::IncompleteBindings, label + " is not bound (-1)");
        if (!phys.find(id)) {
          throw Error(ErrorKind::Resolution, label + " is bound to unknown communication object " + std::to_string(id));
        }
        out.push_back({p.name, d.name, &channel_of(d.kind), id});
      }
    }
  }
  return out;
}

inline CompatReport verify_bindings(const BindingSet& bindings, const std::vector<AppPrototype>& apps,
                                    const PhysicalStructure& phys) {
  CompatReport report;
  const auto bound = bound_channels(bindings, apps, phys);
  std::map<int, std::vector<const BoundChannel*>> by_object;
  for (const auto& b : bound) {
    const auto [dev, obj] = *phys.find(b.id);
    by_object[b.id].push_back(&b);
    const std::string where = b.label() + " -> " + std::to_string(b.id) + " (" + dev->name + ": " + obj->name + ")";
    switch (io_compat(obj->io, b.channel->io)) {
      case Compat::Yes: break;
      case Compat::No:
        report.findings.push_back({Severity::Error, Rule::IoType, where,
                                   "physical io " + to_string(obj->io) + " cannot serve prototype io " +
                                       to_string(b.channel->io)});
        break;
      case Compat::Warning:
        report.findings.push_back({Severity::Warning, Rule::IoType, where,
                                   "physical io is unknown; check that it can serve " + to_string(b.channel->io)});
        break;
    }
    if (!obj->dpt) {
      report.findings.push_back({Severity::Warning, Rule::Datatype, where,
                                 "physical datatype is unknown; expected " + b.channel->dpt.to_string()});
    } else if (!obj->dpt->compatible_with(b.channel->dpt)) {
      report.findings.push_back({Severity::Error, Rule::Datatype, where,
                                 "datatypes differ: physical " + obj->dpt->to_string() + ", prototype " +
                                     b.channel->dpt.to_string()});
    }
  }
  for (const auto& [id, members] : by_object) {
    const auto* first = members.front();
    for (const auto* m : members) {
      if (m->channel->value_type != first->channel->value_type) {
        report.findings.push_back({Severity::Error, Rule::ValueType, "communication object " + std::to_string(id),
                                   m->label() + " (" + to_string(m->channel->value_type) + ") and " + first->label() +
                                       " (" + to_string(first->channel->value_type) +
                                       ") would share one group address"});
      }
      if (!m->channel->dpt.compatible_with(first->channel->dpt)) {
        report.findings.push_back({Severity::Error, Rule::MutualDatatype, "communication object " + std::to_string(id),
                                   m->label() + " (" + m->channel->dpt.to_string() + ") and " + first->label() + " (" +
                                       first->channel->dpt.to_string() + ") are linked to the same object"});
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Group addresses

inline constexpr std::size_t kMaxGroupAddresses = 65535;  // 0/0/0 stays unused

struct GroupAddressEntry {
  wire::GroupAddress address;
  ValueType type;
  wire::DptId dpt;
  int comm_object;
  std::vector<std::string> members;  // app_instance_channel

  bool operator==(const GroupAddressEntry& o) const {
    return address == o.address && type == o.type && dpt == o.dpt && comm_object == o.comm_object &&
           members == o.members;
  }
};

struct GroupAddressTable {
  std::vector<GroupAddressEntry> entries;  // ascending address
  std::map<std::string, lang::ChannelAddresses> apps;

  const GroupAddressEntry* find(const wire::GroupAddress& ga) const {
    for (const auto& e : entries) {
      if (e.address == ga) return &e;
    }
    return nullptr;
  }

  bool operator==(const GroupAddressTable&) const = default;
};

/// i-th allocated address, counting from 1 in three-level style.
inline wire::GroupAddress nth_group_address(std::size_t i) {
  if (i == 0 || i > kMaxGroupAddresses) {
    throw Error(ErrorKind::Capacity, "only 65535 group addresses can be allocated, asked for number " +
                                         std::to_string(i));
  }
  return wire::GroupAddress::from_raw(static_cast<std::uint16_t>(i), wire::GroupStyle::ThreeLevel);
}

inline GroupAddressTable assign_group_addresses(const BindingSet& bindings, const std::vector<AppPrototype>& apps,
                                                const PhysicalStructure& phys) {
  const auto bound = bound_channels(bindings, apps, phys);
  std::map<int, std::vector<const BoundChannel*>> by_object;
  for (const auto& b : bound) by_object[b.id].push_back(&b);
  if (by_object.size() > kMaxGroupAddresses) {
    throw Error(ErrorKind::Capacity, std::to_string(by_object.size()) +
                                         " communication objects need a group address, only 65535 are available");
  }
  GroupAddressTable table;
  std::size_t i = 0;
  for (const auto& [id, members] : by_object) {
    GroupAddressEntry e{nth_group_address(++i), members.front()->channel->value_type, members.front()->channel->dpt,
                        id, {}};
    for (const auto* m : members) {
      e.members.push_back(m->ga_name());
      table.apps[m->app][{m->instance, m->channel->name}] = e.address;
    }
    table.entries.push_back(std::move(e));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Artifacts

inline constexpr const char* kAddressesFile = "addresses.json";

inline std::string assignment_csv(const GroupAddressTable& t) {
  std::string out = "address;name\n";
  for (const auto& e : t.entries) {
    out += e.address.to_string() + ";";
    for (std::size_t i = 0; i < e.members.size(); ++i) out += (i ? "," : "") + e.members[i];
    out += "\n";
  }
  return out;
}

inline std::string assignment_txt(const GroupAddressTable& t, const PhysicalStructure& phys) {
  std::ostringstream os;
  for (const auto& e : t.entries) {
    const auto [dev, obj] = *phys.find(e.comm_object);
    os << e.address.to_string() << "  " << dev->name << " (" << dev->address.to_string() << ") / " << obj->name
       << " [id " << e.comm_object << ", " << to_string(e.type) << ", " << e.dpt.to_string() << "]\n";
    for (const auto& m : e.members) os << "    " << m << "\n";
  }
  return os.str();
}

inline nlohmann::json addresses_json(const GroupAddressTable& t, const AppPrototype& p) {
  nlohmann::json out = nlohmann::json::object();
  auto it = t.apps.find(p.name);
  for (const auto& d : p.devices) {
    nlohmann::json channels = nlohmann::json::object();
    for (const auto& ch : channels_of(d.kind)) {
      if (it == t.apps.end()) continue;
      auto a = it->second.find({d.name, ch.name});
      if (a == it->second.end()) continue;
      channels[ch.name] = {{"address", a->second.to_string()},
                           {"valueType", to_string(ch.value_type)},
                           {"dpt", ch.dpt.to_string()}};
    }
    out[d.name] = channels;
  }
  return out;
}

inline lang::ChannelAddresses channel_addresses_from_json(const nlohmann::json& j) {
  lang::ChannelAddresses out;
  try {
    for (const auto& [inst, channels] : j.items()) {
      for (const auto& [ch, entry] : channels.items()) {
        out[{inst, ch}] = wire::GroupAddress::parse(entry.at("address").get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed addresses file: ") + e.what());
  }
  return out;
}

/// Writes assignment.csv and assignment.txt into `assignments_dir` and
/// addresses.json into each app's directory.
inline void emit_artifacts(const GroupAddressTable& t, const PhysicalStructure& phys,
                           const std::vector<AppPrototype>& apps, const std::filesystem::path& assignments_dir,
                           const std::map<std::string, std::filesystem::path>& app_dirs) {
  write_text_file(assignments_dir / "assignment.csv", assignment_csv(t));
  write_text_file(assignments_dir / "assignment.txt", assignment_txt(t, phys));
  for (const auto& p : apps) {
    auto dir = app_dirs.find(p.name);
    if (dir == app_dirs.end()) continue;
    write_json_file(dir->second / kAddressesFile, addresses_json(t, p));
  }
}

}  // namespace knxsafe
