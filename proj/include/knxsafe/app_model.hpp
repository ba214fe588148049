#pragma once

// App prototypes: the devices an app declares, its permission level and
// timer, and skeleton generation for new app projects.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "knxsafe/error.hpp"
#include "knxsafe/physical.hpp"
#include "knxsafe/values.hpp"
#include "knxsafe/wire.hpp"

namespace knxsafe {

enum class DeviceKind { Binary, Temperature, Humidity, Co2, Switch };

inline const std::vector<DeviceKind>& all_device_kinds() {
  static const std::vector<DeviceKind> kinds{DeviceKind::Binary, DeviceKind::Temperature, DeviceKind::Humidity,
                                             DeviceKind::Co2, DeviceKind::Switch};
  return kinds;
}

inline std::string to_string(DeviceKind k) {
  switch (k) {
    case DeviceKind::Binary: return "binary";
    case DeviceKind::Temperature: return "temperature";
    case DeviceKind::Humidity: return "humidity";
    case DeviceKind::Co2: return "co2";
    case DeviceKind::Switch: return "switch";
  }
  return "?";
}

inline DeviceKind parse_device_kind(const std::string& s) {
  for (auto k : all_device_kinds()) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::UnsupportedDevice, "device type '" + s + "' is not supported");
}

struct ChannelSpec {
  std::string name;
  IoType io;
  ValueType value_type;
  wire::DptId dpt;
  bool readable;
  bool writable;
};

/// Each kind exposes exactly one channel.
inline const ChannelSpec& channel_of(DeviceKind kind) {
  static const ChannelSpec binary{"state", IoType::In, ValueType::Bool, {1, {}}, true, false};
  static const ChannelSpec temperature{"read", IoType::In, ValueType::Real, {9, {}}, true, false};
  static const ChannelSpec humidity{"read", IoType::In, ValueType::Real, {9, {}}, true, false};
  static const ChannelSpec co2{"read", IoType::In, ValueType::Real, {9, {}}, true, false};
  static const ChannelSpec switch_{"state", IoType::InOut, ValueType::Bool, {1, {}}, true, true};
  switch (kind) {
    case DeviceKind::Binary: return binary;
    case DeviceKind::Temperature: return temperature;
    case DeviceKind::Humidity: return humidity;
    case DeviceKind::Co2: return co2;
    case DeviceKind::Switch: return switch_;
  }
  return binary;
}

inline std::vector<ChannelSpec> channels_of(DeviceKind kind) { return {channel_of(kind)}; }

enum class Permission { Privileged, NotPrivileged };

struct DeviceInstance {
  std::string name;
  DeviceKind kind;
  bool operator==(const DeviceInstance&) const = default;
};

struct AppPrototype {
  std::string name;
  Permission permission = Permission::NotPrivileged;
  int timer = 0;
  std::vector<std::string> files;
  std::vector<DeviceInstance> devices;

  bool privileged() const { return permission == Permission::Privileged; }

  const DeviceInstance* find_device(const std::string& instance) const {
    for (const auto& d : devices) {
      if (d.name == instance) return &d;
    }
    return nullptr;
  }

  bool operator==(const AppPrototype&) const = default;
};

/// Identifier syntax for device instances: letters, digits and underscores,
/// not starting with a digit.
inline bool is_valid_identifier(const std::string& s) {
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

/// App names are short, all-lowercase identifiers.
inline constexpr std::size_t kMaxAppNameLength = 32;

inline bool is_valid_app_name(const std::string& s) {
  if (s.empty() || s.size() > kMaxAppNameLength || !std::islower(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_';
  });
}

inline void validate_app_name(const std::string& name) {
  if (!is_valid_app_name(name)) {
    throw Error(ErrorKind::Naming, "app name '" + name +
                                       "' must be a short all-lowercase identifier (letters, digits, underscores)");
  }
}

inline AppPrototype app_prototype_from_json(const nlohmann::json& j, std::string name) {
  AppPrototype p;
  p.name = std::move(name);
  try {
    const auto level = j.at("permissionLevel").get<std::string>();
    if (level == "privileged") {
      p.permission = Permission::Privileged;
    } else if (level == "notPrivileged") {
      p.permission = Permission::NotPrivileged;
    } else {
      throw Error(ErrorKind::Validation, "unknown permission level '" + level + "'");
    }
    const auto timer = j.at("timer").get<long long>();
    if (timer < 0) throw Error(ErrorKind::Range, "timer = " + std::to_string(timer) + " must be non-negative");
    p.timer = static_cast<int>(timer);
    for (const auto& f : j.at("files")) p.files.push_back(f.get<std::string>());
    std::set<std::string> seen;
    for (const auto& jd : j.at("devices")) {
      DeviceInstance d;
      d.name = jd.at("name").get<std::string>();
      d.kind = parse_device_kind(jd.at("deviceType").get<std::string>());
      if (!is_valid_identifier(d.name)) {
        throw Error(ErrorKind::Validation, "device instance name '" + d.name + "' is not a valid identifier");
      }
      if (!seen.insert(d.name).second) {
        throw Error(ErrorKind::Validation, "duplicate device instance name '" + d.name + "'");
      }
      p.devices.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed app prototype: ") + e.what());
  }
  return p;
}

inline nlohmann::json to_json(const AppPrototype& p) {
  nlohmann::json devices = nlohmann::json::array();
  for (const auto& d : p.devices) devices.push_back({{"name", d.name}, {"deviceType", to_string(d.kind)}});
  return {{"permissionLevel", p.privileged() ? "privileged" : "notPrivileged"},
          {"timer", p.timer},
          {"files", p.files},
          {"devices", devices}};
}

/// The file carries no name; it defaults to the stem of the containing
/// directory when none is supplied.
inline AppPrototype parse_app_prototype(const std::filesystem::path& file, std::optional<std::string> name = {}) {
  auto j = read_json_file(file);
  if (!name) name = std::filesystem::absolute(file).parent_path().filename().string();
  return app_prototype_from_json(j, *name);
}

// ---------------------------------------------------------------------------
// Skeleton generation

inline constexpr const char* kMainFile = "main.app";
inline constexpr const char* kPrototypeFile = "app_prototypical_structure.json";

inline std::string skeleton_source(const AppPrototype& p) {
  std::string out;
  out += "# " + p.name + "\n";
  out += "#\n";
  out += "# invariant: condition every installed app keeps true over the whole installation.\n";
  out += "# iteration: runs on every change of a used device";
  out += p.timer > 0 ? " and every " + std::to_string(p.timer) + " seconds.\n" : ".\n";
  out += "\n";
  for (const auto& d : p.devices) out += "device " + d.name + ": " + to_string(d.kind) + ";\n";
  if (!p.devices.empty()) out += "\n";
  out += "invariant: true\n\n";
  out += "iteration: {\n}\n";
  return out;
}

/// Creates <root>/generated/<name>/ with main.app and the prototype file.
/// Declared extra files are copied from `files_dir` when given.
inline std::filesystem::path generate_app_skeleton(const AppPrototype& p, const std::filesystem::path& root,
                                                   const std::optional<std::filesystem::path>& files_dir = {}) {
  namespace fs = std::filesystem;
  validate_app_name(p.name);
  const fs::path dir = root / "generated" / p.name;
  if (fs::exists(dir)) throw Error(ErrorKind::Conflict, "app project " + dir.string() + " already exists");
  for (const auto& f : p.files) {
    if (fs::path(f).has_parent_path() || f.empty()) {
      throw Error(ErrorKind::Validation, "app file '" + f + "' must be a plain file name");
    }
    if (files_dir && !fs::exists(*files_dir / f)) {
      throw Error(ErrorKind::Validation, "declared app file '" + f + "' not found next to the prototype");
    }
  }
  fs::create_directories(dir);
  write_text_file(dir / kMainFile, skeleton_source(p));
  write_json_file(dir / kPrototypeFile, to_json(p));
  if (files_dir) {
    for (const auto& f : p.files) fs::copy_file(*files_dir / f, dir / f, fs::copy_options::overwrite_existing);
  }
  return dir;
}

}  // namespace knxsafe
