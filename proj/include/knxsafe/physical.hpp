#pragma once

// The physical installation: devices, their individual addresses and the
// communication objects they expose. Loaded from physical_structure.json.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "knxsafe/error.hpp"
#include "knxsafe/wire.hpp"

namespace knxsafe {

enum class IoType { In, Out, InOut, Unknown };

inline std::string to_string(IoType io) {
  switch (io) {
    case IoType::In: return "in";
    case IoType::Out: return "out";
    case IoType::InOut: return "in/out";
    case IoType::Unknown: return "unknown";
  }
  return "unknown";
}

inline IoType parse_io_type(const std::string& text) {
  if (text == "in") return IoType::In;
  if (text == "out") return IoType::Out;
  if (text == "in/out") return IoType::InOut;
  if (text == "unknown") return IoType::Unknown;
  throw Error(ErrorKind::Validation, "unknown io type '" + text + "'");
}

struct PhysicalCommObject {
  int id = 0;
  std::string name;
  std::optional<wire::DptId> dpt;  // nullopt: unknown
  IoType io = IoType::Unknown;

  bool operator==(const PhysicalCommObject&) const = default;
};

struct PhysicalDevice {
  std::string name;
  wire::IndividualAddress address;
  std::vector<PhysicalCommObject> comm_objects;

  bool operator==(const PhysicalDevice&) const = default;
};

inline constexpr std::size_t kMaxDevicesPerLine = 64;

class PhysicalStructure {
 public:
  PhysicalStructure() = default;

  /// Validates on construction: unique addresses, unique comm-object ids,
  /// at most 64 devices per line.
  explicit PhysicalStructure(std::vector<PhysicalDevice> devices) : devices_(std::move(devices)) { validate(); }

  const std::vector<PhysicalDevice>& devices() const { return devices_; }

  std::size_t comm_object_count() const {
    std::size_t n = 0;
    for (const auto& d : devices_) n += d.comm_objects.size();
    return n;
  }

  /// Looks a communication object up by id, together with its owning device.
  std::optional<std::pair<const PhysicalDevice*, const PhysicalCommObject*>> find(int id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    const auto& d = devices_[it->second.first];
    return std::make_pair(&d, &d.comm_objects[it->second.second]);
  }

 private:
  void validate() {
    std::set<wire::IndividualAddress> addresses;
    std::map<std::pair<unsigned, unsigned>, std::size_t> per_line;
    for (std::size_t di = 0; di < devices_.size(); ++di) {
      const auto& d = devices_[di];
      if (!addresses.insert(d.address).second) {
        throw Error(ErrorKind::Validation, "duplicate individual address " + d.address.to_string());
      }
      auto& count = per_line[{d.address.area(), d.address.line()}];
      if (++count > kMaxDevicesPerLine) {
        throw Error(ErrorKind::Capacity, "line " + std::to_string(d.address.area()) + "." +
                                             std::to_string(d.address.line()) + " holds more than 64 devices");
      }
      for (std::size_t ci = 0; ci < d.comm_objects.size(); ++ci) {
        const auto& c = d.comm_objects[ci];
        if (c.id < 0) throw Error(ErrorKind::Validation, "negative communication object id " + std::to_string(c.id));
        if (!index_.try_emplace(c.id, di, ci).second) {
          throw Error(ErrorKind::Validation, "duplicate communication object id " + std::to_string(c.id));
        }
      }
    }
  }

  std::vector<PhysicalDevice> devices_;
  std::map<int, std::pair<std::size_t, std::size_t>> index_;  // id -> (device, object) position
};

// ---------------------------------------------------------------------------
// JSON form

inline nlohmann::json to_json(const PhysicalStructure& s) {
  nlohmann::json devices = nlohmann::json::array();
  for (const auto& d : s.devices()) {
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& c : d.comm_objects) {
      objects.push_back({{"id", c.id},
                         {"name", c.name},
                         {"dpt", c.dpt ? c.dpt->to_string() : "unknown"},
                         {"io", to_string(c.io)}});
    }
    devices.push_back({{"name", d.name}, {"address", d.address.to_string()}, {"commObjects", objects}});
  }
  return {{"devices", devices}};
}

inline PhysicalStructure physical_structure_from_json(const nlohmann::json& j) {
  try {
    std::vector<PhysicalDevice> devices;
    for (const auto& jd : j.at("devices")) {
      PhysicalDevice d;
      d.name = jd.at("name").get<std::string>();
      d.address = wire::IndividualAddress::parse(jd.at("address").get<std::string>());
      for (const auto& jc : jd.at("commObjects")) {
        PhysicalCommObject c;
        c.id = jc.at("id").get<int>();
        c.name = jc.at("name").get<std::string>();
        const auto dpt = jc.at("dpt").get<std::string>();
        if (dpt != "unknown") c.dpt = wire::DptId::parse(dpt);
        c.io = parse_io_type(jc.at("io").get<std::string>());
        d.comm_objects.push_back(std::move(c));
      }
      devices.push_back(std::move(d));
    }
    return PhysicalStructure(std::move(devices));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed physical structure: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Validation, path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline PhysicalStructure parse_physical_structure(const std::filesystem::path& path) {
  return physical_structure_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Content equality, insensitive to device and comm-object order.

namespace detail {

inline std::vector<PhysicalDevice> canonical(const PhysicalStructure& s) {
  auto devices = s.devices();
  for (auto& d : devices) {
    std::sort(d.comm_objects.begin(), d.comm_objects.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
  }
  std::sort(devices.begin(), devices.end(), [](const auto& a, const auto& b) { return a.address < b.address; });
  return devices;
}

}  // namespace detail

inline bool structures_equal(const PhysicalStructure& a, const PhysicalStructure& b) {
  return detail::canonical(a) == detail::canonical(b);
}

}  // namespace knxsafe
