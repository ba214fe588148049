#pragma once

// The on-disk app library and the installation pipeline behind the CLI.
//
//   <root>/generated/                 apps being developed, bindings, structure
//   <root>/app_library/<app>/         installed apps with their addresses.json
//   <root>/app_library/*.json         installed bindings, structure, address table
//   <root>/assignments/               assignment.csv and assignment.txt
//   <root>/logs/

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "knxsafe/compiler.hpp"
#include "knxsafe/lang/parser.hpp"
#include "knxsafe/lang/typecheck.hpp"
#include "knxsafe/runtime.hpp"
#include "knxsafe/stubs.hpp"
#include "knxsafe/verify/verifier.hpp"

namespace knxsafe {

namespace fs = std::filesystem;

inline constexpr const char* kHomeVariable = "KNXSAFE_HOME";
inline constexpr const char* kBindingsFile = "apps_bindings.json";
inline constexpr const char* kStructureFile = "physical_structure.json";
inline constexpr const char* kTableFile = "group_addresses.json";

inline nlohmann::json to_json(const GroupAddressTable& t) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : t.entries) {
    entries.push_back({{"address", e.address.to_string()},
                       {"valueType", to_string(e.type)},
                       {"dpt", e.dpt.to_string()},
                       {"commObject", e.comm_object},
                       {"members", e.members}});
  }
  return {{"entries", entries}};
}

/// Entries only; per-app channel addresses live in each app's addresses.json.
inline GroupAddressTable table_from_json(const nlohmann::json& j) {
  GroupAddressTable t;
  try {
    for (const auto& je : j.at("entries")) {
      t.entries.push_back({wire::GroupAddress::parse(je.at("address").get<std::string>()),
                           parse_value_type(je.at("valueType").get<std::string>()),
                           wire::DptId::parse(je.at("dpt").get<std::string>()), je.at("commObject").get<int>(),
                           je.at("members").get<std::vector<std::string>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed address table: ") + e.what());
  }
  return t;
}

/// An app project on disk: prototype plus program.
struct AppSource {
  AppPrototype proto;
  std::string source;
  fs::path dir;
};

inline AppSource load_app_source(const fs::path& dir) {
  const auto name = dir.filename().string();
  return {parse_app_prototype(dir / kPrototypeFile, name), [&] {
            std::ifstream in(dir / kMainFile, std::ios::binary);
            if (!in) throw Error(ErrorKind::Io, "cannot open " + (dir / kMainFile).string());
            std::ostringstream os;
            os << in.rdbuf();
            return os.str();
          }(),
          dir};
}

inline verify::VerifiedApp typecheck_app(const AppSource& a, const lang::ChannelAddresses& addrs = {}) {
  try {
    return {lang::typecheck(lang::parse_program(a.source), a.proto), addrs};
  } catch (const Error& e) {
    throw Error(e.kind(), a.proto.name + ": " + e.what());
  }
}

/// Holds an exclusive lock on the library for the lifetime of one command.
class LibraryLock {
 public:
  explicit LibraryLock(const fs::path& root) {
    fs::create_directories(root);
    fd_ = ::open((root / ".lock").c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) throw Error(ErrorKind::Io, "cannot open lock file in " + root.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error(ErrorKind::Conflict, "library " + root.string() + " is in use by another command");
    }
  }
  ~LibraryLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  LibraryLock(const LibraryLock&) = delete;
  LibraryLock& operator=(const LibraryLock&) = delete;

 private:
  int fd_ = -1;
};

class Library {
 public:
  explicit Library(fs::path root) : root_(std::move(root)) {}

  /// KNXSAFE_HOME, else the current directory.
  static Library from_environment() {
    const char* home = std::getenv(kHomeVariable);
    return Library(home != nullptr && *home != '\0' ? fs::path(home) : fs::current_path());
  }

  const fs::path& root() const { return root_; }
  fs::path generated() const { return root_ / "generated"; }
  fs::path installed_dir() const { return root_ / "app_library"; }
  fs::path assignments() const { return root_ / "assignments"; }
  fs::path logs() const { return root_ / "logs"; }

  std::vector<AppSource> generated_apps() const { return apps_in(generated()); }
  std::vector<AppSource> installed_apps() const { return apps_in(installed_dir()); }

  std::optional<PhysicalStructure> stored_structure() const {
    const auto f = installed_dir() / kStructureFile;
    if (!fs::exists(f)) return std::nullopt;
    return parse_physical_structure(f);
  }

  BindingSet stored_bindings() const {
    const auto f = installed_dir() / kBindingsFile;
    return fs::exists(f) ? binding_set_from_json(read_json_file(f)) : BindingSet{};
  }

  /// The compiled table with every installed app's channel addresses.
  GroupAddressTable table() const {
    const auto f = installed_dir() / kTableFile;
    GroupAddressTable t = fs::exists(f) ? table_from_json(read_json_file(f)) : GroupAddressTable{};
    for (const auto& a : installed_apps()) {
      t.apps[a.proto.name] = channel_addresses_from_json(read_json_file(a.dir / kAddressesFile));
    }
    return t;
  }

  /// Installed apps ready for the runtime, with unchecked calls served by `stubs`.
  std::vector<runtime::RuntimeApp> runtime_apps(StubRegistry& stubs) const {
    const auto t = table();
    std::vector<runtime::RuntimeApp> out;
    for (const auto& a : installed_apps()) {
      auto app = typecheck_app(a, t.apps.at(a.proto.name));
      auto impls = stubs.impls_for(a.proto.name, app.tp);
      out.push_back({std::move(app), std::move(impls)});
    }
    return out;
  }

 private:
  static std::vector<AppSource> apps_in(const fs::path& dir) {
    std::vector<AppSource> out;
    if (!fs::exists(dir)) return out;
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory() && fs::exists(e.path() / kPrototypeFile)) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) out.push_back(load_app_source(d));
    return out;
  }

  fs::path root_;
};

// ---------------------------------------------------------------------------
// Commands

inline fs::path generate_app(const Library& lib, const fs::path& prototype_file, const std::string& name) {
  validate_app_name(name);
  auto p = parse_app_prototype(prototype_file, name);
  for (const auto& a : lib.installed_apps()) {
    if (a.proto.name == name) throw Error(ErrorKind::Conflict, "an app named " + name + " is already installed");
  }
  return generate_app_skeleton(p, lib.root(), prototype_file.parent_path());
}

inline BindingSet generate_bindings(const Library& lib, const fs::path& physical_file) {
  const auto generated = lib.generated_apps();
  if (generated.empty()) throw Error(ErrorKind::NothingToBind, "no app in " + lib.generated().string());
  const auto phys = parse_physical_structure(physical_file);
  std::vector<AppPrototype> installing, installed;
  for (const auto& a : generated) installing.push_back(a.proto);
  for (const auto& a : lib.installed_apps()) installed.push_back(a.proto);
  auto b = generate_bindings(installing, installed, lib.stored_bindings(), lib.stored_structure(), phys);
  write_json_file(lib.generated() / kBindingsFile, to_json(b));
  write_json_file(lib.generated() / kStructureFile, to_json(phys));
  return b;
}

enum class Stage { Typecheck, Bindings, Addresses, Verification, Installed };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::Typecheck: return "typecheck";
    case Stage::Bindings: return "bindings";
    case Stage::Addresses: return "addresses";
    case Stage::Verification: return "verification";
    case Stage::Installed: return "installed";
  }
  return "?";
}

struct CompileResult {
  Stage stage = Stage::Installed;
  std::string report;
  std::vector<std::string> installed;

  bool accepted() const { return stage == Stage::Installed; }
};

namespace detail {

inline fs::path fresh_sibling(const fs::path& p, const std::string& tag) {
  std::random_device rd;
  for (;;) {
    auto c = p.parent_path() / ("." + p.filename().string() + "." + tag + "." + std::to_string(rd()));
    if (!fs::exists(c)) return c;
  }
}

/// Swaps `staged` into place of `target`. The old content is moved aside
/// first so that a crash leaves either the old or the new version.
inline void commit_dir(const fs::path& staged, const fs::path& target) {
  std::optional<fs::path> old;
  if (fs::exists(target)) {
    old = fresh_sibling(target, "old");
    fs::rename(target, *old);
  }
  fs::rename(staged, target);
  if (old) fs::remove_all(*old);
}

/// Builds a complete library and assignments directory from `apps`, then
/// swaps both in.
inline void install(const Library& lib, const std::vector<AppSource>& apps, const BindingSet& bindings,
                    const PhysicalStructure& phys, const GroupAddressTable& table) {
  const auto stage_lib = fresh_sibling(lib.installed_dir(), "staging");
  const auto stage_assign = fresh_sibling(lib.assignments(), "staging");
  try {
    fs::create_directories(stage_lib);
    std::map<std::string, fs::path> dirs;
    std::vector<AppPrototype> protos;
    for (const auto& a : apps) {
      const auto dest = stage_lib / a.proto.name;
      fs::create_directories(dest);
      for (const auto& e : fs::directory_iterator(a.dir)) {
        if (e.path().filename() == kAddressesFile) continue;
        fs::copy(e.path(), dest / e.path().filename(), fs::copy_options::recursive);
      }
      dirs[a.proto.name] = dest;
      protos.push_back(a.proto);
    }
    BindingSet kept;
    for (const auto& p : protos) kept[p.name] = bindings.at(p.name);
    write_json_file(stage_lib / kBindingsFile, to_json(kept));
    write_json_file(stage_lib / kStructureFile, to_json(phys));
    write_json_file(stage_lib / kTableFile, to_json(table));
    emit_artifacts(table, phys, protos, stage_assign, dirs);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(stage_lib, ec);
    fs::remove_all(stage_assign, ec);
    throw;
  }
  commit_dir(stage_lib, lib.installed_dir());
  commit_dir(stage_assign, lib.assignments());
}

/// Typecheck, bindings, addresses and verification for `keep` + `adding`.
/// Returns the failing stage, or Installed with the table filled in.
inline CompileResult check_pipeline(const std::vector<AppSource>& keep, const std::vector<AppSource>& adding,
                                    const BindingSet& bindings, const PhysicalStructure& phys,
                                    GroupAddressTable& table) {
  CompileResult r;
  std::ostringstream report;
  std::vector<AppSource> all = keep;
  all.insert(all.end(), adding.begin(), adding.end());

  std::vector<verify::VerifiedApp> apps;
  try {
    for (const auto& a : all) apps.push_back(typecheck_app(a));
  } catch (const Error& e) {
    r.stage = Stage::Typecheck;
    r.report = std::string(e.what()) + "\n";
    return r;
  }

  std::vector<AppPrototype> protos;
  for (const auto& a : all) protos.push_back(a.proto);
  CompatReport compat;
  try {
    compat = verify_bindings(bindings, protos, phys);
  } catch (const Error& e) {
    r.stage = Stage::Bindings;
    r.report = std::string(e.what()) + "\n";
    return r;
  }
  report << compat.text();
  if (!compat.ok()) {
    r.stage = Stage::Bindings;
    r.report = report.str();
    return r;
  }

  try {
    table = assign_group_addresses(bindings, protos, phys);
  } catch (const Error& e) {
    r.stage = Stage::Addresses;
    r.report = report.str() + e.what() + "\n";
    return r;
  }
  for (auto& a : apps) a.addrs = table.apps[a.name()];

  std::vector<const verify::VerifiedApp*> kept, added;
  for (std::size_t i = 0; i < apps.size(); ++i) (i < keep.size() ? kept : added).push_back(&apps[i]);
  const auto verdict = verify::verify_installation(kept, added);
  report << verdict.text();
  r.report = report.str();
  if (!verdict.accepted()) r.stage = Stage::Verification;
  for (const auto& a : all) r.installed.push_back(a.proto.name);
  return r;
}

}  // namespace detail

/// Compiles the generated apps together with the installed ones and, if
/// everything checks, installs them. On any failure nothing changes.
inline CompileResult compile(const Library& lib, const fs::path& physical_file) {
  const auto generated = lib.generated_apps();
  const auto installed = lib.installed_apps();
  for (const auto& g : generated) {
    for (const auto& i : installed) {
      if (g.proto.name == i.proto.name) {
        throw Error(ErrorKind::Conflict, "an app named " + g.proto.name + " is already installed");
      }
    }
  }
  const auto bindings_file = lib.generated() / kBindingsFile;
  if (!fs::exists(bindings_file)) {
    throw Error(ErrorKind::IncompleteBindings, "no " + bindings_file.string() + "; run generateBindings first");
  }
  const auto bindings = binding_set_from_json(read_json_file(bindings_file));
  const auto phys = parse_physical_structure(physical_file);

  GroupAddressTable table;
  auto r = detail::check_pipeline(installed, generated, bindings, phys, table);
  if (!r.accepted()) return r;
  std::vector<AppSource> all = installed;
  all.insert(all.end(), generated.begin(), generated.end());
  detail::install(lib, all, bindings, phys, table);
  for (const auto& g : generated) fs::remove_all(g.dir);
  fs::remove(bindings_file);
  fs::remove(lib.generated() / kStructureFile);
  return r;
}

/// Removes an app after checking that the remaining ones still verify
/// against each other.
inline CompileResult remove_app(const Library& lib, const std::string& name) {
  auto installed = lib.installed_apps();
  auto it = std::find_if(installed.begin(), installed.end(), [&](const auto& a) { return a.proto.name == name; });
  if (it == installed.end()) throw Error(ErrorKind::NotFound, "no installed app named " + name);
  installed.erase(it);
  const auto phys = lib.stored_structure().value_or(PhysicalStructure{});
  auto bindings = lib.stored_bindings();
  bindings.erase(name);

  GroupAddressTable table;
  // Every remaining app is re-checked: the invariant conjunction changed.
  auto r = detail::check_pipeline({}, installed, bindings, phys, table);
  if (!r.accepted()) return r;
  detail::install(lib, installed, bindings, phys, table);
  return r;
}

struct ListedApp {
  std::string name;
  Permission permission;
  int timer;
};

inline std::vector<ListedApp> list_apps(const Library& lib) {
  std::vector<ListedApp> out;
  for (const auto& a : lib.installed_apps()) out.push_back({a.proto.name, a.proto.permission, a.proto.timer});
  return out;
}

}  // namespace knxsafe
