#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "knxsafe/library.hpp"
#include "knxsafe/simbus.hpp"
#include "knxsafe/udp.hpp"

using namespace knxsafe;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Io:
    case ErrorKind::Startup:
    case ErrorKind::NothingToBind:
    case ErrorKind::NothingToRun:
      return 2;
    default:
      return 1;
  }
}

std::string wall_time() {
  const auto t = std::time(nullptr);
  std::ostringstream os;
  os << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

int report(const CompileResult& r) {
  std::cout << r.report;
  if (r.accepted()) {
    std::cout << "installed:";
    for (const auto& n : r.installed) std::cout << " " << n;
    std::cout << "\n";
    return 0;
  }
  std::cerr << "rejected at " << to_string(r.stage) << "; library unchanged\n";
  return 1;
}

Value parse_cli_value(const std::string& text) {
  if (text == "true" || text == "True") return true;
  if (text == "false" || text == "False") return false;
  try {
    return parse_decimal(text);
  } catch (const Error&) {
    return text;
  }
}

int cmd_run(const Library& lib, const std::string& address, double duration) {
  StubRegistry stubs;
  auto apps = lib.runtime_apps(stubs);
  if (apps.empty()) throw Error(ErrorKind::NothingToRun, "no installed app in " + lib.installed_dir().string());
  fs::create_directories(lib.logs());
  std::ofstream log(lib.logs() / "runtime.log", std::ios::app);
  if (!log) throw Error(ErrorKind::Io, "cannot write " + (lib.logs() / "runtime.log").string());
  log << "started " << wall_time() << " bus=" << address << std::endl;
  stubs.on_call([&log](const StubRegistry::Call& c) {
    std::string args;
    for (const auto& a : c.call.args) args += (args.empty() ? "" : ", ") + format_value(a);
    log << "stub " << c.app << " " << c.call.name << "(" << args << ")" << std::endl;
  });

  udp::BusClient client(udp::parse_endpoint(address));
  runtime::Options opts;
  opts.log = &log;
  runtime::Runtime rt(std::move(apps), lib.table(), client, opts);
  client.on_telegram([&rt](const wire::Telegram& t) { rt.on_telegram(t); });
  std::cout << "running " << rt.apps().size() << " apps on " << address << std::endl;

  const auto start = std::chrono::steady_clock::now();
  auto last = start;
  while (!g_stop) {
    client.poll(std::chrono::milliseconds(50));
    const auto now = std::chrono::steady_clock::now();
    rt.advance(std::chrono::duration_cast<runtime::Millis>(now - last));
    last = now;
    if (duration > 0 && now - start >= std::chrono::duration<double>(duration)) break;
  }
  rt.shutdown();
  log << "stopped " << wall_time() << std::endl;
  return 0;
}

int cmd_simbus(const Library& lib, const std::string& address, const std::vector<std::string>& sets, double duration) {
  sim::SimBus bus;
  const auto table = lib.table();
  sim::seed_bus(bus, table, {});
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Validation, "--set expects target=value, got '" + s + "'");
    const auto& e = sim::resolve_target(table, s.substr(0, eq));
    bus.preset(e.address, sim::encode_value(e, parse_cli_value(s.substr(eq + 1))));
  }
  udp::BusEndpoint endpoint(bus, udp::parse_endpoint(address), &std::cerr);
  bus.subscribe([](const wire::Telegram& t) { std::cout << sim::format_telegram(t) << std::endl; });
  std::cout << "simbus listening on port " << endpoint.port() << std::endl;
  const auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    endpoint.poll(std::chrono::milliseconds(50));
    if (duration > 0 && std::chrono::steady_clock::now() - start >= std::chrono::duration<double>(duration)) break;
  }
  return 0;
}

int cmd_scenario(const Library& lib, const fs::path& file) {
  const auto scenario = sim::scenario_from_json(read_json_file(file));
  StubRegistry stubs;
  auto apps = lib.runtime_apps(stubs);
  const auto table = lib.table();
  sim::SimBus bus;
  sim::seed_bus(bus, table, scenario);
  runtime::Runtime rt(std::move(apps), table, bus);
  bus.subscribe([&rt](const wire::Telegram& t) { rt.on_telegram(t); });
  const auto r = sim::run_scenario(scenario, bus, rt, &stubs);
  std::cout << r.text();
  return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verified smart-building automation: develop, compile, verify and run apps."};
  app.require_subcommand(1);

  std::string proto_file, name;
  auto* gen_app = app.add_subcommand("generateApp", "Create an app project in generated/ from a prototype file");
  gen_app->add_option("-d,--devices", proto_file, "app_prototypical_structure.json")->required();
  gen_app->add_option("-n,--name", name, "app name")->required();

  std::string physical_file;
  auto* gen_bind = app.add_subcommand("generateBindings", "Write generated/apps_bindings.json for the physical structure");
  gen_bind->add_option("-f,--file", physical_file, "physical structure")->required();

  auto* compile_cmd = app.add_subcommand("compile", "Compile, verify and install the generated apps");
  compile_cmd->add_option("-f,--file", physical_file, "physical structure")->required();

  std::string address;
  double duration = 0;
  auto* run = app.add_subcommand("run", "Run the installed apps against a bus");
  run->add_option("-a,--address", address, "bus endpoint host:port")->required();
  run->add_option("--duration", duration, "stop after this many seconds");

  app.add_subcommand("listApps", "List installed apps");

  auto* remove = app.add_subcommand("removeApp", "Uninstall an app after re-verifying the others");
  remove->add_option("-n,--name,name", name, "app name")->required();

  std::vector<std::string> sets;
  auto* simbus = app.add_subcommand("simbus", "Serve a simulated bus over UDP");
  simbus->add_option("-a,--address", address, "bind host:port")->required();
  simbus->add_option("--set", sets, "initial value, target=value");
  simbus->add_option("--duration", duration, "stop after this many seconds");

  std::string scenario_file;
  auto* scenario = app.add_subcommand("scenario", "Run the installed apps through a scenario on a simulated bus");
  scenario->add_option("-f,--file", scenario_file, "scenario JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    const auto lib = Library::from_environment();
    if (*gen_app) {
      LibraryLock lock(lib.root());
      std::cout << "created " << generate_app(lib, proto_file, name).string() << "\n";
      return 0;
    }
    if (*gen_bind) {
      LibraryLock lock(lib.root());
      generate_bindings(lib, physical_file);
      std::cout << "wrote " << (lib.generated() / kBindingsFile).string() << "\n";
      return 0;
    }
    if (*compile_cmd) {
      LibraryLock lock(lib.root());
      return report(compile(lib, physical_file));
    }
    if (*remove) {
      LibraryLock lock(lib.root());
      return report(remove_app(lib, name));
    }
    if (app.got_subcommand("listApps")) {
      for (const auto& a : list_apps(lib)) {
        std::cout << a.name << "\t" << (a.permission == Permission::Privileged ? "privileged" : "notPrivileged")
                  << "\ttimer=" << a.timer << "\n";
      }
      return 0;
    }
    if (*run) return cmd_run(lib, address, duration);
    if (*simbus) return cmd_simbus(lib, address, sets, duration);
    if (*scenario) return cmd_scenario(lib, scenario_file);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
