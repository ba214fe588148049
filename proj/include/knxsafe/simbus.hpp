#pragma once

#include <deque>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "knxsafe/runtime.hpp"
#include "knxsafe/stubs.hpp"

namespace knxsafe::sim {

using runtime::Millis;

struct TraceEntry {
  Millis time{0};
  wire::Telegram telegram;
};

inline std::string format_telegram(const wire::Telegram& t) {
  std::ostringstream out;
  out << t.source.to_string() << " -> ";
  if (const auto* ga = std::get_if<wire::GroupAddress>(&t.destination)) {
    out << wire::GroupAddress::from_raw(ga->raw(), wire::GroupStyle::ThreeLevel).to_string();
  } else {
    out << std::get<wire::IndividualAddress>(t.destination).to_string();
  }
  if (auto msg = wire::as_group_message(t)) {
    out << (msg->service == wire::Service::Read ? " read" : msg->service == wire::Service::Write ? " write" : " response");
    for (auto b : msg->data) out << ' ' << std::hex << std::setw(2) << std::setfill('0') << int(b);
  } else {
    for (auto b : t.payload) out << ' ' << std::hex << std::setw(2) << std::setfill('0') << int(b);
  }
  return out.str();
}

/// Deterministic in-memory bus. Publications are serialized: a handler that
/// publishes from inside a delivery has its telegram queued behind the one
/// being delivered. Group reads of a known address are answered at once by
/// the bus itself on behalf of the device.
class SimBus : public runtime::BusPort {
 public:
  using Handler = std::function<void(const wire::Telegram&)>;

  static inline const wire::IndividualAddress kResponder = wire::IndividualAddress(0, 0, 1);

  void subscribe(Handler h) {
    std::lock_guard lock(mu_);
    handlers_.push_back(std::move(h));
  }

  void publish(const wire::Telegram& t) {
    wire::encode_telegram(t);  // rejects what could not go on the wire
    std::lock_guard lock(mu_);
    queue_.push_back(t);
    if (delivering_) return;
    delivering_ = true;
    while (!queue_.empty()) {
      auto next = std::move(queue_.front());
      queue_.pop_front();
      deliver(next);
    }
    delivering_ = false;
  }

  /// A raw frame as it would arrive from the wire.
  void publish_frame(std::span<const std::uint8_t> frame) { publish(wire::decode_telegram(frame)); }

  std::optional<std::vector<std::uint8_t>> read(const wire::IndividualAddress& self,
                                                const wire::GroupAddress& ga) override {
    publish(wire::make_group_telegram(self, ga, wire::Service::Read));
    return value(ga);
  }

  void send(const wire::Telegram& t) override { publish(t); }

  std::optional<std::vector<std::uint8_t>> value(const wire::GroupAddress& ga) const {
    std::lock_guard lock(mu_);
    auto it = store_.find(ga);
    if (it == store_.end()) return std::nullopt;
    return it->second;
  }

  /// Sets a value without any traffic, as if the device had always held it.
  void preset(const wire::GroupAddress& ga, std::vector<std::uint8_t> data) {
    std::lock_guard lock(mu_);
    store_[ga] = std::move(data);
  }

  void advance(Millis d) {
    std::lock_guard lock(mu_);
    now_ += d;
  }
  Millis now() const { return now_; }

  std::vector<TraceEntry> trace() const {
    std::lock_guard lock(mu_);
    return trace_;
  }

  std::string trace_text() const {
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& e : trace_) out += "t=" + std::to_string(e.time.count()) + "ms " + format_telegram(e.telegram) + "\n";
    return out;
  }

 private:
  void deliver(const wire::Telegram& t) {
    trace_.push_back({now_, t});
    if (auto msg = wire::as_group_message(t)) {
      if (msg->service == wire::Service::Read) {
        if (auto it = store_.find(msg->address); it != store_.end()) {
          queue_.push_back(wire::make_group_telegram(kResponder, msg->address, wire::Service::Response, it->second));
        }
      } else {
        store_[msg->address] = msg->data;
      }
    }
    for (const auto& h : handlers_) h(t);
  }

  mutable std::recursive_mutex mu_;
  std::vector<Handler> handlers_;
  std::deque<wire::Telegram> queue_;
  std::map<wire::GroupAddress, std::vector<std::uint8_t>> store_;
  std::vector<TraceEntry> trace_;
  Millis now_{0};
  bool delivering_ = false;
};

// ---------------------------------------------------------------------------
// Scenarios

struct Inject {
  std::string target;
  Value value;
};
struct Advance {
  Millis by;
};
struct ExpectValue {
  std::string target;
  Value value;
};
struct ExpectKilled {
  std::string app;
};
struct ExpectAlive {
  std::string app;
};
struct ExpectAllStopped {};
struct SetStub {
  std::string function;
  Value value;
};
struct ExpectCalls {
  std::string function;
  std::size_t count;
};

using Step = std::variant<Inject, Advance, ExpectValue, ExpectKilled, ExpectAlive, ExpectAllStopped, SetStub, ExpectCalls>;

struct Scenario {
  std::string name;
  std::vector<std::pair<std::string, Value>> initial;
  std::vector<Step> steps;
};

inline Value json_value(const nlohmann::json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return Rational(j.get<long long>());
  if (j.is_number()) return rational_from_double(j.get<double>());
  if (j.is_string()) return j.get<std::string>();
  throw Error(ErrorKind::Validation, "scenario value " + j.dump() + " is not a bool, number or string");
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  try {
    s.name = j.value("name", "");
    if (j.contains("initial")) {
      for (const auto& [k, v] : j.at("initial").items()) s.initial.emplace_back(k, json_value(v));
    }
    for (const auto& st : j.at("steps")) {
      if (st.contains("inject")) {
        s.steps.push_back(Inject{st.at("inject").get<std::string>(), json_value(st.at("value"))});
      } else if (st.contains("advance")) {
        s.steps.push_back(Advance{Millis(static_cast<std::int64_t>(st.at("advance").get<double>() * 1000))});
      } else if (st.contains("expectValue")) {
        s.steps.push_back(ExpectValue{st.at("expectValue").get<std::string>(), json_value(st.at("value"))});
      } else if (st.contains("expectKilled")) {
        s.steps.push_back(ExpectKilled{st.at("expectKilled").get<std::string>()});
      } else if (st.contains("expectAlive")) {
        s.steps.push_back(ExpectAlive{st.at("expectAlive").get<std::string>()});
      } else if (st.contains("expectAllStopped")) {
        s.steps.push_back(ExpectAllStopped{});
      } else if (st.contains("setStub")) {
        s.steps.push_back(SetStub{st.at("setStub").get<std::string>(), json_value(st.at("value"))});
      } else if (st.contains("expectCalls")) {
        s.steps.push_back(ExpectCalls{st.at("expectCalls").get<std::string>(), st.at("count").get<std::size_t>()});
      } else {
        throw Error(ErrorKind::Validation, "unknown scenario step " + st.dump());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed scenario: ") + e.what());
  }
  return s;
}

/// A target is a group address ("0/0/3") or app.INSTANCE.channel.
inline const GroupAddressEntry& resolve_target(const GroupAddressTable& table, const std::string& target) {
  std::optional<wire::GroupAddress> ga;
  if (target.find('/') != std::string::npos) {
    ga = wire::GroupAddress::parse(target);
  } else {
    const auto d1 = target.find('.');
    const auto d2 = target.rfind('.');
    if (d1 != std::string::npos && d2 != d1) {
      auto app = table.apps.find(target.substr(0, d1));
      if (app != table.apps.end()) {
        auto it = app->second.find({target.substr(d1 + 1, d2 - d1 - 1), target.substr(d2 + 1)});
        if (it != app->second.end()) ga = it->second;
      }
    }
  }
  const auto* e = ga ? table.find(*ga) : nullptr;
  if (e == nullptr) throw Error(ErrorKind::Resolution, "scenario target '" + target + "' is not in the address table");
  return *e;
}

inline std::vector<std::uint8_t> encode_value(const GroupAddressEntry& e, const Value& v) {
  Value typed = v;
  if (e.type == ValueType::Real && std::holds_alternative<bool>(v)) {
    throw Error(ErrorKind::Type, "value for " + e.address.to_string() + " must be a number");
  }
  if (!value_has_type(typed, e.type)) {
    throw Error(ErrorKind::Type, "value " + format_value(v) + " for " + e.address.to_string() + " is not a " +
                                     to_string(e.type));
  }
  return wire::encode_dpt(to_dpt_value(typed, e.dpt));
}

/// Presets every table address: the scenario's initial values, defaults elsewhere.
inline void seed_bus(SimBus& bus, const GroupAddressTable& table, const Scenario& s) {
  for (const auto& e : table.entries) bus.preset(e.address, encode_value(e, default_value(e.type)));
  for (const auto& [target, v] : s.initial) {
    const auto& e = resolve_target(table, target);
    bus.preset(e.address, encode_value(e, v));
  }
}

struct ScenarioReport {
  bool pass = true;
  std::optional<std::size_t> failed_step;
  std::string message;
  std::string trace;

  std::string text() const {
    std::string out = pass ? "PASS" : "FAIL at step " + std::to_string(*failed_step) + ": " + message;
    return out + "\n" + trace;
  }
};

inline constexpr const char* kInjectSource = "1.1.200";

/// Any sender of telegrams onto the bus: the bus itself, or a UDP client.
using Publisher = std::function<void(const wire::Telegram&)>;

/// Runs the steps against a runtime already initialized on `bus`. `pump`
/// lets a remote runtime catch up after each publication.
inline ScenarioReport run_scenario(const Scenario& s, SimBus& bus, runtime::Runtime& rt, StubRegistry* stubs = nullptr,
                                   const Publisher& publish = {}, const std::function<void()>& pump = {}) {
  ScenarioReport r;
  const auto source = wire::IndividualAddress::parse(kInjectSource);
  const auto& table = rt.table();
  auto fail = [&](std::size_t i, std::string msg) {
    r.pass = false;
    r.failed_step = i;
    r.message = std::move(msg);
  };
  for (std::size_t i = 0; i < s.steps.size() && r.pass; ++i) {
    const auto& step = s.steps[i];
    try {
      if (const auto* st = std::get_if<Inject>(&step)) {
        const auto& e = resolve_target(table, st->target);
        auto t = wire::make_group_telegram(source, e.address, wire::Service::Write, encode_value(e, st->value));
        if (publish) {
          publish(t);
        } else {
          bus.publish(t);
        }
        if (pump) pump();
      } else if (const auto* st = std::get_if<Advance>(&step)) {
        bus.advance(st->by);
        rt.advance(st->by);
        if (pump) pump();
      } else if (const auto* st = std::get_if<ExpectValue>(&step)) {
        const auto& e = resolve_target(table, st->target);
        auto have = bus.value(e.address);
        // Compare on the wire so that DPT rounding cancels out.
        const auto want = encode_value(e, st->value);
        if (!have || *have != want) {
          const std::string seen = have ? format_value(from_dpt_value(wire::decode_dpt(e.dpt, *have))) : "nothing";
          fail(i, st->target + " expected " + format_value(st->value) + ", observed " + seen);
        }
      } else if (const auto* st = std::get_if<ExpectKilled>(&step)) {
        const auto* a = rt.app(st->app);
        if (a == nullptr) throw Error(ErrorKind::NotFound, "no app named " + st->app);
        if (a->alive) fail(i, st->app + " expected dead, observed alive");
      } else if (const auto* st = std::get_if<ExpectAlive>(&step)) {
        const auto* a = rt.app(st->app);
        if (a == nullptr) throw Error(ErrorKind::NotFound, "no app named " + st->app);
        if (!a->alive) fail(i, st->app + " expected alive, observed dead");
      } else if (std::holds_alternative<ExpectAllStopped>(step)) {
        for (const auto& a : rt.apps()) {
          if (a.alive) {
            fail(i, a.name + " still alive");
            break;
          }
        }
      } else if (const auto* st = std::get_if<SetStub>(&step)) {
        if (stubs == nullptr) throw Error(ErrorKind::Configuration, "scenario sets a stub but none are attached");
        stubs->set_return(st->function, st->value);
      } else if (const auto* st = std::get_if<ExpectCalls>(&step)) {
        if (stubs == nullptr) throw Error(ErrorKind::Configuration, "scenario counts calls but no stubs are attached");
        const auto n = stubs->count(st->function);
        if (n != st->count) {
          fail(i, st->function + " expected " + std::to_string(st->count) + " calls, observed " + std::to_string(n));
        }
      }
    } catch (const Error& e) {
      fail(i, e.what());
    }
  }
  r.trace = bus.trace_text();
  return r;
}

}  // namespace knxsafe::sim
