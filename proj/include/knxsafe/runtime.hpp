#pragma once

#include <algorithm>
#include <chrono>
#include <deque>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "knxsafe/compiler.hpp"
#include "knxsafe/lang/interp.hpp"
#include "knxsafe/verify/verifier.hpp"

namespace knxsafe::runtime {

using Millis = std::chrono::milliseconds;

/// What the runtime needs from the bus. read() issues a group read from
/// `self` and returns the data of the response, or nullopt on timeout.
class BusPort {
 public:
  virtual ~BusPort() = default;
  virtual std::optional<std::vector<std::uint8_t>> read(const wire::IndividualAddress& self,
                                                        const wire::GroupAddress& ga) = 0;
  virtual void send(const wire::Telegram& t) = 0;
};

struct TelegramReceived {
  wire::GroupAddress address;
  Value value;
};
struct TimerFired {
  std::string app;
};
struct ShutdownRequested {};

using RuntimeEvent = std::variant<TelegramReceived, TimerFired, ShutdownRequested>;

inline std::string describe(const RuntimeEvent& ev) {
  if (const auto* t = std::get_if<TelegramReceived>(&ev)) {
    return "telegram " + t->address.to_string() + "=" + format_value(t->value);
  }
  if (const auto* t = std::get_if<TimerFired>(&ev)) return "timer " + t->app;
  return "shutdown";
}

struct RuntimeApp {
  verify::VerifiedApp app;
  lang::UncheckedImpls impls;
};

struct AppRecord {
  std::string name;
  bool privileged = false;
  int timer = 0;
  verify::VerifiedApp app;
  AppState state;
  bool alive = true;
  lang::UncheckedImpls impls;
};

enum class Verdict { Committed, Restored, Ignored };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Committed: return "committed";
    case Verdict::Restored: return "restored";
    case Verdict::Ignored: return "ignored";
  }
  return "?";
}

struct Write {
  wire::GroupAddress address;
  Value value;
  bool operator==(const Write&) const = default;
};

struct EventOutcome {
  Millis time{0};
  RuntimeEvent event;
  std::vector<std::string> executed;
  std::vector<std::string> killed;
  Verdict verdict = Verdict::Committed;
  std::vector<Write> writes;

  std::string log_line() const {
    auto list = [](const std::vector<std::string>& v) {
      std::string s = "[";
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
      return s + "]";
    };
    std::vector<std::string> w;
    for (const auto& x : writes) w.push_back(x.address.to_string() + "=" + format_value(x.value));
    std::ostringstream out;
    out << "t=" << time.count() << "ms event=" << describe(event) << " apps=" << list(executed)
        << " killed=" << list(killed) << " verdict=" << to_string(verdict) << " writes=" << list(w);
    return out.str();
  }
};

struct Options {
  wire::IndividualAddress self = wire::IndividualAddress(15, 15, 250);
  std::ostream* log = nullptr;
};

class Runtime {
 public:
  Runtime(std::vector<RuntimeApp> apps, const GroupAddressTable& table, BusPort& bus, Options opts = {})
      : table_(table), bus_(&bus), opts_(opts) {
    for (auto& a : apps) {
      AppRecord r;
      r.name = a.app.name();
      r.privileged = a.app.tp.proto.privileged();
      r.timer = a.app.tp.proto.timer;
      r.app = std::move(a.app);
      r.impls = std::move(a.impls);
      apps_.push_back(std::move(r));
    }
    std::sort(apps_.begin(), apps_.end(), [](const AppRecord& x, const AppRecord& y) {
      return std::pair(x.privileged, x.name) < std::pair(y.privileged, y.name);
    });
    for (const auto& e : table_.entries) {
      auto data = bus_->read(opts_.self, e.address);
      if (!data) throw Error(ErrorKind::Startup, "read of " + e.address.to_string() + " timed out");
      store_[e.address] = decode(e, *data);
    }
    bus_values_ = store_;
    last_valid_ = store_;
    for (const auto& a : apps_) {
      if (a.timer > 0) timers_[a.name] = Millis(std::int64_t{a.timer} * 1000);
    }
    log("t=0ms start apps=" + std::to_string(apps_.size()) + " addresses=" + std::to_string(store_.size()));
  }

  const GroupAddressTable& table() const { return table_; }
  const wire::IndividualAddress& self() const { return opts_.self; }
  const PhysicalStateStore& store() const { return store_; }
  const PhysicalStateStore& last_valid() const { return last_valid_; }
  const std::vector<AppRecord>& apps() const { return apps_; }
  const std::vector<EventOutcome>& history() const { return history_; }
  Millis now() const { return now_; }
  bool stopped() const { return stopped_; }

  const AppRecord* app(const std::string& name) const {
    for (const auto& a : apps_) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }

  bool check_conditions(const std::map<std::string, AppState>& states, const PhysicalStateStore& phys) const {
    for (const auto& a : apps_) {
      if (!a.alive) continue;
      auto it = states.find(a.name);
      const AppState& st = it == states.end() ? a.state : it->second;
      try {
        if (!lang::evaluate_invariant(a.app.tp, a.app.addrs, st, phys)) return false;
      } catch (const Error&) {
        return false;
      }
    }
    return true;
  }

  bool check_conditions() const { return check_conditions({}, store_); }

  std::vector<const AppRecord*> trigger_set(const RuntimeEvent& ev) const {
    std::vector<const AppRecord*> out;
    for (const auto& a : apps_) {
      if (!a.alive) continue;
      if (const auto* t = std::get_if<TelegramReceived>(&ev)) {
        for (const auto& [ch, ga] : a.app.addrs) {
          if (ga == t->address) {
            out.push_back(&a);
            break;
          }
        }
      } else if (const auto* t = std::get_if<TimerFired>(&ev)) {
        if (t->app == a.name) out.push_back(&a);
      }
    }
    return out;
  }

  /// Bus receiver entry point. Our own telegrams and anything that is not a
  /// group write or response to a known address are dropped.
  void on_telegram(const wire::Telegram& t) {
    if (t.source == opts_.self) return;
    auto msg = wire::as_group_message(t);
    if (!msg || msg->service == wire::Service::Read) return;
    const auto* e = table_.find(msg->address);
    if (e == nullptr) return;
    Value v;
    try {
      v = decode(*e, msg->data);
    } catch (const Error& err) {
      log("t=" + std::to_string(now_.count()) + "ms dropped telegram: " + err.what());
      return;
    }
    enqueue(TelegramReceived{msg->address, std::move(v)});
  }

  /// Events are processed strictly one at a time. An event raised while
  /// another is being processed (a device answering our write, say) waits
  /// in the queue.
  void enqueue(RuntimeEvent ev) {
    queue_.push_back(std::move(ev));
    if (busy_) return;
    busy_ = true;
    while (!queue_.empty()) {
      auto next = std::move(queue_.front());
      queue_.pop_front();
      try {
        process_event(next);
      } catch (...) {
        busy_ = false;
        throw;
      }
    }
    busy_ = false;
  }

  /// Moves the virtual clock, firing due timers in time order; ties go by
  /// execution order.
  void advance(Millis delta) {
    const Millis target = now_ + delta;
    for (;;) {
      std::optional<Millis> due;
      for (const auto& [name, at] : timers_) {
        if (at <= target && (!due || at < *due)) due = at;
      }
      if (!due) break;
      now_ = *due;
      for (const auto& a : apps_) {
        auto it = timers_.find(a.name);
        if (it == timers_.end() || it->second != *due) continue;
        it->second += Millis(std::int64_t{a.timer} * 1000);
        enqueue(TimerFired{a.name});
      }
    }
    now_ = target;
  }

  void shutdown() { enqueue(ShutdownRequested{}); }

 private:
  Value decode(const GroupAddressEntry& e, const std::vector<std::uint8_t>& data) const {
    Value v = from_dpt_value(wire::decode_dpt(e.dpt, data));
    if (!value_has_type(v, e.type)) {
      throw Error(ErrorKind::RuntimeType, "value at " + e.address.to_string() + " is not a " + to_string(e.type));
    }
    return v;
  }

  void log(const std::string& line) {
    if (opts_.log != nullptr) *opts_.log << line << std::endl;
  }

  AppRecord& record(const std::string& name) {
    for (auto& a : apps_) {
      if (a.name == name) return a;
    }
    throw Error(ErrorKind::NotFound, "no app named " + name);
  }

  void kill(AppRecord& a, EventOutcome& out) {
    a.alive = false;
    timers_.erase(a.name);
    out.killed.push_back(a.name);
  }

  void send(const wire::GroupAddress& ga, const Value& v, EventOutcome& out) {
    const auto* e = table_.find(ga);
    const auto data = wire::encode_dpt(to_dpt_value(v, e->dpt));
    bus_->send(wire::make_group_telegram(opts_.self, ga, wire::Service::Write, data));
    bus_values_[ga] = v;
    out.writes.push_back({ga, v});
  }

  void process_event(const RuntimeEvent& ev) {
    EventOutcome out{now_, ev, {}, {}, Verdict::Committed, {}};
    if (stopped_) {
      out.verdict = Verdict::Ignored;
      finish(std::move(out));
      return;
    }
    if (std::holds_alternative<ShutdownRequested>(ev)) {
      stopped_ = true;
      timers_.clear();
      out.verdict = Verdict::Ignored;
      finish(std::move(out));
      return;
    }
    if (const auto* t = std::get_if<TelegramReceived>(&ev)) {
      store_[t->address] = t->value;
      bus_values_[t->address] = t->value;
    }

    const PhysicalStateStore snapshot = store_;
    const bool v0 = check_conditions({}, snapshot);

    struct Accepted {
      std::string app;
      lang::IterationResult result;
    };
    std::vector<Accepted> accepted;
    for (const auto* ptr : trigger_set(ev)) {
      auto& a = record(ptr->name);
      out.executed.push_back(a.name);
      std::optional<lang::IterationResult> r;
      try {
        r = lang::interpret_iteration(a.app.tp, a.app.addrs, a.state, snapshot, a.impls);
      } catch (const std::exception&) {
        // A failing unchecked call counts as a violation by this app.
        kill(a, out);
        continue;
      }
      if (v0 && !check_conditions({{a.name, r->app}}, r->store)) {
        kill(a, out);
        continue;
      }
      accepted.push_back({a.name, std::move(*r)});
    }

    PhysicalStateStore merged = snapshot;
    std::map<std::string, AppState> states;
    for (const auto& acc : accepted) {
      for (const auto& ga : acc.result.written) merged[ga] = acc.result.store.at(ga);
      states[acc.app] = acc.result.app;
    }

    if (check_conditions(states, merged)) {
      store_ = merged;
      last_valid_ = merged;
      for (auto& [name, st] : states) record(name).state = st;
    } else {
      store_ = last_valid_;
      for (auto& a : apps_) {
        if (a.alive) kill(a, out);
      }
      out.verdict = Verdict::Restored;
    }
    for (const auto& [ga, v] : store_) {
      auto it = bus_values_.find(ga);
      if (it == bus_values_.end() || it->second != v) send(ga, v, out);
    }
    finish(std::move(out));
  }

  void finish(EventOutcome out) {
    log(out.log_line());
    history_.push_back(std::move(out));
  }

  GroupAddressTable table_;
  BusPort* bus_;
  Options opts_;
  std::vector<AppRecord> apps_;
  PhysicalStateStore store_, bus_values_, last_valid_;
  std::map<std::string, Millis> timers_;  // next firing time per app
  std::deque<RuntimeEvent> queue_;
  std::vector<EventOutcome> history_;
  Millis now_{0};
  bool busy_ = false;
  bool stopped_ = false;
};

}  // namespace knxsafe::runtime
