#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "knxsafe/lang/interp.hpp"
#include "knxsafe/lang/typecheck.hpp"

namespace knxsafe {

/// In-memory stand-ins for external services. Every declared unchecked
/// function of an app gets an implementation that records the call and
/// returns a configurable value (the type default unless set).
class StubRegistry {
 public:
  struct Call {
    std::string app;
    lang::UncheckedCall call;
  };

  void set_return(const std::string& fn, Value v) { returns_[fn] = std::move(v); }
  void set_failing(const std::string& fn, bool failing = true) {
    if (failing) {
      failing_.insert(fn);
    } else {
      failing_.erase(fn);
    }
  }

  /// Observer for every call, e.g. a log file.
  void on_call(std::function<void(const Call&)> fn) { observer_ = std::move(fn); }

  const std::vector<Call>& calls() const { return calls_; }

  std::size_t count(const std::string& fn) const {
    std::size_t n = 0;
    for (const auto& c : calls_) n += c.call.name == fn;
    return n;
  }

  lang::UncheckedImpls impls_for(const std::string& app, const lang::TypedProgram& tp) {
    lang::UncheckedImpls out;
    for (const auto& d : tp.program.unchecked) {
      const auto ret = d.return_type;
      out[d.name] = [this, app, ret](const lang::UncheckedCall& c) -> std::optional<Value> {
        calls_.push_back({app, c});
        if (observer_) observer_(calls_.back());
        if (failing_.count(c.name)) throw Error(ErrorKind::Configuration, c.name + " failed");
        if (!ret) return std::nullopt;
        auto it = returns_.find(c.name);
        return it == returns_.end() ? default_value(*ret) : it->second;
      };
    }
    return out;
  }

 private:
  std::vector<Call> calls_;
  std::map<std::string, Value> returns_;
  std::set<std::string> failing_;
  std::function<void(const Call&)> observer_;
};

}  // namespace knxsafe
