#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace knxsafe {

enum class ErrorKind {
  Range,
  Decode,
  Encode,
  Integrity,
  Framing,
  Validation,
  Capacity,
  UnsupportedDevice,
  Naming,
  Conflict,
  Syntax,
  UnsupportedConstruct,
  Purity,
  SideEffect,
  Resolution,
  Linearity,
  Type,
  Configuration,
  RuntimeType,
  IncompleteBindings,
  InternalSoundness,
  Startup,
  NotFound,
  NothingToBind,
  NothingToRun,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Range: return "range";
    case ErrorKind::Decode: return "decode";
    case ErrorKind::Encode: return "encode";
    case ErrorKind::Integrity: return "integrity";
    case ErrorKind::Framing: return "framing";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::UnsupportedDevice: return "unsupported-device";
    case ErrorKind::Naming: return "naming";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Syntax: return "syntax";
    case ErrorKind::UnsupportedConstruct: return "unsupported-construct";
    case ErrorKind::Purity: return "purity";
    case ErrorKind::SideEffect: return "side-effect";
    case ErrorKind::Resolution: return "resolution";
    case ErrorKind::Linearity: return "linearity";
    case ErrorKind::Type: return "type";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::RuntimeType: return "runtime-type";
    case ErrorKind::IncompleteBindings: return "incomplete-bindings";
    case ErrorKind::InternalSoundness: return "internal-soundness";
    case ErrorKind::Startup: return "startup";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::NothingToBind: return "nothing-to-bind";
    case ErrorKind::NothingToRun: return "nothing-to-run";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI
/// in particular) can map it onto an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace knxsafe
