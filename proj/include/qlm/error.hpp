#pragma once

#include <stdexcept>
#include <string>

namespace qlm {

enum class Errc {
  invalid_shape,
  invalid_value,
  unsupported,
  position,
  state,
  io,
  format,
  infeasible,
  invalid_input,
  invalid_token,
  invalid_distribution,
  argument,
  export_failed,
};

const char* to_string(Errc code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_shape: return "invalid shape";
    case Errc::invalid_value: return "invalid value";
    case Errc::unsupported: return "unsupported configuration";
    case Errc::position: return "position out of range";
    case Errc::state: return "invalid state";
    case Errc::io: return "I/O error";
    case Errc::format: return "format error";
    case Errc::infeasible: return "infeasible";
    case Errc::invalid_input: return "invalid input";
    case Errc::invalid_token: return "invalid token";
    case Errc::invalid_distribution: return "invalid distribution";
    case Errc::argument: return "argument error";
    case Errc::export_failed: return "export error";
  }
  return "error";
}

}  // namespace qlm
