#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kbm {

enum class ErrorKind {
  invalid_argument,
  inconsistent_block,
  not_casimir_value,
  dimension_too_large,
  singular_solve,
  multiplicity,
  collision,
  non_convergence,
  validation,
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::inconsistent_block: return "inconsistent_block";
    case ErrorKind::not_casimir_value: return "not_casimir_value";
    case ErrorKind::dimension_too_large: return "dimension_too_large";
    case ErrorKind::singular_solve: return "singular_solve";
    case ErrorKind::multiplicity: return "multiplicity";
    case ErrorKind::collision: return "collision";
    case ErrorKind::non_convergence: return "non_convergence";
    case ErrorKind::validation: return "validation";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Exception carrying a machine-readable kind; every module throws this.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace kbm
