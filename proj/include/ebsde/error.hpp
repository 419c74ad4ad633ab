#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ebsde {

enum class ErrorCode {
  InvalidArgument,
  ReturnTimeCapExceeded,
  QuadratureNonConvergent,
  DissipativityViolated,
  BoundUnavailable,
  ValidityViolated,
  DriverDependsOnZ,
  RootNotBracketed,
  NonFiniteLoss,
  DomainError,
  InvalidCombination,
  ConfigError,
  IoError,
};

inline std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ReturnTimeCapExceeded: return "ReturnTimeCapExceeded";
    case ErrorCode::QuadratureNonConvergent: return "QuadratureNonConvergent";
    case ErrorCode::DissipativityViolated: return "DissipativityViolated";
    case ErrorCode::BoundUnavailable: return "BoundUnavailable";
    case ErrorCode::ValidityViolated: return "ValidityViolated";
    case ErrorCode::DriverDependsOnZ: return "DriverDependsOnZ";
    case ErrorCode::RootNotBracketed: return "RootNotBracketed";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::InvalidCombination: return "InvalidCombination";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code so the
/// CLI can map it to a descriptive message and a nonzero exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace ebsde
