#ifndef TSDDE_ERRORS_HPP
#define TSDDE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tsdde {

enum class ErrorCode {
  NotInScale,
  HorizonExceeded,
  ReversedBounds,
  DegenerateScale,
  SyntaxError,
  UnknownIdentifier,
  EvalError,
  NotRegressive,
  DelayAheadError,
  LookupBeforeHistory,
  MissingFieldSample,
  NoBracket,
  NotStrict,
  BadTheta,
  UnknownExample,
  BadConfig,
};

const char* error_code_name(ErrorCode code);

/// Library-wide exception. `code` is machine-checkable, `what()` is the
/// human-readable diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotInScale: return "NotInScale";
    case ErrorCode::HorizonExceeded: return "HorizonExceeded";
    case ErrorCode::ReversedBounds: return "ReversedBounds";
    case ErrorCode::DegenerateScale: return "DegenerateScale";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorCode::EvalError: return "EvalError";
    case ErrorCode::NotRegressive: return "NotRegressive";
    case ErrorCode::DelayAheadError: return "DelayAheadError";
    case ErrorCode::LookupBeforeHistory: return "LookupBeforeHistory";
    case ErrorCode::MissingFieldSample: return "MissingFieldSample";
    case ErrorCode::NoBracket: return "NoBracket";
    case ErrorCode::NotStrict: return "NotStrict";
    case ErrorCode::BadTheta: return "BadTheta";
    case ErrorCode::UnknownExample: return "UnknownExample";
    case ErrorCode::BadConfig: return "BadConfig";
  }
  return "UnknownError";
}

}  // namespace tsdde

#endif  // TSDDE_ERRORS_HPP
