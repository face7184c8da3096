#pragma once

#include <stdexcept>
#include <string>

namespace twmq {

// Error categories, kept in sync with the twmq_status codes of the C API.
enum class ErrorCode {
  InvalidArgument = 1,  // bad inputs, domain errors, malformed config
  Io = 2,               // file system failures
  Schema = 3,           // CSV schema violations, inconsistent frames
  Numeric = 4,          // singular designs, degenerate scales, non-convergence
  Unsupported = 5,      // operation not available in the current frame mode
  Internal = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Error invalid_argument(const std::string& what) {
  return Error(ErrorCode::InvalidArgument, what);
}
inline Error io_error(const std::string& what) {
  return Error(ErrorCode::Io, what);
}
inline Error schema_error(const std::string& what) {
  return Error(ErrorCode::Schema, what);
}
inline Error numeric_error(const std::string& what) {
  return Error(ErrorCode::Numeric, what);
}
inline Error unsupported_error(const std::string& what) {
  return Error(ErrorCode::Unsupported, what);
}

}  // namespace twmq
