#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vtg {

// Stable identifiers; the CLI prints them verbatim and maps them to exit codes.
enum class ErrorCode {
  validation,
  load,
  numeric,
  configuration,
  missing_argument,
  unknown_command,
  io,
};

std::string_view error_code_name(ErrorCode code) noexcept;
int error_exit_code(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::validation, message);
}

}  // namespace vtg
