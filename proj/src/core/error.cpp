#include "vtg/core/error.hpp"

namespace vtg {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::validation: return "E_VALIDATION";
    case ErrorCode::load: return "E_LOAD";
    case ErrorCode::numeric: return "E_NUMERIC";
    case ErrorCode::configuration: return "E_CONFIGURATION";
    case ErrorCode::missing_argument: return "E_MISSING_ARGUMENT";
    case ErrorCode::unknown_command: return "E_UNKNOWN_COMMAND";
    case ErrorCode::io: return "E_IO";
  }
  return "E_UNKNOWN";
}

int error_exit_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::validation: return 2;
    case ErrorCode::load: return 3;
    case ErrorCode::numeric: return 4;
    case ErrorCode::configuration: return 5;
    case ErrorCode::missing_argument: return 6;
    case ErrorCode::unknown_command: return 7;
    case ErrorCode::io: return 8;
  }
  return 1;
}

}  // namespace vtg
