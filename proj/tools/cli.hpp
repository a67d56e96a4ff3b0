#pragma once

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace vtg::cli {

inline constexpr const char* kSidecarName = "run.json";

// Every configurable field with its default. Paper values where stated.
nlohmann::json default_config();

// Rejects keys missing from the defaults and values of the wrong kind.
void validate_config(const nlohmann::json& config);

// Semantic hash: canonical content without the thread count and output path.
std::string run_config_hash(const nlohmann::json& config);

// Runs `vtg <args...>` (args exclude the program name). Errors are printed to
// `err` as "error: E_CODE: message" and mapped to their exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vtg::cli
