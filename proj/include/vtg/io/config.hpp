#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace vtg::io {

// Configuration documents are JSON with // and /* */ comments allowed.
nlohmann::json parse_config(const std::string& text, const std::string& origin);
nlohmann::json read_config(const std::filesystem::path& path);

// Objects merge key by key; any other value replaces the target.
void merge_config(nlohmann::json& base, const nlohmann::json& overrides);

// Sets a dotted key ("diffusion.lr") from command-line text. The text is
// read as JSON when it parses, as a plain string otherwise.
void set_config_value(nlohmann::json& config, const std::string& dotted_key, const std::string& text);

// Sorted keys, no whitespace, shortest round-trip numbers.
std::string canonical_dump(const nlohmann::json& value);
std::string sha256_hex(std::string_view bytes);
std::string config_hash(const nlohmann::json& config);

// Deterministic pretty JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace vtg::io
