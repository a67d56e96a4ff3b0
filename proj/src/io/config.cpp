#include "vtg/io/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

#include "vtg/core/error.hpp"

namespace vtg::io {

nlohmann::json parse_config(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::configuration, origin + ": " + e.what());
  }
}

namespace {
std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::load, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

nlohmann::json read_config(const std::filesystem::path& path) { return parse_config(slurp(path), path.string()); }

void merge_config(nlohmann::json& base, const nlohmann::json& overrides) {
  if (!base.is_object() || !overrides.is_object()) {
    base = overrides;
    return;
  }
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      merge_config(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

void set_config_value(nlohmann::json& config, const std::string& dotted_key, const std::string& text) {
  if (dotted_key.empty()) fail(ErrorCode::configuration, "empty configuration key");
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &config;
  size_t start = 0;
  while (true) {
    const size_t dot = dotted_key.find('.', start);
    const std::string key = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail(ErrorCode::configuration, "malformed configuration key '" + dotted_key + "'");
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::string canonical_dump(const nlohmann::json& value) { return value.dump(); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorCode::io, "SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string config_hash(const nlohmann::json& config) { return sha256_hex(canonical_dump(config)); }

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << value.dump(2) << '\n';
  if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(slurp(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::load, path.string() + ": " + e.what());
  }
}

}  // namespace vtg::io
