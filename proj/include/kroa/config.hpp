#pragma once

// Run configuration files. Every field access reports its JSON path on error.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kroa {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thin cursor over a JSON object that knows its own path.
class ConfigNode {
 public:
  ConfigNode(const nlohmann::json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const nlohmann::json& json() const { return *j_; }
  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  ConfigNode child(const std::string& key) const {
    if (!j_->is_object()) fail("expected an object");
    if (!j_->contains(key)) throw ConfigError("config: missing field " + path_ + "/" + key);
    return ConfigNode(j_->at(key), path_ + "/" + key);
  }
  ConfigNode at(std::size_t i) const {
    if (!j_->is_array() || i >= j_->size()) fail("expected an array with index " + std::to_string(i));
    return ConfigNode(j_->at(i), path_ + "/" + std::to_string(i));
  }
  std::size_t size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }

  template <typename T>
  T as() const {
    try {
      return j_->get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("wrong type (") + e.what() + ")");
    }
    return T{};
  }

  template <typename T>
  T get(const std::string& key) const {
    return child(key).as<T>();
  }

  template <typename T>
  T get(const std::string& key, const T& fallback) const {
    if (!has(key)) return fallback;
    return child(key).as<T>();
  }

  /// String field restricted to a fixed set of values.
  std::string choice(const std::string& key, const std::vector<std::string>& allowed,
                     const std::optional<std::string>& fallback = std::nullopt) const {
    std::string v;
    if (!has(key) && fallback) {
      v = *fallback;
    } else {
      v = get<std::string>(key);
    }
    for (const auto& a : allowed) {
      if (a == v) return v;
    }
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw ConfigError("config: " + path_ + "/" + key + ": '" + v + "' is not one of {" + list + "}");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config: " + (path_.empty() ? std::string("/") : path_) + ": " + msg);
  }

 private:
  const nlohmann::json* j_;
  std::string path_;
};

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// FNV-1a of the compact dump; stable across runs and platforms.
inline std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace kroa
