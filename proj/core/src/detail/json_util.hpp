#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "patchage/error.hpp"

namespace patchage::detail {

// Reads optional keys from a JSON object and rejects keys it was never asked about.
class JsonFields {
 public:
  JsonFields(const nlohmann::json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(context_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace patchage::detail
