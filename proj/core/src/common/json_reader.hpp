#pragma once

#include <set>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "dbt/error.hpp"

namespace dbt::jsonio {

using json = nlohmann::ordered_json;

// Reads an object strictly: every key must be consumed.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorKind::kFormat, where_ + ": expected an object");
  }
  template <typename V>
  V get(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) fail(ErrorKind::kFormat, where_ + ": missing key '" + key + "'");
    seen_.insert(key);
    return convert<V>(*it, key);
  }

  template <typename V>
  V get_or(const std::string& key, V fallback) {
    if (!j_.contains(key)) return fallback;
    return get<V>(key);
  }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) {
      seen_.insert(key);
      return nullptr;
    }
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(ErrorKind::kFormat, where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  template <typename V>
  V convert(const json& v, const std::string& key) {
    try {
      if constexpr (std::is_same_v<V, std::size_t>) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) throw 0;
      } else if constexpr (std::is_same_v<V, double>) {
        if (!v.is_number()) throw 0;
      } else if constexpr (std::is_same_v<V, bool>) {
        if (!v.is_boolean()) throw 0;
      } else if constexpr (std::is_same_v<V, std::string>) {
        if (!v.is_string()) throw 0;
      }
      return v.get<V>();
    } catch (...) {
      fail(ErrorKind::kFormat, where_ + ": key '" + key + "' has the wrong type");
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline json parse(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kFormat, where + ": " + e.what());
  }
}

}  // namespace dbt::jsonio
