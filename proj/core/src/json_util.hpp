#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "graftcert/error.hpp"
#include "graftcert/model_io.hpp"

namespace graftcert::detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& field) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(field + "." + key + ": missing");
  return j[key];
}

inline long get_int(const nlohmann::json& j, const char* key, const std::string& field) {
  const auto& v = require(j, key, field);
  if (!v.is_number_integer()) throw ParseError(field + "." + key + ": expected an integer");
  return v.get<long>();
}

inline std::string get_string(const nlohmann::json& j, const char* key, const std::string& field) {
  const auto& v = require(j, key, field);
  if (!v.is_string()) throw ParseError(field + "." + key + ": expected a string");
  return v.get<std::string>();
}

// Reals are stored as decimal strings; plain JSON numbers are accepted too.
inline double real_value(const nlohmann::json& v, const std::string& field) {
  if (v.is_string()) return parse_real(v.get<std::string>(), field);
  if (v.is_number()) return v.get<double>();
  throw ParseError(field + ": expected a real (decimal string)");
}

inline double get_real(const nlohmann::json& j, const char* key, const std::string& field) {
  return real_value(require(j, key, field), field + "." + key);
}

inline std::vector<double> get_real_array(const nlohmann::json& j, const char* key, const std::string& field) {
  const auto& v = require(j, key, field);
  if (!v.is_array()) throw ParseError(field + "." + key + ": expected an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(real_value(v[i], field + "." + key + "[" + std::to_string(i) + "]"));
  }
  return out;
}

}  // namespace graftcert::detail
