#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "biomm/error.hpp"

namespace biomm::detail {

// Counts and sizes are unsigned; nlohmann would silently wrap a negative
// integer into a huge size_t.
inline void reject_negative_integers(const nlohmann::json& j, const std::string& where, const std::string& path = "") {
  if (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0)
    throw ConfigError(where + ": '" + path + "' must not be negative");
  if (j.is_object())
    for (const auto& [k, v] : j.items()) reject_negative_integers(v, where, path.empty() ? k : path + "." + k);
  if (j.is_array())
    for (std::size_t i = 0; i < j.size(); ++i) reject_negative_integers(j[i], where, path + "[" + std::to_string(i) + "]");
}

}  // namespace biomm::detail
