#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "bisirl/common.hpp"

namespace bisirl::detail {

/// Rejects non-objects, missing required keys and keys outside both lists.
inline void check_keys(
   const nlohmann::json& doc,
   std::initializer_list< std::string_view > required,
   std::initializer_list< std::string_view > optional,
   const std::string& where
)
{
   if(!doc.is_object()) {
      throw ConfigError(where + " must be a JSON object");
   }
   for(auto key : required) {
      if(!doc.contains(std::string(key))) {
         throw ConfigError(where + " is missing field '" + std::string(key) + "'");
      }
   }
   for(const auto& item : doc.items()) {
      const auto known = [&](std::initializer_list< std::string_view > keys) {
         return std::find(keys.begin(), keys.end(), item.key()) != keys.end();
      };
      if(!known(required) && !known(optional)) {
         throw ConfigError(where + " has unknown field '" + item.key() + "'");
      }
   }
}

}  // namespace bisirl::detail
