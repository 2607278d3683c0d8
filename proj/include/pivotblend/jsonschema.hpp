#pragma once

#include <json.hpp>

#include <cmath>
#include <string>

// Minimal JSON-schema checker covering the subset the shipped schemas use:
// type (object, array, string, number, integer, boolean), required,
// properties, additionalProperties (boolean), items, enum, minItems,
// maxItems, minimum, maximum.  schema_validate returns an empty string on
// success, otherwise a diagnostic naming the offending document path.

namespace pivotblend {

namespace schema_detail {

inline bool type_matches(const nlohmann::json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "integer") {
    if (v.is_number_integer() || v.is_number_unsigned()) return true;
    if (v.is_number_float()) {
      const double d = v.get<double>();
      return std::isfinite(d) && d == std::floor(d);
    }
    return false;
  }
  if (t == "number") return v.is_number();
  if (t == "null") return v.is_null();
  return false;
}

}  // namespace schema_detail

inline std::string schema_validate(const nlohmann::json& doc,
                                   const nlohmann::json& schema,
                                   const std::string& path = "") {
  using nlohmann::json;
  const std::string where = path.empty() ? std::string("/") : path;

  if (schema.contains("type")) {
    const std::string t = schema["type"].get<std::string>();
    if (!schema_detail::type_matches(doc, t))
      return where + ": expected " + t + ", got " +
             std::string(doc.type_name());
  }
  if (schema.contains("enum")) {
    bool hit = false;
    for (const auto& allowed : schema["enum"]) hit = hit || doc == allowed;
    if (!hit) return where + ": value not in the allowed enum";
  }
  if (doc.is_number()) {
    const double d = doc.get<double>();
    if (schema.contains("minimum") && d < schema["minimum"].get<double>())
      return where + ": below minimum";
    if (schema.contains("maximum") && d > schema["maximum"].get<double>())
      return where + ": above maximum";
  }
  if (doc.is_array()) {
    if (schema.contains("minItems") &&
        doc.size() < schema["minItems"].get<std::size_t>())
      return where + ": fewer than minItems elements";
    if (schema.contains("maxItems") &&
        doc.size() > schema["maxItems"].get<std::size_t>())
      return where + ": more than maxItems elements";
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < doc.size(); ++i) {
        std::string err = schema_validate(
            doc[i], schema["items"], path + "/" + std::to_string(i));
        if (!err.empty()) return err;
      }
    }
  }
  if (doc.is_object()) {
    if (schema.contains("required")) {
      for (const auto& name : schema["required"])
        if (!doc.contains(name.get<std::string>()))
          return where + ": missing required member '" +
                 name.get<std::string>() + "'";
    }
    const json props =
        schema.contains("properties") ? schema["properties"] : json::object();
    const bool extra_ok = !schema.contains("additionalProperties") ||
                          schema["additionalProperties"].get<bool>();
    for (const auto& [key, value] : doc.items()) {
      if (props.contains(key)) {
        std::string err = schema_validate(value, props[key], path + "/" + key);
        if (!err.empty()) return err;
      } else if (!extra_ok) {
        return where + ": unexpected member '" + key + "'";
      }
    }
  }
  return "";
}

}  // namespace pivotblend
