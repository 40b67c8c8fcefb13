#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "m3dvg/error.hpp"
#include "m3dvg/geometry.hpp"

namespace m3dvg::detail {

using nlohmann::json;

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::FormatError, std::string("invalid JSON: ") + e.what());
  }
}

inline const json& field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorKind::FormatError, std::string("missing \"") + key + "\"");
  return *it;
}

inline double number_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw Error(ErrorKind::FormatError, std::string("\"") + key + "\" must be a number");
  return v.get<double>();
}

inline std::vector<double> numbers(const json& v, const char* what) {
  if (!v.is_array()) throw Error(ErrorKind::FormatError, std::string("\"") + what + "\" must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& x : v) {
    if (!x.is_number()) throw Error(ErrorKind::FormatError, std::string("\"") + what + "\" must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline std::vector<double> numbers_field(const json& j, const char* key, std::size_t expected = 0) {
  std::vector<double> out = numbers(field(j, key), key);
  if (expected != 0 && out.size() != expected)
    throw Error(ErrorKind::FormatError,
                std::string("\"") + key + "\" must hold " + std::to_string(expected) + " numbers");
  return out;
}

inline geometry::Box3d box3d_from(const json& j, const char* what) {
  if (!j.is_object()) throw Error(ErrorKind::FormatError, std::string(what) + " box is not an object");
  geometry::Box3d b;
  const auto c = numbers_field(j, "center", 3);
  const auto d = numbers_field(j, "dims", 3);
  b.center << c[0], c[1], c[2];
  b.dims << d[0], d[1], d[2];
  b.yaw = geometry::normalize_yaw(number_field(j, "yaw"));
  geometry::validate(b);
  return b;
}

// [x_min, y_min, x_max, y_max]
inline geometry::Box2D box2d_from(const json& v, const char* what) {
  const auto c = numbers(v, what);
  if (c.size() != 4) throw Error(ErrorKind::FormatError, std::string("\"") + what + "\" must hold 4 numbers");
  geometry::Box2D b{c[0], c[1], c[2], c[3]};
  geometry::validate(b);
  return b;
}

}  // namespace m3dvg::detail
