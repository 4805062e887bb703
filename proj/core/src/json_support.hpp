#pragma once

// Internal JSON plumbing shared by serialization.cpp and experiment.cpp.
// Every accessor takes a dotted path used in error messages.

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfcov/errors.hpp"
#include "mfcov/moments.hpp"
#include "mfcov/spd.hpp"

namespace mfcov::detail {

using json = nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": invalid JSON (" + e.what() + ")");
  }
}

inline double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) config_fail(path, "expected a number");
  return j.get<double>();
}

inline double as_positive(const json& j, const std::string& path) {
  const double v = as_double(j, path);
  if (!(v > 0.0) || !std::isfinite(v)) config_fail(path, "expected a positive finite number");
  return v;
}

inline std::int64_t as_int(const json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (v == std::floor(v) && std::abs(v) < 9e15) return static_cast<std::int64_t>(v);
  }
  config_fail(path, "expected an integer");
}

inline std::uint64_t as_seed(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  const std::int64_t v = as_int(j, path);
  if (v < 0) config_fail(path, "expected a nonnegative integer");
  return static_cast<std::uint64_t>(v);
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) config_fail(path, "expected a string");
  return j.get<std::string>();
}

inline bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) config_fail(path, "expected true or false");
  return j.get<bool>();
}

inline std::vector<double> as_doubles(const json& j, const std::string& path) {
  if (!j.is_array()) config_fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_double(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<std::int64_t> as_ints(const json& j, const std::string& path) {
  if (!j.is_array()) config_fail(path, "expected an array of integers");
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_int(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<std::string> as_strings(const json& j, const std::string& path) {
  if (!j.is_array()) config_fail(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_string(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

/// Square matrix given as an array of rows.
inline Matrix as_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) config_fail(path, "expected a nonempty array of rows");
  const std::size_t d = j.size();
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const std::vector<double> row = as_doubles(j[i], row_path);
    if (row.size() != d) config_fail(row_path, "expected " + std::to_string(d) + " entries (square matrix)");
    for (std::size_t k = 0; k < d; ++k) m(i, k) = row[k];
  }
  if (!m.allFinite()) config_fail(path, "entries must be finite");
  return m;
}

inline Vector as_vector(const json& j, const std::string& path) {
  const std::vector<double> v = as_doubles(j, path);
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Non-finite values become the strings "inf", "-inf", "nan".
inline json real_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

/// Tracks which keys of an object were read so leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_fail(path_, "expected an object");
  }

  const json* optional(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& required(const std::string& key) {
    const json* v = optional(key);
    if (v == nullptr) config_fail(path_, "missing required key '" + key + "'");
    return *v;
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string path(const std::string& key) const { return path_ + "." + key; }
  const std::string& path() const { return path_; }

  /// Throws on the first key that was never asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) config_fail(path_, "unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Defined in serialization.cpp.
MomentSummary moments_from(const json& j, const std::string& path);
AllocationPlan plan_from(const json& j, const std::string& path);
json plan_json(const AllocationPlan& plan);

}  // namespace mfcov::detail
