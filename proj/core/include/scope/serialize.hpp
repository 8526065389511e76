#pragma once

// JSON encodings of configs, policies and optimizer state.
//
// Decoders overlay onto an existing value: keys that are present replace the
// corresponding field, absent keys keep it, and unknown keys are rejected
// with ConfigError. That makes "config file, then flag overrides" a matter of
// applying documents in order.

#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "scope/cmaes.hpp"
#include "scope/environment.hpp"
#include "scope/policy.hpp"

namespace scope {

using Json = nlohmann::json;

inline constexpr int kPolicyFormatVersion = 1;

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const ShooterRules& rules);
void apply_json(const Json& j, ShooterRules& rules);

Json to_json(const EnvConfig& config);
void apply_json(const Json& j, EnvConfig& config);

/// {"format": "scope-policy", "version", "k", "m", "n", "include_bias",
///  "params": [flattened values]}. policy_from_json ignores an optional "p".
Json to_json(const PolicyParams& params);
PolicyParams policy_from_json(const Json& j);

/// Stores the generator as its textual state and the covariance together
/// with its cached eigendecomposition, so a decoded state continues
/// bit-identically.
Json to_json(const cma::CmaState& state);
cma::CmaState cma_state_from_json(const Json& j);

/// FileError if the file cannot be read, ConfigError if it is not JSON.
Json read_json_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames it into place. FileError
/// on failure.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// A policy plus, optionally, the sparsity percentile it was trained with
/// (stored under "p").
struct PolicyFile {
  PolicyParams params;
  std::optional<double> p;
};

void save_policy(const std::filesystem::path& path, const PolicyParams& params,
                 std::optional<double> p = std::nullopt);
PolicyFile load_policy(const std::filesystem::path& path);

// Helpers for hand-written decoders.
namespace json_detail {

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what);

[[noreturn]] void throw_bad_value(const char* key, const std::string& detail);

/// Reads `key` into `out` when present. Integers must be JSON integers
/// (unsigned ones non-negative); ConfigError names the offending key.
template <typename T>
void read(const Json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw_bad_value(key, "expected true or false");
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    if (!it->is_number_unsigned()) throw_bad_value(key, "expected a non-negative integer");
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw_bad_value(key, "expected an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) throw_bad_value(key, "expected a number");
  }
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw_bad_value(key, e.what());
  }
}

}  // namespace json_detail

}  // namespace scope
