// SPDX-License-Identifier: Apache-2.0
//
// Tunable parameter spaces and configurations.
//
// A ConfigSpace is an ordered list of ParameterDefs. Configurations are
// name -> value maps whose identity is a 64-bit hash of their canonical JSON
// form, so the id does not depend on insertion order.
#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tuna/random.hpp"

namespace tuna {

enum class ParamKind { Continuous, Integer, Categorical };

std::string_view to_string(ParamKind kind);
ParamKind param_kind_from_string(std::string_view s);

/// double for continuous, int64 for integer, string for categorical.
using ParamValue = std::variant<double, std::int64_t, std::string>;

nlohmann::json to_json(const ParamValue& v);

struct ConfigId {
  std::uint64_t value = 0;

  auto operator<=>(const ConfigId&) const = default;

  /// 16 lowercase hex digits; the on-disk form (JSON numbers lose precision past 2^53).
  std::string hex() const;
  static ConfigId from_hex(std::string_view s);
};

struct ParameterDef {
  std::string name;
  ParamKind kind = ParamKind::Continuous;
  double lower = 0.0;
  double upper = 1.0;
  std::vector<std::string> choices;
  bool log_scale = false;
  std::optional<ParamValue> default_value;

  static ParameterDef continuous(std::string name, double lower, double upper, bool log_scale = false,
                                 std::optional<double> default_value = std::nullopt);
  static ParameterDef integer(std::string name, std::int64_t lower, std::int64_t upper, bool log_scale = false,
                              std::optional<std::int64_t> default_value = std::nullopt);
  static ParameterDef categorical(std::string name, std::vector<std::string> choices,
                                  std::optional<std::string> default_value = std::nullopt);

  /// Throws ValidationError when the definition's own invariants fail.
  void check() const;
  bool in_domain(const ParamValue& v) const;
  /// Width of this parameter's block in the encoded vector.
  std::size_t encoded_width() const { return kind == ParamKind::Categorical ? choices.size() : 1; }
};

class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::map<std::string, ParamValue> values);

  ConfigId id() const { return id_; }
  const std::map<std::string, ParamValue>& values() const { return values_; }
  const ParamValue& at(const std::string& name) const { return values_.at(name); }

  /// Numeric view of a parameter: continuous/integer values as double.
  double number(const std::string& name) const;
  const std::string& choice(const std::string& name) const;

  nlohmann::json to_json() const;
  /// Rebuilds from to_json() output: JSON integers become integer values,
  /// JSON floats continuous ones, strings categorical ones.
  static Configuration from_json(const nlohmann::json& j);

  bool operator==(const Configuration& o) const { return id_ == o.id_ && values_ == o.values_; }

 private:
  std::map<std::string, ParamValue> values_;
  ConfigId id_;
};

class ConfigSpace {
 public:
  ConfigSpace() = default;
  explicit ConfigSpace(std::vector<ParameterDef> parameters);

  static ConfigSpace from_json(const nlohmann::json& doc);
  static ConfigSpace load(const std::string& path);
  nlohmann::json to_json() const;

  std::span<const ParameterDef> parameters() const { return parameters_; }
  const ParameterDef& parameter(std::string_view name) const;
  bool empty() const { return parameters_.empty(); }
  std::size_t encoded_width() const { return encoded_width_; }

  /// Throws ValidationError naming the first offending parameter.
  void validate(const Configuration& config) const;
  bool contains(const Configuration& config) const;

  /// Parses a configuration file body (JSON map name -> value) and validates it.
  Configuration parse(const nlohmann::json& values) const;

  Configuration default_config() const;

  /// n in-domain configurations, deterministic in seed.
  std::vector<Configuration> sample_random(std::uint64_t seed, std::size_t n) const;
  Configuration sample(Rng& rng) const;
  /// Same distribution as sample() but produced directly in encoded form.
  std::vector<double> sample_encoded(Rng& rng) const;

  std::vector<double> encode(const Configuration& config) const;
  Configuration decode(std::span<const double> encoded) const;

 private:
  // Per-parameter numeric draw: value for continuous/integer, index for categorical.
  double draw(const ParameterDef& p, Rng& rng) const;
  void encode_numeric(const ParameterDef& p, double numeric, double* out) const;

  std::vector<ParameterDef> parameters_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t encoded_width_ = 0;
};

std::vector<Configuration> sample_random(const ConfigSpace& space, std::uint64_t rng_seed, std::size_t n);
Configuration default_config(const ConfigSpace& space);
std::vector<double> encode(const ConfigSpace& space, const Configuration& config);

}  // namespace tuna

template <>
struct std::hash<tuna::ConfigId> {
  std::size_t operator()(const tuna::ConfigId& id) const noexcept { return static_cast<std::size_t>(id.value); }
};
