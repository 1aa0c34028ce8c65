// SPDX-License-Identifier: Apache-2.0
#include "tuna/configspace.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "tuna/error.hpp"

namespace tuna {

using nlohmann::json;

namespace {

// Half-to-even under the default floating-point environment.
double round_half_even(double x) {
  return std::nearbyint(x);
}

double to_unit(const ParameterDef& p, double v) {
  if (p.log_scale) return (std::log10(v) - std::log10(p.lower)) / (std::log10(p.upper) - std::log10(p.lower));
  return (v - p.lower) / (p.upper - p.lower);
}

double from_unit(const ParameterDef& p, double u) {
  if (p.log_scale) return std::pow(10.0, std::log10(p.lower) + u * (std::log10(p.upper) - std::log10(p.lower)));
  return p.lower + u * (p.upper - p.lower);
}

}  // namespace

std::string_view to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::Continuous: return "continuous";
    case ParamKind::Integer: return "integer";
    case ParamKind::Categorical: return "categorical";
  }
  return "continuous";
}

ParamKind param_kind_from_string(std::string_view s) {
  if (s == "continuous" || s == "float" || s == "real") return ParamKind::Continuous;
  if (s == "integer" || s == "int") return ParamKind::Integer;
  if (s == "categorical") return ParamKind::Categorical;
  throw ValidationError("unknown parameter kind '" + std::string(s) + "'");
}

json to_json(const ParamValue& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

std::string ConfigId::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

ConfigId ConfigId::from_hex(std::string_view s) {
  if (s.empty() || s.size() > 16) throw ValidationError("bad config id '" + std::string(s) + "'");
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
    else throw ValidationError("bad config id '" + std::string(s) + "'");
  }
  return ConfigId{v};
}

// ---------------------------------------------------------------------------
// ParameterDef

ParameterDef ParameterDef::continuous(std::string name, double lower, double upper, bool log_scale,
                                      std::optional<double> default_value) {
  ParameterDef p;
  p.name = std::move(name);
  p.kind = ParamKind::Continuous;
  p.lower = lower;
  p.upper = upper;
  p.log_scale = log_scale;
  if (default_value) p.default_value = *default_value;
  p.check();
  return p;
}

ParameterDef ParameterDef::integer(std::string name, std::int64_t lower, std::int64_t upper, bool log_scale,
                                   std::optional<std::int64_t> default_value) {
  ParameterDef p;
  p.name = std::move(name);
  p.kind = ParamKind::Integer;
  p.lower = static_cast<double>(lower);
  p.upper = static_cast<double>(upper);
  p.log_scale = log_scale;
  if (default_value) p.default_value = *default_value;
  p.check();
  return p;
}

ParameterDef ParameterDef::categorical(std::string name, std::vector<std::string> choices,
                                       std::optional<std::string> default_value) {
  ParameterDef p;
  p.name = std::move(name);
  p.kind = ParamKind::Categorical;
  p.choices = std::move(choices);
  if (default_value) p.default_value = *default_value;
  p.check();
  return p;
}

void ParameterDef::check() const {
  if (name.empty()) throw ValidationError("parameter with empty name");
  if (kind == ParamKind::Categorical) {
    std::set<std::string> uniq(choices.begin(), choices.end());
    if (choices.size() < 2 || uniq.size() != choices.size())
      throw ValidationError(name + ": categorical needs >= 2 distinct choices");
  } else {
    if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper))
      throw ValidationError(name + ": requires lower < upper");
    if (log_scale && !(lower > 0.0)) throw ValidationError(name + ": log_scale requires lower > 0");
    if (kind == ParamKind::Integer && (lower != std::floor(lower) || upper != std::floor(upper)))
      throw ValidationError(name + ": integer bounds must be whole numbers");
  }
  if (default_value && !in_domain(*default_value)) throw ValidationError(name + ": default outside domain");
}

bool ParameterDef::in_domain(const ParamValue& v) const {
  switch (kind) {
    case ParamKind::Continuous: {
      const double* d = std::get_if<double>(&v);
      return d && std::isfinite(*d) && *d >= lower && *d <= upper;
    }
    case ParamKind::Integer: {
      const std::int64_t* i = std::get_if<std::int64_t>(&v);
      return i && static_cast<double>(*i) >= lower && static_cast<double>(*i) <= upper;
    }
    case ParamKind::Categorical: {
      const std::string* s = std::get_if<std::string>(&v);
      return s && std::find(choices.begin(), choices.end(), *s) != choices.end();
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Configuration

Configuration::Configuration(std::map<std::string, ParamValue> values) : values_(std::move(values)) {
  // std::map iterates in key order, so the dump is canonical.
  id_ = ConfigId{mix64(fnv1a64(to_json().dump()))};
}

double Configuration::number(const std::string& name) const {
  const auto& v = values_.at(name);
  if (const double* d = std::get_if<double>(&v)) return *d;
  if (const std::int64_t* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw ValidationError(name + " is categorical");
}

const std::string& Configuration::choice(const std::string& name) const {
  const auto& v = values_.at(name);
  if (const std::string* s = std::get_if<std::string>(&v)) return *s;
  throw ValidationError(name + " is not categorical");
}

json Configuration::to_json() const {
  json j = json::object();
  for (const auto& [k, v] : values_) j[k] = tuna::to_json(v);
  return j;
}

Configuration Configuration::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("configuration must be a JSON object");
  std::map<std::string, ParamValue> values;
  for (const auto& [k, v] : j.items()) {
    if (v.is_number_float()) values[k] = v.get<double>();
    else if (v.is_number_integer()) values[k] = v.get<std::int64_t>();
    else if (v.is_string()) values[k] = v.get<std::string>();
    else throw ValidationError("configuration value for '" + k + "' has unsupported type");
  }
  return Configuration(std::move(values));
}

// ---------------------------------------------------------------------------
// ConfigSpace

ConfigSpace::ConfigSpace(std::vector<ParameterDef> parameters) : parameters_(std::move(parameters)) {
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    parameters_[i].check();
    if (!index_.emplace(parameters_[i].name, i).second)
      throw ValidationError("duplicate parameter name '" + parameters_[i].name + "'");
    encoded_width_ += parameters_[i].encoded_width();
  }
}

ConfigSpace ConfigSpace::from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("parameters") || !doc["parameters"].is_array())
    throw ValidationError("space document needs a 'parameters' array");
  std::vector<ParameterDef> params;
  for (const auto& jp : doc["parameters"]) {
    ParameterDef p;
    p.name = jp.at("name").get<std::string>();
    p.kind = param_kind_from_string(jp.at("kind").get<std::string>());
    p.log_scale = jp.value("log_scale", false);
    if (p.kind == ParamKind::Categorical) {
      p.choices = jp.at("choices").get<std::vector<std::string>>();
      if (jp.contains("default") && !jp["default"].is_null()) p.default_value = jp["default"].get<std::string>();
    } else {
      p.lower = jp.at("lower").get<double>();
      p.upper = jp.at("upper").get<double>();
      if (jp.contains("default") && !jp["default"].is_null()) {
        if (p.kind == ParamKind::Integer) {
          const double d = jp["default"].get<double>();
          if (d != std::floor(d)) throw ValidationError(p.name + ": integer default must be whole");
          p.default_value = static_cast<std::int64_t>(d);
        } else {
          p.default_value = jp["default"].get<double>();
        }
      }
    }
    params.push_back(std::move(p));
  }
  return ConfigSpace(std::move(params));
}

ConfigSpace ConfigSpace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open space file '" + path + "'");
  return from_json(json::parse(in));
}

json ConfigSpace::to_json() const {
  json params = json::array();
  for (const auto& p : parameters_) {
    json jp{{"name", p.name}, {"kind", std::string(tuna::to_string(p.kind))}};
    if (p.kind == ParamKind::Categorical) {
      jp["choices"] = p.choices;
    } else {
      jp["lower"] = p.lower;
      jp["upper"] = p.upper;
      jp["log_scale"] = p.log_scale;
    }
    if (p.default_value) jp["default"] = tuna::to_json(*p.default_value);
    params.push_back(std::move(jp));
  }
  return json{{"parameters", std::move(params)}};
}

const ParameterDef& ConfigSpace::parameter(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ValidationError("unknown parameter '" + std::string(name) + "'");
  return parameters_[it->second];
}

void ConfigSpace::validate(const Configuration& config) const {
  for (const auto& [name, value] : config.values()) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("parameter '" + name + "' not in space");
    if (!parameters_[it->second].in_domain(value)) throw ValidationError("parameter '" + name + "' out of domain");
  }
  if (config.values().size() != parameters_.size()) throw ValidationError("configuration does not set every parameter");
}

bool ConfigSpace::contains(const Configuration& config) const {
  try {
    validate(config);
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

Configuration ConfigSpace::parse(const json& values) const {
  if (!values.is_object()) throw ValidationError("configuration must be a JSON object");
  std::map<std::string, ParamValue> out;
  for (const auto& [name, jv] : values.items()) {
    const ParameterDef& p = parameter(name);
    switch (p.kind) {
      case ParamKind::Continuous:
        if (!jv.is_number()) throw ValidationError(name + ": expected number");
        out[name] = jv.get<double>();
        break;
      case ParamKind::Integer: {
        if (!jv.is_number()) throw ValidationError(name + ": expected integer");
        const double d = jv.get<double>();
        if (d != std::floor(d)) throw ValidationError(name + ": expected integer");
        out[name] = static_cast<std::int64_t>(d);
        break;
      }
      case ParamKind::Categorical:
        if (!jv.is_string()) throw ValidationError(name + ": expected string");
        out[name] = jv.get<std::string>();
        break;
    }
  }
  Configuration c(std::move(out));
  validate(c);
  return c;
}

Configuration ConfigSpace::default_config() const {
  std::map<std::string, ParamValue> values;
  for (const auto& p : parameters_) {
    if (p.default_value) {
      values[p.name] = *p.default_value;
      continue;
    }
    switch (p.kind) {
      case ParamKind::Continuous:
        values[p.name] = p.log_scale ? std::sqrt(p.lower * p.upper) : 0.5 * (p.lower + p.upper);
        break;
      case ParamKind::Integer: {
        const double mid = p.log_scale ? std::sqrt(p.lower * p.upper) : 0.5 * (p.lower + p.upper);
        values[p.name] = static_cast<std::int64_t>(std::clamp(round_half_even(mid), p.lower, p.upper));
        break;
      }
      case ParamKind::Categorical:
        values[p.name] = p.choices.front();
        break;
    }
  }
  return Configuration(std::move(values));
}

double ConfigSpace::draw(const ParameterDef& p, Rng& rng) const {
  switch (p.kind) {
    case ParamKind::Continuous:
      return from_unit(p, rng.uniform());
    case ParamKind::Integer: {
      // Widen by half a step on each side so rounding gives every integer equal mass.
      ParameterDef widened = p;
      widened.lower = p.lower - 0.5;
      widened.upper = p.upper + 0.5;
      if (p.log_scale && widened.lower <= 0.0) widened.lower = p.lower * 0.5;
      return std::clamp(round_half_even(from_unit(widened, rng.uniform())), p.lower, p.upper);
    }
    case ParamKind::Categorical:
      return static_cast<double>(rng.index(p.choices.size()));
  }
  return 0.0;
}

void ConfigSpace::encode_numeric(const ParameterDef& p, double numeric, double* out) const {
  if (p.kind == ParamKind::Categorical) {
    for (std::size_t k = 0; k < p.choices.size(); ++k) out[k] = 0.0;
    out[static_cast<std::size_t>(numeric)] = 1.0;
  } else {
    out[0] = to_unit(p, numeric);
  }
}

Configuration ConfigSpace::sample(Rng& rng) const {
  if (parameters_.empty()) throw DomainError("cannot sample from an empty space");
  std::map<std::string, ParamValue> values;
  for (const auto& p : parameters_) {
    const double x = draw(p, rng);
    switch (p.kind) {
      case ParamKind::Continuous: values[p.name] = x; break;
      case ParamKind::Integer: values[p.name] = static_cast<std::int64_t>(x); break;
      case ParamKind::Categorical: values[p.name] = p.choices[static_cast<std::size_t>(x)]; break;
    }
  }
  return Configuration(std::move(values));
}

std::vector<double> ConfigSpace::sample_encoded(Rng& rng) const {
  if (parameters_.empty()) throw DomainError("cannot sample from an empty space");
  std::vector<double> out(encoded_width_);
  double* cursor = out.data();
  for (const auto& p : parameters_) {
    encode_numeric(p, draw(p, rng), cursor);
    cursor += p.encoded_width();
  }
  return out;
}

std::vector<Configuration> ConfigSpace::sample_random(std::uint64_t seed, std::size_t n) const {
  if (n == 0) throw DomainError("sample_random requires n >= 1");
  if (parameters_.empty()) throw DomainError("cannot sample from an empty space");
  Rng rng(seed);
  std::vector<Configuration> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample(rng));
  return out;
}

std::vector<double> ConfigSpace::encode(const Configuration& config) const {
  validate(config);
  std::vector<double> out(encoded_width_);
  double* cursor = out.data();
  for (const auto& p : parameters_) {
    const auto& v = config.at(p.name);
    double numeric = 0.0;
    if (p.kind == ParamKind::Categorical) {
      const auto& s = std::get<std::string>(v);
      numeric = static_cast<double>(std::find(p.choices.begin(), p.choices.end(), s) - p.choices.begin());
    } else {
      numeric = config.number(p.name);
    }
    encode_numeric(p, numeric, cursor);
    cursor += p.encoded_width();
  }
  return out;
}

Configuration ConfigSpace::decode(std::span<const double> encoded) const {
  if (encoded.size() != encoded_width_) throw ValidationError("encoded vector has wrong width");
  std::map<std::string, ParamValue> values;
  const double* cursor = encoded.data();
  for (const auto& p : parameters_) {
    switch (p.kind) {
      case ParamKind::Continuous:
        values[p.name] = std::clamp(from_unit(p, std::clamp(cursor[0], 0.0, 1.0)), p.lower, p.upper);
        break;
      case ParamKind::Integer:
        values[p.name] = static_cast<std::int64_t>(
            std::clamp(round_half_even(from_unit(p, std::clamp(cursor[0], 0.0, 1.0))), p.lower, p.upper));
        break;
      case ParamKind::Categorical: {
        const auto best = std::max_element(cursor, cursor + p.choices.size()) - cursor;
        values[p.name] = p.choices[static_cast<std::size_t>(best)];
        break;
      }
    }
    cursor += p.encoded_width();
  }
  return Configuration(std::move(values));
}

std::vector<Configuration> sample_random(const ConfigSpace& space, std::uint64_t rng_seed, std::size_t n) {
  return space.sample_random(rng_seed, n);
}

Configuration default_config(const ConfigSpace& space) { return space.default_config(); }

std::vector<double> encode(const ConfigSpace& space, const Configuration& config) { return space.encode(config); }

}  // namespace tuna
