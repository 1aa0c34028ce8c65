// SPDX-License-Identifier: Apache-2.0
#include "tuna/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tuna/error.hpp"
#include "tuna/random.hpp"

namespace tuna {

using nlohmann::json;

namespace {

const std::vector<std::string>& noise_channel_names() {
  static const std::vector<std::string> names{"cpu_steal_pct", "iowait_pct", "ctx_switch_rate", "disk_await_ms",
                                              "net_retrans_rate"};
  return names;
}

const std::vector<std::string>& worker_channel_names() {
  static const std::vector<std::string> names{"cpu_mhz", "mem_bw_gbps", "l3_cache_mb", "numa_distance",
                                              "disk_iops"};
  return names;
}

std::string distractor_name(std::size_t i) {
  return "misc_" + std::string(i < 10 ? "0" : "") + std::to_string(i);
}

// Signs of the deviation on each noise channel (steal and iowait rise when throughput drops, ...).
constexpr double kNoiseSigns[kNoiseChannels] = {-1.0, -1.0, 1.0, -1.0, -1.0};
constexpr double kWorkerSigns[kWorkerChannels] = {1.0, 1.0, 1.0, -1.0, 1.0};

double unit_coordinate(const ParameterDef& p, const Configuration& c) {
  const double v = c.number(p.name);
  if (p.log_scale) return (std::log10(v) - std::log10(p.lower)) / (std::log10(p.upper) - std::log10(p.lower));
  return (v - p.lower) / (p.upper - p.lower);
}

double from_unit(const ParameterDef& p, double u) {
  if (p.log_scale) return std::pow(10.0, std::log10(p.lower) + u * (std::log10(p.upper) - std::log10(p.lower)));
  return p.lower + u * (p.upper - p.lower);
}

bool in_region(const UnstableRegion& r, const ConfigSpace& space, const Configuration& c) {
  for (const auto& [name, center] : r.center)
    if (std::abs(unit_coordinate(space.parameter(name), c) - center) >= r.half_width) return false;
  return true;
}

// Compact bump: 1 at the center, 0 on and outside the box boundary.
double region_bump(const UnstableRegion& r, const ConfigSpace& space, const Configuration& c) {
  double b = 1.0;
  for (const auto& [name, center] : r.center) {
    const double t = (unit_coordinate(space.parameter(name), c) - center) / r.half_width;
    b *= std::max(0.0, 1.0 - t * t);
  }
  return b;
}

}  // namespace

std::vector<std::string> metric_names() {
  std::vector<std::string> out = noise_channel_names();
  for (const auto& n : worker_channel_names()) out.push_back(n);
  for (std::size_t i = 0; i < kDistractorChannels; ++i) out.push_back(distractor_name(i));
  return out;
}

// ---------------------------------------------------------------------------
// Noise

double draw_delta(double sigma, Rng& rng) {
  if (sigma <= 0.0) return 1.0;
  for (;;) {
    const double d = rng.normal(1.0, sigma);
    if (d >= kDeltaLow && d <= kDeltaHigh) return d;
  }
}

double inject_noise(double performance, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  return performance * draw_delta(sigma, rng);
}

std::uint64_t trial_seed(std::uint64_t run_seed, WorkerId worker, ConfigId config, std::uint64_t ordinal) {
  return derive_seed(run_seed, {fnv1a64("trial"), static_cast<std::uint64_t>(worker), config.value, ordinal});
}

// ---------------------------------------------------------------------------
// Landscape

double LandscapeSpec::performance(const ConfigSpace& space, const Configuration& config) const {
  double g = base;
  std::map<std::string, double> offset;
  for (const auto& t : terms) {
    const double u = unit_coordinate(space.parameter(t.parameter), config);
    const double d = u - t.center;
    offset[t.parameter] = d;
    g += t.amplitude * std::exp(-d * d / (2.0 * t.width * t.width));
  }
  for (const auto& ia : interactions) {
    const double diff = offset.at(ia.a) - offset.at(ia.b);
    g -= ia.weight * diff * diff;
  }
  for (const auto& [name, bonus] : categorical_bonus) {
    const auto& p = space.parameter(name);
    const auto& choice = config.choice(name);
    const auto idx = static_cast<std::size_t>(std::find(p.choices.begin(), p.choices.end(), choice) - p.choices.begin());
    g += bonus.at(idx);
  }
  // Overlapping regions do not stack; the strongest bump wins.
  double bump = 0.0;
  for (const auto& r : regions) bump = std::max(bump, r.bonus * region_bump(r, space, config));
  g += bump;
  return scale * std::max(g, 1e-3);
}

const UnstableRegion* LandscapeSpec::region_of(const ConfigSpace& space, const Configuration& config) const {
  const UnstableRegion* best = nullptr;
  double best_bump = -1.0;
  for (const auto& r : regions) {
    if (!in_region(r, space, config)) continue;
    const double b = r.bonus * region_bump(r, space, config);
    if (b > best_bump) {
      best = &r;
      best_bump = b;
    }
  }
  return best;
}

double LandscapeSpec::stable_optimum() const {
  double g = base;
  for (const auto& t : terms) g += t.amplitude;
  for (const auto& [name, bonus] : categorical_bonus) g += *std::max_element(bonus.begin(), bonus.end());
  return scale * g;
}

Configuration LandscapeSpec::stable_optimum_config(const ConfigSpace& space) const {
  std::map<std::string, ParamValue> values;
  for (const auto& p : space.parameters()) {
    if (p.kind == ParamKind::Categorical) {
      auto it = categorical_bonus.find(p.name);
      std::size_t best = 0;
      if (it != categorical_bonus.end())
        best = static_cast<std::size_t>(std::max_element(it->second.begin(), it->second.end()) - it->second.begin());
      values[p.name] = p.choices[best];
      continue;
    }
    double center = 0.5;
    for (const auto& t : terms)
      if (t.parameter == p.name) center = t.center;
    const double v = std::clamp(from_unit(p, center), p.lower, p.upper);
    if (p.kind == ParamKind::Integer) values[p.name] = static_cast<std::int64_t>(std::nearbyint(v));
    else values[p.name] = v;
  }
  return Configuration(std::move(values));
}

json LandscapeSpec::to_json() const {
  json j;
  j["scale"] = scale;
  j["base"] = base;
  j["terms"] = json::array();
  for (const auto& t : terms)
    j["terms"].push_back({{"parameter", t.parameter}, {"amplitude", t.amplitude}, {"center", t.center}, {"width", t.width}});
  j["interactions"] = json::array();
  for (const auto& ia : interactions) j["interactions"].push_back({{"a", ia.a}, {"b", ia.b}, {"weight", ia.weight}});
  j["categorical_bonus"] = categorical_bonus;
  j["regions"] = json::array();
  for (const auto& r : regions)
    j["regions"].push_back({{"class_id", r.class_id},
                            {"center", r.center},
                            {"half_width", r.half_width},
                            {"bonus", r.bonus},
                            {"degrade_factor", r.degrade_factor},
                            {"worker_bad_fraction", r.worker_bad_fraction}});
  j["direction"] = "maximize";
  return j;
}

LandscapeSpec LandscapeSpec::from_json(const json& j) {
  LandscapeSpec s;
  s.scale = j.value("scale", 1000.0);
  s.base = j.value("base", 0.35);
  if (j.value("direction", std::string("maximize")) != "maximize")
    throw ValidationError("simulated landscapes are throughput-like (maximize)");
  for (const auto& t : j.value("terms", json::array()))
    s.terms.push_back({t.at("parameter"), t.at("amplitude"), t.at("center"), t.at("width")});
  for (const auto& ia : j.value("interactions", json::array())) s.interactions.push_back({ia.at("a"), ia.at("b"), ia.at("weight")});
  s.categorical_bonus = j.value("categorical_bonus", std::map<std::string, std::vector<double>>{});
  for (const auto& r : j.value("regions", json::array())) {
    UnstableRegion u;
    u.class_id = r.at("class_id");
    u.center = r.at("center").get<std::map<std::string, double>>();
    u.half_width = r.value("half_width", 0.2);
    u.bonus = r.value("bonus", 0.0);
    u.degrade_factor = r.value("degrade_factor", 0.25);
    u.worker_bad_fraction = r.value("worker_bad_fraction", 0.5);
    if (!(u.degrade_factor > 0.0 && u.degrade_factor < 1.0)) throw ValidationError("degrade_factor must be in (0,1)");
    if (!(u.worker_bad_fraction > 0.0 && u.worker_bad_fraction < 1.0))
      throw ValidationError("worker_bad_fraction must be in (0,1)");
    s.regions.push_back(std::move(u));
  }
  if (!(s.scale > 0.0) || !(s.base > 0.0)) throw ValidationError("landscape scale and base must be positive");
  return s;
}

// ---------------------------------------------------------------------------
// Workers

json WorkerProfile::to_json() const {
  json bits = json::object();
  for (const auto& [k, v] : unstable_path_bits) bits[std::to_string(k)] = v;
  return json{{"worker_id", worker_id},
              {"baseline_multiplier", baseline_multiplier},
              {"noise_cov", noise_cov},
              {"metric_mixing", metric_mixing},
              {"baseline_mixing", baseline_mixing},
              {"unstable_path_bits", bits}};
}

WorkerProfile WorkerProfile::from_json(const json& j) {
  WorkerProfile w;
  w.worker_id = j.at("worker_id");
  w.baseline_multiplier = j.value("baseline_multiplier", 1.0);
  w.noise_cov = j.value("noise_cov", 0.0);
  w.metric_mixing = j.value("metric_mixing", std::vector<double>(kNoiseChannels, 1.0));
  w.baseline_mixing = j.value("baseline_mixing", std::vector<double>(kWorkerChannels, 1.0));
  const json bits = j.value("unstable_path_bits", json::object());
  for (const auto& [k, v] : bits.items()) w.unstable_path_bits[std::stoi(k)] = v.get<bool>();
  if (!(w.baseline_multiplier > 0.0)) throw ValidationError("baseline_multiplier must be positive");
  if (w.noise_cov < 0.0 || w.noise_cov > 0.5) throw ValidationError("noise_cov must be in [0, 0.5]");
  if (w.metric_mixing.size() != kNoiseChannels || w.baseline_mixing.size() != kWorkerChannels)
    throw ValidationError("worker mixing vectors have the wrong width");
  return w;
}

json WorkerModel::to_json() const {
  return json{{"baseline_sd", baseline_sd}, {"noise_cov_min", noise_cov_min}, {"noise_cov_max", noise_cov_max}};
}

WorkerModel WorkerModel::from_json(const json& j) {
  WorkerModel m;
  m.baseline_sd = j.value("baseline_sd", 0.0);
  m.noise_cov_min = j.value("noise_cov_min", 0.0);
  m.noise_cov_max = j.value("noise_cov_max", m.noise_cov_min);
  if (m.noise_cov_min < 0.0 || m.noise_cov_max > 0.5 || m.noise_cov_min > m.noise_cov_max)
    throw ValidationError("worker noise_cov range must lie in [0, 0.5]");
  return m;
}

std::vector<WorkerProfile> Environment::make_workers(std::uint64_t seed, std::size_t count) const {
  std::vector<WorkerProfile> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    Rng rng(derive_seed(seed, {fnv1a64("worker"), static_cast<std::uint64_t>(w)}));
    WorkerProfile p;
    p.worker_id = static_cast<WorkerId>(w);
    p.baseline_multiplier =
        worker_model.baseline_sd > 0.0 ? std::clamp(rng.normal(1.0, worker_model.baseline_sd), 0.8, 1.2) : 1.0;
    p.noise_cov = rng.uniform(worker_model.noise_cov_min, worker_model.noise_cov_max);
    for (std::size_t k = 0; k < kNoiseChannels; ++k) p.metric_mixing.push_back(kNoiseSigns[k] * rng.uniform(0.8, 1.2));
    for (std::size_t k = 0; k < kWorkerChannels; ++k)
      p.baseline_mixing.push_back(kWorkerSigns[k] * rng.uniform(0.8, 1.2));
    for (const auto& r : landscape.regions) p.unstable_path_bits[r.class_id] = rng.uniform() < r.worker_bad_fraction;
    out.push_back(std::move(p));
  }
  return out;
}

void Environment::set_noise(double cov) {
  if (cov < 0.0 || cov > 0.5) throw ValidationError("noise cov must be in [0, 0.5]");
  worker_model.noise_cov_min = worker_model.noise_cov_max = cov;
  for (auto& w : workers) w.noise_cov = cov;
}

namespace {

double noise_free_on(const WorkerProfile& w, double f, const UnstableRegion* region) {
  double v = f * w.baseline_multiplier;
  if (region) {
    auto it = w.unstable_path_bits.find(region->class_id);
    if (it != w.unstable_path_bits.end() && it->second) v *= region->degrade_factor;
  }
  return v;
}

}  // namespace

double Environment::noise_free_worst(const Configuration& config, const std::vector<WorkerProfile>& population) const {
  if (population.empty()) throw DomainError("empty worker population");
  const double f = landscape.performance(space, config);
  const UnstableRegion* region = landscape.region_of(space, config);
  double worst = noise_free_on(population.front(), f, region);
  for (const auto& w : population) worst = std::min(worst, noise_free_on(w, f, region));
  return worst;
}

double Environment::noise_free_mean(const Configuration& config, const std::vector<WorkerProfile>& population) const {
  if (population.empty()) throw DomainError("empty worker population");
  const double f = landscape.performance(space, config);
  const UnstableRegion* region = landscape.region_of(space, config);
  double sum = 0.0;
  for (const auto& w : population) sum += noise_free_on(w, f, region);
  return sum / static_cast<double>(population.size());
}

json Environment::to_json() const {
  json ws = json::array();
  for (const auto& w : workers) ws.push_back(w.to_json());
  return json{{"name", name},
              {"space", space.to_json()},
              {"landscape", landscape.to_json()},
              {"worker_model", worker_model.to_json()},
              {"workers", ws}};
}

Environment Environment::from_json(const json& j) {
  Environment e;
  e.name = j.value("name", std::string("custom"));
  e.space = ConfigSpace::from_json(j.at("space"));
  e.landscape = LandscapeSpec::from_json(j.at("landscape"));
  e.worker_model = WorkerModel::from_json(j.value("worker_model", json::object()));
  for (const auto& w : j.value("workers", json::array())) e.workers.push_back(WorkerProfile::from_json(w));
  // Validate that every landscape reference names a numeric parameter of the space.
  for (const auto& t : e.landscape.terms)
    if (e.space.parameter(t.parameter).kind == ParamKind::Categorical)
      throw ValidationError("landscape term on categorical parameter '" + t.parameter + "'");
  for (const auto& [name, bonus] : e.landscape.categorical_bonus)
    if (e.space.parameter(name).choices.size() != bonus.size())
      throw ValidationError("categorical bonus for '" + name + "' has the wrong length");
  for (std::size_t i = 0; i < e.workers.size(); ++i)
    if (e.workers[i].worker_id != static_cast<WorkerId>(i)) throw ValidationError("worker ids must be dense 0..N-1");
  return e;
}

Environment Environment::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open environment file '" + path + "'");
  return from_json(json::parse(in));
}

// ---------------------------------------------------------------------------
// Evaluation

SimOutcome evaluate_sim(const WorkerProfile& profile, const ConfigSpace& space, const LandscapeSpec& landscape,
                        const Configuration& config, std::uint64_t seed) {
  Rng rng(seed);
  SimOutcome out;
  const double f = landscape.performance(space, config);
  out.delta = draw_delta(profile.noise_cov, rng);
  double slow = 1.0;
  if (const UnstableRegion* r = landscape.region_of(space, config)) {
    auto it = profile.unstable_path_bits.find(r->class_id);
    if (it != profile.unstable_path_bits.end() && it->second) {
      slow = r->degrade_factor;
      out.slow_path = true;
    }
  }
  out.noise_free = f * profile.baseline_multiplier * slow;
  out.performance = out.noise_free * out.delta;

  const double realized = out.delta * slow - 1.0;
  const auto& noise_names = noise_channel_names();
  for (std::size_t k = 0; k < kNoiseChannels; ++k)
    out.metrics[noise_names[k]] = 50.0 + 100.0 * profile.metric_mixing[k] * realized + rng.normal();
  const auto& worker_names = worker_channel_names();
  for (std::size_t k = 0; k < kWorkerChannels; ++k)
    out.metrics[worker_names[k]] =
        40.0 + 200.0 * profile.baseline_mixing[k] * (profile.baseline_multiplier - 1.0) + 0.5 * rng.normal();
  for (std::size_t k = 0; k < kDistractorChannels; ++k) out.metrics[distractor_name(k)] = 100.0 + 10.0 * rng.normal();
  return out;
}

// ---------------------------------------------------------------------------
// Built-in scenarios

namespace {

ConfigSpace scenario_space() {
  return ConfigSpace({
      ParameterDef::continuous("buffer_pool_mb", 64.0, 65536.0, true, 128.0),
      ParameterDef::integer("worker_threads", 1, 64, false, 8),
      ParameterDef::continuous("flush_interval_ms", 1.0, 1000.0, false, 200.0),
      ParameterDef::integer("io_concurrency", 1, 256, true, 1),
      ParameterDef::categorical("commit_mode", {"sync", "async", "group"}, std::string("sync")),
  });
}

LandscapeSpec scenario_landscape(const ConfigSpace& space, Rng& rng) {
  LandscapeSpec l;
  l.scale = 1000.0;
  l.base = 0.35;
  std::vector<double> raw;
  for (const auto& p : space.parameters()) {
    if (p.kind == ParamKind::Categorical) continue;
    DimensionTerm t;
    t.parameter = p.name;
    t.center = rng.uniform(0.2, 0.8);
    if (p.kind == ParamKind::Integer) {
      // Snap the optimum onto an integer so it is attainable.
      const double v = std::nearbyint(from_unit(p, t.center));
      t.center = p.log_scale ? (std::log10(v) - std::log10(p.lower)) / (std::log10(p.upper) - std::log10(p.lower))
                             : (v - p.lower) / (p.upper - p.lower);
    }
    t.width = rng.uniform(0.18, 0.3);
    raw.push_back(rng.uniform(0.5, 1.0));
    l.terms.push_back(t);
  }
  double total = 0.0;
  for (double r : raw) total += r;
  for (std::size_t i = 0; i < l.terms.size(); ++i) l.terms[i].amplitude = 0.55 * raw[i] / total;

  l.interactions.push_back({l.terms[0].parameter, l.terms[1].parameter, rng.uniform(0.05, 0.1)});
  l.interactions.push_back({l.terms[2].parameter, l.terms[3].parameter, rng.uniform(0.05, 0.1)});

  std::vector<double> bonus;
  const std::size_t best = static_cast<std::size_t>(rng.index(3));
  for (std::size_t k = 0; k < 3; ++k) bonus.push_back(k == best ? 0.1 : rng.uniform(0.0, 0.06));
  l.categorical_bonus["commit_mode"] = bonus;
  return l;
}

constexpr double kRegionPeak = 1.3;

void plant_regions(LandscapeSpec& l, Rng& rng) {
  // Each class lives on a pair of numeric parameters, away from the stable optimum.
  const std::pair<std::size_t, std::size_t> dims[] = {{0, 1}, {2, 3}, {1, 2}};
  const double degrade[] = {0.25, 0.6, 0.5};
  constexpr double half_width = 0.12;
  for (int cls = 0; cls < 3; ++cls) {
    const auto& ta = l.terms[dims[cls].first];
    const auto& tb = l.terms[dims[cls].second];
    UnstableRegion r;
    r.class_id = cls;
    r.half_width = half_width;
    r.degrade_factor = degrade[cls];
    r.worker_bad_fraction = 0.5;
    double ca = 0.5, cb = 0.5;
    for (;;) {
      ca = rng.uniform(half_width, 1.0 - half_width);
      cb = rng.uniform(half_width, 1.0 - half_width);
      const bool clear = std::abs(ca - ta.center) >= half_width + 0.05 || std::abs(cb - tb.center) >= half_width + 0.05;
      if (clear) break;
    }
    r.center[ta.parameter] = ca;
    r.center[tb.parameter] = cb;
    // Peak at kRegionPeak x the stable optimum when the remaining parameters are ideal.
    auto term_value = [](const DimensionTerm& t, double u) {
      const double d = u - t.center;
      return t.amplitude * std::exp(-d * d / (2.0 * t.width * t.width));
    };
    double g_peak = l.stable_optimum() / l.scale - ta.amplitude - tb.amplitude + term_value(ta, ca) + term_value(tb, cb);
    for (const auto& ia : l.interactions) {
      auto off = [&](const std::string& name) {
        if (name == ta.parameter) return ca - ta.center;
        if (name == tb.parameter) return cb - tb.center;
        return 0.0;
      };
      const double diff = off(ia.a) - off(ia.b);
      g_peak -= ia.weight * diff * diff;
    }
    r.bonus = kRegionPeak * l.stable_optimum() / l.scale - g_peak;
    l.regions.push_back(std::move(r));
  }
}

}  // namespace

Environment make_environment(const std::string& env_name, std::uint64_t seed, std::size_t pool_size) {
  Environment env;
  env.name = env_name;
  env.space = scenario_space();
  Rng rng(derive_seed(seed, "landscape:" + env_name));
  env.landscape = scenario_landscape(env.space, rng);
  if (env_name == "smooth") {
    env.worker_model = WorkerModel{0.0, 0.0, 0.0};
  } else if (env_name == "planted-unstable") {
    plant_regions(env.landscape, rng);
    env.worker_model = WorkerModel{0.02, 0.03, 0.03};
  } else if (env_name == "learnable-noise") {
    env.worker_model = WorkerModel{0.03, 0.05, 0.10};
  } else {
    throw UsageError("unknown environment '" + env_name + "' (expected smooth, planted-unstable, learnable-noise)");
  }
  env.workers = env.make_workers(derive_seed(seed, "workers"), pool_size);
  return env;
}

}  // namespace tuna
