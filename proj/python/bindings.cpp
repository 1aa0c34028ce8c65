// Python extension module `tuna._tuna`. Structured results cross the boundary
// as JSON text; the `tuna` package decodes them.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tuna/analysis.hpp"
#include "tuna/error.hpp"
#include "tuna/stability.hpp"
#include "tuna/tuner.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

json verdict_json(const tuna::StabilityVerdict& v) {
  return json{{"relative_range", v.relative_range}, {"is_unstable", v.is_unstable}, {"threshold", v.threshold_used}};
}

std::string tune(const std::string& config_json) {
  const json in = json::parse(config_json);
  tuna::RunConfig config = tuna::RunConfig::from_json(in);
  if (in.contains("out_dir") && !in["out_dir"].is_null()) config.out_dir = in["out_dir"].get<std::string>();
  tuna::RunResult r;
  {
    py::gil_scoped_release release;
    r = tuna::run_tune(config);
  }
  json j;
  j["trials"] = r.trials;
  j["crashed"] = r.crashed;
  j["evaluations"] = r.evaluations;
  j["best"] = r.best ? r.best->to_json() : json(nullptr);
  j["best_config_id"] = r.best ? json(r.best->id().hex()) : json(nullptr);
  if (r.best_summary && r.best_summary->reported_score) j["reported_score"] = *r.best_summary->reported_score;
  if (r.best_summary && r.best_summary->verdict) j["verdict"] = verdict_json(*r.best_summary->verdict);
  json curve = json::array();
  for (double v : r.curve.values()) curve.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  j["curve"] = std::move(curve);
  j["transcript"] = r.transcript;
  return j.dump();
}

}  // namespace

PYBIND11_MODULE(_tuna, m) {
  m.doc() = "Noise-aware configuration tuning";

  auto base = py::register_exception<tuna::Error>(m, "TunaError", PyExc_RuntimeError);
  py::register_exception<tuna::DomainError>(m, "DomainError", base.ptr());
  py::register_exception<tuna::ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<tuna::DegenerateInputError>(m, "DegenerateInputError", base.ptr());
  py::register_exception<tuna::StateError>(m, "StateError", base.ptr());
  py::register_exception<tuna::UsageError>(m, "UsageError", base.ptr());

  m.def("relative_range", [](const std::vector<double>& xs) { return tuna::relative_range(xs); }, py::arg("samples"));
  m.def(
      "classify",
      [](const std::vector<double>& xs, double threshold) {
        return verdict_json(tuna::classify(xs, threshold)).dump();
      },
      py::arg("samples"), py::arg("threshold") = tuna::kDefaultThreshold);
  m.def(
      "aggregate",
      [](const std::vector<double>& xs, double threshold, const std::string& direction) {
        const auto verdict = tuna::classify(xs, threshold);
        return tuna::aggregate(xs, verdict,
                               tuna::AggregationPolicy::worst_case(tuna::direction_from_string(direction)));
      },
      py::arg("samples"), py::arg("threshold") = tuna::kDefaultThreshold, py::arg("direction") = "maximize");
  m.def(
      "apply_penalty",
      [](double score, const std::string& direction) {
        return tuna::apply_penalty(score, tuna::direction_from_string(direction));
      },
      py::arg("score"), py::arg("direction") = "maximize");

  m.def("binomial", &tuna::binomial, py::arg("n"), py::arg("k"));
  m.def("detection_probability", &tuna::detection_probability, py::arg("n_sampled"), py::arg("pool"),
        py::arg("bad_workers"));
  m.def(
      "min_cluster_size",
      [](const std::vector<double>& fractions, int n_unstable, double confidence) {
        return tuna::min_cluster_size_exact(fractions, n_unstable, confidence);
      },
      py::arg("bad_fractions"), py::arg("n_unstable_per_run"), py::arg("confidence"));
  m.def(
      "cluster_detection",
      [](const std::vector<double>& fractions, int n_unstable, int pool) {
        return tuna::cluster_detection_exact(fractions, n_unstable, pool);
      },
      py::arg("bad_fractions"), py::arg("n_unstable_per_run"), py::arg("pool"));

  m.def("default_run_config", [] { return tuna::RunConfig{}.to_json().dump(); });
  m.def("tune", &tune, py::arg("config_json"));
  m.def("analyze_run", [](const std::filesystem::path& dir) { return tuna::analyze_run(dir).dump(); },
        py::arg("dir"));
}
