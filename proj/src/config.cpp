#include "spill/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace spill {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& section)
{
  if (!j.is_object()) throw ValidationError("config: section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ValidationError("config: unknown key '" + k + "' in " + section);
}

ExposureSettings exposure_from_json(const nlohmann::json& j)
{
  reject_unknown(j, {"pop_radius_m", "sales_buffer_m"}, "exposure");
  ExposureSettings s;
  s.pop_radius = j.value("pop_radius_m", s.pop_radius);
  s.sales_buffer = j.value("sales_buffer_m", s.sales_buffer);
  if (!(s.pop_radius > 0.0) || !(s.sales_buffer >= 0.0))
    throw ValidationError("config: exposure radii must be positive");
  return s;
}

InferenceDefaults inference_from_json(const nlohmann::json& j)
{
  reject_unknown(j, {"bandwidth_multiplier", "span", "n_points", "source"}, "inference");
  InferenceDefaults d;
  d.bandwidth_multiplier = j.value("bandwidth_multiplier", d.bandwidth_multiplier);
  d.span = j.value("span", d.span);
  d.n_points = j.value("n_points", d.n_points);
  const auto source = j.value("source", std::string("generated"));
  if (source == "generated")
    d.source = RegressionSource::generated;
  else if (source == "training")
    d.source = RegressionSource::training;
  else
    throw ValidationError("config: inference.source must be 'generated' or 'training'");
  if (!(d.bandwidth_multiplier > 0.0)) throw ValidationError("config: inference.bandwidth_multiplier must be positive");
  if (!(d.span > 0.0 && d.span <= 1.0)) throw ValidationError("config: inference.span must be in (0, 1]");
  if (d.n_points < 1) throw ValidationError("config: inference.n_points must be positive");
  return d;
}

} // namespace

OilAssay RunConfig::assay() const { return assay_path.empty() ? default_assay() : load_assay(assay_path); }

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::string& base_dir)
{
  reject_unknown(j, {"transport", "weathering", "scenario", "exposure", "manifold", "inference", "base_seed", "workers", "paths"},
                 "config");
  RunConfig c;
  try {
    if (j.contains("transport")) c.transport = TransportParams::from_json(j["transport"]);
    if (j.contains("weathering")) c.weathering = WeatheringParams::from_json(j["weathering"]);
    if (j.contains("scenario")) c.scenario = ScenarioDefaults::from_json(j["scenario"]);
    if (j.contains("exposure")) c.exposure = exposure_from_json(j["exposure"]);
    if (j.contains("manifold")) c.manifold = ManifoldConfig::from_json(j["manifold"]);
    if (j.contains("inference")) c.inference = inference_from_json(j["inference"]);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.workers = j.value("workers", c.workers);
    if (j.contains("paths")) {
      reject_unknown(j["paths"], {"assay"}, "paths");
      if (j["paths"].contains("assay")) {
        std::filesystem::path p = j["paths"]["assay"].get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        c.assay_path = p.lexically_normal().string();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (c.workers < 1) throw ValidationError("config: workers must be at least 1");
  return c;
}

nlohmann::json RunConfig::to_json() const
{
  nlohmann::json j;
  j["transport"] = transport.to_json();
  j["weathering"] = weathering.to_json();
  j["scenario"] = scenario.to_json();
  j["exposure"] = {{"pop_radius_m", exposure.pop_radius}, {"sales_buffer_m", exposure.sales_buffer}};
  j["manifold"] = manifold.to_json();
  j["inference"] = {{"bandwidth_multiplier", inference.bandwidth_multiplier},
                    {"span", inference.span},
                    {"n_points", inference.n_points},
                    {"source", inference.source == RegressionSource::generated ? "generated" : "training"}};
  j["base_seed"] = base_seed;
  j["workers"] = workers;
  j["paths"] = nlohmann::json::object();
  if (!assay_path.empty()) j["paths"]["assay"] = assay_path;
  return j;
}

RunConfig load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
  try {
    return RunConfig::from_json(j, std::filesystem::path(path).parent_path().string());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

} // namespace spill
