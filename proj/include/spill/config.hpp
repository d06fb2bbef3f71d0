#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "spill/exposure.hpp"
#include "spill/inference.hpp"
#include "spill/manifold.hpp"
#include "spill/scenarios.hpp"
#include "spill/transport.hpp"
#include "spill/weathering.hpp"

namespace spill {

struct InferenceDefaults
{
  double bandwidth_multiplier = 1.0;
  double span = 0.5;
  int n_points = 50;
  RegressionSource source = RegressionSource::generated;
};

/// Everything a command needs besides its input files. Every section is
/// optional in the file; unknown keys anywhere are rejected.
struct RunConfig
{
  TransportParams transport;
  WeatheringParams weathering;
  ScenarioDefaults scenario;
  ExposureSettings exposure;
  ManifoldConfig manifold = ManifoldConfig::defaults();
  InferenceDefaults inference;
  std::uint64_t base_seed = 20100420;
  unsigned workers = 1;
  std::string assay_path; // empty: built-in assay

  OilAssay assay() const;

  static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  nlohmann::json to_json() const;
};

/// Reads and validates a config file. Relative paths inside resolve against its directory.
RunConfig load_config(const std::string& path);

} // namespace spill
