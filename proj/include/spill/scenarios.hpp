#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "spill/fields.hpp"
#include "spill/transport.hpp"
#include "spill/weathering.hpp"

namespace spill {

/// One blowout: where, when, how much.
struct Scenario
{
  std::int64_t site_id = 0;
  Vec2 pos;
  double release_depth = 0.0;                      // m
  double onset = 0.0;                              // epoch s
  double blowout_duration = 7.0 * kSecondsPerDay;  // s
  double sim_duration = 60.0 * kSecondsPerDay;     // s
  double flow_rate = 50.0;                         // bbl/day
  std::int64_t n_parcels = 1000;

  /// Basic invariants; with an environment, also checks the site against it.
  void validate() const;
  void validate(const EnvDataset& env) const;

  /// File-name-safe key, e.g. "site3_onset1517443200".
  std::string key() const;

  nlohmann::json to_json() const;
  static Scenario from_json(const nlohmann::json& j);
};

struct Site
{
  std::int64_t site_id = 0;
  Vec2 pos;
};

/// `count` onsets starting at `start`, `every_days` apart.
struct OnsetRule
{
  double start = 0.0;
  double every_days = 30.0;
  std::size_t count = 12;

  std::vector<double> onsets() const;
};

/// Scenario fields shared by every cell of a grid, plus the bottom standoff.
struct ScenarioDefaults
{
  double blowout_duration = 7.0 * kSecondsPerDay;
  double sim_duration = 60.0 * kSecondsPerDay;
  double flow_rate = 50.0;
  std::int64_t n_parcels = 1000;
  double standoff = 50.0; // m above the sea floor

  static ScenarioDefaults from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ScenarioGrid
{
  std::vector<Site> sites;
  std::vector<double> onsets;
  ScenarioDefaults defaults;
  std::vector<Scenario> scenarios; // site-major order

  std::size_t size() const { return scenarios.size(); }
};

/// Every (site, onset) combination. Release depth is bathymetry minus the
/// standoff, at least 1 m. Throws for sites on land, outside the domain, or
/// in water shallower than the standoff.
ScenarioGrid build_grid(const std::vector<Site>& sites, const std::vector<double>& onsets, const EnvDataset& env,
                        const ScenarioDefaults& defaults);

/// Grid JSON: {"sites": [{"site_id", "x", "y"}], "onsets": [..] | {"start", "every_days", "count"},
///             "defaults": {...}}
ScenarioGrid load_grid(const std::string& path, const EnvDataset& env);
ScenarioGrid grid_from_json(const nlohmann::json& j, const EnvDataset& env);

/// Seed for one scenario, a pure function of (base_seed, site_id, onset).
std::uint64_t scenario_seed(std::uint64_t base_seed, std::int64_t site_id, double onset);

struct BatchEntry
{
  std::string key;
  Scenario scenario;
  std::uint64_t seed = 0;
  std::string status; // "ok" or "failed"
  std::string error;
  std::string snapshots_path; // relative to the batch directory
  std::string manifest_path;
  double wall_time_s = 0.0;
};

struct BatchConfig
{
  TransportParams transport;
  WeatheringParams weathering;
  OilAssay assay = default_assay();
  std::uint64_t base_seed = 0;
  unsigned workers = 1;
  std::string field_checksum; // computed from the dataset when empty
};

/// Simulates every scenario into `out_dir` (one snapshot CSV + run manifest
/// each) and writes batch_manifest.json. Wall times are only logged so the
/// directory stays byte-reproducible. Per-scenario failures are recorded, not
/// thrown.
std::vector<BatchEntry> run_batch(const ScenarioGrid& grid, const EnvDataset& env, const BatchConfig& config,
                                  const std::string& out_dir, const nlohmann::json& provenance = {});

/// Simulates one scenario and writes its snapshot CSV and run manifest.
void run_and_write_scenario(const Scenario& scenario, const EnvDataset& env, const BatchConfig& config,
                            std::uint64_t seed, const std::string& csv_path, const std::string& manifest_path);

struct BatchManifestEntry
{
  std::string key;
  Scenario scenario;
  std::uint64_t seed = 0;
  std::string status;
  std::string snapshots_path;
};

struct BatchManifest
{
  std::string field_checksum;
  std::vector<BatchManifestEntry> entries;
};

BatchManifest read_batch_manifest(const std::string& out_dir);

} // namespace spill
