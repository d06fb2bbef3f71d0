#include "spill/scenarios.hpp"

#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

namespace spill {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Scenario

void Scenario::validate() const
{
  if (!(blowout_duration >= 0.0) || !(sim_duration > 0.0))
    throw ValidationError("scenario " + key() + ": durations must be positive");
  if (!(flow_rate > 0.0)) throw ValidationError("scenario " + key() + ": flow_rate must be positive");
  if (n_parcels <= 0) throw ValidationError("scenario " + key() + ": n_parcels must be positive");
  if (!(release_depth >= 0.0)) throw ValidationError("scenario " + key() + ": release_depth must be non-negative");
}

void Scenario::validate(const EnvDataset& env) const
{
  validate();
  if (!env.grid.contains(pos.x, pos.y)) throw ValidationError("scenario " + key() + ": site outside the domain");
  if (env.is_land(pos)) throw ValidationError("scenario " + key() + ": site on land");
  const double bottom = env.bathy_at(pos).value_or(0.0);
  if (!(release_depth < bottom))
    throw ValidationError("scenario " + key() + ": release depth must be above the sea floor");
}

std::string Scenario::key() const
{
  return "site" + std::to_string(site_id) + "_onset" + std::to_string(std::llround(onset));
}

nlohmann::json Scenario::to_json() const
{
  return {{"site_id", site_id},
          {"x", pos.x},
          {"y", pos.y},
          {"release_depth", release_depth},
          {"onset", onset},
          {"blowout_duration", blowout_duration},
          {"sim_duration", sim_duration},
          {"flow_rate", flow_rate},
          {"n_parcels", n_parcels}};
}

Scenario Scenario::from_json(const nlohmann::json& j)
{
  Scenario s;
  const auto known = s.to_json();
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ValidationError("scenario: unknown key '" + k + "'");
  try {
    s.site_id = j.value("site_id", s.site_id);
    s.pos = {j.at("x").get<double>(), j.at("y").get<double>()};
    s.release_depth = j.at("release_depth").get<double>();
    s.onset = j.value("onset", s.onset);
    s.blowout_duration = j.value("blowout_duration", s.blowout_duration);
    s.sim_duration = j.value("sim_duration", s.sim_duration);
    s.flow_rate = j.value("flow_rate", s.flow_rate);
    s.n_parcels = j.value("n_parcels", s.n_parcels);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Grid

std::vector<double> OnsetRule::onsets() const
{
  std::vector<double> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(start + static_cast<double>(k) * every_days * kSecondsPerDay);
  return out;
}

ScenarioDefaults ScenarioDefaults::from_json(const nlohmann::json& j)
{
  ScenarioDefaults d;
  const auto known = d.to_json();
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ValidationError("scenario defaults: unknown key '" + k + "'");
  try {
    d.blowout_duration = j.value("blowout_duration", d.blowout_duration);
    d.sim_duration = j.value("sim_duration", d.sim_duration);
    d.flow_rate = j.value("flow_rate", d.flow_rate);
    d.n_parcels = j.value("n_parcels", d.n_parcels);
    d.standoff = j.value("standoff", d.standoff);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scenario defaults: ") + e.what());
  }
  if (!(d.standoff >= 0.0)) throw ValidationError("scenario defaults: standoff must be non-negative");
  return d;
}

nlohmann::json ScenarioDefaults::to_json() const
{
  return {{"blowout_duration", blowout_duration},
          {"sim_duration", sim_duration},
          {"flow_rate", flow_rate},
          {"n_parcels", n_parcels},
          {"standoff", standoff}};
}

ScenarioGrid build_grid(const std::vector<Site>& sites, const std::vector<double>& onsets, const EnvDataset& env,
                        const ScenarioDefaults& defaults)
{
  ScenarioGrid g;
  g.sites = sites;
  g.onsets = onsets;
  g.defaults = defaults;
  for (const auto& site : sites) {
    const std::string where = "site " + std::to_string(site.site_id);
    if (!env.grid.contains(site.pos.x, site.pos.y)) throw ValidationError(where + ": outside the domain");
    if (env.is_land(site.pos)) throw ValidationError(where + ": on land");
    const double bottom = *env.bathy_at(site.pos);
    if (bottom <= defaults.standoff)
      throw ValidationError(where + ": water depth " + std::to_string(bottom) + " m is not deeper than the " +
                            std::to_string(defaults.standoff) + " m standoff");
    const double depth = std::max(1.0, bottom - defaults.standoff);
    for (double onset : onsets) {
      Scenario s;
      s.site_id = site.site_id;
      s.pos = site.pos;
      s.release_depth = depth;
      s.onset = onset;
      s.blowout_duration = defaults.blowout_duration;
      s.sim_duration = defaults.sim_duration;
      s.flow_rate = defaults.flow_rate;
      s.n_parcels = defaults.n_parcels;
      s.validate(env);
      g.scenarios.push_back(s);
    }
  }
  return g;
}

ScenarioGrid grid_from_json(const nlohmann::json& j, const EnvDataset& env)
{
  for (const auto& [k, v] : j.items())
    if (k != "sites" && k != "onsets" && k != "defaults") throw ValidationError("scenario grid: unknown key '" + k + "'");
  std::vector<Site> sites;
  std::vector<double> onsets;
  try {
    for (const auto& s : j.at("sites"))
      sites.push_back({s.at("site_id").get<std::int64_t>(), {s.at("x").get<double>(), s.at("y").get<double>()}});
    const auto& o = j.at("onsets");
    if (o.is_array()) {
      onsets = o.get<std::vector<double>>();
    } else {
      OnsetRule rule;
      rule.start = o.at("start").get<double>();
      rule.every_days = o.value("every_days", rule.every_days);
      rule.count = o.value("count", rule.count);
      onsets = rule.onsets();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scenario grid: ") + e.what());
  }
  const auto defaults = ScenarioDefaults::from_json(j.value("defaults", nlohmann::json::object()));
  return build_grid(sites, onsets, env, defaults);
}

ScenarioGrid load_grid(const std::string& path, const EnvDataset& env)
{
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario grid '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": malformed JSON: " + e.what());
  }
  return grid_from_json(j, env);
}

std::uint64_t scenario_seed(std::uint64_t base_seed, std::int64_t site_id, double onset)
{
  return derive_seed(base_seed, static_cast<std::uint64_t>(site_id), std::bit_cast<std::uint64_t>(onset));
}

// ---------------------------------------------------------------------------
// Batch

void run_and_write_scenario(const Scenario& scenario, const EnvDataset& env, const BatchConfig& config,
                            std::uint64_t seed, const std::string& csv_path, const std::string& manifest_path)
{
  TransportParams params = config.transport;
  params.seed = seed;
  const auto result = run_simulation(scenario, env, params, config.assay, config.weathering);
  write_snapshots_csv(csv_path, result.snapshots);

  const auto& l = result.final_ledger;
  nlohmann::json manifest = {
      {"version", kVersion},
      {"scenario", scenario.to_json()},
      {"transport", params.to_json()},
      {"weathering", config.weathering.to_json()},
      {"assay", config.assay.to_json()},
      {"seed", seed},
      {"field_checksum", config.field_checksum.empty() ? dataset_checksum(env) : config.field_checksum},
      {"snapshots", fs::path(csv_path).filename().string()},
      {"mass_ledger",
       {{"released", l.released}, {"evaporated", l.evaporated}, {"dissolved", l.dissolved}, {"in_parcels", l.in_parcels}}},
  };
  std::ofstream out(manifest_path);
  if (!out) throw RuntimeError("cannot open '" + manifest_path + "' for writing");
  out << manifest.dump(2) << '\n';
}

std::vector<BatchEntry> run_batch(const ScenarioGrid& grid, const EnvDataset& env, const BatchConfig& config,
                                  const std::string& out_dir, const nlohmann::json& provenance)
{
  fs::create_directories(out_dir);
  BatchConfig cfg = config;
  if (cfg.field_checksum.empty()) cfg.field_checksum = dataset_checksum(env);
  std::vector<BatchEntry> entries(grid.scenarios.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& e = entries[k];
    e.scenario = grid.scenarios[k];
    e.key = e.scenario.key();
    e.seed = scenario_seed(config.base_seed, e.scenario.site_id, e.scenario.onset);
    e.snapshots_path = e.key + ".csv";
    e.manifest_path = e.key + ".json";
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < entries.size(); k = next++) {
      auto& e = entries[k];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        run_and_write_scenario(e.scenario, env, cfg, e.seed, (fs::path(out_dir) / e.snapshots_path).string(),
                               (fs::path(out_dir) / e.manifest_path).string());
        e.status = "ok";
      } catch (const std::exception& ex) {
        e.status = "failed";
        e.error = ex.what();
        spdlog::warn("scenario {} failed: {}", e.key, ex.what());
      }
      e.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(config.workers, static_cast<unsigned>(entries.size())));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  nlohmann::json manifest;
  manifest["provenance"] = provenance;
  manifest["field_checksum"] = cfg.field_checksum;
  manifest["base_seed"] = config.base_seed;
  manifest["scenarios"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json je = {{"key", e.key},
                         {"scenario", e.scenario.to_json()},
                         {"seed", e.seed},
                         {"status", e.status},
                         {"snapshots", e.snapshots_path},
                         {"manifest", e.manifest_path}};
    if (!e.error.empty()) je["error"] = e.error;
    manifest["scenarios"].push_back(je);
    spdlog::info("scenario {} {} in {:.2f} s", e.key, e.status, e.wall_time_s);
  }
  std::ofstream(fs::path(out_dir) / "batch_manifest.json") << manifest.dump(2) << '\n';
  return entries;
}

BatchManifest read_batch_manifest(const std::string& out_dir)
{
  const auto path = (fs::path(out_dir) / "batch_manifest.json").string();
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open batch manifest '" + path + "'");
  BatchManifest m;
  try {
    nlohmann::json j;
    in >> j;
    m.field_checksum = j.at("field_checksum").get<std::string>();
    for (const auto& e : j.at("scenarios"))
      m.entries.push_back({e.at("key").get<std::string>(), Scenario::from_json(e.at("scenario")),
                           e.at("seed").get<std::uint64_t>(), e.at("status").get<std::string>(),
                           e.at("snapshots").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return m;
}

} // namespace spill
