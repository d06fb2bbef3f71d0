// spill: command-line driver for the blowout assessment pipeline.
//
//   gen-field -> batch -> exposure -> learn -> sample / query / report
//
// Every command writes a manifest beside its output recording the tool
// version, seeds, the resolved config and checksums of its inputs.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "spill/config.hpp"
#include "spill/exposure.hpp"
#include "spill/fields.hpp"
#include "spill/inference.hpp"
#include "spill/manifold.hpp"
#include "spill/scenarios.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spill;

namespace {

struct Globals
{
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::string out;
};

RunConfig resolve_config(const Globals& g)
{
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  if (g.seed) c.base_seed = *g.seed;
  if (g.workers) c.workers = *g.workers;
  return c;
}

void require_out(const Globals& g)
{
  if (g.out.empty()) throw ValidationError("--out is required");
}

json read_json(const std::string& path, const std::string& what)
{
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + what + " '" + path + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j)
{
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

json input_entry(const std::string& path) { return {{"path", path}, {"checksum", file_checksum(path)}}; }

/// Manifest beside a file output: "<out>.manifest.json".
fs::path manifest_for_file(const std::string& out) { return fs::path(out + ".manifest.json"); }

json manifest_base(const std::string& command, const RunConfig& cfg, const Globals& g)
{
  json m;
  m["tool"] = "spill";
  m["version"] = kVersion;
  m["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                       std::to_string(EIGEN_MINOR_VERSION);
  m["command"] = command;
  m["config"] = cfg.to_json();
  m["config_path"] = g.config_path.empty() ? json(nullptr) : json(g.config_path);
  m["inputs"] = json::object();
  return m;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_gen_field(const Globals& g, const std::string& spec_path, const std::string& csv_grid,
                   const std::string& pop_out, const std::string& counties_out)
{
  require_out(g);
  const RunConfig cfg = resolve_config(g);
  json manifest = manifest_base("gen-field", cfg, g);
  EnvDataset ds;
  if (!csv_grid.empty()) {
    ds = load_dataset_csv(csv_grid);
    manifest["inputs"]["csv_grid"] = input_entry(csv_grid);
  } else {
    if (spec_path.empty()) throw ValidationError("gen-field needs --spec or --csv");
    const json spec = read_json(spec_path, "field spec");
    for (const auto& [k, v] : spec.items())
      if (k != "grid" && k != "field") throw ValidationError(spec_path + ": unknown key '" + k + "'");
    if (!spec.contains("grid") || !spec.contains("field"))
      throw ValidationError(spec_path + ": needs 'grid' and 'field'");
    GridSpec grid;
    AnalyticFieldSpec field;
    try {
      grid = GridSpec::from_json(spec["grid"]);
      field = AnalyticFieldSpec::from_json(spec["field"]);
    } catch (const ValidationError& e) {
      throw ValidationError(spec_path + ": " + e.what());
    }
    ds = gen_synthetic(field, grid);
    manifest["inputs"]["spec"] = input_entry(spec_path);
  }
  save_dataset(g.out, ds);
  manifest["field_checksum"] = dataset_checksum(ds);
  manifest["outputs"] = {{"field", g.out}};
  if (!pop_out.empty()) {
    save_population(pop_out, surrogate_population(ds));
    manifest["outputs"]["population"] = pop_out;
  }
  if (!counties_out.empty()) {
    save_counties(counties_out, surrogate_counties(ds));
    manifest["outputs"]["counties"] = counties_out;
  }
  write_json(manifest_for_file(g.out), manifest);
  spdlog::info("wrote field {} ({}x{}x{}x{})", g.out, ds.grid.nt, ds.grid.nz(), ds.grid.ny, ds.grid.nx);
}

BatchConfig batch_config(const RunConfig& cfg, const std::string& checksum)
{
  BatchConfig b;
  b.transport = cfg.transport;
  b.weathering = cfg.weathering;
  b.assay = cfg.assay();
  b.base_seed = cfg.base_seed;
  b.workers = cfg.workers;
  b.field_checksum = checksum;
  return b;
}

void cmd_simulate(const Globals& g, const std::string& field_path, const std::string& scenario_path)
{
  require_out(g);
  const RunConfig cfg = resolve_config(g);
  const EnvDataset env = load_dataset(field_path);
  Scenario s;
  try {
    s = Scenario::from_json(read_json(scenario_path, "scenario"));
  } catch (const ValidationError& e) {
    throw ValidationError(scenario_path + ": " + e.what());
  }
  s.validate(env);
  const auto seed = g.seed ? *g.seed : scenario_seed(cfg.base_seed, s.site_id, s.onset);
  const fs::path out(g.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  run_and_write_scenario(s, env, batch_config(cfg, dataset_checksum(env)), seed, g.out,
                         manifest_for_file(g.out).string());
  spdlog::info("wrote {}", g.out);
}

void cmd_batch(const Globals& g, const std::string& field_path, const std::string& grid_path)
{
  require_out(g);
  const RunConfig cfg = resolve_config(g);
  const EnvDataset env = load_dataset(field_path);
  json gj = read_json(grid_path, "scenario grid");
  // Grid-file defaults take precedence over the config's scenario section.
  json defaults = cfg.scenario.to_json();
  if (gj.contains("defaults")) defaults.update(gj["defaults"]);
  gj["defaults"] = defaults;
  ScenarioGrid grid;
  try {
    grid = grid_from_json(gj, env);
  } catch (const ValidationError& e) {
    throw ValidationError(grid_path + ": " + e.what());
  }
  json prov = manifest_base("batch", cfg, g);
  prov["inputs"]["field"] = input_entry(field_path);
  prov["inputs"]["grid"] = input_entry(grid_path);
  const auto checksum = dataset_checksum(env);
  spdlog::info("running {} scenarios on {} worker(s)", grid.size(), cfg.workers);
  const auto entries = run_batch(grid, env, batch_config(cfg, checksum), g.out, prov);
  std::size_t failed = 0;
  for (const auto& e : entries) failed += e.status != "ok";
  if (failed) throw RuntimeError(std::to_string(failed) + " of " + std::to_string(entries.size()) + " scenarios failed");
}

void cmd_exposure(const Globals& g, const std::string& batch_dir, const std::string& field_path,
                  const std::string& pop_path, const std::string& counties_path)
{
  require_out(g);
  const RunConfig cfg = resolve_config(g);
  const EnvDataset env = load_dataset(field_path);
  const auto bm = read_batch_manifest(batch_dir);
  const auto checksum = dataset_checksum(env);
  if (bm.field_checksum != checksum)
    throw ValidationError(field_path + ": field checksum " + checksum + " does not match the batch manifest (" +
                          bm.field_checksum + ")");
  std::optional<PopulationRaster> pop;
  std::optional<CountyTable> counties;
  json manifest = manifest_base("exposure", cfg, g);
  manifest["inputs"]["field"] = input_entry(field_path);
  manifest["inputs"]["batch_manifest"] = input_entry((fs::path(batch_dir) / "batch_manifest.json").string());
  if (!pop_path.empty()) {
    pop = load_population(pop_path);
    manifest["inputs"]["population"] = input_entry(pop_path);
  }
  if (!counties_path.empty()) {
    counties = load_counties(counties_path);
    manifest["inputs"]["counties"] = input_entry(counties_path);
  }

  std::vector<ExposureRow> rows;
  manifest["scenarios"] = json::array();
  for (const auto& e : bm.entries) {
    if (e.status != "ok") {
      spdlog::warn("skipping failed scenario {}", e.key);
      continue;
    }
    const auto path = (fs::path(batch_dir) / e.snapshots_path).string();
    std::vector<SnapshotRecord> snaps;
    try {
      snaps = read_snapshots_csv(path);
    } catch (const ValidationError& ex) {
      throw ValidationError(path + ": " + ex.what());
    }
    ExposureRow row;
    row.site_id = e.scenario.site_id;
    row.onset = e.scenario.onset;
    row.x = e.scenario.pos.x;
    row.y = e.scenario.pos.y;
    row.release_depth = e.scenario.release_depth;
    row.metrics = compute_exposure(snaps, env, pop ? &*pop : nullptr, counties ? &*counties : nullptr, cfg.exposure);
    rows.push_back(row);
    manifest["scenarios"].push_back({{"key", e.key}, {"snapshots", input_entry(path)}});
  }
  if (rows.empty()) throw RuntimeError("no successful scenarios in " + batch_dir);
  const fs::path out(g.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_exposure_csv(g.out, rows);
  write_json(manifest_for_file(g.out), manifest);
  spdlog::info("wrote {} exposure rows to {}", rows.size(), g.out);
}

void cmd_learn(const Globals& g, const std::string& exposure_path)
{
  require_out(g);
  const RunConfig cfg = resolve_config(g);
  const auto rows = read_exposure_csv(exposure_path);
  JointModel model = learn(sample_matrix_from_exposure(rows), cfg.manifold, cfg.base_seed);
  model.sites = sites_from_exposure(rows);
  save_model(g.out, model);
  json manifest = manifest_base("learn", cfg, g);
  manifest["inputs"]["exposure"] = input_entry(exposure_path);
  manifest["seed"] = cfg.base_seed;
  manifest["replicas"] = model.replicas;
  manifest["model"] = {{"N", model.training.rows()},
                       {"n", model.training.cols()},
                       {"kept_columns", model.norm.kept_names()},
                       {"bandwidth", model.kde.bandwidth},
                       {"shrink", model.kde.shrink},
                       {"epsilon", model.basis.epsilon},
                       {"m", model.basis.m}};
  write_json(manifest_for_file(g.out), manifest);
  spdlog::info("learned model: N={}, m={}, {} generated samples", model.training.rows(), model.basis.m,
               model.generated.rows());
}

void cmd_sample(const Globals& g, const std::string& model_path, int replicas)
{
  require_out(g);
  const RunConfig cfg = resolve_config(g);
  const JointModel model = load_model(model_path);
  const std::uint64_t seed = g.seed ? *g.seed : model.seed;
  const SampleMatrix s = resample(model, replicas, seed);
  write_sample_csv(g.out, s);
  json manifest = manifest_base("sample", cfg, g);
  manifest["inputs"]["model"] = input_entry(model_path);
  manifest["seed"] = seed;
  manifest["replicas"] = replicas;
  write_json(manifest_for_file(g.out), manifest);
}

void cmd_query(const Globals& g, const std::string& model_path, const std::string& query_path)
{
  require_out(g);
  const RunConfig cfg = resolve_config(g);
  const JointModel model = load_model(model_path);
  json qj = read_json(query_path, "query");
  if (!qj.contains("bandwidth_multiplier")) qj["bandwidth_multiplier"] = cfg.inference.bandwidth_multiplier;
  Query q;
  try {
    q = Query::from_json(qj);
  } catch (const ValidationError& e) {
    throw ValidationError(query_path + ": " + e.what());
  }
  fs::create_directories(g.out);
  const fs::path dir(g.out);
  json summary;
  summary["query"] = q.to_json();
  try {
    if (q.mode == QueryMode::prevent) {
      const auto r = filter_exceedance(model, q);
      write_sample_csv((dir / "exceedance_samples.csv").string(), r.samples, &r.weights);
      summary["variable"] = r.variable;
      summary["threshold"] = r.threshold;
      summary["empty"] = r.empty;
      summary["count"] = r.rows.size();
      summary["total"] = model.generated.rows();
      summary["scenario_summary"] = summary_json(r.scenario_summary);
      json sites = json::object();
      for (const auto& [id, n] : r.per_site) sites[std::to_string(id)] = n;
      summary["per_site"] = sites;
      summary["per_month"] = r.per_month;
    } else {
      const auto r = condition(model, q);
      write_sample_csv((dir / "weighted_samples.csv").string(), r.samples, &r.weights);
      summary["ess"] = r.ess;
      summary["bandwidth"] = r.bandwidth;
      summary["low_ess"] = r.low_ess;
      summary["targets"] = summary_json(r.targets);
    }
  } catch (const ValidationError& e) {
    throw ValidationError(query_path + ": " + e.what());
  }
  write_json(dir / "summary.json", summary);
  json manifest = manifest_base("query", cfg, g);
  manifest["inputs"]["model"] = input_entry(model_path);
  manifest["inputs"]["query"] = input_entry(query_path);
  write_json(dir / "manifest.json", manifest);
}

void cmd_report(const Globals& g, const std::string& model_path)
{
  require_out(g);
  const RunConfig cfg = resolve_config(g);
  const JointModel model = load_model(model_path);
  fs::create_directories(g.out);
  const fs::path dir(g.out);
  const auto& gen = model.generated;
  const auto& tr = model.training;

  // Marginal tables, training vs generated.
  {
    std::ofstream out(dir / "marginals.csv");
    out << "variable,source,mean,sd,q05,q25,q50,q75,q95,min,max\n";
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    for (const auto& name : gen.columns)
      for (const auto* src : {&tr, &gen}) {
        const Eigen::VectorXd col = src->values.col(src->column_index(name));
        const std::vector<double> w(static_cast<std::size_t>(col.size()), 1.0 / static_cast<double>(col.size()));
        const auto s = weighted_summary(name, col, w);
        out << name << ',' << (src == &tr ? "training" : "generated") << ',' << num(s.mean) << ',' << num(s.sd);
        for (double q : s.quantiles) out << ',' << num(q);
        out << ',' << num(col.minCoeff()) << ',' << num(col.maxCoeff()) << '\n';
      }
  }

  // Conditional density slices of each metric by onset month, each slice
  // normalized to a peak of one.
  {
    std::ofstream out(dir / "density_slices.csv");
    out << "variable,month,y_lo,y_hi,density\n";
    const int bins = 20;
    if (gen.has_column("onset_sin") && gen.has_column("onset_cos")) {
      const auto cs = gen.column_index("onset_sin"), cc = gen.column_index("onset_cos");
      std::vector<int> month(static_cast<std::size_t>(gen.rows()));
      for (Eigen::Index r = 0; r < gen.rows(); ++r)
        month[static_cast<std::size_t>(r)] = month_of_angle(std::atan2(gen.values(r, cs), gen.values(r, cc)));
      for (const char* name : ExposureVector::names) {
        if (!gen.has_column(name)) continue;
        const Eigen::VectorXd y = gen.values.col(gen.column_index(name));
        const double lo = y.minCoeff(), hi = y.maxCoeff();
        const double width = hi > lo ? (hi - lo) / bins : 1.0;
        for (int mo = 1; mo <= 12; ++mo) {
          std::vector<double> counts(bins, 0.0);
          for (Eigen::Index r = 0; r < y.size(); ++r) {
            if (month[static_cast<std::size_t>(r)] != mo) continue;
            const int b = std::min(bins - 1, static_cast<int>((y(r) - lo) / width));
            counts[static_cast<std::size_t>(b)] += 1.0;
          }
          const double peak = *std::max_element(counts.begin(), counts.end());
          if (peak == 0.0) continue;
          for (int b = 0; b < bins; ++b)
            out << name << ',' << mo << ',' << lo + b * width << ',' << lo + (b + 1) * width << ','
                << counts[static_cast<std::size_t>(b)] / peak << '\n';
        }
      }
    }
  }

  // Local regression curves of each metric on each scenario variable.
  {
    std::ofstream out(dir / "regression_curves.csv");
    out << "x_var,y_var,x,y\n";
    out.precision(17);
    const auto kept = model.norm.kept_names();
    for (const char* xv : {"x_m", "y_m", "release_depth_m", "onset_sin", "onset_cos"}) {
      if (std::find(kept.begin(), kept.end(), xv) == kept.end()) continue;
      for (const char* yv : ExposureVector::names) {
        if (std::find(kept.begin(), kept.end(), yv) == kept.end()) continue;
        for (const auto& [x, y] :
             local_regression(model, xv, yv, cfg.inference.n_points, cfg.inference.span, cfg.inference.source))
          out << xv << ',' << yv << ',' << x << ',' << y << '\n';
      }
    }
  }

  // Pairwise R^2 over the generated samples; blank for constant columns.
  {
    std::ofstream out(dir / "r2_matrix.csv");
    out.precision(17);
    out << "variable";
    for (const auto& c : gen.columns) out << ',' << c;
    out << '\n';
    for (const auto& a : gen.columns) {
      out << a;
      for (const auto& b : gen.columns) {
        out << ',';
        try {
          out << correlation(model, a, b);
        } catch (const RuntimeError&) {
        }
      }
      out << '\n';
    }
  }

  json manifest = manifest_base("report", cfg, g);
  manifest["inputs"]["model"] = input_entry(model_path);
  manifest["outputs"] = {"marginals.csv", "density_slices.csv", "regression_curves.csv", "r2_matrix.csv"};
  write_json(dir / "manifest.json", manifest);
}

void setup_logging()
{
  auto logger = spdlog::stderr_color_mt("spill");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("SPILL_LOG")) {
    const auto level = spdlog::level::from_str(lvl);
    // from_str maps unknown names to "off"; only accept the literal.
    if (level == spdlog::level::off && std::string(lvl) != "off")
      spdlog::warn("SPILL_LOG='{}' is not a log level; using info", lvl);
    else
      spdlog::set_level(level);
  }
}

} // namespace

int main(int argc, char** argv)
{
  setup_logging();
  CLI::App app{"Offshore blowout scenario simulation and joint-probability assessment"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);

  Globals g;
  app.add_option("--config", g.config_path, "Run configuration JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Base seed (overrides the config)");
  app.add_option("--workers", g.workers, "Worker threads for batch")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output file or directory");

  std::string spec, csv_grid, pop_out, counties_out;
  auto* gen = app.add_subcommand("gen-field", "Generate an analytic field or ingest a CSV grid");
  gen->add_option("--spec", spec, "JSON with 'grid' and 'field' (kind, parameters)")->check(CLI::ExistingFile);
  gen->add_option("--csv", csv_grid, "Grid JSON naming per-variable CSV files")->check(CLI::ExistingFile);
  gen->add_option("--population", pop_out, "Also write a surrogate population raster here");
  gen->add_option("--counties", counties_out, "Also write a surrogate county table here");

  std::string field, scenario, grid;
  auto* sim = app.add_subcommand("simulate", "Run one scenario");
  sim->add_option("--field", field)->required()->check(CLI::ExistingFile);
  sim->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);

  auto* batch = app.add_subcommand("batch", "Run a scenario grid");
  batch->add_option("--field", field)->required()->check(CLI::ExistingFile);
  batch->add_option("--grid", grid)->required()->check(CLI::ExistingFile);

  std::string batch_dir, population, counties;
  auto* expo = app.add_subcommand("exposure", "Extract exposure metrics from a batch");
  expo->add_option("--batch", batch_dir)->required()->check(CLI::ExistingDirectory);
  expo->add_option("--field", field)->required()->check(CLI::ExistingFile);
  expo->add_option("--population", population)->check(CLI::ExistingFile);
  expo->add_option("--counties", counties)->check(CLI::ExistingFile);

  std::string exposure_csv, model;
  auto* lrn = app.add_subcommand("learn", "Learn the joint model from an exposure matrix");
  lrn->add_option("--exposure", exposure_csv)->required()->check(CLI::ExistingFile);

  int replicas = 10;
  auto* smp = app.add_subcommand("sample", "Draw new samples from a learned model");
  smp->add_option("--model", model)->required()->check(CLI::ExistingFile);
  smp->add_option("--replicas", replicas)->check(CLI::PositiveNumber);

  std::string query;
  auto* qry = app.add_subcommand("query", "Answer a predict, respond or prevent query");
  qry->add_option("--model", model)->required()->check(CLI::ExistingFile);
  qry->add_option("--query", query)->required()->check(CLI::ExistingFile);

  auto* rep = app.add_subcommand("report", "Marginals, density slices, regression curves, R^2 matrix");
  rep->add_option("--model", model)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen)
      cmd_gen_field(g, spec, csv_grid, pop_out, counties_out);
    else if (*sim)
      cmd_simulate(g, field, scenario);
    else if (*batch)
      cmd_batch(g, field, grid);
    else if (*expo)
      cmd_exposure(g, batch_dir, field, population, counties);
    else if (*lrn)
      cmd_learn(g, exposure_csv);
    else if (*smp)
      cmd_sample(g, model, replicas);
    else if (*qry)
      cmd_query(g, model, query);
    else if (*rep)
      cmd_report(g, model);
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const RuntimeError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
  return 0;
}
