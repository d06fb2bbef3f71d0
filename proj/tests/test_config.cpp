#include <doctest.h>

#include <fstream>

#include "spill/config.hpp"
#include "support.hpp"

using namespace spill;
using spill::test::TempDir;

TEST_CASE("the desk config loads")
{
  const RunConfig c = load_config(std::string(SPILL_DATA_DIR) + "/desk_config.json");
  CHECK(c.base_seed == 20100420);
  CHECK(c.workers == 4);
  CHECK(c.transport.cyclic_time);
  CHECK(c.inference.n_points == 40);
  CHECK(c.assay().components.size() == 6);
  CHECK(std::filesystem::path(c.assay_path).is_absolute());
}

TEST_CASE("defaults and round trip")
{
  const RunConfig d = RunConfig::from_json(nlohmann::json::object());
  CHECK(d.base_seed == 20100420);
  CHECK(d.workers == 1);
  CHECK(d.assay_path.empty());
  CHECK(d.inference.span == 0.5);
  CHECK(d.exposure.pop_radius == 40000.0);
  CHECK(RunConfig::from_json(d.to_json()).to_json() == d.to_json());
}

TEST_CASE("unknown keys are rejected in every section")
{
  for (const auto* section : {"transport", "weathering", "scenario", "exposure", "manifold", "inference", "paths"}) {
    CAPTURE(section);
    const nlohmann::json j = {{section, {{"no_such_key", 1}}}};
    CHECK_THROWS_WITH_AS(RunConfig::from_json(j), doctest::Contains("no_such_key"), ValidationError);
  }
  CHECK_THROWS_AS(RunConfig::from_json({{"seeds", 1}}), ValidationError);
  CHECK_THROWS_AS(RunConfig::from_json({{"workers", 0}}), ValidationError);
  CHECK_THROWS_AS(RunConfig::from_json({{"inference", {{"span", 1.5}}}}), ValidationError);
}

TEST_CASE("relative paths resolve against the config file")
{
  TempDir dir;
  std::filesystem::create_directories(dir.path() / "sub");
  std::filesystem::copy_file(std::string(SPILL_DATA_DIR) + "/assay_surrogate.json", dir.path() / "sub/oil.json");
  std::ofstream(dir.file("sub/cfg.json")) << R"({"paths": {"assay": "oil.json"}})";
  const RunConfig c = load_config(dir.file("sub/cfg.json"));
  CHECK(std::filesystem::equivalent(c.assay_path, dir.path() / "sub/oil.json"));
  CHECK_NOTHROW(c.assay());

  std::ofstream(dir.file("bad.json")) << "{ not json";
  CHECK_THROWS_AS(load_config(dir.file("bad.json")), ValidationError);
  CHECK_THROWS_AS(load_config(dir.file("missing.json")), ValidationError);
}
