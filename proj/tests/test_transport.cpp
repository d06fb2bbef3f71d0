#include <doctest.h>

#include <cmath>

#include "spill/scenarios.hpp"
#include "spill/transport.hpp"
#include "support.hpp"

using namespace spill;
using spill::test::make_grid;
using spill::test::TempDir;
using spill::test::uniform_env;

namespace {

TransportParams quiet_params()
{
  TransportParams p;
  p.k_diff = 0.0;
  p.windage = 0.0;
  p.dt = 600.0;
  return p;
}

Parcel surface_parcel(double x, double y)
{
  Parcel p;
  p.id = 1;
  p.pos = {x, y};
  p.state = ParcelState::surface;
  p.comp_mass = {1.0};
  return p;
}

OilAssay single_cut(double rho)
{
  OilAssay a;
  a.name = "single";
  a.components = {{500.0, 1.0, rho}};
  a.soluble_fraction = 0.0;
  return a;
}

Scenario small_scenario(const EnvDataset& env)
{
  Scenario s;
  s.site_id = 4;
  s.pos = {0.3 * env.grid.x_max(), 0.5 * env.grid.y_max()};
  s.release_depth = 100.0;
  s.onset = 0.0;
  s.blowout_duration = 6 * 3600.0;
  s.sim_duration = 2 * 86400.0;
  s.n_parcels = 60;
  return s;
}

} // namespace

TEST_CASE("pure advection moves exactly U dt")
{
  const EnvDataset env = uniform_env(make_grid(11, 11, 1000.0, 2, 86400.0), 0.1, 0.0);
  const auto params = quiet_params();
  ParcelStream stream(1, 1, 1);
  Parcel p = surface_parcel(2000.0, 5000.0);
  for (int n = 0; n < 10; ++n) {
    const Parcel next = step(p, env, params, stream, n * params.dt);
    CHECK(next.pos.x - p.pos.x == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(next.pos.y == p.pos.y);
    p = next;
  }
}

TEST_CASE("no flow and no diffusion leaves a parcel in place")
{
  const EnvDataset env = uniform_env(make_grid(11, 11, 1000.0), 0.0, 0.0);
  ParcelStream stream(1, 1, 1);
  const Parcel p = surface_parcel(2000.0, 5000.0);
  const Parcel q = step(p, env, quiet_params(), stream, 0.0);
  CHECK(q.pos == p.pos);
  CHECK(q.state == ParcelState::surface);
}

TEST_CASE("Brownian spread grows as 2kT")
{
  const EnvDataset env = uniform_env(make_grid(3, 3, 200000.0, 2, 2 * 86400.0), 0.0, 0.0);
  TransportParams params = quiet_params();
  params.k_diff = 0.2;
  const int n = 4000, steps = 144;
  double sx = 0, sy = 0, sxx = 0, syy = 0;
  for (int id = 0; id < n; ++id) {
    ParcelStream stream(17, id, 1);
    Parcel p = surface_parcel(200000.0, 200000.0);
    for (int s = 0; s < steps; ++s) p = step(p, env, params, stream, s * params.dt);
    const double dx = p.pos.x - 200000.0, dy = p.pos.y - 200000.0;
    sx += dx;
    sy += dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const double expected = 2 * 0.2 * 86400.0;
  const double vx = sxx / n - (sx / n) * (sx / n), vy = syy / n - (sy / n) * (sy / n);
  // Sample variance at n = 4000 has relative sd sqrt(2/n) ~ 2.2%; allow 4 sd.
  CHECK(std::abs(vx / expected - 1) < 0.09);
  CHECK(std::abs(vy / expected - 1) < 0.09);
}

TEST_CASE("a step into land beaches at the coast and freezes")
{
  // Land for nodes i >= 7, so the coast (nearest-node boundary) is x = 6500.
  const EnvDataset env = uniform_env(make_grid(10, 5, 1000.0, 2, 86400.0), 1.0, 0.0, {{"land_strip_cells", 3}});
  ParcelStream stream(1, 1, 1);
  const Parcel p = surface_parcel(6300.0, 2000.0);
  const Parcel q = step(p, env, quiet_params(), stream, 0.0);
  REQUIRE(q.state == ParcelState::beached);
  CHECK(env.is_land(q.pos));
  CHECK(q.pos.x >= 6500.0);
  CHECK(q.pos.x <= 6501.0);
  const Parcel r = step(q, env, quiet_params(), stream, 600.0);
  CHECK(r == q);
}

TEST_CASE("crossing the domain edge is out of bounds")
{
  const EnvDataset env = uniform_env(make_grid(10, 5, 1000.0, 2, 86400.0), -1.0, 0.0);
  ParcelStream stream(1, 1, 1);
  const Parcel q = step(surface_parcel(300.0, 2000.0), env, quiet_params(), stream, 0.0);
  CHECK(q.state == ParcelState::out_of_bounds);
  CHECK(is_terminal(q.state));
}

TEST_CASE("a shallow subsurface parcel surfaces in one step")
{
  const EnvDataset env = uniform_env(make_grid(10, 5, 1000.0, 2, 86400.0), 0.0, 0.0);
  ParcelStream stream(1, 1, 1);
  Parcel p = surface_parcel(3000.0, 2000.0);
  p.state = ParcelState::subsurface;
  p.depth = 10.0; // rise 0.05 * 600 = 30 m
  const Parcel q = step(p, env, quiet_params(), stream, 0.0);
  CHECK(q.state == ParcelState::surface);
  CHECK(q.depth == 0.0);
  CHECK(q.surfaced_at >= 0.0);
}

TEST_CASE("a parcel pushed to the bottom sinks")
{
  const EnvDataset env = uniform_env(make_grid(10, 5, 1000.0, 2, 86400.0), 0.0, 0.0, {{"depth", 100.0}});
  TransportParams params = quiet_params();
  params.rise_velocity = -0.05; // sinking
  ParcelStream stream(1, 1, 1);
  Parcel p = surface_parcel(3000.0, 2000.0);
  p.state = ParcelState::subsurface;
  p.depth = 90.0;
  const Parcel q = step(p, env, params, stream, 0.0);
  CHECK(q.state == ParcelState::sunk);
  CHECK(q.depth == doctest::Approx(100.0));
}

TEST_CASE("release mass follows the unit conversion")
{
  const EnvDataset env = uniform_env(make_grid(10, 10, 1000.0, 2, 86400.0), 0.0, 0.0);
  Scenario s = small_scenario(env);
  s.flow_rate = 50.0;
  s.blowout_duration = 7 * 86400.0;
  s.n_parcels = 1000;
  const double litres_per_bbl = 158.987294928;
  const double oracle = 50.0 * 7.0 * litres_per_bbl / 1000.0 * 870.0;
  CHECK(total_release_mass(s, single_cut(870.0)) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(oracle == doctest::Approx(48411.6).epsilon(1e-5));
  const auto parcels = release(s, single_cut(870.0), 0.0, 7 * 86400.0);
  REQUIRE(parcels.size() == 1000);
  CHECK(parcels[0].total_mass() == doctest::Approx(oracle / 1000.0).epsilon(1e-12));
}

TEST_CASE("zero-duration blowout releases nothing")
{
  const EnvDataset env = uniform_env(make_grid(10, 10, 1000.0, 2, 86400.0), 0.0, 0.0);
  Scenario s = small_scenario(env);
  s.blowout_duration = 0.0;
  CHECK(release(s, default_assay(), 0.0, 86400.0).empty());
}

TEST_CASE("doubling the flow doubles each parcel's mass only")
{
  const EnvDataset env = uniform_env(make_grid(10, 10, 1000.0, 2, 86400.0), 0.0, 0.0);
  Scenario s = small_scenario(env);
  Scenario s2 = s;
  s2.flow_rate *= 2;
  const auto a = release(s, default_assay(), 0.0, 86400.0);
  const auto b = release(s2, default_assay(), 0.0, 86400.0);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].release_time == b[k].release_time);
    CHECK(a[k].pos == b[k].pos);
    for (std::size_t c = 0; c < a[k].comp_mass.size(); ++c) CHECK(b[k].comp_mass[c] == 2 * a[k].comp_mass[c]);
  }
}

TEST_CASE("uniform advection traces the exact polyline")
{
  const EnvDataset env = uniform_env(make_grid(50, 10, 2000.0, 2, 4 * 86400.0), 0.1, 0.0);
  const Scenario s = small_scenario(env);
  TransportParams params = quiet_params();
  params.seed = 3;
  const auto res = run_simulation(s, env, params, default_assay(), WeatheringParams::disabled());
  for (const auto& snap : res.snapshots)
    for (const auto& p : snap.parcels) {
      CHECK(p.pos.y == s.pos.y);
      // Every parcel has moved a whole number of 60 m steps.
      const double steps = (p.pos.x - s.pos.x) / 60.0;
      CHECK(std::abs(steps - std::round(steps)) < 1e-9);
      CHECK(steps <= (snap.time - s.onset) / params.dt + 1e-9);
    }
}

TEST_CASE("same seed, same snapshots; different seed, different snapshots")
{
  AnalyticFieldSpec spec;
  spec.kind = AnalyticFieldSpec::Kind::double_gyre;
  spec.parameters = {{"land_strip_cells", 3}, {"wind_x", 8.0}};
  const EnvDataset env = gen_synthetic(spec, make_grid(41, 21, 2500.0, 8, 21600.0, {0.0, 500.0}));
  Scenario s = small_scenario(env);
  s.pos.x = 0.85 * env.grid.x_max(); // 10 km off the coast, downwind
  s.pos.y = 0.25 * env.grid.y_max();
  TransportParams params;
  params.seed = 42;
  params.cyclic_time = true;
  const auto a = run_simulation(s, env, params, default_assay(), WeatheringParams{});
  const auto b = run_simulation(s, env, params, default_assay(), WeatheringParams{});
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) CHECK(a.snapshots[k].parcels == b.snapshots[k].parcels);
  params.seed = 43;
  const auto c = run_simulation(s, env, params, default_assay(), WeatheringParams{});
  CHECK(c.snapshots.back().parcels != a.snapshots.back().parcels);

  SUBCASE("mass ledger balances at every snapshot")
  {
    for (const auto& snap : a.snapshots) {
      const auto& l = snap.ledger;
      double in_parcels = 0.0;
      for (const auto& p : snap.parcels) in_parcels += p.total_mass;
      CHECK(in_parcels == doctest::Approx(l.in_parcels).epsilon(1e-12));
      CHECK(l.relative_error() <= 1e-9);
    }
    CHECK(a.final_ledger.evaporated > 0.0);
    CHECK(a.final_ledger.dissolved > 0.0);
  }

  SUBCASE("terminal parcels stay frozen")
  {
    std::map<std::int64_t, ParcelRecord> frozen;
    for (const auto& snap : a.snapshots)
      for (const auto& p : snap.parcels) {
        if (auto it = frozen.find(p.id); it != frozen.end()) CHECK(p == it->second);
        if (is_terminal(p.state)) frozen.emplace(p.id, p);
      }
    CHECK_FALSE(frozen.empty());
  }
}

TEST_CASE("windage has no effect on a run that never surfaces")
{
  const EnvDataset env = uniform_env(make_grid(20, 20, 2000.0, 2, 4 * 86400.0), 0.05, 0.02, {{"wind_x", 10.0}});
  const Scenario s = small_scenario(env);
  TransportParams params;
  params.rise_velocity = 0.0;
  params.seed = 5;
  const auto a = run_simulation(s, env, params, default_assay(), WeatheringParams{});
  params.windage = 0.5;
  const auto b = run_simulation(s, env, params, default_assay(), WeatheringParams{});
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) CHECK(a.snapshots[k].parcels == b.snapshots[k].parcels);
}

TEST_CASE("with weathering disabled the run equals bare stepping")
{
  const EnvDataset env = uniform_env(make_grid(20, 20, 2000.0, 2, 4 * 86400.0), 0.05, 0.02, {{"wind_x", 10.0}});
  Scenario s = small_scenario(env);
  s.n_parcels = 5;
  s.blowout_duration = 1.0; // every parcel is emitted in the first step
  TransportParams params;
  params.seed = 9;
  const auto res = run_simulation(s, env, params, default_assay(), WeatheringParams::disabled());

  auto parcels = release(s, default_assay(), 0.0, params.dt);
  REQUIRE(parcels.size() == 5);
  const auto n_steps = static_cast<int>(s.sim_duration / params.dt);
  for (auto& p : parcels) {
    ParcelStream stream(params.seed, p.id, 1);
    for (int k = 0; k < n_steps; ++k) p = step(p, env, params, stream, k * params.dt);
  }
  const auto& last = res.snapshots.back().parcels;
  REQUIRE(last.size() == parcels.size());
  for (std::size_t k = 0; k < last.size(); ++k) {
    CHECK(last[k].pos == parcels[k].pos);
    CHECK(last[k].depth == parcels[k].depth);
    CHECK(last[k].state == parcels[k].state);
  }
}

TEST_CASE("snapshot CSV round trip is exact")
{
  const EnvDataset env = uniform_env(make_grid(20, 20, 2000.0, 2, 4 * 86400.0), 0.05, 0.02, {{"wind_x", 10.0}});
  const Scenario s = small_scenario(env);
  TransportParams params;
  params.seed = 8;
  const auto res = run_simulation(s, env, params, default_assay(), WeatheringParams{});
  TempDir dir;
  write_snapshots_csv(dir.file("s.csv"), res.snapshots);
  const auto back = read_snapshots_csv(dir.file("s.csv"));
  std::size_t k = 0;
  for (const auto& snap : res.snapshots) {
    if (snap.parcels.empty()) continue;
    REQUIRE(k < back.size());
    CHECK(back[k].time == snap.time);
    CHECK(back[k].parcels == snap.parcels);
    ++k;
  }
  CHECK(k == back.size());
}

TEST_CASE("transport parameters reject bad values and unknown keys")
{
  CHECK_THROWS_AS(TransportParams::from_json({{"dtt", 1.0}}), ValidationError);
  CHECK_THROWS_AS(TransportParams::from_json({{"dt", -1.0}}), ValidationError);
  CHECK_THROWS_AS(TransportParams::from_json({{"dt", 600.0}, {"snapshot_interval", 1000.0}}), ValidationError);
  const auto p = TransportParams::from_json({{"k_diff", 0.5}});
  CHECK(p.k_diff == 0.5);
  CHECK(TransportParams::from_json(p.to_json()).k_diff == 0.5);
}
