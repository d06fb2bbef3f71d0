#include "spill/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "spill/scenarios.hpp"

namespace spill {

const char* to_string(ParcelState s)
{
  switch (s) {
  case ParcelState::subsurface: return "subsurface";
  case ParcelState::surface: return "surface";
  case ParcelState::beached: return "beached";
  case ParcelState::sunk: return "sunk";
  case ParcelState::out_of_bounds: return "out_of_bounds";
  }
  return "unknown";
}

ParcelState parse_state(const std::string& s)
{
  for (auto st : {ParcelState::subsurface, ParcelState::surface, ParcelState::beached, ParcelState::sunk,
                  ParcelState::out_of_bounds})
    if (s == to_string(st)) return st;
  throw ValidationError("unknown parcel state '" + s + "'");
}

// ---------------------------------------------------------------------------
// TransportParams

void TransportParams::validate() const
{
  if (!(dt > 0)) throw ValidationError("transport: dt must be positive");
  if (!(k_diff >= 0)) throw ValidationError("transport: k_diff must be non-negative");
  if (!(windage >= 0 && windage <= 1)) throw ValidationError("transport: windage must be in [0, 1]");
  if (!(rise_velocity >= 0)) throw ValidationError("transport: rise_velocity must be non-negative");
  if (!(snapshot_interval > 0)) throw ValidationError("transport: snapshot_interval must be positive");
  const double ratio = snapshot_interval / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 1)
    throw ValidationError("transport: snapshot_interval must be a positive multiple of dt");
}

nlohmann::json TransportParams::to_json() const
{
  return {{"dt", dt},
          {"k_diff", k_diff},
          {"windage", windage},
          {"rise_velocity", rise_velocity},
          {"seed", seed},
          {"snapshot_interval", snapshot_interval},
          {"cyclic_time", cyclic_time}};
}

TransportParams TransportParams::from_json(const nlohmann::json& j)
{
  TransportParams p;
  const auto defaults = p.to_json();
  for (const auto& [k, v] : j.items())
    if (!defaults.contains(k)) throw ValidationError("transport: unknown key '" + k + "'");
  try {
    p.dt = j.value("dt", p.dt);
    p.k_diff = j.value("k_diff", p.k_diff);
    p.windage = j.value("windage", p.windage);
    p.rise_velocity = j.value("rise_velocity", p.rise_velocity);
    p.seed = j.value("seed", p.seed);
    p.snapshot_interval = j.value("snapshot_interval", p.snapshot_interval);
    p.cyclic_time = j.value("cyclic_time", p.cyclic_time);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("transport: ") + e.what());
  }
  p.validate();
  return p;
}

ParcelStream::ParcelStream(std::uint64_t seed, std::int64_t id, std::uint64_t purpose)
    : rng(derive_seed(seed, static_cast<std::uint64_t>(id), purpose))
{
}

// ---------------------------------------------------------------------------
// Stepping

Parcel detect_transition(const Parcel& before, Parcel after, const EnvDataset& env)
{
  if (is_terminal(after.state)) return after;
  const auto& g = env.grid;
  if (!g.contains(after.pos.x, after.pos.y)) {
    after.state = ParcelState::out_of_bounds;
    return after;
  }
  if (env.is_land(after.pos)) {
    if (!env.is_land(before.pos) && g.contains(before.pos.x, before.pos.y)) {
      Vec2 sea = before.pos, land = after.pos;
      while (std::hypot(land.x - sea.x, land.y - sea.y) > 1.0) {
        const Vec2 mid{0.5 * (sea.x + land.x), 0.5 * (sea.y + land.y)};
        (env.is_land(mid) ? land : sea) = mid;
      }
      after.pos = land;
    }
    after.state = ParcelState::beached;
    return after;
  }
  if (after.state == ParcelState::subsurface) {
    const double bottom = env.bathy_at(after.pos).value_or(0.0);
    if (after.depth >= bottom) {
      after.depth = std::max(0.0, bottom);
      after.state = ParcelState::sunk;
    } else if (after.depth <= 0.0) {
      after.depth = 0.0;
      after.state = ParcelState::surface;
      after.surfaced_at = after.last_update;
    }
  }
  return after;
}

Parcel step(const Parcel& parcel, const EnvDataset& env, const TransportParams& params, ParcelStream& stream, double t)
{
  if (is_terminal(parcel.state)) return parcel;
  const double dt = params.dt;
  // Both draws happen unconditionally so a parcel's stream position depends only on its step count.
  const double xi_x = stream.normal(stream.rng);
  const double xi_y = stream.normal(stream.rng);

  Parcel out = parcel;
  out.last_update = t + dt;
  const auto current = env.velocity_at(parcel.pos, parcel.depth, t, params.cyclic_time);
  if (!current) {
    out.state = ParcelState::out_of_bounds;
    return out;
  }
  Vec2 drift = *current;
  if (parcel.state == ParcelState::surface && params.windage != 0.0) {
    const Vec2 w = env.wind_at(parcel.pos, t, params.cyclic_time).value_or(Vec2{});
    drift.x += params.windage * w.x;
    drift.y += params.windage * w.y;
  }
  const double sigma = std::sqrt(2.0 * params.k_diff * dt);
  out.pos.x = parcel.pos.x + drift.x * dt + sigma * xi_x;
  out.pos.y = parcel.pos.y + drift.y * dt + sigma * xi_y;
  if (parcel.state == ParcelState::subsurface) out.depth = std::max(0.0, parcel.depth - params.rise_velocity * dt);
  return detect_transition(parcel, std::move(out), env);
}

// ---------------------------------------------------------------------------
// Release

double total_release_mass(const Scenario& scenario, const OilAssay& assay)
{
  const double days = scenario.blowout_duration / kSecondsPerDay;
  return scenario.flow_rate * days * kCubicMetersPerBarrel * assay.bulk_density();
}

std::vector<Parcel> release(const Scenario& scenario, const OilAssay& assay, double t_begin, double t_end)
{
  if (scenario.n_parcels <= 0) throw ValidationError("release: parcel budget must be positive");
  std::vector<Parcel> out;
  if (!(scenario.blowout_duration > 0.0)) return out;
  const double mass = total_release_mass(scenario, assay) / static_cast<double>(scenario.n_parcels);
  const double cadence = scenario.blowout_duration / static_cast<double>(scenario.n_parcels);
  // Index range whose release time onset + k * cadence lies in [t_begin, t_end).
  const auto first = static_cast<std::int64_t>(std::max(0.0, std::ceil((t_begin - scenario.onset) / cadence - 1e-9)));
  for (std::int64_t k = first; k < scenario.n_parcels; ++k) {
    const double tr = scenario.onset + static_cast<double>(k) * cadence;
    if (tr >= t_end) break;
    if (tr < t_begin) continue;
    Parcel p;
    p.id = k;
    p.pos = scenario.pos;
    p.depth = scenario.release_depth;
    p.state = p.depth > 0.0 ? ParcelState::subsurface : ParcelState::surface;
    p.comp_mass.reserve(assay.components.size());
    for (const auto& c : assay.components) p.comp_mass.push_back(mass * c.mass_fraction);
    p.soluble_mass = mass * assay.soluble_fraction;
    p.release_time = tr;
    p.last_update = tr;
    if (p.state == ParcelState::surface) p.surfaced_at = tr;
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

constexpr std::uint64_t kTransportStream = 1;
constexpr std::uint64_t kWeatheringStream = 2;

SnapshotRecord make_snapshot(double t, const std::vector<Parcel>& parcels, const MassLedger& ledger)
{
  SnapshotRecord s;
  s.time = t;
  s.ledger = ledger;
  s.parcels.reserve(parcels.size());
  for (const auto& p : parcels)
    s.parcels.push_back({p.id, p.pos, p.depth, p.state, p.total_mass(), p.water_frac, p.slick_area});
  return s;
}

} // namespace

SimulationResult run_simulation(const Scenario& scenario, const EnvDataset& env, const TransportParams& params,
                                const OilAssay& assay, const WeatheringParams& wp)
{
  params.validate();
  wp.validate();
  assay.validate();
  scenario.validate(env);
  const double t_end = scenario.onset + scenario.sim_duration;
  if (!params.cyclic_time && (scenario.onset < env.grid.t0 || t_end > env.grid.t_max()))
    throw ValidationError("scenario " + scenario.key() +
                          ": field time range does not cover the simulation (enable cyclic_time to wrap)");
  const double ratio = scenario.sim_duration / params.dt;
  const auto n_steps = static_cast<std::int64_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(n_steps)) > 1e-9 * ratio)
    throw ValidationError("scenario " + scenario.key() + ": sim_duration must be a multiple of dt");
  const auto per_snapshot = static_cast<std::int64_t>(std::llround(params.snapshot_interval / params.dt));

  std::vector<Parcel> parcels;
  std::vector<ParcelStream> transport_streams, weathering_streams;
  parcels.reserve(static_cast<std::size_t>(scenario.n_parcels));
  MassLedger ledger;
  SimulationResult result;

  for (std::int64_t s = 0; s <= n_steps; ++s) {
    const double t = scenario.onset + static_cast<double>(s) * params.dt;
    if (s < n_steps) {
      for (auto& p : release(scenario, assay, t, t + params.dt)) {
        ledger.released += p.total_mass();
        transport_streams.emplace_back(params.seed, p.id, kTransportStream);
        weathering_streams.emplace_back(params.seed, p.id, kWeatheringStream);
        parcels.push_back(std::move(p));
      }
    }
    if (s % per_snapshot == 0 || s == n_steps) {
      ledger.in_parcels = 0.0;
      for (const auto& p : parcels) ledger.in_parcels += p.total_mass();
      result.snapshots.push_back(make_snapshot(t, parcels, ledger));
    }
    if (s == n_steps) break;

    for (std::size_t k = 0; k < parcels.size(); ++k) {
      Parcel& p = parcels[k];
      if (is_terminal(p.state)) continue;
      const Vec2 w = env.wind_at(p.pos, t, params.cyclic_time).value_or(Vec2{});
      const MassLoss loss = weather(p, assay, wp, std::hypot(w.x, w.y), t + params.dt, params.dt,
                                   weathering_streams[k].rng);
      ledger.evaporated += loss.evaporated;
      ledger.dissolved += loss.dissolved;
      p = step(p, env, params, transport_streams[k], t);
    }
  }
  ledger.in_parcels = 0.0;
  for (const auto& p : parcels) ledger.in_parcels += p.total_mass();
  result.final_ledger = ledger;
  return result;
}

// ---------------------------------------------------------------------------
// CSV

void write_snapshots_csv(const std::string& path, const std::vector<SnapshotRecord>& snapshots)
{
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw RuntimeError("cannot open '" + path + "' for writing");
  std::fputs("time_s,id,x_m,y_m,depth_m,state,mass_kg,water_frac,slick_area_m2\n", f);
  for (const auto& s : snapshots)
    for (const auto& p : s.parcels)
      std::fprintf(f, "%.17g,%lld,%.17g,%.17g,%.17g,%s,%.17g,%.17g,%.17g\n", s.time, static_cast<long long>(p.id),
                   p.pos.x, p.pos.y, p.depth, to_string(p.state), p.total_mass, p.water_frac, p.slick_area);
  std::fclose(f);
}

std::vector<SnapshotRecord> read_snapshots_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open snapshots '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("time_s,id,x_m,y_m,depth_m,state,mass_kg", 0) != 0)
    throw ValidationError(path + ": missing or unexpected snapshot header");
  std::vector<SnapshotRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell[9];
    for (auto& c : cell) std::getline(ss, c, ',');
    try {
      const double t = std::stod(cell[0]);
      if (out.empty() || out.back().time != t) {
        if (!out.empty() && t < out.back().time) throw ValidationError(path + ": snapshots not time-ordered");
        out.push_back({t, {}, {}});
      }
      ParcelRecord r;
      r.id = std::stoll(cell[1]);
      r.pos = {std::stod(cell[2]), std::stod(cell[3])};
      r.depth = std::stod(cell[4]);
      r.state = parse_state(cell[5]);
      r.total_mass = std::stod(cell[6]);
      r.water_frac = std::stod(cell[7]);
      r.slick_area = std::stod(cell[8]);
      out.back().parcels.push_back(r);
    } catch (const std::logic_error&) {
      throw ValidationError(path + ": malformed row at line " + std::to_string(lineno));
    }
  }
  return out;
}

} // namespace spill
