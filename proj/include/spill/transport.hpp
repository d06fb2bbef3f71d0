#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "spill/fields.hpp"
#include "spill/parcel.hpp"
#include "spill/weathering.hpp"

namespace spill {

struct Scenario;

struct TransportParams
{
  double dt = 600.0;            // s
  double k_diff = 0.2;          // m^2/s
  double windage = 0.03;
  double rise_velocity = 0.05;  // m/s
  std::uint64_t seed = 0;
  double snapshot_interval = 6.0 * 3600.0; // s, a multiple of dt
  bool cyclic_time = false;

  void validate() const;
  static TransportParams from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Per-parcel random stream. Seeded from (seed, parcel id) so results do not
/// depend on parcel iteration order.
struct ParcelStream
{
  StreamRng rng;
  std::normal_distribution<double> normal{0.0, 1.0};

  ParcelStream() = default;
  ParcelStream(std::uint64_t seed, std::int64_t id, std::uint64_t purpose);
};

/// Euler-Maruyama step of one parcel from time t to t + dt:
///   pos' = pos + (U + windage * W [surface only]) dt + sqrt(2 k dt) xi
///   depth' = max(0, depth - rise_velocity dt)   [subsurface only]
/// followed by detect_transition. Terminal parcels are returned unchanged.
Parcel step(const Parcel& parcel, const EnvDataset& env, const TransportParams& params, ParcelStream& stream, double t);

/// Classifies the move from `before` to `after`: out_of_bounds, beached (placed
/// on the land side of the coast by bisection to 1 m), sunk (on the bottom),
/// or surfaced.
Parcel detect_transition(const Parcel& before, Parcel after, const EnvDataset& env);

/// Parcels whose release time falls in [t_begin, t_end). Release k of n is at
/// onset + k * duration / n; each carries total_release_mass / n.
std::vector<Parcel> release(const Scenario& scenario, const OilAssay& assay, double t_begin, double t_end);

/// Total mass (kg) of oil released over the blowout.
double total_release_mass(const Scenario& scenario, const OilAssay& assay);

struct ParcelRecord
{
  std::int64_t id = 0;
  Vec2 pos;
  double depth = 0.0;
  ParcelState state = ParcelState::subsurface;
  double total_mass = 0.0;
  double water_frac = 0.0;
  double slick_area = 0.0;

  friend bool operator==(const ParcelRecord&, const ParcelRecord&) = default;
};

struct MassLedger
{
  double released = 0.0;
  double evaporated = 0.0;
  double dissolved = 0.0;
  double in_parcels = 0.0;

  double relative_error() const
  {
    return released == 0.0 ? std::abs(in_parcels + evaporated + dissolved)
                            : std::abs(in_parcels + evaporated + dissolved - released) / released;
  }
};

struct SnapshotRecord
{
  double time = 0.0;
  std::vector<ParcelRecord> parcels;
  MassLedger ledger;
};

struct SimulationResult
{
  std::vector<SnapshotRecord> snapshots;
  MassLedger final_ledger;
};

/// Runs one scenario: release, weathering, transport, snapshots every
/// snapshot_interval (including onset and the final time).
SimulationResult run_simulation(const Scenario& scenario, const EnvDataset& env, const TransportParams& params,
                                const OilAssay& assay, const WeatheringParams& wp);

/// Columns: time_s,id,x_m,y_m,depth_m,state,mass_kg,water_frac,slick_area_m2
void write_snapshots_csv(const std::string& path, const std::vector<SnapshotRecord>& snapshots);
std::vector<SnapshotRecord> read_snapshots_csv(const std::string& path);

} // namespace spill
