#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "spill/parcel.hpp"

namespace spill {

struct OilComponent
{
  double boiling_point = 0.0; // K
  double mass_fraction = 0.0;
  double density = 0.0; // kg/m^3
};

struct OilAssay
{
  std::string name;
  std::vector<OilComponent> components;
  double soluble_fraction = 0.0;

  void validate() const;
  /// Bulk density of the fresh oil, 1 / sum(frac_i / rho_i).
  double bulk_density() const;
  /// Oil volume (m^3) of a parcel whose component masses are `comp_mass`.
  double volume(const std::vector<double>& comp_mass) const;

  static OilAssay from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

OilAssay load_assay(const std::string& path);

/// Representative medium crude with six distillation cuts. Surrogate data:
/// the cut boundaries and densities are typical values, not a measured assay.
OilAssay default_assay();

/// Rate constants for the simplified weathering kinetics. All rates are per second.
struct WeatheringParams
{
  double evap_rate_ref = 2.0e-5;           // 1/s at evap_bp_ref
  double evap_bp_ref = 450.0;              // K
  double evap_bp_scale = 40.0;             // K
  double spread_coeff = 2.0;               // m^0.5 / s^0.5 in dA/dt = C sqrt(V) / sqrt(t)
  double spread_terminal_thickness = 1e-5; // m
  double emulsion_rate = 2.0e-6;           // 1/s per (m/s)^2
  double emulsion_max_water = 0.7;
  double dissolution_rate = 1.0e-6;        // 1/s
  double entrain_wind_threshold = 5.0;     // m/s
  double entrain_rate = 2.0e-5;            // 1/s per m/s of excess wind

  void validate() const;
  static WeatheringParams from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// All rates zero: weathering becomes a no-op.
  static WeatheringParams disabled();
};

/// Mass removed by one weathering pass.
struct MassLoss
{
  double evaporated = 0.0;
  double dissolved = 0.0;
};

/// m_i' = m_i exp(-k_i dt), k_i = evap_rate_ref exp(-(BP_i - BP_ref) / evap_bp_scale).
/// Returns the evaporated mass. No-op unless the parcel is at the surface.
double evaporate_step(Parcel& p, const OilAssay& assay, const WeatheringParams& wp, double dt);

/// Gravity-viscous spreading, integrated exactly over [t - dt, t] in time since surfacing,
/// clamped at the terminal thickness.
void spread_step(Parcel& p, const OilAssay& assay, const WeatheringParams& wp, double t, double dt);

/// Water uptake towards emulsion_max_water at rate emulsion_rate * wind^2.
void emulsify_step(Parcel& p, double wind_speed, const WeatheringParams& wp, double dt);

/// First-order loss of the remaining soluble mass. Returns the dissolved mass.
double dissolve_step(Parcel& p, const WeatheringParams& wp, double dt);

/// Wind-driven entrainment; flips surface -> subsurface at 1 m depth with
/// probability 1 - exp(-entrain_rate * max(0, wind - threshold) * dt).
void entrain_step(Parcel& p, double wind_speed, const WeatheringParams& wp, double dt, StreamRng& rng);

/// All processes for one time step of a non-terminal parcel, in order
/// evaporate, spread, emulsify, dissolve, entrain. `t` is the end of the step.
MassLoss weather(Parcel& p, const OilAssay& assay, const WeatheringParams& wp, double wind_speed, double t,
                 double dt, StreamRng& rng);

} // namespace spill
