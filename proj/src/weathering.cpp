#include "spill/weathering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace spill {

// ---------------------------------------------------------------------------
// OilAssay

void OilAssay::validate() const
{
  if (components.empty()) throw ValidationError("assay '" + name + "': no components");
  double sum = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    if (!(c.mass_fraction >= 0.0)) throw ValidationError("assay '" + name + "': negative mass fraction");
    if (!(c.density > 0.0)) throw ValidationError("assay '" + name + "': density must be positive");
    if (i > 0 && !(c.boiling_point > components[i - 1].boiling_point))
      throw ValidationError("assay '" + name + "': boiling points must be strictly increasing");
    sum += c.mass_fraction;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("assay '" + name + "': mass fractions must sum to 1");
  if (!(soluble_fraction >= 0.0 && soluble_fraction <= 1.0))
    throw ValidationError("assay '" + name + "': soluble_fraction must be in [0, 1]");
}

double OilAssay::bulk_density() const
{
  double specific_volume = 0.0;
  for (const auto& c : components) specific_volume += c.mass_fraction / c.density;
  return 1.0 / specific_volume;
}

double OilAssay::volume(const std::vector<double>& comp_mass) const
{
  double v = 0.0;
  for (std::size_t i = 0; i < comp_mass.size(); ++i) v += comp_mass[i] / components[i].density;
  return v;
}

OilAssay OilAssay::from_json(const nlohmann::json& j)
{
  OilAssay a;
  try {
    a.name = j.value("name", std::string{"unnamed"});
    for (const auto& c : j.at("components"))
      a.components.push_back({c.at("bp_K").get<double>(), c.at("frac").get<double>(), c.at("rho").get<double>()});
    a.soluble_fraction = j.value("soluble_fraction", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("assay: malformed JSON: ") + e.what());
  }
  a.validate();
  return a;
}

nlohmann::json OilAssay::to_json() const
{
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : components)
    comps.push_back({{"bp_K", c.boiling_point}, {"frac", c.mass_fraction}, {"rho", c.density}});
  return {{"name", name}, {"components", comps}, {"soluble_fraction", soluble_fraction}};
}

OilAssay load_assay(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open assay '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": malformed JSON: " + e.what());
  }
  return OilAssay::from_json(j);
}

OilAssay default_assay()
{
  OilAssay a;
  a.name = "medium-crude-surrogate";
  a.components = {{350.0, 0.08, 700.0}, {420.0, 0.14, 760.0}, {500.0, 0.18, 820.0},
                  {580.0, 0.20, 870.0}, {680.0, 0.20, 920.0}, {800.0, 0.20, 980.0}};
  a.soluble_fraction = 0.02;
  return a;
}

// ---------------------------------------------------------------------------
// WeatheringParams

void WeatheringParams::validate() const
{
  for (double r : {evap_rate_ref, spread_coeff, emulsion_rate, dissolution_rate, entrain_rate, entrain_wind_threshold})
    if (!(r >= 0.0)) throw ValidationError("weathering: rates must be non-negative");
  if (!(evap_bp_scale > 0.0)) throw ValidationError("weathering: evap_bp_scale must be positive");
  if (!(spread_terminal_thickness > 0.0))
    throw ValidationError("weathering: spread_terminal_thickness must be positive");
  if (!(emulsion_max_water >= 0.0 && emulsion_max_water < 1.0))
    throw ValidationError("weathering: emulsion_max_water must be in [0, 1)");
}

nlohmann::json WeatheringParams::to_json() const
{
  return {{"evap_rate_ref", evap_rate_ref},
          {"evap_bp_ref", evap_bp_ref},
          {"evap_bp_scale", evap_bp_scale},
          {"spread_coeff", spread_coeff},
          {"spread_terminal_thickness", spread_terminal_thickness},
          {"emulsion_rate", emulsion_rate},
          {"emulsion_max_water", emulsion_max_water},
          {"dissolution_rate", dissolution_rate},
          {"entrain_wind_threshold", entrain_wind_threshold},
          {"entrain_rate", entrain_rate}};
}

WeatheringParams WeatheringParams::from_json(const nlohmann::json& j)
{
  WeatheringParams wp;
  const auto defaults = wp.to_json();
  for (const auto& [k, v] : j.items()) {
    if (!defaults.contains(k)) throw ValidationError("weathering: unknown key '" + k + "'");
    if (!v.is_number()) throw ValidationError("weathering: '" + k + "' must be a number");
  }
  auto get = [&](const char* k, double& field) { field = j.value(k, field); };
  get("evap_rate_ref", wp.evap_rate_ref);
  get("evap_bp_ref", wp.evap_bp_ref);
  get("evap_bp_scale", wp.evap_bp_scale);
  get("spread_coeff", wp.spread_coeff);
  get("spread_terminal_thickness", wp.spread_terminal_thickness);
  get("emulsion_rate", wp.emulsion_rate);
  get("emulsion_max_water", wp.emulsion_max_water);
  get("dissolution_rate", wp.dissolution_rate);
  get("entrain_wind_threshold", wp.entrain_wind_threshold);
  get("entrain_rate", wp.entrain_rate);
  wp.validate();
  return wp;
}

WeatheringParams WeatheringParams::disabled()
{
  WeatheringParams wp;
  wp.evap_rate_ref = 0.0;
  wp.spread_coeff = 0.0;
  wp.emulsion_rate = 0.0;
  wp.dissolution_rate = 0.0;
  wp.entrain_rate = 0.0;
  return wp;
}

// ---------------------------------------------------------------------------
// Processes

double evaporate_step(Parcel& p, const OilAssay& assay, const WeatheringParams& wp, double dt)
{
  if (p.state != ParcelState::surface || wp.evap_rate_ref == 0.0) return 0.0;
  const double before = p.total_mass();
  double lost = 0.0;
  for (std::size_t i = 0; i < p.comp_mass.size(); ++i) {
    const double k = wp.evap_rate_ref * std::exp(-(assay.components[i].boiling_point - wp.evap_bp_ref) / wp.evap_bp_scale);
    const double kept = p.comp_mass[i] * std::exp(-k * dt);
    lost += p.comp_mass[i] - kept;
    p.comp_mass[i] = kept;
  }
  // Evaporation takes the soluble share along with the rest of the oil.
  if (before > 0.0) p.soluble_mass *= (before - lost) / before;
  return lost;
}

void spread_step(Parcel& p, const OilAssay& assay, const WeatheringParams& wp, double t, double dt)
{
  if (p.state != ParcelState::surface || p.surfaced_at < 0.0) return;
  const double volume = assay.volume(p.comp_mass);
  const double terminal_area = volume / wp.spread_terminal_thickness;
  if (p.slick_area >= terminal_area) return;
  const double tau1 = std::max(0.0, t - p.surfaced_at);
  const double tau0 = std::max(0.0, tau1 - dt);
  const double grown = p.slick_area + wp.spread_coeff * std::sqrt(volume) * 2.0 * (std::sqrt(tau1) - std::sqrt(tau0));
  p.slick_area = std::min(grown, terminal_area);
}

void emulsify_step(Parcel& p, double wind_speed, const WeatheringParams& wp, double dt)
{
  if (p.state != ParcelState::surface) return;
  const double rate = wp.emulsion_rate * wind_speed * wind_speed;
  if (rate == 0.0) return;
  const double next = wp.emulsion_max_water - (wp.emulsion_max_water - p.water_frac) * std::exp(-rate * dt);
  p.water_frac = std::max(p.water_frac, next);
}

double dissolve_step(Parcel& p, const WeatheringParams& wp, double dt)
{
  if (p.state != ParcelState::surface && p.state != ParcelState::subsurface) return 0.0;
  if (wp.dissolution_rate == 0.0 || p.soluble_mass <= 0.0) return 0.0;
  const double total = p.total_mass();
  if (total <= 0.0) return 0.0;
  const double dissolved = std::min(p.soluble_mass * -std::expm1(-wp.dissolution_rate * dt), total);
  const double ratio = dissolved / total;
  double removed = 0.0;
  for (auto& m : p.comp_mass) {
    const double d = m * ratio;
    m -= d;
    removed += d;
  }
  p.soluble_mass = std::max(0.0, p.soluble_mass - removed);
  return removed;
}

void entrain_step(Parcel& p, double wind_speed, const WeatheringParams& wp, double dt, StreamRng& rng)
{
  if (p.state != ParcelState::surface) return;
  const double u = rng.uniform();
  const double excess = std::max(0.0, wind_speed - wp.entrain_wind_threshold);
  const double prob = -std::expm1(-wp.entrain_rate * excess * dt);
  if (u < prob) {
    p.state = ParcelState::subsurface;
    p.depth = 1.0;
  }
}

MassLoss weather(Parcel& p, const OilAssay& assay, const WeatheringParams& wp, double wind_speed, double t, double dt,
                 StreamRng& rng)
{
  MassLoss loss;
  if (is_terminal(p.state)) return loss;
  loss.evaporated = evaporate_step(p, assay, wp, dt);
  spread_step(p, assay, wp, t, dt);
  emulsify_step(p, wind_speed, wp, dt);
  loss.dissolved = dissolve_step(p, wp, dt);
  entrain_step(p, wind_speed, wp, dt, rng);
  return loss;
}

} // namespace spill
