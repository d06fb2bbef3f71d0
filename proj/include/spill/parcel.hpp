#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "spill/common.hpp"

namespace spill {

enum class ParcelState : std::uint8_t
{
  subsurface,
  surface,
  beached,
  sunk,
  out_of_bounds
};

const char* to_string(ParcelState s);
ParcelState parse_state(const std::string& s);

inline bool is_terminal(ParcelState s)
{
  return s == ParcelState::beached || s == ParcelState::sunk || s == ParcelState::out_of_bounds;
}

/// A Lagrangian oil parcel.
struct Parcel
{
  std::int64_t id = 0;
  Vec2 pos;
  double depth = 0.0; // m below surface
  ParcelState state = ParcelState::subsurface;
  std::vector<double> comp_mass; // kg per pseudo-component
  double soluble_mass = 0.0;     // kg of comp_mass still available to dissolution
  double water_frac = 0.0;
  double slick_area = 0.0;    // m^2
  double surfaced_at = -1.0;  // time of most recent surfacing, < 0 if never
  double release_time = 0.0;
  double last_update = 0.0;

  double total_mass() const { return std::accumulate(comp_mass.begin(), comp_mass.end(), 0.0); }

  friend bool operator==(const Parcel&, const Parcel&) = default;
};

} // namespace spill
