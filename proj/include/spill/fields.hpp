#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spill/common.hpp"

namespace spill {

/// Regular space-time grid in projected meters. Node (i, j) sits at
/// (x0 + i*dx, y0 + j*dy); slice k at t0 + k*dt_field.
struct GridSpec
{
  double x0 = 0.0;
  double y0 = 0.0;
  double dx = 1.0;
  double dy = 1.0;
  std::size_t nx = 2;
  std::size_t ny = 2;
  std::vector<double> z_levels{0.0};
  double t0 = 0.0;
  double dt_field = 1.0;
  std::size_t nt = 2;

  double x_max() const { return x0 + dx * static_cast<double>(nx - 1); }
  double y_max() const { return y0 + dy * static_cast<double>(ny - 1); }
  double t_max() const { return t0 + dt_field * static_cast<double>(nt - 1); }
  std::size_t nz() const { return z_levels.size(); }

  bool contains(double x, double y) const { return x >= x0 && x <= x_max() && y >= y0 && y <= y_max(); }

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;

  nlohmann::json to_json() const;
  static GridSpec from_json(const nlohmann::json& j);

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Gridded ocean state. Arrays are in C order:
/// u, v: (t, z, y, x); wind_x, wind_y: (t, y, x); bathy, land_mask: (y, x).
class EnvDataset
{
public:
  GridSpec grid;
  std::vector<double> u, v;
  std::vector<double> wind_x, wind_y;
  std::vector<double> bathy;
  std::vector<std::uint8_t> land_mask;

  std::size_t idx4(std::size_t t, std::size_t z, std::size_t j, std::size_t i) const
  {
    return ((t * grid.nz() + z) * grid.ny + j) * grid.nx + i;
  }
  std::size_t idx3(std::size_t t, std::size_t j, std::size_t i) const { return (t * grid.ny + j) * grid.nx + i; }
  std::size_t idx2(std::size_t j, std::size_t i) const { return j * grid.nx + i; }

  /// Checks shapes, finiteness and the land/bathymetry relation.
  void validate() const;

  /// Current velocity at (x, y, depth) and time t. Empty when outside the
  /// horizontal domain or the time range. With `cyclic`, time wraps with
  /// period nt*dt_field (slice nt is slice 0) and is never out of range.
  std::optional<Vec2> velocity_at(Vec2 p, double depth, double t, bool cyclic = false) const;
  std::optional<Vec2> wind_at(Vec2 p, double t, bool cyclic = false) const;
  std::optional<double> bathy_at(Vec2 p) const;

  /// Mask cell containing p: the cell of node (i, j) spans half a spacing
  /// either side of the node. Outside the domain counts as not land.
  bool is_land(Vec2 p) const;
  /// Mask cell index (i, j) containing p, or empty outside the domain.
  std::optional<std::pair<std::size_t, std::size_t>> cell_of(Vec2 p) const;
  bool land_cell(std::size_t i, std::size_t j) const { return land_mask[idx2(j, i)] != 0; }

  /// Total length (m) of edges between land and ocean mask cells.
  double coastline_length() const;

  friend bool operator==(const EnvDataset&, const EnvDataset&) = default;

private:
  struct TimeBracket
  {
    std::size_t k0, k1;
    double w;
  };
  std::optional<TimeBracket> time_bracket(double t, bool cyclic) const;
  double bilinear(const std::vector<double>& a, std::size_t base, double fx, double fy, std::size_t i,
                  std::size_t j) const;
};

struct AnalyticFieldSpec
{
  enum class Kind
  {
    uniform,
    double_gyre
  };
  Kind kind = Kind::uniform;
  std::map<std::string, double> parameters;

  static AnalyticFieldSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Samples a closed-form flow on the grid.
///
/// uniform:     u0, v0 (m/s), wind_x, wind_y (m/s), depth (m)
/// double_gyre: U0 (peak speed, m/s), amplitude (time-dependence epsilon),
///              period (s), length (gyre width L in m; domain is 2L x L from
///              the grid origin; defaults to the grid's y extent),
///              wind_x, wind_y, depth
/// both:        land_strip_cells (columns of land), land_strip_side
///              (0 west, 1 east, 2 south, 3 north), shelf_width (m, depth
///              ramps linearly from the coast), land_elevation (m)
EnvDataset gen_synthetic(const AnalyticFieldSpec& spec, const GridSpec& grid);

/// Writes an ENVGRD01 container. Each variable is stored as f32 when that is
/// lossless and as f64 otherwise, so load_dataset(save_dataset(ds)) == ds.
void save_dataset(const std::string& path, const EnvDataset& ds);
EnvDataset load_dataset(const std::string& path);

/// Desk-scale alternative: a JSON file {"grid": {...}, "variables": {"u": "u.csv", ...}}
/// whose CSV files hold the flattened C-order values (any mix of commas and newlines).
EnvDataset load_dataset_csv(const std::string& grid_json_path);

/// Checksum of the dataset's container encoding; identifies the field in run manifests.
std::string dataset_checksum(const EnvDataset& ds);

} // namespace spill
