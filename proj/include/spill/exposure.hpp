#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spill/fields.hpp"
#include "spill/transport.hpp"

namespace spill {

struct ExposureVector
{
  double sunkKM2 = 0.0;     // km^2 of sea floor cells reached by sunk oil
  double wcKGDay = 0.0;     // kg*day of subsurface oil
  double slickKM2Day = 0.0; // km^2*day of surface slick
  double beachKM = 0.0;     // km of oiled coastline
  double beachKG = 0.0;     // kg of beached oil at the end of the run
  double beachPop = 0.0;    // persons within the population radius of beached oil
  double salesKUSD = 0.0;   // thousand USD of county revenue within the sales buffer

  static constexpr std::array<const char*, 7> names{"sunkKM2", "wcKGDay", "slickKM2Day", "beachKM",
                                                    "beachKG", "beachPop", "salesKUSD"};
  std::array<double, 7> values() const
  {
    return {sunkKM2, wcKGDay, slickKM2Day, beachKM, beachKG, beachPop, salesKUSD};
  }

  friend bool operator==(const ExposureVector&, const ExposureVector&) = default;
};

/// Cell-centered raster: cell (i, j) is centered on (x0 + i*dx, y0 + j*dy).
struct PopulationRaster
{
  double x0 = 0.0, y0 = 0.0, dx = 1.0, dy = 1.0;
  std::size_t nx = 0, ny = 0;
  std::vector<double> density; // persons / km^2, row-major (y, x)

  void validate() const;
  double cell_area_km2() const { return dx * dy * 1e-6; }
};

/// ENVGRD01 container with one 2-D variable "population_density" (ny, nx) and
/// grid keys x0, y0, dx, dy, nx, ny.
PopulationRaster load_population(const std::string& path);
void save_population(const std::string& path, const PopulationRaster& r);

struct County
{
  std::int64_t county_id = 0;
  std::string name;
  std::vector<std::vector<Vec2>> rings; // closed rings: first point == last point
  double revenue_kusd = 0.0;
};

using CountyTable = std::vector<County>;

/// GeoJSON-style FeatureCollection of Polygon / MultiPolygon features in
/// planar meters, properties {county_id, revenue_kusd[, name]}.
CountyTable load_counties(const std::string& path);
void save_counties(const std::string& path, const CountyTable& counties);
void validate_counties(const CountyTable& counties);

struct PhysicalMetrics
{
  double sunkKM2 = 0.0;
  double wcKGDay = 0.0;
  double slickKM2Day = 0.0;
  double beachKM = 0.0;
  double beachKG = 0.0;
};

/// Time integrals use each snapshot's state over the interval up to the next
/// snapshot; the last snapshot closes the run and contributes no duration.
PhysicalMetrics compute_physical_metrics(const std::vector<SnapshotRecord>& snapshots, const EnvDataset& env);

/// Positions of parcels beached at the final snapshot.
std::vector<Vec2> beached_positions(const std::vector<SnapshotRecord>& snapshots);

/// Persons in raster cells whose center lies within `radius` (m) of any
/// beached position. Throws when the raster does not cover the buffered extent.
double compute_beach_pop(const std::vector<Vec2>& beached, const PopulationRaster& pop, double radius = 40000.0);

/// Summed revenue of counties within `buffer` (m) of any beached position.
double compute_sales(const std::vector<Vec2>& beached, const CountyTable& counties, double buffer = 5000.0);

/// Distance from p to the polygon (0 when inside; rings use even-odd filling).
double distance_to_county(Vec2 p, const County& c);

struct ExposureSettings
{
  double pop_radius = 40000.0;
  double sales_buffer = 5000.0;
};

ExposureVector compute_exposure(const std::vector<SnapshotRecord>& snapshots, const EnvDataset& env,
                                const PopulationRaster* pop, const CountyTable* counties,
                                const ExposureSettings& settings = {});

/// Desk surrogates used when no population raster or county table is
/// supplied: deterministic functions of the field grid.
PopulationRaster surrogate_population(const EnvDataset& env);
CountyTable surrogate_counties(const EnvDataset& env);

/// One exposure-matrix row: scenario keys plus the seven metrics.
struct ExposureRow
{
  std::int64_t site_id = 0;
  double onset = 0.0;
  double x = 0.0;
  double y = 0.0;
  double release_depth = 0.0;
  ExposureVector metrics;
};

/// Header: site_id,onset_s,x_m,y_m,release_depth_m,sunkKM2,...,salesKUSD
void write_exposure_csv(const std::string& path, const std::vector<ExposureRow>& rows);
std::vector<ExposureRow> read_exposure_csv(const std::string& path);

} // namespace spill
