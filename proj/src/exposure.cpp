#include "spill/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "spill/container.hpp"

namespace spill {

// ---------------------------------------------------------------------------
// Population raster

void PopulationRaster::validate() const
{
  if (!(dx > 0) || !(dy > 0) || nx == 0 || ny == 0) throw ValidationError("population raster: invalid grid");
  if (density.size() != nx * ny) throw ValidationError("population raster: density shape mismatch");
  for (double d : density)
    if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("population raster: density must be finite and >= 0");
}

PopulationRaster load_population(const std::string& path)
{
  const Container c = read_container(path);
  PopulationRaster r;
  try {
    r.x0 = c.grid.at("x0").get<double>();
    r.y0 = c.grid.at("y0").get<double>();
    r.dx = c.grid.at("dx").get<double>();
    r.dy = c.grid.at("dy").get<double>();
    r.nx = c.grid.at("nx").get<std::size_t>();
    r.ny = c.grid.at("ny").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": malformed raster grid: " + e.what());
  }
  const auto& v = c.variable("population_density");
  if (v.shape != std::vector<std::size_t>{r.ny, r.nx})
    throw ValidationError(path + ": variable 'population_density' shape does not match the grid");
  r.density = v.values;
  r.validate();
  return r;
}

void save_population(const std::string& path, const PopulationRaster& r)
{
  r.validate();
  Container c;
  c.grid = {{"x0", r.x0}, {"y0", r.y0}, {"dx", r.dx}, {"dy", r.dy}, {"nx", r.nx}, {"ny", r.ny}};
  c.meta = {{"kind", "population_raster"}, {"units", "persons/km2"}};
  ContainerVariable v{"population_density", {r.ny, r.nx}, "f64", r.density};
  c.variables.push_back(std::move(v));
  write_container(path, c);
}

// ---------------------------------------------------------------------------
// Counties

namespace {

double cross(Vec2 o, Vec2 a, Vec2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(Vec2 p, Vec2 a, Vec2 b)
{
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d)
{
  const double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  return (d1 == 0 && on_segment(a, c, d)) || (d2 == 0 && on_segment(b, c, d)) || (d3 == 0 && on_segment(c, a, b)) ||
         (d4 == 0 && on_segment(d, a, b));
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b)
{
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

std::vector<Vec2> parse_ring(const nlohmann::json& ring)
{
  std::vector<Vec2> out;
  for (const auto& pt : ring) out.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
  return out;
}

} // namespace

void validate_counties(const CountyTable& counties)
{
  for (const auto& c : counties) {
    const std::string where = "county " + std::to_string(c.county_id);
    if (!(c.revenue_kusd >= 0.0)) throw ValidationError(where + ": revenue must be non-negative");
    if (c.rings.empty()) throw ValidationError(where + ": polygon has no rings");
    for (const auto& ring : c.rings) {
      if (ring.size() < 4) throw ValidationError(where + ": ring needs at least 4 points (closed triangle)");
      if (!(ring.front() == ring.back())) throw ValidationError(where + ": ring is not closed");
      const std::size_t n = ring.size() - 1;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
          const bool adjacent = b == a + 1 || (a == 0 && b == n - 1);
          if (adjacent) continue;
          if (segments_intersect(ring[a], ring[a + 1], ring[b], ring[b + 1]))
            throw ValidationError(where + ": ring is self-intersecting");
        }
    }
  }
}

CountyTable load_counties(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open counties '" + path + "'");
  CountyTable out;
  try {
    nlohmann::json j;
    in >> j;
    for (const auto& f : j.at("features")) {
      County c;
      const auto& props = f.at("properties");
      c.county_id = props.at("county_id").get<std::int64_t>();
      c.revenue_kusd = props.at("revenue_kusd").get<double>();
      c.name = props.value("name", std::string{});
      const auto& geom = f.at("geometry");
      const auto type = geom.at("type").get<std::string>();
      if (type == "Polygon") {
        for (const auto& ring : geom.at("coordinates")) c.rings.push_back(parse_ring(ring));
      } else if (type == "MultiPolygon") {
        for (const auto& poly : geom.at("coordinates"))
          for (const auto& ring : poly) c.rings.push_back(parse_ring(ring));
      } else {
        throw ValidationError(path + ": unsupported geometry type '" + type + "'");
      }
      out.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  validate_counties(out);
  return out;
}

void save_counties(const std::string& path, const CountyTable& counties)
{
  nlohmann::json features = nlohmann::json::array();
  for (const auto& c : counties) {
    nlohmann::json rings = nlohmann::json::array();
    for (const auto& ring : c.rings) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : ring) pts.push_back({p.x, p.y});
      rings.push_back(pts);
    }
    features.push_back({{"type", "Feature"},
                        {"properties", {{"county_id", c.county_id}, {"name", c.name}, {"revenue_kusd", c.revenue_kusd}}},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}}});
  }
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot open '" + path + "' for writing");
  out << nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump(2) << '\n';
}

double distance_to_county(Vec2 p, const County& c)
{
  bool inside = false;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ring : c.rings)
    for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
      const Vec2 a = ring[k], b = ring[k + 1];
      if ((a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)) inside = !inside;
      best = std::min(best, point_segment_distance(p, a, b));
    }
  return inside ? 0.0 : best;
}

double compute_sales(const std::vector<Vec2>& beached, const CountyTable& counties, double buffer)
{
  double total = 0.0;
  for (const auto& c : counties) {
    const bool hit =
        std::any_of(beached.begin(), beached.end(), [&](Vec2 p) { return distance_to_county(p, c) <= buffer; });
    if (hit) total += c.revenue_kusd;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Population

double compute_beach_pop(const std::vector<Vec2>& beached, const PopulationRaster& pop, double radius)
{
  if (beached.empty()) return 0.0;
  const double xmin = pop.x0 - 0.5 * pop.dx, xmax = pop.x0 + (static_cast<double>(pop.nx) - 0.5) * pop.dx;
  const double ymin = pop.y0 - 0.5 * pop.dy, ymax = pop.y0 + (static_cast<double>(pop.ny) - 0.5) * pop.dy;
  for (const auto& p : beached)
    if (p.x - radius < xmin || p.x + radius > xmax || p.y - radius < ymin || p.y + radius > ymax) {
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "population raster does not cover [%.1f, %.1f] x [%.1f, %.1f] (raster spans [%.1f, %.1f] x "
                    "[%.1f, %.1f])",
                    p.x - radius, p.x + radius, p.y - radius, p.y + radius, xmin, xmax, ymin, ymax);
      throw ValidationError(buf);
    }

  std::vector<std::uint8_t> hit(pop.nx * pop.ny, 0);
  const double r2 = radius * radius;
  for (const auto& p : beached) {
    const auto lo_i = static_cast<std::ptrdiff_t>(std::floor((p.x - radius - pop.x0) / pop.dx));
    const auto hi_i = static_cast<std::ptrdiff_t>(std::ceil((p.x + radius - pop.x0) / pop.dx));
    const auto lo_j = static_cast<std::ptrdiff_t>(std::floor((p.y - radius - pop.y0) / pop.dy));
    const auto hi_j = static_cast<std::ptrdiff_t>(std::ceil((p.y + radius - pop.y0) / pop.dy));
    for (auto j = std::max<std::ptrdiff_t>(0, lo_j); j <= std::min<std::ptrdiff_t>(hi_j, pop.ny - 1); ++j)
      for (auto i = std::max<std::ptrdiff_t>(0, lo_i); i <= std::min<std::ptrdiff_t>(hi_i, pop.nx - 1); ++i) {
        const double cx = pop.x0 + static_cast<double>(i) * pop.dx - p.x;
        const double cy = pop.y0 + static_cast<double>(j) * pop.dy - p.y;
        if (cx * cx + cy * cy <= r2) hit[static_cast<std::size_t>(j) * pop.nx + static_cast<std::size_t>(i)] = 1;
      }
  }
  double total = 0.0;
  for (std::size_t k = 0; k < hit.size(); ++k)
    if (hit[k]) total += pop.density[k];
  return total * pop.cell_area_km2();
}

// ---------------------------------------------------------------------------
// Physical metrics

std::vector<Vec2> beached_positions(const std::vector<SnapshotRecord>& snapshots)
{
  std::vector<Vec2> out;
  if (snapshots.empty()) return out;
  for (const auto& p : snapshots.back().parcels)
    if (p.state == ParcelState::beached) out.push_back(p.pos);
  return out;
}

PhysicalMetrics compute_physical_metrics(const std::vector<SnapshotRecord>& snapshots, const EnvDataset& env)
{
  PhysicalMetrics m;
  if (snapshots.empty()) return m;
  const auto& g = env.grid;
  std::set<std::pair<std::size_t, std::size_t>> sunk_cells;

  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    const auto& s = snapshots[k];
    if (k > 0 && !(s.time > snapshots[k - 1].time)) throw ValidationError("snapshots are not time-ordered");
    const double span_days = k + 1 < snapshots.size() ? (snapshots[k + 1].time - s.time) / kSecondsPerDay : 0.0;
    double subsurface_kg = 0.0, slick_m2 = 0.0;
    for (const auto& p : s.parcels) {
      if (p.state == ParcelState::subsurface) subsurface_kg += p.total_mass;
      if (p.state == ParcelState::surface) slick_m2 += p.slick_area;
      if (p.state == ParcelState::sunk) {
        const auto cell = env.cell_of(p.pos);
        if (!cell) throw ValidationError("snapshot grid mismatch: sunk parcel outside the field domain");
        sunk_cells.insert(*cell);
      }
    }
    m.wcKGDay += subsurface_kg * span_days;
    m.slickKM2Day += slick_m2 * 1e-6 * span_days;
  }
  m.sunkKM2 = static_cast<double>(sunk_cells.size()) * g.dx * g.dy * 1e-6;

  // Coastline edges: for each beached parcel, the land/ocean edge of its cell nearest to it.
  std::set<std::tuple<int, std::size_t, std::size_t>> edges; // (0: between x-neighbors, 1: y-neighbors), lower cell
  for (const auto& p : snapshots.back().parcels) {
    if (p.state != ParcelState::beached) continue;
    m.beachKG += p.total_mass;
    const auto cell = env.cell_of(p.pos);
    if (!cell) throw ValidationError("snapshot grid mismatch: beached parcel outside the field domain");
    const auto [i, j] = *cell;
    if (!env.land_cell(i, j)) throw ValidationError("snapshot grid mismatch: beached parcel not on a land cell");
    const double cx = g.x0 + static_cast<double>(i) * g.dx, cy = g.y0 + static_cast<double>(j) * g.dy;
    double best = std::numeric_limits<double>::infinity();
    std::tuple<int, std::size_t, std::size_t> best_edge{};
    auto consider = [&](bool ocean, double dist, std::tuple<int, std::size_t, std::size_t> key) {
      if (ocean && dist < best) {
        best = dist;
        best_edge = key;
      }
    };
    if (i > 0) consider(!env.land_cell(i - 1, j), p.pos.x - (cx - 0.5 * g.dx), {0, i - 1, j});
    if (i + 1 < g.nx) consider(!env.land_cell(i + 1, j), (cx + 0.5 * g.dx) - p.pos.x, {0, i, j});
    if (j > 0) consider(!env.land_cell(i, j - 1), p.pos.y - (cy - 0.5 * g.dy), {1, i, j - 1});
    if (j + 1 < g.ny) consider(!env.land_cell(i, j + 1), (cy + 0.5 * g.dy) - p.pos.y, {1, i, j});
    if (std::isfinite(best)) edges.insert(best_edge);
  }
  for (const auto& [dir, i, j] : edges) m.beachKM += (dir == 0 ? g.dy : g.dx) * 1e-3;
  return m;
}

ExposureVector compute_exposure(const std::vector<SnapshotRecord>& snapshots, const EnvDataset& env,
                                const PopulationRaster* pop, const CountyTable* counties,
                                const ExposureSettings& settings)
{
  const auto phys = compute_physical_metrics(snapshots, env);
  ExposureVector e;
  e.sunkKM2 = phys.sunkKM2;
  e.wcKGDay = phys.wcKGDay;
  e.slickKM2Day = phys.slickKM2Day;
  e.beachKM = phys.beachKM;
  e.beachKG = phys.beachKG;
  const auto beached = beached_positions(snapshots);
  if (pop) e.beachPop = compute_beach_pop(beached, *pop, settings.pop_radius);
  if (counties) e.salesKUSD = compute_sales(beached, *counties, settings.sales_buffer);
  return e;
}

// ---------------------------------------------------------------------------
// Exposure CSV

namespace {

const char* kExposureHeader =
    "site_id,onset_s,x_m,y_m,release_depth_m,sunkKM2,wcKGDay,slickKM2Day,beachKM,beachKG,beachPop,salesKUSD";

} // namespace

void write_exposure_csv(const std::string& path, const std::vector<ExposureRow>& rows)
{
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw RuntimeError("cannot open '" + path + "' for writing");
  std::fprintf(f, "%s\n", kExposureHeader);
  for (const auto& r : rows) {
    std::fprintf(f, "%lld,%.17g,%.17g,%.17g,%.17g", static_cast<long long>(r.site_id), r.onset, r.x, r.y,
                 r.release_depth);
    for (double v : r.metrics.values()) std::fprintf(f, ",%.17g", v);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

std::vector<ExposureRow> read_exposure_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open exposure matrix '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kExposureHeader)
    throw ValidationError(path + ": unexpected exposure header");
  std::vector<ExposureRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 12) throw ValidationError(path + ": row with " + std::to_string(v.size()) + " columns");
    ExposureRow r;
    r.site_id = static_cast<std::int64_t>(v[0]);
    r.onset = v[1];
    r.x = v[2];
    r.y = v[3];
    r.release_depth = v[4];
    r.metrics = {v[5], v[6], v[7], v[8], v[9], v[10], v[11]};
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Desk surrogates for the population raster and county table. Deterministic
// functions of the field grid so that the pipeline runs without external data.

PopulationRaster surrogate_population(const EnvDataset& env)
{
  const auto& g = env.grid;
  const double margin = 60000.0, cell = 2000.0;
  PopulationRaster r;
  r.dx = r.dy = cell;
  r.x0 = g.x0 - margin + 0.5 * cell;
  r.y0 = g.y0 - margin + 0.5 * cell;
  r.nx = static_cast<std::size_t>(std::ceil((g.x_max() - g.x0 + 2 * margin) / cell));
  r.ny = static_cast<std::size_t>(std::ceil((g.y_max() - g.y0 + 2 * margin) / cell));
  r.density.assign(r.nx * r.ny, 0.0);
  // Towns every 40 km along y on land; a thin rural baseline elsewhere on land
  // and outside the modeled domain.
  for (std::size_t j = 0; j < r.ny; ++j)
    for (std::size_t i = 0; i < r.nx; ++i) {
      const Vec2 c{r.x0 + static_cast<double>(i) * cell, r.y0 + static_cast<double>(j) * cell};
      const bool inside = g.contains(c.x, c.y);
      if (inside && !env.is_land(c)) continue;
      const double phase = std::fmod(c.y - g.y0 + 4.0 * margin, 40000.0) - 20000.0;
      r.density[j * r.nx + i] = 20.0 + 500.0 * std::exp(-0.5 * phase * phase / (6000.0 * 6000.0));
    }
  return r;
}

CountyTable surrogate_counties(const EnvDataset& env)
{
  const auto& g = env.grid;
  const int n = 4;
  const double w = (g.x_max() - g.x0) / n, h = (g.y_max() - g.y0) / n;
  CountyTable t;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      County c;
      c.county_id = 1 + j * n + i;
      c.name = "county_" + std::to_string(c.county_id);
      const double x0 = g.x0 + i * w, y0 = g.y0 + j * h;
      c.rings.push_back({{x0, y0}, {x0 + w, y0}, {x0 + w, y0 + h}, {x0, y0 + h}, {x0, y0}});
      c.revenue_kusd = 1000.0 * static_cast<double>(c.county_id);
      t.push_back(std::move(c));
    }
  return t;
}

} // namespace spill
