#include "spill/fields.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "spill/container.hpp"

namespace spill {

// ---------------------------------------------------------------------------
// GridSpec

void GridSpec::validate() const
{
  if (!(dx > 0) || !(dy > 0)) throw ValidationError("grid: dx and dy must be positive");
  if (!(dt_field > 0)) throw ValidationError("grid: dt_field must be positive");
  if (nx < 2 || ny < 2 || nt < 2) throw ValidationError("grid: nx, ny and nt must be at least 2");
  if (z_levels.empty()) throw ValidationError("grid: z_levels must not be empty");
  for (std::size_t k = 1; k < z_levels.size(); ++k)
    if (!(z_levels[k] > z_levels[k - 1])) throw ValidationError("grid: z_levels must be strictly increasing");
  for (double v : {x0, y0, dx, dy, t0, dt_field})
    if (!std::isfinite(v)) throw ValidationError("grid: non-finite parameter");
}

nlohmann::json GridSpec::to_json() const
{
  return {{"x0", x0}, {"y0", y0}, {"dx", dx},           {"dy", dy}, {"nx", nx},
          {"ny", ny}, {"z_levels", z_levels}, {"t0", t0}, {"dt_field", dt_field}, {"nt", nt}};
}

GridSpec GridSpec::from_json(const nlohmann::json& j)
{
  GridSpec g;
  try {
    g.x0 = j.at("x0").get<double>();
    g.y0 = j.at("y0").get<double>();
    g.dx = j.at("dx").get<double>();
    g.dy = j.at("dy").get<double>();
    g.nx = j.at("nx").get<std::size_t>();
    g.ny = j.at("ny").get<std::size_t>();
    g.z_levels = j.value("z_levels", std::vector<double>{0.0});
    g.t0 = j.value("t0", 0.0);
    g.dt_field = j.value("dt_field", 1.0);
    g.nt = j.value("nt", std::size_t{2});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("grid: malformed header: ") + e.what());
  }
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// EnvDataset

void EnvDataset::validate() const
{
  grid.validate();
  const std::size_t n4 = grid.nt * grid.nz() * grid.ny * grid.nx;
  const std::size_t n3 = grid.nt * grid.ny * grid.nx;
  const std::size_t n2 = grid.ny * grid.nx;
  auto check = [](const char* name, std::size_t have, std::size_t want) {
    if (have != want)
      throw ValidationError(std::string("variable '") + name + "': shape mismatch (" + std::to_string(have) +
                            " values, expected " + std::to_string(want) + ")");
  };
  check("u", u.size(), n4);
  check("v", v.size(), n4);
  check("wind_x", wind_x.size(), n3);
  check("wind_y", wind_y.size(), n3);
  check("bathy", bathy.size(), n2);
  check("land_mask", land_mask.size(), n2);
  auto finite = [](const char* name, const std::vector<double>& a) {
    for (double f : a)
      if (!std::isfinite(f)) throw ValidationError(std::string("variable '") + name + "' contains non-finite values");
  };
  finite("u", u);
  finite("v", v);
  finite("wind_x", wind_x);
  finite("wind_y", wind_y);
  finite("bathy", bathy);
  for (std::size_t k = 0; k < n2; ++k)
    if (bathy[k] <= 0.0 && !land_mask[k])
      throw ValidationError("variable 'land_mask': node with bathy <= 0 is not marked as land");
}

std::optional<EnvDataset::TimeBracket> EnvDataset::time_bracket(double t, bool cyclic) const
{
  double s = (t - grid.t0) / grid.dt_field;
  if (cyclic) {
    const double n = static_cast<double>(grid.nt);
    s = std::fmod(s, n);
    if (s < 0) s += n;
    auto k0 = static_cast<std::size_t>(std::floor(s));
    if (k0 >= grid.nt) k0 = grid.nt - 1;
    return TimeBracket{k0, (k0 + 1) % grid.nt, s - static_cast<double>(k0)};
  }
  if (!(s >= 0.0) || s > static_cast<double>(grid.nt - 1)) return std::nullopt;
  auto k0 = std::min(static_cast<std::size_t>(std::floor(s)), grid.nt - 2);
  return TimeBracket{k0, k0 + 1, s - static_cast<double>(k0)};
}

double EnvDataset::bilinear(const std::vector<double>& a, std::size_t base, double fx, double fy, std::size_t i,
                            std::size_t j) const
{
  const std::size_t nx = grid.nx;
  const double v00 = a[base + j * nx + i];
  const double v10 = a[base + j * nx + i + 1];
  const double v01 = a[base + (j + 1) * nx + i];
  const double v11 = a[base + (j + 1) * nx + i + 1];
  return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
}

namespace {

struct Axis
{
  std::size_t i;
  double f;
};

Axis locate(double x, double x0, double dx, std::size_t n)
{
  const double s = (x - x0) / dx;
  auto i = std::min(static_cast<std::size_t>(std::floor(s)), n - 2);
  return {i, s - static_cast<double>(i)};
}

} // namespace

std::optional<Vec2> EnvDataset::velocity_at(Vec2 p, double depth, double t, bool cyclic) const
{
  if (!grid.contains(p.x, p.y)) return std::nullopt;
  const auto tb = time_bracket(t, cyclic);
  if (!tb) return std::nullopt;
  const Axis ax = locate(p.x, grid.x0, grid.dx, grid.nx);
  const Axis ay = locate(p.y, grid.y0, grid.dy, grid.ny);

  // Depths outside the level range take the nearest level.
  const auto& zl = grid.z_levels;
  std::size_t z0 = 0, z1 = 0;
  double fz = 0.0;
  if (zl.size() > 1 && depth > zl.front()) {
    if (depth >= zl.back()) {
      z0 = z1 = zl.size() - 1;
    } else {
      z1 = static_cast<std::size_t>(std::upper_bound(zl.begin(), zl.end(), depth) - zl.begin());
      z0 = z1 - 1;
      fz = (depth - zl[z0]) / (zl[z1] - zl[z0]);
    }
  }

  const std::size_t plane = grid.nx * grid.ny;
  auto sample = [&](const std::vector<double>& a) {
    auto at = [&](std::size_t k, std::size_t z) {
      return bilinear(a, (k * grid.nz() + z) * plane, ax.f, ay.f, ax.i, ay.i);
    };
    const double a0 = (1.0 - fz) * at(tb->k0, z0) + fz * at(tb->k0, z1);
    const double a1 = (1.0 - fz) * at(tb->k1, z0) + fz * at(tb->k1, z1);
    return (1.0 - tb->w) * a0 + tb->w * a1;
  };
  return Vec2{sample(u), sample(v)};
}

std::optional<Vec2> EnvDataset::wind_at(Vec2 p, double t, bool cyclic) const
{
  if (!grid.contains(p.x, p.y)) return std::nullopt;
  const auto tb = time_bracket(t, cyclic);
  if (!tb) return std::nullopt;
  const Axis ax = locate(p.x, grid.x0, grid.dx, grid.nx);
  const Axis ay = locate(p.y, grid.y0, grid.dy, grid.ny);
  const std::size_t plane = grid.nx * grid.ny;
  auto sample = [&](const std::vector<double>& a) {
    return (1.0 - tb->w) * bilinear(a, tb->k0 * plane, ax.f, ay.f, ax.i, ay.i) +
           tb->w * bilinear(a, tb->k1 * plane, ax.f, ay.f, ax.i, ay.i);
  };
  return Vec2{sample(wind_x), sample(wind_y)};
}

std::optional<double> EnvDataset::bathy_at(Vec2 p) const
{
  if (!grid.contains(p.x, p.y)) return std::nullopt;
  const Axis ax = locate(p.x, grid.x0, grid.dx, grid.nx);
  const Axis ay = locate(p.y, grid.y0, grid.dy, grid.ny);
  return bilinear(bathy, 0, ax.f, ay.f, ax.i, ay.i);
}

std::optional<std::pair<std::size_t, std::size_t>> EnvDataset::cell_of(Vec2 p) const
{
  if (!grid.contains(p.x, p.y)) return std::nullopt;
  const auto i = std::min(static_cast<std::size_t>(std::floor((p.x - grid.x0) / grid.dx + 0.5)), grid.nx - 1);
  const auto j = std::min(static_cast<std::size_t>(std::floor((p.y - grid.y0) / grid.dy + 0.5)), grid.ny - 1);
  return std::pair{i, j};
}

bool EnvDataset::is_land(Vec2 p) const
{
  const auto c = cell_of(p);
  return c && land_cell(c->first, c->second);
}

double EnvDataset::coastline_length() const
{
  double total = 0.0;
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      if (i + 1 < grid.nx && land_cell(i, j) != land_cell(i + 1, j)) total += grid.dy;
      if (j + 1 < grid.ny && land_cell(i, j) != land_cell(i, j + 1)) total += grid.dx;
    }
  return total;
}

// ---------------------------------------------------------------------------
// Synthetic fields

AnalyticFieldSpec AnalyticFieldSpec::from_json(const nlohmann::json& j)
{
  AnalyticFieldSpec s;
  const auto kind = j.value("kind", std::string{});
  if (kind == "uniform")
    s.kind = Kind::uniform;
  else if (kind == "double_gyre")
    s.kind = Kind::double_gyre;
  else
    throw ValidationError("field spec: unknown kind '" + kind + "'");
  if (j.contains("parameters")) {
    for (const auto& [k, v] : j["parameters"].items()) {
      if (!v.is_number()) throw ValidationError("field spec: parameter '" + k + "' is not a number");
      s.parameters[k] = v.get<double>();
    }
  }
  return s;
}

nlohmann::json AnalyticFieldSpec::to_json() const
{
  return {{"kind", kind == Kind::uniform ? "uniform" : "double_gyre"}, {"parameters", parameters}};
}

namespace {

const std::vector<std::string>& known_parameters(AnalyticFieldSpec::Kind kind)
{
  static const std::vector<std::string> common{"wind_x",           "wind_y",      "depth",         "land_strip_cells",
                                               "land_strip_side", "shelf_width", "land_elevation"};
  static const std::vector<std::string> uniform = [] {
    auto v = common;
    v.insert(v.end(), {"u0", "v0"});
    return v;
  }();
  static const std::vector<std::string> gyre = [] {
    auto v = common;
    v.insert(v.end(), {"U0", "amplitude", "period", "length"});
    return v;
  }();
  return kind == AnalyticFieldSpec::Kind::uniform ? uniform : gyre;
}

} // namespace

EnvDataset gen_synthetic(const AnalyticFieldSpec& spec, const GridSpec& grid)
{
  grid.validate();
  const auto& known = known_parameters(spec.kind);
  for (const auto& [k, v] : spec.parameters) {
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ValidationError("field spec: unknown parameter '" + k + "'");
    if (!std::isfinite(v)) throw ValidationError("field spec: parameter '" + k + "' is not finite");
  }
  auto param = [&](const std::string& k, double def) {
    auto it = spec.parameters.find(k);
    return it == spec.parameters.end() ? def : it->second;
  };

  EnvDataset ds;
  ds.grid = grid;
  const std::size_t nx = grid.nx, ny = grid.ny, nz = grid.nz(), nt = grid.nt;
  ds.u.assign(nt * nz * ny * nx, 0.0);
  ds.v.assign(ds.u.size(), 0.0);
  ds.wind_x.assign(nt * ny * nx, param("wind_x", 0.0));
  ds.wind_y.assign(ds.wind_x.size(), param("wind_y", 0.0));

  if (spec.kind == AnalyticFieldSpec::Kind::uniform) {
    std::fill(ds.u.begin(), ds.u.end(), param("u0", 0.0));
    std::fill(ds.v.begin(), ds.v.end(), param("v0", 0.0));
  } else {
    const double U0 = param("U0", 0.1);
    const double eps = param("amplitude", 0.1);
    const double period = param("period", 10.0 * kSecondsPerDay);
    const double L = param("length", grid.y_max() - grid.y0);
    if (!(L > 0) || !(period > 0)) throw ValidationError("field spec: double_gyre length and period must be positive");
    const double pi = std::numbers::pi;
    for (std::size_t k = 0; k < nt; ++k) {
      const double st = std::sin(2.0 * pi * (static_cast<double>(k) * grid.dt_field) / period);
      const double a = eps * st;
      const double b = 1.0 - 2.0 * eps * st;
      for (std::size_t j = 0; j < ny; ++j) {
        const double ys = (static_cast<double>(j) * grid.dy) / L;
        for (std::size_t i = 0; i < nx; ++i) {
          const double xs = (static_cast<double>(i) * grid.dx) / L;
          const double f = a * xs * xs + b * xs;
          const double dfdx = 2.0 * a * xs + b;
          const auto uu = -U0 * std::sin(pi * f) * std::cos(pi * ys);
          const auto vv = U0 * std::cos(pi * f) * std::sin(pi * ys) * dfdx;
          for (std::size_t z = 0; z < nz; ++z) {
            ds.u[ds.idx4(k, z, j, i)] = uu;
            ds.v[ds.idx4(k, z, j, i)] = vv;
          }
        }
      }
    }
  }

  const double depth = param("depth", 2000.0);
  if (!(depth > 0)) throw ValidationError("field spec: depth must be positive");
  const auto strip = static_cast<std::size_t>(std::max(0.0, param("land_strip_cells", 0.0)));
  const int side = static_cast<int>(param("land_strip_side", 1.0));
  if (side < 0 || side > 3) throw ValidationError("field spec: land_strip_side must be 0..3");
  const double shelf = param("shelf_width", 0.0);
  const double elevation = param("land_elevation", 10.0);

  ds.bathy.assign(ny * nx, depth);
  ds.land_mask.assign(ny * nx, 0);
  if (strip > 0) {
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        // Distance (in cells) from the node to the land edge; negative inside the strip.
        double cells = 0.0;
        switch (side) {
        case 0: cells = static_cast<double>(i) - static_cast<double>(strip) + 0.5; break;
        case 1: cells = static_cast<double>(nx - 1 - i) - static_cast<double>(strip) + 0.5; break;
        case 2: cells = static_cast<double>(j) - static_cast<double>(strip) + 0.5; break;
        default: cells = static_cast<double>(ny - 1 - j) - static_cast<double>(strip) + 0.5; break;
        }
        const std::size_t k = ds.idx2(j, i);
        if (cells < 0) {
          ds.land_mask[k] = 1;
          ds.bathy[k] = -elevation;
        } else if (shelf > 0) {
          const double dist = cells * (side < 2 ? grid.dx : grid.dy);
          ds.bathy[k] = std::min(depth, depth * dist / shelf);
        }
      }
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// I/O

namespace {

ContainerVariable as_variable(const std::string& name, std::vector<std::size_t> shape, const std::vector<double>& a)
{
  ContainerVariable v;
  v.name = name;
  v.shape = std::move(shape);
  v.values = a;
  const bool fits_f32 =
      std::all_of(a.begin(), a.end(), [](double x) { return static_cast<double>(static_cast<float>(x)) == x; });
  v.dtype = fits_f32 ? "f32" : "f64";
  return v;
}

Container to_container(const EnvDataset& ds)
{
  const auto& g = ds.grid;
  Container c;
  c.grid = g.to_json();
  c.meta = {{"kind", "env_dataset"}};
  c.variables.push_back(as_variable("u", {g.nt, g.nz(), g.ny, g.nx}, ds.u));
  c.variables.push_back(as_variable("v", {g.nt, g.nz(), g.ny, g.nx}, ds.v));
  c.variables.push_back(as_variable("wind_x", {g.nt, g.ny, g.nx}, ds.wind_x));
  c.variables.push_back(as_variable("wind_y", {g.nt, g.ny, g.nx}, ds.wind_y));
  c.variables.push_back(as_variable("bathy", {g.ny, g.nx}, ds.bathy));
  std::vector<double> mask(ds.land_mask.begin(), ds.land_mask.end());
  c.variables.push_back(as_variable("land_mask", {g.ny, g.nx}, mask));
  return c;
}

EnvDataset from_variables(const GridSpec& g, const std::map<std::string, std::vector<double>>& vars,
                          const std::string& origin)
{
  auto get = [&](const std::string& name, std::size_t expected) -> std::vector<double> {
    auto it = vars.find(name);
    if (it == vars.end()) throw ValidationError(origin + ": missing variable '" + name + "'");
    if (it->second.size() != expected)
      throw ValidationError("variable '" + name + "': shape mismatch (" + std::to_string(it->second.size()) +
                            " values, expected " + std::to_string(expected) + ")");
    return it->second;
  };
  EnvDataset ds;
  ds.grid = g;
  const std::size_t n4 = g.nt * g.nz() * g.ny * g.nx, n3 = g.nt * g.ny * g.nx, n2 = g.ny * g.nx;
  ds.u = get("u", n4);
  ds.v = get("v", n4);
  ds.wind_x = get("wind_x", n3);
  ds.wind_y = get("wind_y", n3);
  ds.bathy = get("bathy", n2);
  const auto mask = get("land_mask", n2);
  ds.land_mask.resize(n2);
  for (std::size_t k = 0; k < n2; ++k) ds.land_mask[k] = mask[k] != 0.0 ? 1 : 0;
  ds.validate();
  return ds;
}

} // namespace

void save_dataset(const std::string& path, const EnvDataset& ds)
{
  ds.validate();
  write_container(path, to_container(ds));
}

EnvDataset load_dataset(const std::string& path)
{
  const Container c = read_container(path);
  const GridSpec g = GridSpec::from_json(c.grid);
  std::map<std::string, std::vector<double>> vars;
  for (const auto& v : c.variables) vars[v.name] = v.values;
  return from_variables(g, vars, path);
}

EnvDataset load_dataset_csv(const std::string& grid_json_path)
{
  std::ifstream in(grid_json_path);
  if (!in) throw ValidationError("cannot open '" + grid_json_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(grid_json_path + ": malformed JSON: " + e.what());
  }
  if (!j.contains("grid") || !j.contains("variables") || !j["variables"].is_object())
    throw ValidationError(grid_json_path + ": needs 'grid' and a 'variables' object");
  const GridSpec g = GridSpec::from_json(j["grid"]);
  const std::string dir = [&] {
    auto pos = grid_json_path.find_last_of('/');
    return pos == std::string::npos ? std::string{} : grid_json_path.substr(0, pos + 1);
  }();
  std::map<std::string, std::vector<double>> vars;
  for (const auto& [name, file] : j.at("variables").items()) {
    if (!file.is_string()) throw ValidationError("variable '" + name + "': expected a CSV path");
    std::string p = file.get<std::string>();
    if (!p.empty() && p.front() != '/') p = dir + p;
    std::ifstream f(p);
    if (!f) throw ValidationError("variable '" + name + "': cannot open '" + p + "'");
    std::vector<double> values;
    std::string tok;
    while (std::getline(f, tok, '\n')) {
      std::stringstream line(tok);
      std::string cell;
      while (std::getline(line, cell, ',')) {
        if (cell.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          values.push_back(std::stod(cell));
        } catch (const std::exception&) {
          throw ValidationError("variable '" + name + "': unparsable value '" + cell + "'");
        }
        if (!std::isfinite(values.back()))
          throw ValidationError("variable '" + name + "' contains non-finite values");
      }
    }
    vars[name] = std::move(values);
  }
  return from_variables(g, vars, grid_json_path);
}

std::string dataset_checksum(const EnvDataset& ds)
{
  const auto bytes = encode_container(to_container(ds));
  return fnv1a_hex(bytes.data(), bytes.size());
}

} // namespace spill
