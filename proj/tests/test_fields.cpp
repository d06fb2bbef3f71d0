#include <doctest.h>

#include <cmath>
#include <numbers>
#include <cstring>
#include <fstream>
#include <random>

#include "spill/container.hpp"
#include "spill/fields.hpp"
#include "support.hpp"

using namespace spill;
using spill::test::make_grid;
using spill::test::TempDir;
using spill::test::uniform_env;

namespace {

// Independent trilinear-in-space, linear-in-time reference, written per point
// without any of the library's index helpers.
double reference_interp(const EnvDataset& ds, const std::vector<double>& a, double x, double y, double z, double t)
{
  const auto& g = ds.grid;
  const double fx = (x - g.x0) / g.dx, fy = (y - g.y0) / g.dy, ft = (t - g.t0) / g.dt_field;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(fx), g.nx - 2);
  const auto j = std::min<std::size_t>(static_cast<std::size_t>(fy), g.ny - 2);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(ft), g.nt - 2);
  std::size_t l = 0;
  while (l + 2 < g.z_levels.size() && z > g.z_levels[l + 1]) ++l;
  const double wx = fx - i, wy = fy - j, wt = ft - k;
  const double wz = g.z_levels.size() == 1 ? 0.0 : (z - g.z_levels[l]) / (g.z_levels[l + 1] - g.z_levels[l]);
  const std::size_t nz = g.z_levels.size();
  double sum = 0.0;
  for (int dt = 0; dt < 2; ++dt)
    for (int dz = 0; dz < (nz == 1 ? 1 : 2); ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const double w = (dt ? wt : 1 - wt) * (nz == 1 ? 1.0 : (dz ? wz : 1 - wz)) * (dy ? wy : 1 - wy) *
                           (dx ? wx : 1 - wx);
          const std::size_t idx = (((k + dt) * nz + (l + dz)) * g.ny + (j + dy)) * g.nx + (i + dx);
          sum += w * a[idx];
        }
  return sum;
}

EnvDataset random_env(std::uint64_t seed)
{
  const auto g = make_grid(7, 5, 1000.0, 4, 3600.0, {0.0, 10.0, 50.0});
  EnvDataset ds = uniform_env(g, 0.0, 0.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (auto& x : ds.u) x = U(rng);
  for (auto& x : ds.v) x = U(rng);
  for (auto& x : ds.wind_x) x = 5 * U(rng);
  for (auto& x : ds.wind_y) x = 5 * U(rng);
  return ds;
}

} // namespace

TEST_CASE("constant field survives the container round trip")
{
  const auto g = make_grid(2, 2, 100.0, 2, 60.0);
  const EnvDataset ds = uniform_env(g, 0.1, 0.0);
  TempDir dir;
  save_dataset(dir.file("c.envgrd"), ds);
  const EnvDataset back = load_dataset(dir.file("c.envgrd"));
  for (double u : back.u) CHECK(u == 0.1);
  CHECK(back == ds);
}

TEST_CASE("short u array is a shape mismatch naming u")
{
  const auto g = make_grid(2, 2, 100.0, 2, 60.0);
  const EnvDataset ds = uniform_env(g, 0.1, 0.0);
  TempDir dir;
  save_dataset(dir.file("c.envgrd"), ds);
  Container c = read_container(dir.file("c.envgrd"));
  for (auto& v : c.variables)
    if (v.name == "u") {
      v.values.pop_back();
      v.shape = {v.values.size()};
    }
  write_container(dir.file("bad.envgrd"), c);
  try {
    load_dataset(dir.file("bad.envgrd"));
    FAIL("expected a shape mismatch");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("'u'") != std::string::npos);
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }
}

TEST_CASE("container layout: magic, little-endian header length, JSON header")
{
  const auto g = make_grid(2, 2, 100.0, 2, 60.0);
  TempDir dir;
  save_dataset(dir.file("c.envgrd"), uniform_env(g, 0.1, 0.0));
  std::ifstream in(dir.file("c.envgrd"), std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() > 12);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "ENVGRD01");
  const std::uint32_t len = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | static_cast<std::uint32_t>(bytes[11]) << 24;
  const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  CHECK(header.contains("grid"));
  CHECK(header["variables"].size() == 6);

  bytes[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_container(bytes, "x"), doctest::Contains("magic"), ValidationError);
}

TEST_CASE("decoder names a non-finite variable")
{
  // Build a tiny f64 container by hand so a NaN reaches the decoder.
  Container c;
  c.grid = {{"note", "hand built"}};
  ContainerVariable v;
  v.name = "bathy";
  v.shape = {2};
  v.dtype = "f64";
  v.values = {1.0, 2.0};
  c.variables.push_back(v);
  auto bytes = encode_container(c);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(bytes.data() + bytes.size() - sizeof(double), &nan, sizeof(double));
  CHECK_THROWS_WITH_AS(decode_container(bytes, "x"), doctest::Contains("bathy"), ValidationError);
}

TEST_CASE("generated double gyre round-trips bit for bit")
{
  const auto g = make_grid(21, 11, 5000.0, 5, 21600.0, {0.0, 100.0});
  AnalyticFieldSpec spec;
  spec.kind = AnalyticFieldSpec::Kind::double_gyre;
  spec.parameters = {{"land_strip_cells", 2}, {"shelf_width", 12000.0}, {"wind_x", 2.5}};
  const EnvDataset ds = gen_synthetic(spec, g);
  TempDir dir;
  save_dataset(dir.file("g.envgrd"), ds);
  CHECK(load_dataset(dir.file("g.envgrd")) == ds);
  CHECK(dataset_checksum(load_dataset(dir.file("g.envgrd"))) == dataset_checksum(ds));
}

TEST_CASE("uniform kind fills the field")
{
  const auto g = make_grid(4, 3, 10.0, 3, 10.0, {0.0, 5.0});
  const EnvDataset ds = uniform_env(g, 0.1, 0.0);
  for (double u : ds.u) CHECK(u == 0.1);
  for (double v : ds.v) CHECK(v == 0.0);
  for (double b : ds.bathy) CHECK(b == 2000.0);
  CHECK_FALSE(ds.is_land({15.0, 10.0}));
}

TEST_CASE("unknown field kind or parameter is rejected")
{
  CHECK_THROWS_AS(AnalyticFieldSpec::from_json({{"kind", "vortex"}}), ValidationError);
  AnalyticFieldSpec spec;
  spec.kind = AnalyticFieldSpec::Kind::uniform;
  spec.parameters = {{"U0", 1.0}};
  CHECK_THROWS_AS(gen_synthetic(spec, make_grid(3, 3, 1.0)), ValidationError);
}

TEST_CASE("static double gyre is antisymmetric about the midline")
{
  const auto g = make_grid(41, 21, 5000.0, 2, 86400.0);
  AnalyticFieldSpec spec;
  spec.kind = AnalyticFieldSpec::Kind::double_gyre;
  spec.parameters = {{"amplitude", 0.0}};
  const EnvDataset ds = gen_synthetic(spec, g);
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      const double u = ds.u[ds.idx4(0, 0, j, i)];
      const double mirror = ds.u[ds.idx4(0, 0, g.ny - 1 - j, i)];
      CHECK(std::abs(u + mirror) <= 1e-12 * 0.1);
    }
}

namespace {

/// Max |du/dx + dv/dy| over interior nodes by central differences.
double max_divergence(const EnvDataset& ds)
{
  const auto& g = ds.grid;
  double out = 0.0;
  for (std::size_t k = 0; k < g.nt; ++k)
    for (std::size_t j = 1; j + 1 < g.ny; ++j)
      for (std::size_t i = 1; i + 1 < g.nx; ++i) {
        const double dudx = (ds.u[ds.idx4(k, 0, j, i + 1)] - ds.u[ds.idx4(k, 0, j, i - 1)]) / (2 * g.dx);
        const double dvdy = (ds.v[ds.idx4(k, 0, j + 1, i)] - ds.v[ds.idx4(k, 0, j - 1, i)]) / (2 * g.dy);
        out = std::max(out, std::abs(dudx + dvdy));
      }
  return out;
}

} // namespace

TEST_CASE("double gyre matches the stream function and is divergence free")
{
  const auto g = make_grid(41, 21, 5000.0, 6, 2.0 * 86400.0);
  AnalyticFieldSpec spec;
  spec.kind = AnalyticFieldSpec::Kind::double_gyre;
  const EnvDataset ds = gen_synthetic(spec, g);

  const double U0 = 0.1, eps = 0.1, omega = 2 * std::numbers::pi / (10 * 86400.0), L = g.y_max();
  auto psi = [&](double x, double y, double t) {
    const double a = eps * std::sin(omega * t), b = 1 - 2 * eps * std::sin(omega * t);
    const double xs = x / L, ys = y / L;
    return U0 * L / std::numbers::pi * std::sin(std::numbers::pi * (a * xs * xs + b * xs)) *
           std::sin(std::numbers::pi * ys);
  };
  const double h = 1.0;
  for (std::size_t k = 0; k < g.nt; ++k) {
    const double t = k * g.dt_field;
    for (std::size_t j = 1; j + 1 < g.ny; ++j)
      for (std::size_t i = 1; i + 1 < g.nx; ++i) {
        const double x = i * g.dx, y = j * g.dy;
        const double u_ref = -(psi(x, y + h, t) - psi(x, y - h, t)) / (2 * h);
        const double v_ref = (psi(x + h, y, t) - psi(x - h, y, t)) / (2 * h);
        CHECK(std::abs(ds.u[ds.idx4(k, 0, j, i)] - u_ref) <= 1e-6 * U0);
        CHECK(std::abs(ds.v[ds.idx4(k, 0, j, i)] - v_ref) <= 1e-6 * U0);
      }
  }
  const double coarse = max_divergence(ds);
  CHECK(coarse <= 1e-6);

  // The residual is central-difference truncation: it falls as dx^2.
  const auto fine_grid = make_grid(81, 41, 2500.0, 6, 2.0 * 86400.0);
  const double fine = max_divergence(gen_synthetic(spec, fine_grid));
  CHECK(coarse / fine > 3.5);
}

TEST_CASE("interpolation reproduces nodes exactly")
{
  const EnvDataset ds = random_env(7);
  const auto& g = ds.grid;
  for (std::size_t k = 0; k < g.nt; ++k)
    for (std::size_t l = 0; l < g.nz(); ++l)
      for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.nx; ++i) {
          const auto v = ds.velocity_at({i * g.dx, j * g.dy}, g.z_levels[l], k * g.dt_field);
          REQUIRE(v);
          CHECK(v->x == ds.u[ds.idx4(k, l, j, i)]);
          CHECK(v->y == ds.v[ds.idx4(k, l, j, i)]);
        }
}

TEST_CASE("affine fields are interpolated exactly")
{
  EnvDataset ds = random_env(3);
  const auto& g = ds.grid;
  auto f = [](double x, double y, double z, double t) { return 0.3 + 2e-4 * x - 1e-4 * y + 3e-3 * z + 1e-5 * t; };
  for (std::size_t k = 0; k < g.nt; ++k)
    for (std::size_t l = 0; l < g.nz(); ++l)
      for (std::size_t j = 0; j < g.ny; ++j)
        for (std::size_t i = 0; i < g.nx; ++i)
          ds.u[ds.idx4(k, l, j, i)] = f(i * g.dx, j * g.dy, g.z_levels[l], k * g.dt_field);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int n = 0; n < 500; ++n) {
    const double x = U(rng) * g.x_max(), y = U(rng) * g.y_max(), z = U(rng) * 50.0, t = U(rng) * g.t_max();
    const auto v = ds.velocity_at({x, y}, z, t);
    REQUIRE(v);
    CHECK(v->x == doctest::Approx(f(x, y, z, t)).epsilon(1e-12));
  }
}

TEST_CASE("interpolation matches a naive reference and stays within the cell's speeds")
{
  const EnvDataset ds = random_env(5);
  const auto& g = ds.grid;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int n = 0; n < 1000; ++n) {
    const double x = U(rng) * g.x_max(), y = U(rng) * g.y_max(), z = U(rng) * 50.0, t = U(rng) * g.t_max();
    const auto v = ds.velocity_at({x, y}, z, t);
    REQUIRE(v);
    CHECK(v->x == doctest::Approx(reference_interp(ds, ds.u, x, y, z, t)).epsilon(1e-12).scale(1e-12));
    CHECK(v->y == doctest::Approx(reference_interp(ds, ds.v, x, y, z, t)).epsilon(1e-12).scale(1e-12));

    // Convex combination: speed bounded by the fastest bracketing node.
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(x / g.dx), g.nx - 2);
    const auto j = std::min<std::size_t>(static_cast<std::size_t>(y / g.dy), g.ny - 2);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(t / g.dt_field), g.nt - 2);
    double vmax = 0.0;
    for (std::size_t kk = k; kk <= k + 1; ++kk)
      for (std::size_t l = 0; l < g.nz(); ++l)
        for (std::size_t jj = j; jj <= j + 1; ++jj)
          for (std::size_t ii = i; ii <= i + 1; ++ii)
            vmax = std::max(vmax, std::hypot(ds.u[ds.idx4(kk, l, jj, ii)], ds.v[ds.idx4(kk, l, jj, ii)]));
    CHECK(std::hypot(v->x, v->y) <= vmax * (1 + 1e-12));
  }
}

TEST_CASE("out-of-domain queries signal instead of extrapolating")
{
  const EnvDataset ds = random_env(1);
  const auto& g = ds.grid;
  CHECK_FALSE(ds.velocity_at({-1.0, 10.0}, 0.0, 0.0));
  CHECK_FALSE(ds.velocity_at({10.0, g.y_max() + 1.0}, 0.0, 0.0));
  CHECK_FALSE(ds.velocity_at({10.0, 10.0}, 0.0, g.t_max() + 1.0));
  CHECK_FALSE(ds.wind_at({10.0, 10.0}, -1.0));
  CHECK_FALSE(ds.bathy_at({g.x_max() + 1.0, 0.0}));
  // Cyclic mode wraps with period nt * dt_field.
  const double period = g.nt * g.dt_field;
  const auto a = ds.velocity_at({1234.0, 2345.0}, 7.0, 1000.0, true);
  const auto b = ds.velocity_at({1234.0, 2345.0}, 7.0, 1000.0 + 3 * period, true);
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a->x == doctest::Approx(b->x).epsilon(1e-12));
  const auto wrap = ds.velocity_at({0.0, 0.0}, 0.0, period, true);
  REQUIRE(wrap);
  CHECK(wrap->x == ds.u[ds.idx4(0, 0, 0, 0)]);
}

TEST_CASE("land strip masks cells and counts coastline")
{
  const auto g = make_grid(10, 6, 1000.0);
  const EnvDataset ds = uniform_env(g, 0.0, 0.0, {{"land_strip_cells", 3}, {"land_strip_side", 1}});
  CHECK(ds.is_land({9000.0, 2000.0}));
  CHECK(ds.is_land({7000.0, 2000.0}));
  CHECK_FALSE(ds.is_land({6000.0, 2000.0}));
  CHECK(*ds.bathy_at({9000.0, 0.0}) < 0.0);
  // One vertical coast of ny cells, each dy long.
  CHECK(ds.coastline_length() == doctest::Approx(6 * 1000.0));
}

TEST_CASE("CSV ingestion matches the generated arrays")
{
  const auto g = make_grid(3, 2, 500.0, 2, 60.0);
  const EnvDataset ds = uniform_env(g, 0.25, -0.5, {{"wind_x", 4.0}});
  TempDir dir;
  auto dump = [&](const std::string& name, const auto& a) {
    std::ofstream out(dir.file(name + ".csv"));
    out.precision(17);
    for (std::size_t k = 0; k < a.size(); ++k) out << static_cast<double>(a[k]) << (k % 3 == 2 ? '\n' : ',');
  };
  dump("u", ds.u);
  dump("v", ds.v);
  dump("wind_x", ds.wind_x);
  dump("wind_y", ds.wind_y);
  dump("bathy", ds.bathy);
  dump("land_mask", ds.land_mask);
  nlohmann::json j = {{"grid", g.to_json()}, {"variables", nlohmann::json::object()}};
  for (const char* n : {"u", "v", "wind_x", "wind_y", "bathy", "land_mask"}) j["variables"][n] = std::string(n) + ".csv";
  std::ofstream(dir.file("grid.json")) << j.dump();
  CHECK(load_dataset_csv(dir.file("grid.json")) == ds);
}
