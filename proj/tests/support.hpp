#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "spill/fields.hpp"
#include "spill/manifold.hpp"

namespace spill::test {

/// Scratch directory removed on scope exit.
class TempDir
{
public:
  TempDir()
  {
    std::string tmpl = (std::filesystem::temp_directory_path() / "spill_test_XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

inline GridSpec make_grid(std::size_t nx, std::size_t ny, double d, std::size_t nt = 2, double dt_field = 86400.0,
                          std::vector<double> z = {0.0})
{
  GridSpec g;
  g.x0 = 0.0;
  g.y0 = 0.0;
  g.dx = d;
  g.dy = d;
  g.nx = nx;
  g.ny = ny;
  g.z_levels = std::move(z);
  g.t0 = 0.0;
  g.dt_field = dt_field;
  g.nt = nt;
  return g;
}

inline EnvDataset uniform_env(const GridSpec& g, double u0, double v0, std::map<std::string, double> extra = {})
{
  AnalyticFieldSpec spec;
  spec.kind = AnalyticFieldSpec::Kind::uniform;
  spec.parameters = std::move(extra);
  spec.parameters["u0"] = u0;
  spec.parameters["v0"] = v0;
  return gen_synthetic(spec, g);
}

/// N draws of (x, y) with unit variances and correlation rho.
inline Eigen::MatrixXd bivariate_normal(Eigen::Index N, double rho, std::uint64_t seed)
{
  StreamRng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd out(N, 2);
  for (Eigen::Index i = 0; i < N; ++i) {
    out(i, 0) = z(rng);
    out(i, 1) = rho * out(i, 0) + std::sqrt(1 - rho * rho) * z(rng);
  }
  return out;
}

/// A model fitted on `training` whose generated set is `generated` verbatim,
/// for testing the conditioning step apart from the sampler.
inline JointModel synthetic_model(const Eigen::MatrixXd& training, const Eigen::MatrixXd& generated,
                                  std::vector<std::string> names)
{
  JointModel m;
  m.training = {training, names};
  auto [xn, spec] = normalize(m.training, {});
  m.norm = spec;
  m.kde = fit_kde(xn);
  m.generated = {generated, names};
  m.replicas = static_cast<int>(generated.rows() / training.rows());
  return m;
}

} // namespace spill::test
