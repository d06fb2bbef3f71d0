#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "spill/common.hpp"

namespace spill {

struct ExposureRow;

/// N rows (samples) by n named columns.
struct SampleMatrix
{
  Eigen::MatrixXd values;
  std::vector<std::string> columns;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  /// Index of `name`; throws ValidationError naming the variable when absent.
  Eigen::Index column_index(const std::string& name) const;
  bool has_column(const std::string& name) const;
  void validate() const;
};

/// Per-column affine map (after an optional log1p) to zero mean, unit sample
/// standard deviation. Constant columns are dropped and remembered as constants.
struct ColumnTransform
{
  std::string name;
  bool log1p = false;
  double center = 0.0;
  double scale = 1.0;
  bool dropped = false;
  double constant = 0.0;

  double forward(double raw) const { return ((log1p ? std::log1p(raw) : raw) - center) / scale; }
  double inverse(double z) const
  {
    const double v = z * scale + center;
    return log1p ? std::expm1(v) : v;
  }
};

struct NormalizationSpec
{
  std::vector<ColumnTransform> columns; // one per raw column, in raw order

  std::vector<std::string> kept_names() const;
  /// Raw column index of each kept (normalized) column.
  std::vector<Eigen::Index> kept_indices() const;
  /// Normalized (kept) matrix -> raw matrix with every original column.
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& normalized) const;
  /// Raw matrix (all columns) -> normalized kept columns.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
};

struct NormalizationRule
{
  std::vector<std::string> log1p_columns;
};

/// Returns the normalized kept columns and the transform. Throws when every column is constant.
std::pair<SampleMatrix, NormalizationSpec> normalize(const SampleMatrix& x, const NormalizationRule& rule);
SampleMatrix denormalize(const SampleMatrix& xn, const NormalizationSpec& spec);

/// Gaussian KDE over normalized samples with Silverman's bandwidth and
/// variance-preserving shrinkage.
struct KdeModel
{
  Eigen::MatrixXd centers; // N x n
  double bandwidth = 0.0;  // s
  double shrink = 0.0;     // s_hat = s / sqrt(s^2 + (N-1)/N)
};

/// s = (4 / (N (n + 2)))^(1 / (n + 4))
double silverman_bandwidth(Eigen::Index n_samples, Eigen::Index n_dims);
KdeModel fit_kde(const SampleMatrix& xn);

/// One n x N matrix [h]: column j is (s_hat / s) x_j + s_hat z, z standard normal.
Eigen::MatrixXd kde_draw(const KdeModel& kde, StreamRng& rng);

struct BasisRule
{
  std::optional<double> epsilon; // default: median pairwise squared distance / 2
  std::optional<Eigen::Index> m; // default: eigenvalue gap rule
  double gap_threshold = 0.1;
};

/// Diffusion-maps basis. Kernel exp(-|xi - xj|^2 / (4 eps)), transition matrix
/// P = diag(b)^-1 K, basis columns g_a = lambda_a psi_a ordered by descending
/// eigenvalue. `projector` is the orthogonal projector onto span(g_1..g_m).
struct DiffusionBasis
{
  double epsilon = 0.0;
  Eigen::VectorXd eigenvalues; // descending, eigenvalues(0) == 1
  Eigen::MatrixXd basis;       // N x N
  Eigen::Index m = 0;
  Eigen::MatrixXd projector; // N x N
};

/// Median of pairwise squared distances over i < j, halved.
double default_epsilon(const Eigen::MatrixXd& xn);
/// Smallest a >= 3 (1-based) with lambda_{a+1} / lambda_2 < threshold, capped at N - 1.
Eigen::Index gap_truncation(const Eigen::VectorXd& eigenvalues, double threshold);

DiffusionBasis build_basis(const Eigen::MatrixXd& xn, const BasisRule& rule = {});

/// replicas x N normalized samples: each replica is kde_draw projected onto
/// the truncated basis, [h] * projector. Replica r uses seed derive_seed(seed, r).
Eigen::MatrixXd generate_normalized(const KdeModel& kde, const DiffusionBasis& basis, int replicas,
                                    std::uint64_t seed);
/// Unprojected KDE draws with the same seeding, for comparison.
Eigen::MatrixXd generate_unprojected(const KdeModel& kde, int replicas, std::uint64_t seed);

struct SiteRef
{
  std::int64_t site_id = 0;
  double x = 0.0;
  double y = 0.0;
};

struct ManifoldConfig
{
  NormalizationRule normalization;
  BasisRule basis;
  int replicas = 10;

  static ManifoldConfig defaults();
  static ManifoldConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Joint probability model of scenario variables and exposure metrics.
struct JointModel
{
  SampleMatrix training; // raw
  NormalizationSpec norm;
  KdeModel kde;
  DiffusionBasis basis;
  SampleMatrix generated; // raw columns, replicas * N rows
  std::vector<SiteRef> sites;
  std::uint64_t seed = 0;
  int replicas = 0;
  nlohmann::json config;

  /// Generated samples in normalized (kept) coordinates.
  Eigen::MatrixXd generated_normalized() const { return norm.apply(generated.values); }
};

JointModel learn(const SampleMatrix& raw, const ManifoldConfig& config, std::uint64_t seed);

/// Regenerates samples from a fitted model with a new seed and replica count.
SampleMatrix resample(const JointModel& model, int replicas, std::uint64_t seed);

/// Columns x_m, y_m, release_depth_m, onset_sin, onset_cos and the seven metrics.
SampleMatrix sample_matrix_from_exposure(const std::vector<ExposureRow>& rows);
std::vector<SiteRef> sites_from_exposure(const std::vector<ExposureRow>& rows);

/// Onset angle on the annual cycle: 2 pi (day_of_year - 1 + fraction) / days_in_year.
double onset_angle(double epoch_seconds);
/// Month (1..12) of the annual-cycle angle, using twelve equal bins.
int month_of_angle(double angle);

void save_model(const std::string& path, const JointModel& model);
JointModel load_model(const std::string& path);

/// Plain CSV with a header of column names.
void write_sample_csv(const std::string& path, const SampleMatrix& m, const std::vector<double>* weights = nullptr);

} // namespace spill
