#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "spill/manifold.hpp"

namespace spill {

enum class QueryMode
{
  predict, // P(Y | X)
  respond, // P(Y_u | X, Y_o)
  prevent  // P(X | Y_s > c)
};

struct Query
{
  QueryMode mode = QueryMode::predict;
  std::map<std::string, double> given;    // scenario variables X
  std::map<std::string, double> observed; // observed metrics Y_o (respond)
  std::vector<std::string> targets;       // default: every column not conditioned on
  double bandwidth_multiplier = 1.0;

  // prevent
  std::string exceed_variable;
  std::optional<double> threshold;
  std::optional<double> quantile; // threshold = quantile of the generated Y_s

  /// Accepts the convenience keys "onset_day_of_year" and "onset_month" in
  /// "given", translated to the onset_sin / onset_cos columns.
  static Query from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct TargetSummary
{
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  std::array<double, 5> quantiles{}; // 5, 25, 50, 75, 95 %
};

inline constexpr std::array<double, 5> kSummaryQuantiles{0.05, 0.25, 0.50, 0.75, 0.95};

struct ConditionalResult
{
  SampleMatrix samples;        // generated samples (raw units)
  std::vector<double> weights; // sum to 1
  std::vector<TargetSummary> targets;
  double ess = 0.0;
  double bandwidth = 0.0; // h in normalized units
  bool low_ess = false;   // ESS < 30
};

/// Normalized Gaussian weights w_j ~ exp(-|c_j - c*|^2 / (2 h^2)). Throws
/// RuntimeError when every sample is farther than 5h from the conditioning point.
std::vector<double> kernel_weights(const Eigen::MatrixXd& points, const Eigen::VectorXd& target, double h);
double effective_sample_size(const std::vector<double>& weights);
TargetSummary weighted_summary(const std::string& name, const Eigen::VectorXd& values, const std::vector<double>& weights);

/// Nadaraya-Watson conditioning of the model's generated samples (predict and respond modes).
ConditionalResult condition(const JointModel& model, const Query& query);

struct ExceedanceResult
{
  std::string variable;
  double threshold = 0.0;
  bool empty = true;
  std::vector<Eigen::Index> rows; // indices into the generated samples, ascending
  SampleMatrix samples;
  std::vector<double> weights; // uniform
  std::vector<TargetSummary> scenario_summary;
  std::map<std::int64_t, std::size_t> per_site; // nearest training site
  std::array<std::size_t, 12> per_month{};
};

/// Row indices with values > threshold, ascending.
std::vector<Eigen::Index> exceedance_rows(const Eigen::VectorXd& values, double threshold);

/// Generated samples with Y_s > c. Default c is half the generated maximum.
ExceedanceResult filter_exceedance(const JointModel& model, const Query& query);

/// Locally weighted linear regression with tricube weights over the nearest
/// ceil(span * N) points, evaluated on n_points evenly spaced x values.
/// Evaluation points with fewer than 5 positively weighted samples are omitted.
std::vector<std::pair<double, double>> local_regression(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                                        int n_points, double span = 0.5);

enum class RegressionSource
{
  generated,
  training
};

std::vector<std::pair<double, double>> local_regression(const JointModel& model, const std::string& x_var,
                                                        const std::string& y_var, int n_points, double span = 0.5,
                                                        RegressionSource source = RegressionSource::generated);

/// Squared Pearson correlation. Throws RuntimeError for a zero-variance column.
double correlation_r2(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double correlation(const JointModel& model, const std::string& a, const std::string& b);

nlohmann::json summary_json(const std::vector<TargetSummary>& s);

} // namespace spill
