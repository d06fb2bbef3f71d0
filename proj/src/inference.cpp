#include "spill/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <spdlog/spdlog.h>

namespace spill {

// ---------------------------------------------------------------------------
// Query

Query Query::from_json(const nlohmann::json& j)
{
  static const std::vector<std::string> known{"mode",     "given",     "observed",  "targets", "bandwidth_multiplier",
                                              "variable", "threshold", "quantile"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ValidationError("query: unknown key '" + k + "'");
  Query q;
  try {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "predict")
      q.mode = QueryMode::predict;
    else if (mode == "respond")
      q.mode = QueryMode::respond;
    else if (mode == "prevent")
      q.mode = QueryMode::prevent;
    else
      throw ValidationError("query: unknown mode '" + mode + "'");
    if (j.contains("given")) q.given = j["given"].get<std::map<std::string, double>>();
    if (j.contains("observed")) q.observed = j["observed"].get<std::map<std::string, double>>();
    if (j.contains("targets")) q.targets = j["targets"].get<std::vector<std::string>>();
    q.bandwidth_multiplier = j.value("bandwidth_multiplier", 1.0);
    q.exceed_variable = j.value("variable", std::string{});
    if (j.contains("threshold") && !j["threshold"].is_null()) q.threshold = j["threshold"].get<double>();
    if (j.contains("quantile") && !j["quantile"].is_null()) q.quantile = j["quantile"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("query: ") + e.what());
  }

  const double two_pi = 2.0 * std::numbers::pi;
  if (auto it = q.given.find("onset_day_of_year"); it != q.given.end()) {
    const double a = two_pi * (it->second - 1.0) / 365.0;
    q.given.erase(it);
    q.given["onset_sin"] = std::sin(a);
    q.given["onset_cos"] = std::cos(a);
  }
  if (auto it = q.given.find("onset_month"); it != q.given.end()) {
    const double a = two_pi * (it->second - 0.5) / 12.0;
    q.given.erase(it);
    q.given["onset_sin"] = std::sin(a);
    q.given["onset_cos"] = std::cos(a);
  }

  if (!(q.bandwidth_multiplier > 0.0)) throw ValidationError("query: bandwidth_multiplier must be positive");
  for (const auto* m : {&q.given, &q.observed})
    for (const auto& [k, v] : *m)
      if (!std::isfinite(v)) throw ValidationError("query: value for '" + k + "' is not finite");
  if (q.mode == QueryMode::prevent) {
    if (q.exceed_variable.empty()) throw ValidationError("query: prevent mode needs 'variable'");
    if (q.threshold && !std::isfinite(*q.threshold) && *q.threshold != -std::numeric_limits<double>::infinity())
      throw ValidationError("query: threshold must be finite");
    if (q.quantile && !(*q.quantile >= 0.0 && *q.quantile <= 1.0))
      throw ValidationError("query: quantile must be in [0, 1]");
  }
  return q;
}

nlohmann::json Query::to_json() const
{
  nlohmann::json j;
  j["mode"] = mode == QueryMode::predict ? "predict" : mode == QueryMode::respond ? "respond" : "prevent";
  j["given"] = given;
  j["observed"] = observed;
  j["targets"] = targets;
  j["bandwidth_multiplier"] = bandwidth_multiplier;
  if (mode == QueryMode::prevent) {
    j["variable"] = exceed_variable;
    if (threshold) j["threshold"] = *threshold;
    if (quantile) j["quantile"] = *quantile;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Weights and summaries

std::vector<double> kernel_weights(const Eigen::MatrixXd& points, const Eigen::VectorXd& target, double h)
{
  const Eigen::Index M = points.rows();
  std::vector<double> w(static_cast<std::size_t>(M), 1.0);
  if (points.cols() == 0) {
    for (auto& x : w) x = 1.0 / static_cast<double>(M);
    return w;
  }
  std::vector<double> d2(static_cast<std::size_t>(M));
  double min_d2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < M; ++r) {
    d2[static_cast<std::size_t>(r)] = (points.row(r).transpose() - target).squaredNorm();
    min_d2 = std::min(min_d2, d2[static_cast<std::size_t>(r)]);
  }
  if (min_d2 > 25.0 * h * h)
    throw RuntimeError("empty neighborhood: no sample lies within 5h (h = " + std::to_string(h) +
                       ") of the conditioning point");
  // Shift by the nearest distance so the largest weight is exp(0).
  double sum = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::exp(-(d2[k] - min_d2) / (2.0 * h * h));
    sum += w[k];
  }
  for (auto& x : w) x /= sum;
  return w;
}

double effective_sample_size(const std::vector<double>& weights)
{
  double s2 = 0.0;
  for (double w : weights) s2 += w * w;
  return 1.0 / s2;
}

TargetSummary weighted_summary(const std::string& name, const Eigen::VectorXd& values, const std::vector<double>& weights)
{
  TargetSummary s;
  s.name = name;
  double mean = 0.0;
  for (Eigen::Index k = 0; k < values.size(); ++k) mean += weights[static_cast<std::size_t>(k)] * values(k);
  double var = 0.0;
  for (Eigen::Index k = 0; k < values.size(); ++k)
    var += weights[static_cast<std::size_t>(k)] * (values(k) - mean) * (values(k) - mean);
  s.mean = mean;
  s.sd = std::sqrt(var);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
  for (std::size_t q = 0; q < kSummaryQuantiles.size(); ++q) {
    double cum = 0.0;
    s.quantiles[q] = values(order.back());
    for (auto idx : order) {
      cum += weights[static_cast<std::size_t>(idx)];
      if (cum >= kSummaryQuantiles[q] - 1e-12) {
        s.quantiles[q] = values(idx);
        break;
      }
    }
  }
  return s;
}

nlohmann::json summary_json(const std::vector<TargetSummary>& s)
{
  nlohmann::json out = nlohmann::json::object();
  for (const auto& t : s) {
    nlohmann::json q = nlohmann::json::object();
    for (std::size_t k = 0; k < kSummaryQuantiles.size(); ++k)
      q[std::to_string(static_cast<int>(std::lround(kSummaryQuantiles[k] * 100))) + "%"] = t.quantiles[k];
    out[t.name] = {{"mean", t.mean}, {"sd", t.sd}, {"quantiles", q}};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conditioning

namespace {

const ColumnTransform& transform_of(const JointModel& model, const std::string& name)
{
  for (const auto& t : model.norm.columns)
    if (t.name == name) return t;
  throw ValidationError("unknown variable '" + name + "'");
}

} // namespace

ConditionalResult condition(const JointModel& model, const Query& query)
{
  if (query.mode == QueryMode::prevent) throw ValidationError("condition: prevent queries use filter_exceedance");

  std::map<std::string, double> cond = query.given;
  if (query.mode == QueryMode::respond)
    for (const auto& [k, v] : query.observed) cond[k] = v;
  else if (!query.observed.empty())
    throw ValidationError("condition: observed metrics are only allowed in respond mode");

  std::vector<std::string> targets = query.targets;
  if (targets.empty())
    for (const auto& c : model.generated.columns)
      if (!cond.contains(c)) targets.push_back(c);
  for (const auto& t : targets) {
    model.generated.column_index(t);
    if (cond.contains(t)) throw ValidationError("condition: variable '" + t + "' is both conditioned on and a target");
  }

  // Conditioning coordinates: normalized kept columns.
  const auto kept = model.norm.kept_names();
  std::vector<Eigen::Index> cond_cols;
  std::vector<double> cond_vals;
  for (const auto& [name, value] : cond) {
    const auto& t = transform_of(model, name);
    if (t.dropped) {
      if (std::abs(value - t.constant) > 1e-9 * std::max(1.0, std::abs(t.constant)))
        throw ValidationError("condition: variable '" + name + "' is constant (" + std::to_string(t.constant) +
                              ") in the model; value is outside its support");
      spdlog::warn("variable '{}' is constant in the model; conditioning on it has no effect", name);
      continue;
    }
    if (t.log1p && value <= -1.0) throw ValidationError("condition: value for '" + name + "' must exceed -1");
    cond_cols.push_back(std::find(kept.begin(), kept.end(), name) - kept.begin());
    cond_vals.push_back(t.forward(value));
  }

  ConditionalResult res;
  res.samples = model.generated;
  res.bandwidth = query.bandwidth_multiplier * model.kde.shrink;
  const Eigen::MatrixXd gn = model.generated_normalized();
  Eigen::MatrixXd pts(gn.rows(), static_cast<Eigen::Index>(cond_cols.size()));
  Eigen::VectorXd target(static_cast<Eigen::Index>(cond_cols.size()));
  for (std::size_t k = 0; k < cond_cols.size(); ++k) {
    pts.col(static_cast<Eigen::Index>(k)) = gn.col(cond_cols[k]);
    target(static_cast<Eigen::Index>(k)) = cond_vals[k];
  }
  res.weights = kernel_weights(pts, target, res.bandwidth);
  res.ess = effective_sample_size(res.weights);
  res.low_ess = res.ess < 30.0;
  if (res.low_ess) spdlog::warn("effective sample size {:.1f} is below 30; widen the bandwidth or add replicas", res.ess);
  for (const auto& t : targets)
    res.targets.push_back(weighted_summary(t, model.generated.values.col(model.generated.column_index(t)), res.weights));
  return res;
}

// ---------------------------------------------------------------------------
// Exceedance

std::vector<Eigen::Index> exceedance_rows(const Eigen::VectorXd& values, double threshold)
{
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < values.size(); ++r)
    if (values(r) > threshold) rows.push_back(r);
  return rows;
}

ExceedanceResult filter_exceedance(const JointModel& model, const Query& query)
{
  const auto& gen = model.generated;
  const Eigen::VectorXd ys = gen.values.col(gen.column_index(query.exceed_variable));
  ExceedanceResult res;
  res.variable = query.exceed_variable;
  if (query.threshold) {
    res.threshold = *query.threshold;
  } else if (query.quantile) {
    std::vector<double> sorted(ys.data(), ys.data() + ys.size());
    std::sort(sorted.begin(), sorted.end());
    const auto idx = static_cast<std::size_t>(std::floor(*query.quantile * static_cast<double>(sorted.size() - 1)));
    res.threshold = sorted[idx];
  } else {
    res.threshold = 0.5 * ys.maxCoeff();
  }
  res.rows = exceedance_rows(ys, res.threshold);
  res.empty = res.rows.empty();
  res.samples.columns = gen.columns;
  res.samples.values.resize(static_cast<Eigen::Index>(res.rows.size()), gen.cols());
  for (std::size_t k = 0; k < res.rows.size(); ++k)
    res.samples.values.row(static_cast<Eigen::Index>(k)) = gen.values.row(res.rows[k]);
  res.weights.assign(res.rows.size(), res.rows.empty() ? 0.0 : 1.0 / static_cast<double>(res.rows.size()));
  if (res.empty) {
    spdlog::warn("no generated sample has {} > {}", res.variable, res.threshold);
    return res;
  }

  static const std::vector<std::string> scenario_cols{"x_m", "y_m", "release_depth_m", "onset_sin", "onset_cos"};
  for (const auto& c : scenario_cols)
    if (gen.has_column(c))
      res.scenario_summary.push_back(weighted_summary(c, res.samples.values.col(gen.column_index(c)), res.weights));

  if (gen.has_column("x_m") && gen.has_column("y_m") && !model.sites.empty()) {
    const auto cx = gen.column_index("x_m"), cy = gen.column_index("y_m");
    for (Eigen::Index r = 0; r < res.samples.rows(); ++r) {
      const double x = res.samples.values(r, cx), y = res.samples.values(r, cy);
      const auto nearest = std::min_element(model.sites.begin(), model.sites.end(), [&](const SiteRef& a, const SiteRef& b) {
        return std::hypot(a.x - x, a.y - y) < std::hypot(b.x - x, b.y - y);
      });
      ++res.per_site[nearest->site_id];
    }
  }
  if (gen.has_column("onset_sin") && gen.has_column("onset_cos")) {
    const auto cs = gen.column_index("onset_sin"), cc = gen.column_index("onset_cos");
    for (Eigen::Index r = 0; r < res.samples.rows(); ++r)
      ++res.per_month[static_cast<std::size_t>(
          month_of_angle(std::atan2(res.samples.values(r, cs), res.samples.values(r, cc))) - 1)];
  }
  return res;
}

// ---------------------------------------------------------------------------
// Local regression

std::vector<std::pair<double, double>> local_regression(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                                        int n_points, double span)
{
  if (x.size() != y.size()) throw ValidationError("local_regression: x and y differ in length");
  if (n_points < 1) throw ValidationError("local_regression: n_points must be positive");
  if (!(span > 0.0 && span <= 1.0)) throw ValidationError("local_regression: span must be in (0, 1]");
  std::vector<std::pair<double, double>> curve;
  const Eigen::Index N = x.size();
  if (N == 0) return curve;
  const auto k = std::min<Eigen::Index>(N, static_cast<Eigen::Index>(std::ceil(span * static_cast<double>(N))));
  const double lo = x.minCoeff(), hi = x.maxCoeff();
  std::vector<double> dist(static_cast<std::size_t>(N));

  for (int p = 0; p < n_points; ++p) {
    const double x0 = n_points == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * p / (n_points - 1);
    for (Eigen::Index i = 0; i < N; ++i) dist[static_cast<std::size_t>(i)] = std::abs(x(i) - x0);
    std::vector<double> sorted = dist;
    std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
    const double dmax = sorted[static_cast<std::size_t>(k - 1)];

    // Weighted least squares on centered x.
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    int support = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
      double w;
      if (dmax > 0) {
        const double u = dist[static_cast<std::size_t>(i)] / dmax;
        w = u < 1.0 ? std::pow(1.0 - u * u * u, 3) : 0.0;
      } else {
        w = dist[static_cast<std::size_t>(i)] == 0.0 ? 1.0 : 0.0;
      }
      if (w <= 0.0) continue;
      ++support;
      const double dx = x(i) - x0;
      sw += w;
      swx += w * dx;
      swy += w * y(i);
      swxx += w * dx * dx;
      swxy += w * dx * y(i);
    }
    if (support < 5) continue;
    const double det = sw * swxx - swx * swx;
    const double yhat = det > 1e-12 * sw * swxx ? (swxx * swy - swx * swxy) / det : swy / sw;
    curve.emplace_back(x0, yhat);
  }
  return curve;
}

std::vector<std::pair<double, double>> local_regression(const JointModel& model, const std::string& x_var,
                                                        const std::string& y_var, int n_points, double span,
                                                        RegressionSource source)
{
  const SampleMatrix& m = source == RegressionSource::generated ? model.generated : model.training;
  return local_regression(m.values.col(m.column_index(x_var)), m.values.col(m.column_index(y_var)), n_points, span);
}

// ---------------------------------------------------------------------------
// Correlation

double correlation_r2(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("correlation: columns must have equal length >= 2");
  // Exact test: a constant column's computed mean can carry rounding error.
  if (a.minCoeff() == a.maxCoeff() || b.minCoeff() == b.maxCoeff()) throw RuntimeError("correlation: zero variance");
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double saa = (da * da).sum(), sbb = (db * db).sum();
  if (saa == 0.0 || sbb == 0.0) throw RuntimeError("correlation: zero variance");
  const double sab = (da * db).sum();
  return sab * sab / (saa * sbb);
}

double correlation(const JointModel& model, const std::string& a, const std::string& b)
{
  const auto& g = model.generated;
  return correlation_r2(g.values.col(g.column_index(a)), g.values.col(g.column_index(b)));
}

} // namespace spill
