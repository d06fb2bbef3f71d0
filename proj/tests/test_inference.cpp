#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "spill/inference.hpp"
#include "support.hpp"

using namespace spill;
using spill::test::bivariate_normal;
using spill::test::synthetic_model;

namespace {

Query predict(std::map<std::string, double> given, std::vector<std::string> targets, double mult = 1.0)
{
  Query q;
  q.given = std::move(given);
  q.targets = std::move(targets);
  q.bandwidth_multiplier = mult;
  return q;
}

JointModel gaussian_model()
{
  return synthetic_model(bivariate_normal(2000, 0.8, 1), bivariate_normal(20000, 0.8, 2), {"x", "y"});
}

} // namespace

TEST_CASE("kernel weights")
{
  Eigen::MatrixXd pts(5, 1);
  pts << 0.0, 0.1, 0.5, 1.0, 3.0;
  Eigen::VectorXd t(1);
  t << 0.2;
  const auto w = kernel_weights(pts, t, 0.3);
  double sum = 0.0;
  for (double v : w) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  // Direct evaluation.
  double z = 0.0;
  for (int k = 0; k < 5; ++k) z += std::exp(-std::pow(pts(k) - 0.2, 2) / (2 * 0.09));
  for (int k = 0; k < 5; ++k)
    CHECK(w[k] == doctest::Approx(std::exp(-std::pow(pts(k) - 0.2, 2) / (2 * 0.09)) / z).epsilon(1e-13));

  // Invariant under a common rescaling of points, target and bandwidth.
  const auto ws = kernel_weights(pts * 1e3, t * 1e3, 300.0);
  for (int k = 0; k < 5; ++k) CHECK(ws[k] == doctest::Approx(w[k]).epsilon(1e-12));

  double last = 0.0;
  for (double h : {0.05, 0.1, 0.3, 1.0, 10.0}) {
    const double ess = effective_sample_size(kernel_weights(pts, t, h));
    CHECK(ess > last);
    last = ess;
  }
  CHECK(last == doctest::Approx(5.0).epsilon(1e-2));

  t << 10.0;
  CHECK_THROWS_WITH_AS(kernel_weights(pts, t, 0.3), doctest::Contains("empty neighborhood"), RuntimeError);
  // Far away but inside 5h: fine, even though every raw exponent underflows.
  Eigen::MatrixXd far(2, 1);
  far << 0.0, 1.0;
  Eigen::VectorXd ft(1);
  ft << -0.049;
  const auto wf = kernel_weights(far, ft, 0.01);
  CHECK(wf[0] == 1.0);
}

TEST_CASE("weighted summary against a sorted-sample oracle")
{
  Eigen::VectorXd v(4);
  v << 4.0, 1.0, 3.0, 2.0;
  const auto s = weighted_summary("v", v, {0.25, 0.25, 0.25, 0.25});
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.quantiles == std::array<double, 5>{1.0, 1.0, 2.0, 3.0, 4.0});
  const auto t = weighted_summary("v", v, {0.0, 0.0, 1.0, 0.0});
  CHECK(t.mean == 3.0);
  CHECK(t.sd == 0.0);
  CHECK(t.quantiles == std::array<double, 5>{3.0, 3.0, 3.0, 3.0, 3.0});
}

TEST_CASE("no conditioning returns the unweighted marginals")
{
  const JointModel m = gaussian_model();
  const auto r = condition(m, predict({}, {"y"}));
  CHECK(r.ess == doctest::Approx(20000.0).epsilon(1e-9));
  CHECK(r.targets[0].mean == doctest::Approx(m.generated.values.col(1).mean()).epsilon(1e-12));
}

TEST_CASE("Gaussian conditional matches the analytic kernel-smoothed oracle")
{
  const JointModel m = gaussian_model();
  const double scale = m.norm.columns[0].scale;
  for (double mult : {1.0, 0.5}) {
    const auto r = condition(m, predict({{"x", 1.0}}, {"y"}, mult));
    // Gaussian weights of raw width H over a N(0, 1) design: x | w ~ N(1 / (1 + H^2), H^2 / (1 + H^2)).
    const double H = r.bandwidth * scale, shrink = 1.0 / (1.0 + H * H);
    const double mean = 0.8 * shrink, var = 0.36 + 0.64 * H * H * shrink;
    const double se = std::sqrt(var / r.ess);
    CHECK(std::abs(r.targets[0].mean - mean) < 4 * se);
    CHECK(r.targets[0].sd * r.targets[0].sd == doctest::Approx(var).epsilon(0.1));
    CHECK_FALSE(r.low_ess);
  }
  const auto half = condition(m, predict({{"x", 1.0}}, {"y"}, 0.5));
  CHECK(half.targets[0].mean == doctest::Approx(0.8).epsilon(0.05));
  CHECK(half.targets[0].sd * half.targets[0].sd == doctest::Approx(0.36).epsilon(0.1));
}

TEST_CASE("respond mode agrees with conditioning on the same variables")
{
  const auto tri = [] {
    Eigen::MatrixXd a = bivariate_normal(3000, 0.6, 5);
    Eigen::MatrixXd out(3000, 3);
    out.leftCols(2) = a;
    out.col(2) = a.col(0) + a.col(1) + bivariate_normal(3000, 0.0, 6).col(0) * 0.5;
    return out;
  }();
  const JointModel m = synthetic_model(tri.topRows(300), tri, {"x", "y1", "y2"});
  Query r;
  r.mode = QueryMode::respond;
  r.given = {{"x", 0.5}};
  r.observed = {{"y1", 1.0}};
  r.targets = {"y2"};
  const auto a = condition(m, r);
  const auto b = condition(m, predict({{"x", 0.5}, {"y1", 1.0}}, {"y2"}));
  CHECK(a.weights == b.weights);
  CHECK(a.targets[0].mean == b.targets[0].mean);

  Query bad = predict({{"x", 0.5}}, {"y2"});
  bad.observed = {{"y1", 1.0}};
  CHECK_THROWS_AS(condition(m, bad), ValidationError);
  CHECK_THROWS_AS(condition(m, predict({{"x", 0.5}}, {"x"})), ValidationError);
  CHECK_THROWS_WITH_AS(condition(m, predict({{"depth", 0.5}}, {"y1"})), doctest::Contains("depth"), ValidationError);
  CHECK_THROWS_AS(condition(m, predict({{"x", 60.0}}, {"y1"})), RuntimeError);
}

TEST_CASE("constant columns accept only their constant")
{
  Eigen::MatrixXd d = bivariate_normal(100, 0.5, 7);
  Eigen::MatrixXd x(100, 3);
  x.leftCols(2) = d;
  x.col(2).setConstant(1950.0);
  const JointModel m = synthetic_model(x, x, {"x", "y", "depth"});
  CHECK_NOTHROW(condition(m, predict({{"depth", 1950.0}}, {"y"})));
  CHECK_THROWS_AS(condition(m, predict({{"depth", 1000.0}}, {"y"})), ValidationError);
}

TEST_CASE("exceedance filter on a hand-built model")
{
  Eigen::MatrixXd g(5, 2);
  g << 10, 3.0, //
      20, 1.0,  //
      30, 4.0,  //
      40, 1.5,  //
      50, 9.0;
  const JointModel m = synthetic_model(g, g, {"x", "ys"});
  Query q;
  q.mode = QueryMode::prevent;
  q.exceed_variable = "ys";
  auto rows = [&](std::optional<double> c, std::optional<double> quant = {}) {
    q.threshold = c;
    q.quantile = quant;
    return filter_exceedance(m, q).rows;
  };
  using R = std::vector<Eigen::Index>;
  CHECK(rows(2.5) == R{0, 2, 4});
  CHECK(rows(3.0) == R{2, 4});
  CHECK(rows(-std::numeric_limits<double>::infinity()) == R{0, 1, 2, 3, 4});
  CHECK(rows(9.0).empty());
  CHECK(filter_exceedance(m, q).empty);
  CHECK(rows(std::nullopt) == R{4}); // half the maximum
  CHECK(rows(std::nullopt, 0.5) == R{2, 4});

  q.threshold = 2.5;
  const auto res = filter_exceedance(m, q);
  CHECK(res.samples.values.col(0) == Eigen::Vector3d(10, 30, 50));
  CHECK(res.weights == std::vector<double>(3, 1.0 / 3.0));
  CHECK(res.threshold == 2.5);
}

TEST_CASE("local regression")
{
  const int N = 1000;
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(N, 1.0, 2.0);
  StreamRng rng(3);
  std::shuffle(x.data(), x.data() + N, rng);

  const Eigen::VectorXd lin = 3.0 * x.array() - 2.0;
  for (const auto& [x0, y0] : local_regression(x, lin, 50)) CHECK(std::abs(y0 - (3 * x0 - 2)) <= 1e-9);

  const Eigen::VectorXd sq = x.array().square();
  const auto curve = local_regression(x, sq, 50, 0.3);
  CHECK(curve.size() == 50);
  for (const auto& [x0, y0] : curve) CHECK(y0 == doctest::Approx(x0 * x0).epsilon(0.02));

  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(N, 4.0);
  for (const auto& [x0, y0] : local_regression(x, flat, 20)) CHECK(y0 == doctest::Approx(4.0).epsilon(1e-14));

  // Fewer than five supporting samples: nothing to report.
  Eigen::VectorXd few(4), fy(4);
  few << 0, 1, 2, 3;
  fy << 0, 1, 2, 3;
  CHECK(local_regression(few, fy, 10).empty());
  CHECK_THROWS_AS(local_regression(x, lin, 10, 0.0), ValidationError);
}

TEST_CASE("squared correlation")
{
  const Eigen::MatrixXd ind = bivariate_normal(200000, 0.0, 9);
  CHECK(correlation_r2(ind.col(0), ind.col(0)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(correlation_r2(ind.col(0), -2.0 * ind.col(0)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(correlation_r2(ind.col(0), ind.col(1)) < 0.01);
  // y = x + noise of variance s2 has rho^2 = 1 / (1 + s2).
  const double s2 = 0.5;
  const Eigen::VectorXd y = ind.col(0) + std::sqrt(s2) * ind.col(1);
  CHECK(correlation_r2(ind.col(0), y) == doctest::Approx(1.0 / (1.0 + s2)).epsilon(0.02));
  CHECK_THROWS_AS(correlation_r2(ind.col(0), Eigen::VectorXd::Constant(200000, 0.1)), RuntimeError);
}

TEST_CASE("query JSON")
{
  const auto q = Query::from_json({{"mode", "predict"}, {"given", {{"x_m", 1.0}, {"onset_month", 4}}}});
  CHECK(q.given.contains("onset_sin"));
  CHECK_FALSE(q.given.contains("onset_month"));
  CHECK(q.given.at("onset_sin") == doctest::Approx(std::sin(2 * M_PI * 3.5 / 12)));
  const auto d = Query::from_json({{"mode", "predict"}, {"given", {{"onset_day_of_year", 1}}}});
  CHECK(d.given.at("onset_cos") == 1.0);

  CHECK(Query::from_json(q.to_json()).to_json() == q.to_json());
  CHECK_THROWS_AS(Query::from_json({{"mode", "guess"}}), ValidationError);
  CHECK_THROWS_AS(Query::from_json({{"mode", "predict"}, {"bandwidth", 2}}), ValidationError);
  CHECK_THROWS_AS(Query::from_json({{"mode", "predict"}, {"bandwidth_multiplier", 0}}), ValidationError);
  CHECK_THROWS_AS(Query::from_json({{"mode", "prevent"}}), ValidationError);
  CHECK_THROWS_AS(Query::from_json({{"mode", "prevent"}, {"variable", "beachKM"}, {"quantile", 2}}), ValidationError);
}
