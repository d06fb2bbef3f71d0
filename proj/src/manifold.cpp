#include "spill/manifold.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "spill/container.hpp"
#include "spill/exposure.hpp"

namespace spill {

// ---------------------------------------------------------------------------
// SampleMatrix

Eigen::Index SampleMatrix::column_index(const std::string& name) const
{
  for (std::size_t k = 0; k < columns.size(); ++k)
    if (columns[k] == name) return static_cast<Eigen::Index>(k);
  throw ValidationError("unknown variable '" + name + "'");
}

bool SampleMatrix::has_column(const std::string& name) const
{
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

void SampleMatrix::validate() const
{
  if (static_cast<std::size_t>(values.cols()) != columns.size())
    throw ValidationError("sample matrix: column names do not match the column count");
  if (values.rows() < 3) throw ValidationError("sample matrix: at least 3 samples are required");
  if (!values.allFinite()) throw ValidationError("sample matrix: non-finite entries");
  for (std::size_t a = 0; a < columns.size(); ++a)
    for (std::size_t b = a + 1; b < columns.size(); ++b)
      if (columns[a] == columns[b]) throw ValidationError("sample matrix: duplicate column '" + columns[a] + "'");
}

// ---------------------------------------------------------------------------
// Normalization

std::vector<std::string> NormalizationSpec::kept_names() const
{
  std::vector<std::string> out;
  for (const auto& c : columns)
    if (!c.dropped) out.push_back(c.name);
  return out;
}

std::vector<Eigen::Index> NormalizationSpec::kept_indices() const
{
  std::vector<Eigen::Index> out;
  for (std::size_t k = 0; k < columns.size(); ++k)
    if (!columns[k].dropped) out.push_back(static_cast<Eigen::Index>(k));
  return out;
}

Eigen::MatrixXd NormalizationSpec::denormalize(const Eigen::MatrixXd& normalized) const
{
  const auto kept = kept_indices();
  if (normalized.cols() != static_cast<Eigen::Index>(kept.size()))
    throw ValidationError("denormalize: column count does not match the normalization");
  Eigen::MatrixXd raw(normalized.rows(), static_cast<Eigen::Index>(columns.size()));
  Eigen::Index k = 0;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& t = columns[c];
    const auto col = static_cast<Eigen::Index>(c);
    if (t.dropped) {
      raw.col(col).setConstant(t.constant);
      continue;
    }
    for (Eigen::Index r = 0; r < normalized.rows(); ++r) raw(r, col) = t.inverse(normalized(r, k));
    ++k;
  }
  return raw;
}

Eigen::MatrixXd NormalizationSpec::apply(const Eigen::MatrixXd& raw) const
{
  if (raw.cols() != static_cast<Eigen::Index>(columns.size()))
    throw ValidationError("normalize: column count does not match the normalization");
  const auto kept = kept_indices();
  Eigen::MatrixXd out(raw.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& t = columns[static_cast<std::size_t>(kept[k])];
    for (Eigen::Index r = 0; r < raw.rows(); ++r) out(r, static_cast<Eigen::Index>(k)) = t.forward(raw(r, kept[k]));
  }
  return out;
}

std::pair<SampleMatrix, NormalizationSpec> normalize(const SampleMatrix& x, const NormalizationRule& rule)
{
  x.validate();
  for (const auto& name : rule.log1p_columns)
    if (!x.has_column(name)) spdlog::debug("log1p column '{}' not present; ignored", name);

  NormalizationSpec spec;
  const Eigen::Index N = x.rows();
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    ColumnTransform t;
    t.name = x.columns[static_cast<std::size_t>(c)];
    t.log1p = std::find(rule.log1p_columns.begin(), rule.log1p_columns.end(), t.name) != rule.log1p_columns.end();
    Eigen::VectorXd v = x.values.col(c);
    if (t.log1p) {
      if ((v.array() <= -1.0).any())
        throw ValidationError("normalize: column '" + t.name + "' has values <= -1 and cannot take log1p");
      v = v.unaryExpr([](double a) { return std::log1p(a); });
    }
    if (v.maxCoeff() == v.minCoeff()) {
      t.dropped = true;
      t.constant = x.values(0, c);
      spdlog::warn("column '{}' is constant ({}); dropped from the model", t.name, t.constant);
      spec.columns.push_back(t);
      continue;
    }
    t.center = v.mean();
    t.scale = std::sqrt((v.array() - t.center).square().sum() / static_cast<double>(N - 1));
    spec.columns.push_back(t);
  }
  const auto kept = spec.kept_names();
  if (kept.empty()) throw ValidationError("normalize: every column is constant");
  SampleMatrix xn{spec.apply(x.values), kept};
  return {xn, spec};
}

SampleMatrix denormalize(const SampleMatrix& xn, const NormalizationSpec& spec)
{
  std::vector<std::string> names;
  for (const auto& c : spec.columns) names.push_back(c.name);
  return {spec.denormalize(xn.values), names};
}

// ---------------------------------------------------------------------------
// KDE

double silverman_bandwidth(Eigen::Index n_samples, Eigen::Index n_dims)
{
  const double N = static_cast<double>(n_samples), n = static_cast<double>(n_dims);
  return std::pow(4.0 / (N * (n + 2.0)), 1.0 / (n + 4.0));
}

KdeModel fit_kde(const SampleMatrix& xn)
{
  if (xn.rows() < 3) throw ValidationError("fit_kde: at least 3 samples are required");
  KdeModel k;
  k.centers = xn.values;
  const double N = static_cast<double>(xn.rows());
  k.bandwidth = silverman_bandwidth(xn.rows(), xn.cols());
  k.shrink = k.bandwidth / std::sqrt(k.bandwidth * k.bandwidth + (N - 1.0) / N);
  return k;
}

Eigen::MatrixXd kde_draw(const KdeModel& kde, StreamRng& rng)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index N = kde.centers.rows(), n = kde.centers.cols();
  const double ratio = kde.shrink / kde.bandwidth;
  Eigen::MatrixXd h(n, N);
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = 0; i < n; ++i) h(i, j) = ratio * kde.centers(j, i) + kde.shrink * normal(rng);
  return h;
}

// ---------------------------------------------------------------------------
// Diffusion basis

double default_epsilon(const Eigen::MatrixXd& xn)
{
  const Eigen::Index N = xn.rows();
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(N * (N - 1) / 2));
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i + 1; j < N; ++j) d2.push_back((xn.row(i) - xn.row(j)).squaredNorm());
  const std::size_t mid = d2.size() / 2;
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
  double median = d2[mid];
  if (d2.size() % 2 == 0) {
    const double lower = *std::max_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return median / 2.0;
}

Eigen::Index gap_truncation(const Eigen::VectorXd& eigenvalues, double threshold)
{
  const Eigen::Index N = eigenvalues.size();
  const Eigen::Index cap = std::max<Eigen::Index>(1, N - 1);
  const double l2 = N > 1 ? eigenvalues(1) : 0.0;
  if (!(l2 > 0.0)) return std::min<Eigen::Index>(3, cap);
  // a is 1-based: lambda_{a+1} is eigenvalues(a).
  for (Eigen::Index a = 3; a <= cap; ++a)
    if (a < N && eigenvalues(a) / l2 < threshold) return a;
  return cap;
}

DiffusionBasis build_basis(const Eigen::MatrixXd& xn, const BasisRule& rule)
{
  const Eigen::Index N = xn.rows();
  if (N < 3) throw ValidationError("build_basis: at least 3 samples are required");
  DiffusionBasis b;
  b.epsilon = rule.epsilon ? *rule.epsilon : default_epsilon(xn);
  if (!(b.epsilon > 0.0)) throw ValidationError("build_basis: epsilon must be positive");

  Eigen::MatrixXd K(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    K(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < N; ++j) K(i, j) = K(j, i) = std::exp(-(xn.row(i) - xn.row(j)).squaredNorm() / (4.0 * b.epsilon));
  }
  const Eigen::VectorXd rowsum = K.rowwise().sum();
  const Eigen::VectorXd inv_sqrt = rowsum.array().rsqrt();
  // diag(b)^1/2 P diag(b)^-1/2 = diag(b)^-1/2 K diag(b)^-1/2, symmetric.
  const Eigen::MatrixXd S = inv_sqrt.asDiagonal() * K * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  if (eig.info() != Eigen::Success) throw RuntimeError("build_basis: eigen-solver failed");

  b.eigenvalues = eig.eigenvalues().reverse();
  const Eigen::MatrixXd phi = eig.eigenvectors().rowwise().reverse();
  Eigen::MatrixXd psi = inv_sqrt.asDiagonal() * phi;
  // Scale so the first right eigenvector is the all-ones vector, with consistent signs.
  const double first = psi.col(0).mean();
  psi /= first;
  for (Eigen::Index a = 1; a < N; ++a) {
    Eigen::Index arg = 0;
    psi.col(a).cwiseAbs().maxCoeff(&arg);
    if (psi(arg, a) < 0) psi.col(a) *= -1.0;
  }
  b.basis = psi * b.eigenvalues.asDiagonal();

  b.m = rule.m ? *rule.m : gap_truncation(b.eigenvalues, rule.gap_threshold);
  if (b.m < 1 || b.m > N) throw ValidationError("build_basis: truncation order must be in [1, N]");
  if (b.m == N) {
    b.projector = Eigen::MatrixXd::Identity(N, N);
  } else {
    const Eigen::MatrixXd G = b.basis.leftCols(b.m);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(N, b.m);
    const Eigen::MatrixXd P = Q * Q.transpose();
    b.projector = 0.5 * (P + P.transpose());
  }
  return b;
}

Eigen::MatrixXd generate_normalized(const KdeModel& kde, const DiffusionBasis& basis, int replicas, std::uint64_t seed)
{
  if (replicas < 1) throw ValidationError("generate: replicas must be at least 1");
  const Eigen::Index N = kde.centers.rows(), n = kde.centers.cols();
  if (basis.projector.rows() != N) throw ValidationError("generate: basis and KDE were fit on different samples");
  Eigen::MatrixXd out(N * replicas, n);
  for (int r = 0; r < replicas; ++r) {
    StreamRng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    const Eigen::MatrixXd h = kde_draw(kde, rng) * basis.projector;
    out.middleRows(N * r, N) = h.transpose();
  }
  return out;
}

Eigen::MatrixXd generate_unprojected(const KdeModel& kde, int replicas, std::uint64_t seed)
{
  if (replicas < 1) throw ValidationError("generate: replicas must be at least 1");
  const Eigen::Index N = kde.centers.rows(), n = kde.centers.cols();
  Eigen::MatrixXd out(N * replicas, n);
  for (int r = 0; r < replicas; ++r) {
    StreamRng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    out.middleRows(N * r, N) = kde_draw(kde, rng).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config

ManifoldConfig ManifoldConfig::defaults()
{
  ManifoldConfig c;
  c.normalization.log1p_columns.assign(ExposureVector::names.begin(), ExposureVector::names.end());
  return c;
}

nlohmann::json ManifoldConfig::to_json() const
{
  nlohmann::json j = {{"log1p_columns", normalization.log1p_columns},
                      {"gap_threshold", basis.gap_threshold},
                      {"replicas", replicas}};
  j["epsilon"] = basis.epsilon ? nlohmann::json(*basis.epsilon) : nlohmann::json(nullptr);
  j["m"] = basis.m ? nlohmann::json(*basis.m) : nlohmann::json(nullptr);
  return j;
}

ManifoldConfig ManifoldConfig::from_json(const nlohmann::json& j)
{
  ManifoldConfig c = defaults();
  const auto known = c.to_json();
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ValidationError("manifold: unknown key '" + k + "'");
  try {
    if (j.contains("log1p_columns")) c.normalization.log1p_columns = j["log1p_columns"].get<std::vector<std::string>>();
    c.basis.gap_threshold = j.value("gap_threshold", c.basis.gap_threshold);
    c.replicas = j.value("replicas", c.replicas);
    if (j.contains("epsilon") && !j["epsilon"].is_null()) c.basis.epsilon = j["epsilon"].get<double>();
    if (j.contains("m") && !j["m"].is_null()) c.basis.m = j["m"].get<Eigen::Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifold: ") + e.what());
  }
  if (c.replicas < 1) throw ValidationError("manifold: replicas must be at least 1");
  if (!(c.basis.gap_threshold > 0.0)) throw ValidationError("manifold: gap_threshold must be positive");
  return c;
}

// ---------------------------------------------------------------------------
// Joint model

JointModel learn(const SampleMatrix& raw, const ManifoldConfig& config, std::uint64_t seed)
{
  JointModel model;
  model.training = raw;
  auto [xn, spec] = normalize(raw, config.normalization);
  model.norm = spec;
  model.kde = fit_kde(xn);
  model.basis = build_basis(xn.values, config.basis);
  model.seed = seed;
  model.replicas = config.replicas;
  model.config = config.to_json();
  model.generated = resample(model, config.replicas, seed);
  spdlog::info("learned model: N={} n={} eps={:.4g} m={} s={:.4g} s_hat={:.4g}", xn.rows(), xn.cols(),
               model.basis.epsilon, model.basis.m, model.kde.bandwidth, model.kde.shrink);
  return model;
}

SampleMatrix resample(const JointModel& model, int replicas, std::uint64_t seed)
{
  const Eigen::MatrixXd gn = generate_normalized(model.kde, model.basis, replicas, seed);
  return {model.norm.denormalize(gn), model.training.columns};
}

double onset_angle(double epoch_seconds)
{
  using namespace std::chrono;
  const auto whole = sys_seconds{seconds{static_cast<long long>(std::floor(epoch_seconds))}};
  const auto day = floor<days>(whole);
  const year_month_day ymd{day};
  const auto jan1 = sys_days{ymd.year() / January / 1};
  const double fraction = (epoch_seconds - static_cast<double>(duration_cast<seconds>(day.time_since_epoch()).count())) /
                          kSecondsPerDay;
  const double doy = static_cast<double>((day - jan1).count()) + fraction;
  const double year_days = ymd.year().is_leap() ? 366.0 : 365.0;
  return 2.0 * std::numbers::pi * doy / year_days;
}

int month_of_angle(double angle)
{
  const double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, two_pi);
  if (a < 0) a += two_pi;
  return std::min(12, static_cast<int>(std::floor(a / two_pi * 12.0)) + 1);
}

SampleMatrix sample_matrix_from_exposure(const std::vector<ExposureRow>& rows)
{
  SampleMatrix m;
  m.columns = {"x_m", "y_m", "release_depth_m", "onset_sin", "onset_cos"};
  m.columns.insert(m.columns.end(), ExposureVector::names.begin(), ExposureVector::names.end());
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const double a = onset_angle(row.onset);
    const auto rr = static_cast<Eigen::Index>(r);
    m.values(rr, 0) = row.x;
    m.values(rr, 1) = row.y;
    m.values(rr, 2) = row.release_depth;
    m.values(rr, 3) = std::sin(a);
    m.values(rr, 4) = std::cos(a);
    const auto v = row.metrics.values();
    for (std::size_t k = 0; k < v.size(); ++k) m.values(rr, static_cast<Eigen::Index>(5 + k)) = v[k];
  }
  return m;
}

std::vector<SiteRef> sites_from_exposure(const std::vector<ExposureRow>& rows)
{
  std::vector<SiteRef> out;
  for (const auto& r : rows)
    if (std::none_of(out.begin(), out.end(), [&](const SiteRef& s) { return s.site_id == r.site_id; }))
      out.push_back({r.site_id, r.x, r.y});
  std::sort(out.begin(), out.end(), [](const SiteRef& a, const SiteRef& b) { return a.site_id < b.site_id; });
  return out;
}

// ---------------------------------------------------------------------------
// Model file

namespace {

ContainerVariable matrix_variable(const std::string& name, const Eigen::MatrixXd& m)
{
  ContainerVariable v;
  v.name = name;
  v.dtype = "f64";
  v.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  v.values.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v.values[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return v;
}

Eigen::MatrixXd matrix_from(const ContainerVariable& v)
{
  if (v.shape.size() != 2) throw ValidationError("model variable '" + v.name + "' is not 2-D");
  const auto R = static_cast<Eigen::Index>(v.shape[0]), C = static_cast<Eigen::Index>(v.shape[1]);
  Eigen::MatrixXd m(R, C);
  for (Eigen::Index r = 0; r < R; ++r)
    for (Eigen::Index c = 0; c < C; ++c) m(r, c) = v.values[static_cast<std::size_t>(r * C + c)];
  return m;
}

} // namespace

void save_model(const std::string& path, const JointModel& model)
{
  Container c;
  nlohmann::json norm = nlohmann::json::array();
  for (const auto& t : model.norm.columns)
    norm.push_back({{"name", t.name},
                    {"log1p", t.log1p},
                    {"center", t.center},
                    {"scale", t.scale},
                    {"dropped", t.dropped},
                    {"constant", t.constant}});
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& s : model.sites) sites.push_back({{"site_id", s.site_id}, {"x", s.x}, {"y", s.y}});
  c.meta = {{"kind", "joint_model"},
            {"columns", model.training.columns},
            {"normalization", norm},
            {"kde", {{"bandwidth", model.kde.bandwidth}, {"shrink", model.kde.shrink}}},
            {"basis", {{"epsilon", model.basis.epsilon}, {"m", model.basis.m}}},
            {"sites", sites},
            {"seed", model.seed},
            {"replicas", model.replicas},
            {"config", model.config}};
  c.variables.push_back(matrix_variable("training", model.training.values));
  c.variables.push_back(matrix_variable("centers", model.kde.centers));
  c.variables.push_back(matrix_variable("eigenvalues", model.basis.eigenvalues));
  c.variables.push_back(matrix_variable("basis", model.basis.basis));
  c.variables.push_back(matrix_variable("projector", model.basis.projector));
  c.variables.push_back(matrix_variable("generated", model.generated.values));
  write_container(path, c);
}

JointModel load_model(const std::string& path)
{
  const Container c = read_container(path);
  if (c.meta.value("kind", std::string{}) != "joint_model") throw ValidationError(path + ": not a joint model file");
  JointModel m;
  try {
    const auto& meta = c.meta;
    const auto columns = meta.at("columns").get<std::vector<std::string>>();
    for (const auto& t : meta.at("normalization"))
      m.norm.columns.push_back({t.at("name").get<std::string>(), t.at("log1p").get<bool>(), t.at("center").get<double>(),
                                t.at("scale").get<double>(), t.at("dropped").get<bool>(), t.at("constant").get<double>()});
    m.kde.bandwidth = meta.at("kde").at("bandwidth").get<double>();
    m.kde.shrink = meta.at("kde").at("shrink").get<double>();
    m.basis.epsilon = meta.at("basis").at("epsilon").get<double>();
    m.basis.m = meta.at("basis").at("m").get<Eigen::Index>();
    for (const auto& s : meta.at("sites"))
      m.sites.push_back({s.at("site_id").get<std::int64_t>(), s.at("x").get<double>(), s.at("y").get<double>()});
    m.seed = meta.at("seed").get<std::uint64_t>();
    m.replicas = meta.at("replicas").get<int>();
    m.config = meta.at("config");
    m.training = {matrix_from(c.variable("training")), columns};
    m.kde.centers = matrix_from(c.variable("centers"));
    m.basis.eigenvalues = matrix_from(c.variable("eigenvalues")).col(0);
    m.basis.basis = matrix_from(c.variable("basis"));
    m.basis.projector = matrix_from(c.variable("projector"));
    m.generated = {matrix_from(c.variable("generated")), columns};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": malformed model metadata: " + e.what());
  }
  return m;
}

void write_sample_csv(const std::string& path, const SampleMatrix& m, const std::vector<double>* weights)
{
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw RuntimeError("cannot open '" + path + "' for writing");
  for (std::size_t c = 0; c < m.columns.size(); ++c) std::fprintf(f, "%s%s", c ? "," : "", m.columns[c].c_str());
  if (weights) std::fputs(",weight", f);
  std::fputc('\n', f);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) std::fprintf(f, "%s%.17g", c ? "," : "", m.values(r, c));
    if (weights) std::fprintf(f, ",%.17g", (*weights)[static_cast<std::size_t>(r)]);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

} // namespace spill
