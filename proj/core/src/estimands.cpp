#include "pbsae/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "pbsae/csv.hpp"
#include "pbsae/error.hpp"

namespace pbsae {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// K x m matrix of area intercepts and K x p slopes for either layout.
void intercepts_and_slopes(const PseudoPosteriorDraws& draws, Eigen::MatrixXd& b0,
                           Eigen::MatrixXd& beta) {
  const ParamLayout& L = draws.layout;
  const int K = draws.count();
  const int m = L.num_areas();
  const int p = L.num_covariates();
  b0.resize(K, m);
  beta.resize(K, p);
  for (int i = 0; i < m; ++i) {
    if (L.hierarchical())
      b0.col(i) = draws.draws.col(L.beta0()) + draws.draws.col(L.u(i));
    else
      b0.col(i) = draws.draws.col(L.intercept(i));
  }
  for (int k = 0; k < p; ++k) beta.col(k) = draws.draws.col(L.slope(k));
}

}  // namespace

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::hajek: return "hajek";
    case Method::greg: return "greg";
    case Method::unwt: return "unwt";
    case Method::wt: return "wt";
    case Method::wtrscl: return "wtrscl";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "hajek") return Method::hajek;
  if (s == "greg") return Method::greg;
  if (s == "unwt") return Method::unwt;
  if (s == "wt") return Method::wt;
  if (s == "wtrscl") return Method::wtrscl;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

std::vector<Method> parse_method_list(std::string_view list) {
  std::vector<Method> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = list.find(',', start);
    std::string_view tok = list.substr(start, comma == std::string_view::npos ? list.npos : comma - start);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (!tok.empty()) {
      const Method m = parse_method(tok);
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw InvalidArgument("method list is empty");
  return out;
}

AreaFrame AreaFrame::from_units(int m, std::span<const int> area, const Eigen::MatrixXd& covariates,
                                std::vector<std::string> labels) {
  if (m < 1) throw InvalidArgument("AreaFrame: m must be >= 1");
  if (static_cast<Eigen::Index>(area.size()) != covariates.rows())
    throw InvalidArgument("AreaFrame: area and covariate rows differ in length");
  const auto p = covariates.cols();
  AreaFrame f;
  f.pop_size.assign(m, 0.0);
  std::vector<int> count(m, 0);
  for (int a : area) {
    if (a < 0 || a >= m) throw InvalidArgument("AreaFrame: area index out of range");
    ++count[a];
  }
  f.unit_covariates.resize(m);
  for (int i = 0; i < m; ++i) f.unit_covariates[i].resize(count[i], p);
  std::vector<int> fill(m, 0);
  for (std::size_t j = 0; j < area.size(); ++j) {
    const int a = area[j];
    f.unit_covariates[a].row(fill[a]++) = covariates.row(static_cast<Eigen::Index>(j));
  }
  f.covariate_means = Eigen::MatrixXd::Constant(m, p, kNaN);
  for (int i = 0; i < m; ++i) {
    f.pop_size[i] = count[i];
    if (count[i] > 0) f.covariate_means.row(i) = f.unit_covariates[i].colwise().mean();
  }
  if (labels.empty())
    for (int i = 0; i < m; ++i) labels.push_back(std::to_string(i + 1));
  if (static_cast<int>(labels.size()) != m) throw InvalidArgument("AreaFrame: label count differs from m");
  f.labels = std::move(labels);
  return f;
}

AreaFrame AreaFrame::from_population(const FinitePopulation& pop) {
  std::vector<int> area(pop.area.begin(), pop.area.end());
  const Eigen::MatrixXd x = Eigen::VectorXd::Map(pop.x1.data(), static_cast<Eigen::Index>(pop.x1.size()));
  return from_units(pop.m, area, x);
}

Eigen::MatrixXd mu_draws_gaussian(const PseudoPosteriorDraws& draws,
                                  const Eigen::MatrixXd& area_covariate_means) {
  const ParamLayout& L = draws.layout;
  if (area_covariate_means.rows() != L.num_areas() || area_covariate_means.cols() != L.num_covariates())
    throw InvalidArgument("mu_draws_gaussian: area covariate means do not match the draws");
  if (!area_covariate_means.allFinite())
    throw InvalidArgument("mu_draws_gaussian: area covariate means are missing");
  Eigen::MatrixXd b0, beta;
  intercepts_and_slopes(draws, b0, beta);
  return b0 + beta * area_covariate_means.transpose();
}

Eigen::MatrixXd mu_draws_logistic(const PseudoPosteriorDraws& draws, const AreaFrame& frame) {
  const ParamLayout& L = draws.layout;
  const int m = L.num_areas();
  const int p = L.num_covariates();
  if (!frame.has_units() || frame.num_areas() != m)
    throw InvalidArgument("mu_draws_logistic: unit-level frame is missing or has the wrong area count");
  Eigen::MatrixXd b0, beta;
  intercepts_and_slopes(draws, b0, beta);
  const int K = draws.count();
  Eigen::MatrixXd mu(K, m);
  constexpr int kBlock = 128;
  for (int i = 0; i < m; ++i) {
    const Eigen::MatrixXd& X = frame.unit_covariates[i];
    if (X.rows() == 0) throw InvalidArgument("mu_draws_logistic: area " + frame.labels[i] + " has no frame units");
    if (X.cols() != p) throw InvalidArgument("mu_draws_logistic: frame covariate count mismatch");
    const double inv_n = 1.0 / static_cast<double>(X.rows());
    for (int k0 = 0; k0 < K; k0 += kBlock) {
      const int kb = std::min(kBlock, K - k0);
      // eta is N(i) x kb; exp overflow to inf yields expit 0 as required.
      Eigen::ArrayXXd eta = (X * beta.middleRows(k0, kb).transpose()).array();
      eta.rowwise() += b0.col(i).segment(k0, kb).transpose().array();
      const Eigen::ArrayXXd q = 1.0 / (1.0 + (-eta).exp());
      mu.col(i).segment(k0, kb) = (q.colwise().sum() * inv_n).transpose().matrix();
    }
  }
  return mu;
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw InvalidArgument("quantile_sorted: empty input");
  if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidArgument("quantile_sorted: prob outside [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

AreaEstimateTable summarize_draws(const Eigen::MatrixXd& mu_draws, Method method) {
  if (mu_draws.rows() < 2) throw InvalidArgument("summarize_draws: at least 2 draws are required");
  AreaEstimateTable out;
  std::vector<double> col(static_cast<std::size_t>(mu_draws.rows()));
  for (Eigen::Index i = 0; i < mu_draws.cols(); ++i) {
    Eigen::VectorXd::Map(col.data(), mu_draws.rows()) = mu_draws.col(i);
    std::sort(col.begin(), col.end());
    AreaEstimate e;
    e.area = static_cast<int>(i);
    e.method = method;
    e.point = quantile_sorted(col, 0.5);
    e.lo90 = quantile_sorted(col, 0.05);
    e.hi90 = quantile_sorted(col, 0.95);
    e.missing = !(std::isfinite(e.point) && std::isfinite(e.lo90) && std::isfinite(e.hi90));
    out.push_back(e);
  }
  return out;
}

ReplicationMetrics replication_metrics(const AreaEstimateTable& table, const AreaTruths& truths) {
  ReplicationMetrics r;
  double se = 0.0, ae = 0.0, cov = 0.0, len = 0.0;
  for (const AreaEstimate& e : table) {
    if (e.area < 0 || e.area >= static_cast<int>(truths.ybar.size()))
      throw InvalidArgument("replication_metrics: area has no truth");
    if (e.missing || !std::isfinite(e.point)) {
      ++r.excluded_areas;
      continue;
    }
    const double t = truths.ybar[e.area];
    const double d = e.point - t;
    se += d * d;
    ae += std::abs(d);
    cov += (e.lo90 <= t && t <= e.hi90) ? 1.0 : 0.0;
    len += e.hi90 - e.lo90;
    ++r.used_areas;
  }
  if (r.used_areas == 0) throw InvalidArgument("replication_metrics: no usable areas");
  const double n = r.used_areas;
  r.rmse = std::sqrt(se / n);
  r.mae = ae / n;
  r.cov90 = cov / n;
  r.mil90 = len / n;
  return r;
}

MetricsRow compute_metrics(std::span<const AreaEstimateTable> tables,
                           std::span<const AreaTruths> truths, std::string design, Method method) {
  if (tables.size() != truths.size())
    throw InvalidArgument("compute_metrics: tables and truths differ in length");
  if (tables.empty()) throw InvalidArgument("compute_metrics: no replications");
  MetricsRow row;
  row.design = std::move(design);
  row.method = method;
  for (std::size_t r = 0; r < tables.size(); ++r) {
    const ReplicationMetrics rm = replication_metrics(tables[r], truths[r]);
    row.rmse += rm.rmse;
    row.mae += rm.mae;
    row.cov90 += rm.cov90;
    row.mil90 += rm.mil90;
    row.excluded_area_rows += rm.excluded_areas;
  }
  const double R = static_cast<double>(tables.size());
  row.rmse /= R;
  row.mae /= R;
  row.cov90 /= R;
  row.mil90 /= R;
  row.replications = static_cast<int>(tables.size());
  return row;
}

void write_estimates_csv(const AreaEstimateTable& table, std::span<const std::string> labels,
                         std::ostream& out) {
  out << "area,method,point,lo90,hi90,missing\n";
  for (const AreaEstimate& e : table) {
    const std::string label =
        e.area < static_cast<int>(labels.size()) ? labels[e.area] : std::to_string(e.area + 1);
    out << label << ',' << to_string(e.method) << ',' << csv::format_double(e.point) << ','
        << csv::format_double(e.missing ? kNaN : e.lo90) << ','
        << csv::format_double(e.missing ? kNaN : e.hi90) << ',' << (e.missing ? 1 : 0) << '\n';
  }
}

void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out) {
  out << "design,method,rmse_x100,mae_x100,mil_x100,cov90_pct,reps\n";
  for (const MetricsRow& r : rows) {
    out << r.design << ',' << to_string(r.method) << ',' << csv::format_double(100.0 * r.rmse) << ','
        << csv::format_double(100.0 * r.mae) << ',' << csv::format_double(100.0 * r.mil90) << ','
        << csv::format_double(100.0 * r.cov90) << ',' << r.replications << '\n';
  }
}

}  // namespace pbsae
