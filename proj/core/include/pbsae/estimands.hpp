#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pbsae/inference.hpp"
#include "pbsae/popgen.hpp"

namespace pbsae {

enum class Method { hajek, greg, unwt, wt, wtrscl };

const char* to_string(Method m) noexcept;
Method parse_method(std::string_view name);
std::vector<Method> parse_method_list(std::string_view list);  // comma separated

// Census-level covariate information per area. Unit-level covariates are
// needed for the logistic estimand; the gaussian estimand and GREG only need
// sizes and means.
struct AreaFrame {
  std::vector<std::string> labels;
  std::vector<double> pop_size;          // N(i)
  Eigen::MatrixXd covariate_means;       // m x p
  std::vector<Eigen::MatrixXd> unit_covariates;  // per area N(i) x p, or empty

  int num_areas() const noexcept { return static_cast<int>(pop_size.size()); }
  bool has_units() const noexcept { return !unit_covariates.empty(); }

  // Groups rows of `covariates` by `area` (0-based, < m).
  static AreaFrame from_units(int m, std::span<const int> area, const Eigen::MatrixXd& covariates,
                              std::vector<std::string> labels = {});
  static AreaFrame from_population(const FinitePopulation& pop);
};

struct AreaEstimate {
  int area = 0;
  Method method = Method::hajek;
  double point = 0.0;  // NaN when unavailable
  double lo90 = 0.0;
  double hi90 = 0.0;
  bool missing = false;  // interval (and possibly point) unavailable
};

using AreaEstimateTable = std::vector<AreaEstimate>;

// mu_i = beta0_i + xbar_i' beta for each draw; K x m.
Eigen::MatrixXd mu_draws_gaussian(const PseudoPosteriorDraws& draws,
                                  const Eigen::MatrixXd& area_covariate_means);

// mu_i = mean over the area's units of expit(beta0_i + x_ij' beta); K x m.
Eigen::MatrixXd mu_draws_logistic(const PseudoPosteriorDraws& draws, const AreaFrame& frame);

// Quantile with linear interpolation between order statistics (R type 7).
double quantile_sorted(std::span<const double> sorted, double prob);

// Median and equal-tailed 90% interval per column of `mu_draws` (K x m).
AreaEstimateTable summarize_draws(const Eigen::MatrixXd& mu_draws, Method method);

struct ReplicationMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double cov90 = 0.0;
  double mil90 = 0.0;
  int used_areas = 0;
  int excluded_areas = 0;
};

// Metrics over areas for one replication and one method. Rows flagged missing
// are excluded from all four metrics. Endpoints count as covered. Throws when
// no area is usable.
ReplicationMetrics replication_metrics(const AreaEstimateTable& table, const AreaTruths& truths);

struct MetricsRow {
  std::string design;
  Method method = Method::hajek;
  double rmse = 0.0;
  double mae = 0.0;
  double mil90 = 0.0;
  double cov90 = 0.0;
  int replications = 0;
  long excluded_area_rows = 0;
};

// Per-replication metrics averaged across replications. `tables[r]` holds one
// method's rows for replication r.
MetricsRow compute_metrics(std::span<const AreaEstimateTable> tables,
                           std::span<const AreaTruths> truths, std::string design, Method method);

// area, method, point, lo90, hi90, missing
void write_estimates_csv(const AreaEstimateTable& table, std::span<const std::string> labels,
                         std::ostream& out);
// design, method, rmse_x100, mae_x100, mil_x100, cov90_pct, reps
void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out);

}  // namespace pbsae
