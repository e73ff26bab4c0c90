#include "pbsae/direct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include <Eigen/Cholesky>

#include "pbsae/error.hpp"

namespace pbsae {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// With-replacement PSU variance of sum_j z_j over the listed units, with strata
// as given and a finite population correction 1 - n_h / sum_h w_raw. Returns
// NaN when a stratum holds a single PSU.
double psu_variance(const DrawnSample& s, const std::vector<std::size_t>& units,
                    const std::vector<double>& z) {
  struct Stratum {
    std::map<int, double> psu_total;
    double units = 0.0;
    double weight = 0.0;
  };
  std::map<int, Stratum> strata;
  for (std::size_t k = 0; k < units.size(); ++k) {
    const std::size_t j = units[k];
    Stratum& st = strata[s.stratum[j]];
    st.psu_total[s.psu[j]] += z[k];
    st.units += 1.0;
    st.weight += s.w_raw[j];
  }
  double var = 0.0;
  for (const auto& [h, st] : strata) {
    const auto nh = static_cast<double>(st.psu_total.size());
    if (nh < 2.0) return kNaN;
    double mean = 0.0;
    for (const auto& [c, t] : st.psu_total) mean += t;
    mean /= nh;
    double ss = 0.0;
    for (const auto& [c, t] : st.psu_total) ss += (t - mean) * (t - mean);
    const double fpc = st.weight > 0.0 ? std::clamp(1.0 - st.units / st.weight, 0.0, 1.0) : 1.0;
    var += fpc * nh / (nh - 1.0) * ss;
  }
  return var;
}

std::vector<std::vector<std::size_t>> units_by_area(const DrawnSample& s) {
  std::vector<std::vector<std::size_t>> out(s.num_areas);
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s.area[j] < 0 || s.area[j] >= s.num_areas) throw InvalidArgument("direct: area index out of range");
    out[s.area[j]].push_back(j);
  }
  return out;
}

void set_interval(DirectEstimate& e, double var) {
  if (!std::isfinite(var)) {
    e.se = kNaN;
    e.lo90 = e.hi90 = kNaN;
    e.interval_missing = true;
    return;
  }
  e.se = std::sqrt(std::max(var, 0.0));
  e.lo90 = e.point - kZ90 * e.se;
  e.hi90 = e.point + kZ90 * e.se;
}

DirectEstimate missing_estimate(int area, Method method) {
  DirectEstimate e;
  e.area = area;
  e.method = method;
  e.point = e.se = e.lo90 = e.hi90 = kNaN;
  e.point_missing = e.interval_missing = true;
  return e;
}

}  // namespace

std::vector<DirectEstimate> hajek_by_area(const DrawnSample& s, bool binary) {
  const auto groups = units_by_area(s);
  std::vector<DirectEstimate> out;
  for (int i = 0; i < s.num_areas; ++i) {
    const auto& units = groups[i];
    if (units.empty()) {
      out.push_back(missing_estimate(i, Method::hajek));
      continue;
    }
    double sw = 0.0, swy = 0.0;
    for (std::size_t j : units) {
      sw += s.w_raw[j];
      swy += s.w_raw[j] * s.y[j];
    }
    DirectEstimate e;
    e.area = i;
    e.method = Method::hajek;
    e.point = swy / sw;
    if (binary && (e.point == 0.0 || e.point == 1.0)) {
      set_interval(e, kNaN);
      out.push_back(e);
      continue;
    }
    std::vector<double> z(units.size());
    for (std::size_t k = 0; k < units.size(); ++k) {
      const std::size_t j = units[k];
      z[k] = s.w_raw[j] * (s.y[j] - e.point) / sw;
    }
    set_interval(e, psu_variance(s, units, z));
    out.push_back(e);
  }
  return out;
}

std::vector<DirectEstimate> greg_by_area(const DrawnSample& s, const AreaFrame& frame) {
  const int m = s.num_areas;
  const int p = s.num_covariates();
  if (frame.num_areas() != m) throw InvalidArgument("greg_by_area: frame area count differs from sample");
  if (frame.covariate_means.rows() != m || frame.covariate_means.cols() != p)
    throw InvalidArgument("greg_by_area: frame covariate means do not match the sample covariates");
  const auto groups = units_by_area(s);

  std::vector<int> column(m, -1);
  int ncol = 0;
  for (int i = 0; i < m; ++i)
    if (!groups[i].empty()) column[i] = ncol++;
  const int d = ncol + p;
  Eigen::MatrixXd XtWX = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd XtWy = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd xr(d);
  for (std::size_t j = 0; j < s.size(); ++j) {
    xr.setZero();
    xr[column[s.area[j]]] = 1.0;
    for (int k = 0; k < p; ++k) xr[ncol + k] = s.covariates(static_cast<Eigen::Index>(j), k);
    XtWX.selfadjointView<Eigen::Lower>().rankUpdate(xr, s.w_raw[j]);
    XtWy += s.w_raw[j] * s.y[j] * xr;
  }
  XtWX = XtWX.selfadjointView<Eigen::Lower>();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(XtWX);
  const double scale = XtWX.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-12 * scale)
    throw InvalidArgument("greg_by_area: collinear working design");
  const Eigen::VectorXd coef = ldlt.solve(XtWy);
  const Eigen::VectorXd beta = coef.tail(p);

  std::vector<DirectEstimate> out;
  for (int i = 0; i < m; ++i) {
    const auto& units = groups[i];
    if (units.empty()) {
      out.push_back(missing_estimate(i, Method::greg));
      continue;
    }
    const double Ni = frame.pop_size[i];
    if (!(Ni > 0.0) || !frame.covariate_means.row(i).allFinite())
      throw InvalidArgument("greg_by_area: frame lacks size or covariate means for area " +
                            std::to_string(i + 1));
    const double synthetic = coef[column[i]] + frame.covariate_means.row(i).dot(beta);
    std::vector<double> z(units.size());
    double correction = 0.0;
    for (std::size_t k = 0; k < units.size(); ++k) {
      const std::size_t j = units[k];
      double fit = coef[column[i]];
      for (int c = 0; c < p; ++c) fit += s.covariates(static_cast<Eigen::Index>(j), c) * beta[c];
      z[k] = s.w_raw[j] * (s.y[j] - fit) / Ni;
      correction += z[k];
    }
    DirectEstimate e;
    e.area = i;
    e.method = Method::greg;
    e.point = synthetic + correction;
    set_interval(e, psu_variance(s, units, z));
    out.push_back(e);
  }
  return out;
}

AreaEstimateTable to_table(const std::vector<DirectEstimate>& estimates) {
  AreaEstimateTable t;
  t.reserve(estimates.size());
  for (const DirectEstimate& d : estimates) {
    AreaEstimate e;
    e.area = d.area;
    e.method = d.method;
    e.point = d.point;
    e.lo90 = d.lo90;
    e.hi90 = d.hi90;
    e.missing = d.point_missing || d.interval_missing;
    t.push_back(e);
  }
  return t;
}

}  // namespace pbsae
