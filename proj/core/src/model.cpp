#include "pbsae/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "pbsae/error.hpp"

namespace pbsae {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Indices of the linear predictor terms touched by one unit.
struct UnitTerms {
  int intercept;     // beta0_i (fixed) or beta0 (hierarchical)
  int random_effect; // u_i (hierarchical) or -1
};

UnitTerms unit_terms(const ParamLayout& L, int area) {
  if (L.hierarchical()) return {L.beta0(), L.u(area)};
  return {L.intercept(area), -1};
}

void check_inputs(const Eigen::VectorXd& theta, const ParamLayout& L, const DrawnSample& s,
                  std::span<const double> w) {
  if (theta.size() != L.size())
    throw InvalidArgument("parameter vector has length " + std::to_string(theta.size()) +
                          ", layout expects " + std::to_string(L.size()));
  if (s.num_areas != L.num_areas())
    throw InvalidArgument("sample has " + std::to_string(s.num_areas) +
                          " areas, layout expects " + std::to_string(L.num_areas()));
  if (s.num_covariates() != L.num_covariates())
    throw InvalidArgument("sample covariate count does not match the layout");
  if (w.size() != s.size()) throw InvalidArgument("weight vector length does not match sample");
  if (!s.covariates.allFinite()) throw InvalidArgument("non-finite covariate values in sample");
}

double linear_predictor(const Eigen::VectorXd& theta, const ParamLayout& L, const DrawnSample& s,
                        std::size_t j) {
  const auto t = unit_terms(L, s.area[j]);
  double eta = theta[t.intercept];
  if (t.random_effect >= 0) eta += theta[t.random_effect];
  for (int k = 0; k < L.num_covariates(); ++k)
    eta += s.covariates(static_cast<Eigen::Index>(j), k) * theta[L.slope(k)];
  return eta;
}

double log1pexp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Per-unit log density and derivatives with respect to eta and log sigma.
struct UnitDerivs {
  double value;
  double d_eta;
  double d_s;
  double d_eta_eta;
  double d_eta_s;
  double d_s_s;
};

UnitDerivs unit_derivs(Family family, double y, double eta, double log_sigma) {
  if (family == Family::gaussian) {
    const double prec = std::exp(-2.0 * log_sigma);
    const double r = y - eta;
    return {-kHalfLog2Pi - log_sigma - 0.5 * r * r * prec,
            r * prec,
            -1.0 + r * r * prec,
            -prec,
            -2.0 * r * prec,
            -2.0 * r * r * prec};
  }
  const double q = expit(eta);
  return {y * eta - log1pexp(eta), y - q, 0.0, -q * (1.0 - q), 0.0, 0.0};
}

double log_sigma_eps_of(const Eigen::VectorXd& theta, const ParamLayout& L) {
  return L.has_sigma_eps() ? theta[L.log_sigma_eps()] : 0.0;
}

}  // namespace

void PcPrior::validate() const {
  if (!(upper > 0.0)) throw InvalidArgument("PC prior: upper bound must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("PC prior: alpha must lie in (0, 1)");
}

double PcPrior::rate() const {
  validate();
  return -std::log(alpha) / upper;
}

double PcPrior::log_density(double sigma) const {
  if (sigma < 0.0) return -std::numeric_limits<double>::infinity();
  const double lambda = rate();
  return std::log(lambda) - lambda * sigma;
}

double PcPrior::log_density_log_sigma(double log_sigma) const {
  const double lambda = rate();
  return std::log(lambda) - lambda * std::exp(log_sigma) + log_sigma;
}

ParamLayout::ParamLayout(Family family, Parameterization param, int m, int p)
    : family_(family), param_(param), m_(m), p_(p) {
  if (m < 1) throw InvalidArgument("layout: need at least one area");
  if (p < 0) throw InvalidArgument("layout: negative covariate count");
}

int ParamLayout::num_latent() const noexcept { return hierarchical() ? 1 + p_ + m_ : m_ + p_; }

int ParamLayout::size() const noexcept {
  return num_latent() + (hierarchical() ? 1 : 0) + (has_sigma_eps() ? 1 : 0);
}

int ParamLayout::beta0() const {
  if (!hierarchical()) throw InvalidArgument("layout: beta0 exists only in the hierarchical layout");
  return 0;
}

int ParamLayout::intercept(int area) const {
  if (hierarchical()) throw InvalidArgument("layout: area intercepts exist only in the fixed layout");
  if (area < 0 || area >= m_) throw InvalidArgument("layout: area index out of range");
  return area;
}

int ParamLayout::slope(int k) const {
  if (k < 0 || k >= p_) throw InvalidArgument("layout: covariate index out of range");
  return hierarchical() ? 1 + k : m_ + k;
}

int ParamLayout::u(int area) const {
  if (!hierarchical()) throw InvalidArgument("layout: u exists only in the hierarchical layout");
  if (area < 0 || area >= m_) throw InvalidArgument("layout: area index out of range");
  return 1 + p_ + area;
}

int ParamLayout::log_sigma_u() const {
  if (!hierarchical()) throw InvalidArgument("layout: sigma_u exists only in the hierarchical layout");
  return 1 + p_ + m_;
}

int ParamLayout::log_sigma_eps() const {
  if (!has_sigma_eps()) throw InvalidArgument("layout: the logit family has no sigma_eps");
  return size() - 1;
}

ParamLayout layout_for(const ModelSpec& spec, int m, int p) {
  return ParamLayout(spec.family, spec.parameterization, m, p);
}

double log_pseudo_likelihood(const Eigen::VectorXd& theta, const ParamLayout& L,
                             const DrawnSample& s, std::span<const double> w) {
  check_inputs(theta, L, s, w);
  const double ls = log_sigma_eps_of(theta, L);
  double total = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double eta = linear_predictor(theta, L, s, j);
    total += w[j] * unit_derivs(L.family(), s.y[j], eta, ls).value;
  }
  return total;
}

double log_pseudo_likelihood(const Eigen::VectorXd& theta, const ParamLayout& L,
                             const DrawnSample& s) {
  return log_pseudo_likelihood(theta, L, s, s.w_norm);
}

double log_pseudo_posterior(const Eigen::VectorXd& theta, const ModelSpec& spec,
                            const ParamLayout& L, const DrawnSample& s,
                            std::span<const double> w) {
  if (!L.hierarchical())
    throw InvalidArgument("log_pseudo_posterior: requires the hierarchical layout");
  double lp = log_pseudo_likelihood(theta, L, s, w);
  const double ls_u = theta[L.log_sigma_u()];
  const double inv_var = std::exp(-2.0 * ls_u);
  for (int i = 0; i < L.num_areas(); ++i) {
    const double u = theta[L.u(i)];
    lp += -kHalfLog2Pi - ls_u - 0.5 * u * u * inv_var;
  }
  lp += spec.prior.sd_u.log_density_log_sigma(ls_u);
  if (L.has_sigma_eps()) lp += spec.prior.sd_eps.log_density_log_sigma(theta[L.log_sigma_eps()]);
  return lp;
}

double log_pseudo_posterior(const Eigen::VectorXd& theta, const ModelSpec& spec,
                            const ParamLayout& L, const DrawnSample& s) {
  return log_pseudo_posterior(theta, spec, L, s, s.w_norm);
}

Eigen::MatrixXd unit_scores(const Eigen::VectorXd& theta, const ParamLayout& L,
                            const DrawnSample& s) {
  const std::vector<double> ones(s.size(), 1.0);
  check_inputs(theta, L, s, ones);
  const double ls = log_sigma_eps_of(theta, L);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.size()), L.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    const double eta = linear_predictor(theta, L, s, j);
    const auto d = unit_derivs(L.family(), s.y[j], eta, ls);
    const auto t = unit_terms(L, s.area[j]);
    out(row, t.intercept) += d.d_eta;
    if (t.random_effect >= 0) out(row, t.random_effect) += d.d_eta;
    for (int k = 0; k < L.num_covariates(); ++k) out(row, L.slope(k)) += d.d_eta * s.covariates(row, k);
    if (L.has_sigma_eps()) out(row, L.log_sigma_eps()) += d.d_s;
  }
  return out;
}

Eigen::VectorXd weighted_score(const Eigen::VectorXd& theta, const ParamLayout& L,
                               const DrawnSample& s, std::span<const double> w) {
  check_inputs(theta, L, s, w);
  const double ls = log_sigma_eps_of(theta, L);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(L.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    const double eta = linear_predictor(theta, L, s, j);
    const auto d = unit_derivs(L.family(), s.y[j], eta, ls);
    const auto t = unit_terms(L, s.area[j]);
    const double ge = w[j] * d.d_eta;
    g[t.intercept] += ge;
    if (t.random_effect >= 0) g[t.random_effect] += ge;
    for (int k = 0; k < L.num_covariates(); ++k) g[L.slope(k)] += ge * s.covariates(row, k);
    if (L.has_sigma_eps()) g[L.log_sigma_eps()] += w[j] * d.d_s;
  }
  return g;
}

Eigen::VectorXd weighted_score(const Eigen::VectorXd& theta, const ParamLayout& L,
                               const DrawnSample& s) {
  return weighted_score(theta, L, s, s.w_norm);
}

Eigen::MatrixXd weighted_hessian(const Eigen::VectorXd& theta, const ParamLayout& L,
                                 const DrawnSample& s, std::span<const double> w) {
  check_inputs(theta, L, s, w);
  const double ls = log_sigma_eps_of(theta, L);
  const int p = L.num_covariates();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(L.size(), L.size());
  std::vector<int> idx;
  std::vector<double> grad;
  idx.reserve(static_cast<std::size_t>(p) + 2);
  grad.reserve(static_cast<std::size_t>(p) + 2);
  const int s_idx = L.has_sigma_eps() ? L.log_sigma_eps() : -1;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    const double eta = linear_predictor(theta, L, s, j);
    const auto d = unit_derivs(L.family(), s.y[j], eta, ls);
    const auto t = unit_terms(L, s.area[j]);
    idx.clear();
    grad.clear();
    idx.push_back(t.intercept);
    grad.push_back(1.0);
    if (t.random_effect >= 0) {
      idx.push_back(t.random_effect);
      grad.push_back(1.0);
    }
    for (int k = 0; k < p; ++k) {
      idx.push_back(L.slope(k));
      grad.push_back(s.covariates(row, k));
    }
    const double wj = w[j];
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = 0; b < idx.size(); ++b)
        H(idx[a], idx[b]) += wj * d.d_eta_eta * grad[a] * grad[b];
      if (s_idx >= 0) {
        H(idx[a], s_idx) += wj * d.d_eta_s * grad[a];
        H(s_idx, idx[a]) += wj * d.d_eta_s * grad[a];
      }
    }
    if (s_idx >= 0) H(s_idx, s_idx) += wj * d.d_s_s;
  }
  return H;
}

Eigen::MatrixXd weighted_hessian(const Eigen::VectorXd& theta, const ParamLayout& L,
                                 const DrawnSample& s) {
  return weighted_hessian(theta, L, s, s.w_norm);
}

}  // namespace pbsae
