#include "pbsae/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "pbsae/error.hpp"

namespace pbsae {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

void check_weights(const DrawnSample& s, std::span<const double> w) {
  if (w.size() != s.size()) throw InvalidArgument("weight vector length does not match sample");
  for (double x : w)
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidArgument("weights must be finite and >= 0");
}

ParamLayout hierarchical_layout(const ModelSpec& spec, const DrawnSample& s) {
  return ParamLayout(spec.family, Parameterization::hierarchical, s.num_areas, s.num_covariates());
}

Eigen::VectorXd full_theta(const ParamLayout& L, const Eigen::VectorXd& latent, double ls_u,
                           double ls_e) {
  Eigen::VectorXd theta(L.size());
  theta.head(L.num_latent()) = latent;
  theta[L.log_sigma_u()] = ls_u;
  if (L.has_sigma_eps()) theta[L.log_sigma_eps()] = ls_e;
  return theta;
}

// Data-driven starting values for (log sigma_u, log sigma_eps).
std::pair<double, double> initial_hypers(const DrawnSample& s, std::span<const double> w,
                                         Family family) {
  const int m = s.num_areas;
  std::vector<double> sw(m, 0.0), swy(m, 0.0);
  for (std::size_t j = 0; j < s.size(); ++j) {
    sw[s.area[j]] += w[j];
    swy[s.area[j]] += w[j] * s.y[j];
  }
  std::vector<double> means;
  for (int i = 0; i < m; ++i)
    if (sw[i] > 0.0) means.push_back(swy[i] / sw[i]);
  double ls_u = std::log(0.5);
  double ls_e = 0.0;
  if (family == Family::gaussian) {
    double ss = 0.0, tw = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const int a = s.area[j];
      const double r = s.y[j] - swy[a] / sw[a];
      ss += w[j] * r * r;
      tw += w[j];
    }
    const double v = tw > 0.0 ? ss / tw : 1.0;
    ls_e = 0.5 * std::log(std::max(v, 1e-8));
    if (means.size() >= 2) {
      const double mu = std::accumulate(means.begin(), means.end(), 0.0) / means.size();
      double vm = 0.0;
      for (double x : means) vm += (x - mu) * (x - mu);
      vm /= static_cast<double>(means.size() - 1);
      ls_u = 0.5 * std::log(std::max(vm, 1e-4));
    }
  }
  return {ls_u, ls_e};
}

// Objective over the free hyperparameters (negative Laplace log marginal).
class HyperObjective {
 public:
  HyperObjective(const DrawnSample& s, std::span<const double> w, const ModelSpec& spec,
                 const FitOptions& opts, double ls_u0, double ls_e0)
      : s_(s), w_(w), spec_(spec), opts_(opts), base_u_(ls_u0), base_e_(ls_e0) {
    if (!opts.fixed_log_sigma_u) free_.push_back(0);
    if (spec.family == Family::gaussian && !opts.fixed_log_sigma_eps) free_.push_back(1);
    if (opts.fixed_log_sigma_u) base_u_ = *opts.fixed_log_sigma_u;
    if (opts.fixed_log_sigma_eps) base_e_ = *opts.fixed_log_sigma_eps;
    if (spec.family != Family::gaussian) base_e_ = kNaN;
  }

  int dim() const { return static_cast<int>(free_.size()); }

  Eigen::VectorXd start() const {
    Eigen::VectorXd x(dim());
    for (int k = 0; k < dim(); ++k) x[k] = free_[k] == 0 ? base_u_ : base_e_;
    return x;
  }

  std::pair<double, double> hypers(const Eigen::VectorXd& x) const {
    double u = base_u_, e = base_e_;
    for (int k = 0; k < dim(); ++k) (free_[k] == 0 ? u : e) = x[k];
    return {u, e};
  }

  ConditionalMode mode_at(const Eigen::VectorXd& x) {
    const auto [u, e] = hypers(x);
    ConditionalMode cm =
        conditional_mode(s_, w_, spec_, u, e, opts_, warm_.size() ? &warm_ : nullptr);
    if (cm.latent.allFinite()) warm_ = cm.latent;
    return cm;
  }

  double value(const Eigen::VectorXd& x) {
    const auto cm = mode_at(x);
    return std::isfinite(cm.log_marginal) ? -cm.log_marginal
                                          : std::numeric_limits<double>::infinity();
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x, double step = 1e-5) {
    Eigen::VectorXd g(dim());
    for (int k = 0; k < dim(); ++k) {
      Eigen::VectorXd a = x, b = x;
      a[k] += step;
      b[k] -= step;
      g[k] = (value(a) - value(b)) / (2.0 * step);
    }
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& x, double step = 1e-3) {
    const int d = dim();
    Eigen::MatrixXd H(d, d);
    const double f0 = value(x);
    for (int a = 0; a < d; ++a) {
      Eigen::VectorXd p = x, q = x;
      p[a] += step;
      q[a] -= step;
      H(a, a) = (value(p) - 2.0 * f0 + value(q)) / (step * step);
      for (int b = a + 1; b < d; ++b) {
        Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
        pp[a] += step; pp[b] += step;
        pm[a] += step; pm[b] -= step;
        mp[a] -= step; mp[b] += step;
        mm[a] -= step; mm[b] -= step;
        H(a, b) = H(b, a) = (value(pp) - value(pm) - value(mp) + value(mm)) / (4.0 * step * step);
      }
    }
    return H;
  }

 private:
  const DrawnSample& s_;
  std::span<const double> w_;
  const ModelSpec& spec_;
  const FitOptions& opts_;
  std::vector<int> free_;
  double base_u_;
  double base_e_;
  Eigen::VectorXd warm_;
};

// Areas whose fixed intercept cannot be estimated from the sample.
std::vector<int> unestimable_areas(const DrawnSample& s, std::span<const double> w, Family family) {
  const int m = s.num_areas;
  std::vector<double> sw(m, 0.0), swy(m, 0.0);
  std::vector<int> count(m, 0);
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (w[j] <= 0.0) continue;
    ++count[s.area[j]];
    sw[s.area[j]] += w[j];
    swy[s.area[j]] += w[j] * s.y[j];
  }
  std::vector<int> out;
  for (int i = 0; i < m; ++i) {
    if (count[i] == 0) {
      out.push_back(i);
    } else if (family == Family::bernoulli_logit) {
      bool all0 = true, all1 = true;
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (s.area[j] != i || w[j] <= 0.0) continue;
        if (s.y[j] != 0.0) all0 = false;
        if (s.y[j] != 1.0) all1 = false;
      }
      if (all0 || all1) out.push_back(i);
    }
  }
  return out;
}

}  // namespace

ConditionalMode conditional_mode(const DrawnSample& s, std::span<const double> w,
                                 const ModelSpec& spec, double ls_u, double ls_e,
                                 const FitOptions& opts, const Eigen::VectorXd* start) {
  check_weights(s, w);
  const ParamLayout L = hierarchical_layout(spec, s);
  const int d = L.num_latent();
  const int m = L.num_areas();
  const double prec_u = std::exp(-2.0 * ls_u);

  Eigen::VectorXd x = (start && start->size() == d) ? *start : Eigen::VectorXd::Zero(d);
  if (!start || start->size() != d) {
    // Start beta0 at the weighted mean response (on the link scale for logit).
    double sw = 0.0, swy = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      sw += w[j];
      swy += w[j] * s.y[j];
    }
    double ybar = sw > 0.0 ? swy / sw : 0.0;
    if (spec.family == Family::bernoulli_logit) {
      ybar = std::clamp(ybar, 0.01, 0.99);
      ybar = std::log(ybar / (1.0 - ybar));
    }
    x[L.beta0()] = ybar;
  }

  auto log_joint = [&](const Eigen::VectorXd& lat) {
    return log_pseudo_posterior(full_theta(L, lat, ls_u, ls_e), spec, L, s, w);
  };
  auto grad_and_prec = [&](const Eigen::VectorXd& lat, Eigen::VectorXd& g, Eigen::MatrixXd& Q) {
    const Eigen::VectorXd theta = full_theta(L, lat, ls_u, ls_e);
    g = weighted_score(theta, L, s, w).head(d);
    Q = -weighted_hessian(theta, L, s, w).topLeftCorner(d, d);
    for (int i = 0; i < m; ++i) {
      g[L.u(i)] -= lat[L.u(i)] * prec_u;
      Q(L.u(i), L.u(i)) += prec_u;
    }
  };

  ConditionalMode cm;
  Eigen::VectorXd g;
  Eigen::MatrixXd Q;
  double f = log_joint(x);
  grad_and_prec(x, g, Q);
  int it = 0;
  for (; it < opts.max_inner_iterations && inf_norm(g) >= opts.inner_tolerance; ++it) {
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = llt.solve(g);
    double t = 1.0;
    Eigen::VectorXd xn = x + step;
    double fn = log_joint(xn);
    // The gaussian log joint is quadratic, so the full step is exact.
    if (spec.family != Family::gaussian) {
      for (int h = 0; h < 40 && !(fn >= f - 1e-12 * std::abs(f)); ++h) {
        t *= 0.5;
        xn = x + t * step;
        fn = log_joint(xn);
      }
    }
    const double moved = inf_norm(xn - x);
    x = std::move(xn);
    f = fn;
    grad_and_prec(x, g, Q);
    if (moved <= 1e-15 * (1.0 + inf_norm(x))) {
      ++it;
      break;
    }
  }

  cm.latent = x;
  cm.precision = Q;
  cm.log_joint = f;
  cm.iterations = it;
  cm.gradient_norm = inf_norm(g);
  Eigen::LLT<Eigen::MatrixXd> llt(Q);
  if (llt.info() != Eigen::Success || !std::isfinite(f)) {
    cm.log_marginal = -std::numeric_limits<double>::infinity();
    return cm;
  }
  const Eigen::MatrixXd Lc = llt.matrixL();
  const double log_det = 2.0 * Lc.diagonal().array().log().sum();
  cm.log_marginal = f + d * kHalfLog2Pi - 0.5 * log_det;
  return cm;
}

FitResult fit_pseudo_map(const DrawnSample& s, std::span<const double> w, const ModelSpec& spec,
                         const FitOptions& opts) {
  check_weights(s, w);
  if (s.size() == 0) throw InvalidArgument("fit_pseudo_map: empty sample");
  const ParamLayout L = hierarchical_layout(spec, s);
  const auto [u0, e0] = initial_hypers(s, w, spec.family);
  HyperObjective obj(s, w, spec, opts, u0, e0);

  FitResult r{.layout = L};
  Eigen::VectorXd x = obj.start();
  const int dh = obj.dim();
  int iter = 0;
  bool converged = dh == 0;
  double gnorm = 0.0;

  if (dh > 0) {
    double f = obj.value(x);
    if (!std::isfinite(f)) throw NumericalError("fit_pseudo_map: non-finite objective at start");
    Eigen::VectorXd g = obj.gradient(x);
    Eigen::MatrixXd Binv = Eigen::MatrixXd::Identity(dh, dh);
    {
      const Eigen::MatrixXd H0 = obj.hessian(x);
      Eigen::LLT<Eigen::MatrixXd> llt(H0);
      if (llt.info() == Eigen::Success) Binv = llt.solve(Eigen::MatrixXd::Identity(dh, dh));
    }
    for (; iter < opts.max_outer_iterations; ++iter) {
      gnorm = inf_norm(g);
      if (gnorm < opts.outer_tolerance) {
        converged = true;
        break;
      }
      Eigen::VectorXd dir = -Binv * g;
      if (g.dot(dir) >= 0.0) {
        Binv.setIdentity();
        dir = -g;
      }
      const double cap = 1.0;
      if (inf_norm(dir) > cap) dir *= cap / inf_norm(dir);
      double t = 1.0;
      double fn = obj.value(x + dir);
      const double slope = g.dot(dir);
      int halvings = 0;
      while (!(fn <= f + 1e-4 * t * slope) && halvings < 40) {
        t *= 0.5;
        fn = obj.value(x + t * dir);
        ++halvings;
      }
      if (!(fn <= f + 1e-4 * t * slope)) {
        // The predicted decrease is below the rounding level of the objective.
        // Finish with Newton steps accepted on a smaller gradient norm.
        for (int polish = 0; polish < 10 && gnorm >= opts.outer_tolerance; ++polish) {
          Eigen::LLT<Eigen::MatrixXd> llt(obj.hessian(x));
          if (llt.info() != Eigen::Success) break;
          const Eigen::VectorXd xn = x - llt.solve(g);
          const Eigen::VectorXd gn = obj.gradient(xn);
          if (!(inf_norm(gn) < gnorm)) break;
          x = xn;
          g = gn;
          gnorm = inf_norm(g);
          ++iter;
        }
        break;
      }
      const Eigen::VectorXd sstep = t * dir;
      x += sstep;
      f = fn;
      const Eigen::VectorXd gn = obj.gradient(x);
      const Eigen::VectorXd y = gn - g;
      const double sy = sstep.dot(y);
      if (sy > 1e-12) {
        const double rho = 1.0 / sy;
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dh, dh);
        Binv = (I - rho * sstep * y.transpose()) * Binv * (I - rho * y * sstep.transpose()) +
               rho * sstep * sstep.transpose();
      }
      g = gn;
    }
    gnorm = inf_norm(g);
    if (gnorm < opts.outer_tolerance) converged = true;
    r.hyper_curvature = obj.hessian(x);
  }

  const auto [ls_u, ls_e] = obj.hypers(x);
  const ConditionalMode cm = obj.mode_at(x);
  r.mode = full_theta(L, cm.latent, ls_u, ls_e);
  r.hyper_mode = Eigen::Vector2d(ls_u, ls_e);
  r.curvature = cm.precision;
  r.latent_gradient_norm = cm.gradient_norm;
  r.gradient_norm = gnorm;
  r.iterations = iter;
  r.converged = converged && cm.gradient_norm < std::max(opts.inner_tolerance, 1e-8) * 100.0;
  if (dh == 0) r.hyper_curvature.resize(0, 0);
  return r;
}

FitResult fit_pseudo_mle_fixed(const DrawnSample& s, std::span<const double> w,
                               const ModelSpec& spec, std::span<const double> fallback,
                               const FitOptions& opts) {
  check_weights(s, w);
  const int m = s.num_areas;
  const int p = s.num_covariates();
  const ParamLayout L(spec.family, Parameterization::fixed_intercepts, m, p);
  FitResult r{.layout = L};
  r.flagged_areas = unestimable_areas(s, w, spec.family);
  if (!r.flagged_areas.empty() && static_cast<int>(fallback.size()) != m) {
    throw InvalidArgument("fit_pseudo_mle_fixed: area " + std::to_string(r.flagged_areas.front() + 1) +
                          " has no sampled units or is perfectly separated and no fallback "
                          "intercepts were supplied");
  }
  std::vector<char> active(L.size(), 1);
  for (int a : r.flagged_areas) active[L.intercept(a)] = 0;
  std::vector<int> act;
  for (int k = 0; k < L.size(); ++k)
    if (active[k]) act.push_back(k);
  const int da = static_cast<int>(act.size());

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(L.size());
  for (int a : r.flagged_areas) theta[L.intercept(a)] = fallback[a];

  // Starting values: weighted least squares on the linear predictor columns.
  {
    const int nl = m + p;
    Eigen::MatrixXd XtWX = Eigen::MatrixXd::Zero(nl, nl);
    Eigen::VectorXd XtWy = Eigen::VectorXd::Zero(nl);
    std::vector<double> sw(m, 0.0), swy(m, 0.0);
    for (std::size_t j = 0; j < s.size(); ++j) {
      sw[s.area[j]] += w[j];
      swy[s.area[j]] += w[j] * s.y[j];
    }
    for (std::size_t j = 0; j < s.size(); ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      const int a = s.area[j];
      double target = s.y[j];
      if (spec.family == Family::bernoulli_logit) {
        const double pa = std::clamp(sw[a] > 0 ? swy[a] / sw[a] : 0.5, 0.02, 0.98);
        target = std::log(pa / (1.0 - pa));
      }
      Eigen::VectorXd xr = Eigen::VectorXd::Zero(nl);
      xr[a] = 1.0;
      for (int k = 0; k < p; ++k) xr[m + k] = spec.family == Family::gaussian ? s.covariates(row, k) : 0.0;
      XtWX += w[j] * xr * xr.transpose();
      XtWy += w[j] * target * xr;
    }
    std::vector<int> lat_act;
    for (int k = 0; k < nl; ++k)
      if (active[k] && (spec.family == Family::gaussian || k < m)) lat_act.push_back(k);
    Eigen::VectorXd offset_rhs = XtWy;
    for (int a : r.flagged_areas) offset_rhs -= XtWX.col(a) * theta[a];
    const int k = static_cast<int>(lat_act.size());
    Eigen::MatrixXd A(k, k);
    Eigen::VectorXd b(k);
    for (int i = 0; i < k; ++i) {
      b[i] = offset_rhs[lat_act[i]];
      for (int jj = 0; jj < k; ++jj) A(i, jj) = XtWX(lat_act[i], lat_act[jj]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() == Eigen::Success) {
      const Eigen::VectorXd sol = ldlt.solve(b);
      if (sol.allFinite())
        for (int i = 0; i < k; ++i) theta[lat_act[i]] = sol[i];
    }
    if (L.has_sigma_eps()) {
      double ss = 0.0, tw = 0.0;
      for (std::size_t j = 0; j < s.size(); ++j) {
        const auto row = static_cast<Eigen::Index>(j);
        double eta = theta[L.intercept(s.area[j])];
        for (int c = 0; c < p; ++c) eta += s.covariates(row, c) * theta[L.slope(c)];
        ss += w[j] * (s.y[j] - eta) * (s.y[j] - eta);
        tw += w[j];
      }
      theta[L.log_sigma_eps()] = 0.5 * std::log(std::max(ss / tw, 1e-300));
    }
  }

  auto restrict_vec = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out(da);
    for (int i = 0; i < da; ++i) out[i] = v[act[i]];
    return out;
  };
  auto restrict_mat = [&](const Eigen::MatrixXd& M) {
    Eigen::MatrixXd out(da, da);
    for (int i = 0; i < da; ++i)
      for (int j = 0; j < da; ++j) out(i, j) = M(act[i], act[j]);
    return out;
  };

  const double grad_tol = 1e-9;
  double f = log_pseudo_likelihood(theta, L, s, w);
  Eigen::VectorXd g = restrict_vec(weighted_score(theta, L, s, w));
  int it = 0;
  for (; it < opts.max_inner_iterations && inf_norm(g) >= grad_tol; ++it) {
    const Eigen::MatrixXd negH = -restrict_mat(weighted_hessian(theta, L, s, w));
    Eigen::LLT<Eigen::MatrixXd> llt(negH);
    Eigen::VectorXd step = llt.info() == Eigen::Success ? Eigen::VectorXd(llt.solve(g))
                                                       : Eigen::VectorXd(g * 1e-3);
    double t = 1.0;
    Eigen::VectorXd cand = theta;
    double fn = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 50; ++h) {
      cand = theta;
      for (int i = 0; i < da; ++i) cand[act[i]] += t * step[i];
      fn = log_pseudo_likelihood(cand, L, s, w);
      if (std::isfinite(fn) && fn >= f - 1e-12 * std::abs(f)) break;
      t *= 0.5;
    }
    if (!(std::isfinite(fn) && fn >= f - 1e-12 * std::abs(f))) break;
    const double moved = t * inf_norm(step);
    theta = cand;
    f = fn;
    g = restrict_vec(weighted_score(theta, L, s, w));
    if (moved <= 1e-15 * (1.0 + inf_norm(theta))) {
      ++it;
      break;
    }
  }
  r.mode = theta;
  r.curvature = -weighted_hessian(theta, L, s, w);
  r.iterations = it;
  r.gradient_norm = inf_norm(g);
  r.latent_gradient_norm = r.gradient_norm;
  r.converged = r.gradient_norm < 1e-6 && theta.allFinite();
  return r;
}

PseudoPosteriorDraws draw_pseudo_posterior(const DrawnSample& s, std::span<const double> w,
                                           const ModelSpec& spec, const FitResult& fit, int K,
                                           RandomStream& rng, Provenance provenance,
                                           const FitOptions& opts) {
  if (K < 1) throw InvalidArgument("draw_pseudo_posterior: K must be >= 1");
  if (!fit.layout.hierarchical())
    throw InvalidArgument("draw_pseudo_posterior: needs a hierarchical fit");
  check_weights(s, w);
  const ParamLayout& L = fit.layout;
  const int d = L.num_latent();

  // Hyperparameter grid in standardized coordinates of the Laplace marginal.
  std::vector<int> free;
  if (!opts.fixed_log_sigma_u) free.push_back(0);
  if (spec.family == Family::gaussian && !opts.fixed_log_sigma_eps) free.push_back(1);
  const int dh = static_cast<int>(free.size());
  if (dh > 0 && fit.hyper_curvature.rows() != dh)
    throw InvalidArgument("draw_pseudo_posterior: fit and options disagree on free hyperparameters");

  std::vector<Eigen::Vector2d> grid;
  if (dh == 0) {
    grid.push_back(fit.hyper_mode);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.hyper_curvature);
    Eigen::VectorXd ev = es.eigenvalues();
    for (int k = 0; k < dh; ++k) ev[k] = ev[k] > 1e-8 ? ev[k] : 1e-8;
    const Eigen::MatrixXd scale = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal();
    const int gp = std::max(1, opts.grid_points);
    std::vector<double> z(gp);
    for (int k = 0; k < gp; ++k)
      z[k] = gp == 1 ? 0.0 : -opts.grid_half_width + 2.0 * opts.grid_half_width * k / (gp - 1);
    const int total = dh == 1 ? gp : gp * gp;
    for (int t = 0; t < total; ++t) {
      Eigen::VectorXd zz(dh);
      zz[0] = z[t % gp];
      if (dh == 2) zz[1] = z[t / gp];
      const Eigen::VectorXd off = scale * zz;
      Eigen::Vector2d h = fit.hyper_mode;
      for (int k = 0; k < dh; ++k) h[free[k]] += off[k];
      grid.push_back(h);
    }
  }

  struct GridPoint {
    Eigen::Vector2d hyper;
    Eigen::VectorXd mean;
    Eigen::MatrixXd upper;  // U with U'U = Q
    double log_marginal;
  };
  std::vector<GridPoint> points;
  const Eigen::VectorXd warm = fit.mode.head(d);
  for (const auto& h : grid) {
    const auto cm = conditional_mode(s, w, spec, h[0], h[1], opts, &warm);
    if (!std::isfinite(cm.log_marginal)) continue;
    Eigen::LLT<Eigen::MatrixXd> llt(cm.precision);
    if (llt.info() != Eigen::Success) continue;
    points.push_back({h, cm.latent, llt.matrixU(), cm.log_marginal});
  }
  if (points.empty()) throw NumericalError("draw_pseudo_posterior: no usable grid point");

  double lmax = -std::numeric_limits<double>::infinity();
  for (const auto& pt : points) lmax = std::max(lmax, pt.log_marginal);
  std::vector<double> cum(points.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    acc += std::exp(points[k].log_marginal - lmax);
    cum[k] = acc;
  }

  PseudoPosteriorDraws out{.layout = L, .draws = Eigen::MatrixXd(K, L.size()),
                           .provenance = provenance};
  Eigen::VectorXd z(d);
  for (int k = 0; k < K; ++k) {
    const double u = rng.uniform() * acc;
    const std::size_t idx =
        std::min<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin(),
                              points.size() - 1);
    const auto& pt = points[idx];
    for (int i = 0; i < d; ++i) z[i] = rng.normal();
    const Eigen::VectorXd lat =
        pt.mean + pt.upper.triangularView<Eigen::Upper>().solve(z);
    out.draws.row(k) = full_theta(L, lat, pt.hyper[0], pt.hyper[1]).transpose();
  }
  return out;
}

}  // namespace pbsae
