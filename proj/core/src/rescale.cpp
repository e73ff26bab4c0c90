#include "pbsae/rescale.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <string>

#include <Eigen/Cholesky>

#include "pbsae/csv.hpp"
#include "pbsae/error.hpp"

namespace pbsae {

PseudoPosteriorDraws to_fixed_parameterization(const PseudoPosteriorDraws& draws) {
  const ParamLayout& H = draws.layout;
  if (!H.hierarchical()) throw InvalidArgument("to_fixed_parameterization: draws are not hierarchical");
  const int m = H.num_areas();
  const int p = H.num_covariates();
  const ParamLayout F(H.family(), Parameterization::fixed_intercepts, m, p);
  PseudoPosteriorDraws out{.layout = F, .draws = Eigen::MatrixXd(draws.count(), F.size()),
                           .provenance = draws.provenance};
  for (int i = 0; i < m; ++i)
    out.draws.col(F.intercept(i)) = draws.draws.col(H.beta0()) + draws.draws.col(H.u(i));
  for (int k = 0; k < p; ++k) out.draws.col(F.slope(k)) = draws.draws.col(H.slope(k));
  if (F.has_sigma_eps()) out.draws.col(F.log_sigma_eps()) = draws.draws.col(H.log_sigma_eps());
  return out;
}

Eigen::MatrixXd estimate_H(const FitResult& mle, const DrawnSample& sample,
                           std::span<const double> weights, HessianCheck* check) {
  const ParamLayout& L = mle.layout;
  Eigen::MatrixXd H = -weighted_hessian(mle.mode, L, sample, weights);
  H = 0.5 * (H + H.transpose()).eval();
  if (check) {
    const int d = L.size();
    Eigen::MatrixXd fd(d, d);
    for (int k = 0; k < d; ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(mle.mode[k]));
      Eigen::VectorXd a = mle.mode, b = mle.mode;
      a[k] += h;
      b[k] -= h;
      fd.col(k) = -(weighted_score(a, L, sample, weights) - weighted_score(b, L, sample, weights)) /
                  (2.0 * h);
    }
    const double diff = (fd - H).cwiseAbs().maxCoeff();
    check->max_abs_difference = diff;
    check->max_relative_difference = diff / std::max(1.0, H.cwiseAbs().maxCoeff());
  }
  return H;
}

Eigen::MatrixXd estimate_J(const FitResult& mle, const DrawnSample& sample,
                           std::span<const double> weights, int B, RandomStream& rng) {
  if (B < 2) throw InvalidArgument("estimate_J: B must be >= 2");
  if (weights.size() != sample.size()) throw InvalidArgument("estimate_J: weight length mismatch");
  const auto n = static_cast<Eigen::Index>(sample.size());

  // PSUs by stratum, both in ascending label order.
  std::map<int, std::map<int, std::vector<Eigen::Index>>> strata;
  for (Eigen::Index j = 0; j < n; ++j) strata[sample.stratum[j]][sample.psu[j]].push_back(j);
  for (const auto& [h, psus] : strata) {
    if (psus.size() < 2)
      throw InvalidArgument("estimate_J: stratum " + std::to_string(h + 1) + " has " +
                            std::to_string(psus.size()) + " PSU; at least 2 are required");
  }

  const Eigen::MatrixXd U =
      Eigen::VectorXd::Map(weights.data(), n).asDiagonal() * unit_scores(mle.mode, mle.layout, sample);
  Eigen::MatrixXd factors(n, B);
  std::vector<int> order;
  for (int b = 0; b < B; ++b) {
    for (const auto& [h, psus] : strata) {
      const int nh = static_cast<int>(psus.size());
      const int mh = nh / 2;
      const double lambda = std::sqrt(static_cast<double>(mh) / (nh - mh));
      order.resize(nh);
      for (int c = 0; c < nh; ++c) order[c] = c;
      for (int c = 0; c < mh; ++c) {
        const int pick = c + static_cast<int>(rng.below(static_cast<std::uint64_t>(nh - c)));
        std::swap(order[c], order[pick]);
      }
      std::vector<char> chosen(nh, 0);
      for (int c = 0; c < mh; ++c) chosen[order[c]] = 1;
      int c = 0;
      for (const auto& [label, rows] : psus) {
        const double f = 1.0 - lambda + (chosen[c] ? lambda * nh / mh : 0.0);
        for (Eigen::Index j : rows) factors(j, b) = f;
        ++c;
      }
    }
  }
  const Eigen::MatrixXd S = U.transpose() * factors;  // d x B replicate totals
  const Eigen::VectorXd mean = S.rowwise().mean();
  const Eigen::MatrixXd C = S.colwise() - mean;
  Eigen::MatrixXd J = C * C.transpose() / static_cast<double>(B - 1);
  return 0.5 * (J + J.transpose());
}

DesignEffectMatrices design_effect_matrices(const Eigen::MatrixXd& H, const Eigen::MatrixXd& J,
                                            std::span<const int> excluded) {
  const int d = static_cast<int>(H.rows());
  if (H.cols() != d || J.rows() != d || J.cols() != d)
    throw InvalidArgument("design_effect_matrices: H and J must be square and of equal size");
  std::vector<char> drop(d, 0);
  for (int e : excluded) {
    if (e < 0 || e >= d) throw InvalidArgument("design_effect_matrices: excluded index out of range");
    drop[e] = 1;
  }
  std::vector<int> keep;
  for (int k = 0; k < d; ++k)
    if (!drop[k]) keep.push_back(k);
  const int k = static_cast<int>(keep.size());

  DesignEffectMatrices out;
  out.H = H;
  out.J = J;
  out.excluded.assign(excluded.begin(), excluded.end());
  std::sort(out.excluded.begin(), out.excluded.end());
  out.adjustment = Eigen::MatrixXd::Identity(d, d);
  out.R1 = Eigen::MatrixXd::Identity(k, k);
  out.R2 = Eigen::MatrixXd::Identity(k, k);
  if (k == 0) return out;

  Eigen::MatrixXd Hk(k, k), Jk(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) {
      Hk(a, b) = H(keep[a], keep[b]);
      Jk(a, b) = J(keep[a], keep[b]);
    }
  Eigen::LLT<Eigen::MatrixXd> hllt(Hk);
  if (hllt.info() != Eigen::Success || !Hk.allFinite()) {
    out.h_positive_definite = false;
    return out;
  }
  Eigen::MatrixXd Hinv = hllt.solve(Eigen::MatrixXd::Identity(k, k));
  Hinv = 0.5 * (Hinv + Hinv.transpose()).eval();
  Eigen::MatrixXd V = Hinv * Jk * Hinv;
  V = 0.5 * (V + V.transpose()).eval();

  Eigen::LLT<Eigen::MatrixXd> vllt(V);
  double jitter = 0.0;
  const double base = std::max(V.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  for (double eps = 1e-12; vllt.info() != Eigen::Success && eps < 1.0; eps *= 10.0) {
    jitter = eps * base;
    vllt.compute(V + jitter * Eigen::MatrixXd::Identity(k, k));
  }
  if (vllt.info() != Eigen::Success)
    throw NumericalError("design_effect_matrices: H^-1 J H^-1 is not factorizable");
  out.j_jitter = jitter;

  Eigen::LLT<Eigen::MatrixXd> illt(Hinv);
  if (illt.info() != Eigen::Success) {
    out.h_positive_definite = false;
    return out;
  }
  out.R1 = vllt.matrixU();
  out.R2 = illt.matrixU();
  const Eigen::MatrixXd A = out.R2.triangularView<Eigen::Upper>().solve(out.R1);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) out.adjustment(keep[a], keep[b]) = A(a, b);
  return out;
}

PseudoPosteriorDraws rescale_draws(const PseudoPosteriorDraws& draws,
                                   const DesignEffectMatrices& mats, RescaleCenter center,
                                   const Eigen::VectorXd* pseudo_mle) {
  const int d = draws.layout.size();
  if (mats.dim() != d) throw InvalidArgument("rescale_draws: dimension mismatch");
  Eigen::RowVectorXd c;
  if (center == RescaleCenter::pseudo_mle) {
    if (!pseudo_mle || pseudo_mle->size() != d)
      throw InvalidArgument("rescale_draws: pseudo-MLE center requires the pseudo-MLE vector");
    c = pseudo_mle->transpose();
  } else {
    c = draws.draws.colwise().mean();
  }
  PseudoPosteriorDraws out{.layout = draws.layout, .draws = {}, .provenance = Provenance::weighted_rescaled};
  out.draws = ((draws.draws.rowwise() - c) * mats.adjustment).rowwise() + c;
  return out;
}

void write_design_effect_csv(const DesignEffectMatrices& mats, std::ostream& out) {
  out << "matrix,row,col,value\n";
  auto dump = [&](const char* name, const Eigen::MatrixXd& M) {
    for (Eigen::Index r = 0; r < M.rows(); ++r)
      for (Eigen::Index c = 0; c < M.cols(); ++c)
        out << name << ',' << r + 1 << ',' << c + 1 << ',' << csv::format_double(M(r, c)) << '\n';
  };
  dump("H", mats.H);
  dump("J", mats.J);
  dump("adjustment", mats.adjustment);
}

}  // namespace pbsae
