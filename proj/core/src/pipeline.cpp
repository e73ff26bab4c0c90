#include "pbsae/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include "pbsae/direct.hpp"
#include "pbsae/error.hpp"

namespace pbsae {

const AreaEstimateTable* PipelineResult::table(Method m) const {
  for (const auto& [method, t] : tables)
    if (method == m) return &t;
  return nullptr;
}

namespace {

struct ModelRun {
  FitResult fit;
  PseudoPosteriorDraws draws;
};

Eigen::MatrixXd area_mu(const PseudoPosteriorDraws& draws, const AreaFrame& frame, Family family) {
  return family == Family::gaussian ? mu_draws_gaussian(draws, frame.covariate_means)
                                    : mu_draws_logistic(draws, frame);
}

ModelRun fit_and_draw(const DrawnSample& s, std::span<const double> w, const ModelSpec& spec,
                      const PipelineOptions& opts, Provenance prov, PipelineResult& result,
                      const char* label) {
  FitResult fit = fit_pseudo_map(s, w, spec, opts.fit);
  if (!fit.converged)
    result.warnings.push_back(std::string(label) + ": hyperparameter search stopped with gradient " +
                              std::to_string(fit.gradient_norm));
  // Unweighted and weighted fits share a stream, so equal weights give equal draws.
  RandomStream rng(opts.seed, StreamPurpose::draws, opts.stream_index);
  PseudoPosteriorDraws draws = draw_pseudo_posterior(s, w, spec, fit, opts.draws_K, rng, prov, opts.fit);
  return ModelRun{std::move(fit), std::move(draws)};
}

}  // namespace

PipelineResult estimate_areas(const DrawnSample& s, const AreaFrame& frame, Family family,
                              const PipelineOptions& opts) {
  if (opts.methods.empty()) throw InvalidArgument("estimate_areas: no methods requested");
  if (frame.num_areas() != s.num_areas)
    throw InvalidArgument("estimate_areas: frame and sample disagree on the number of areas");
  PipelineResult result;
  ModelSpec spec;
  spec.family = family;
  spec.prior = opts.prior;
  spec.covariate_columns = s.covariate_names;

  const std::vector<int> per_area = s.units_per_area();
  std::optional<ModelRun> weighted;
  std::string weighted_error;

  for (Method m : opts.methods) {
    try {
      AreaEstimateTable table;
      switch (m) {
        case Method::hajek:
          table = to_table(hajek_by_area(s, family == Family::bernoulli_logit));
          break;
        case Method::greg:
          table = to_table(greg_by_area(s, frame));
          break;
        case Method::unwt: {
          const std::vector<double> ones(s.size(), 1.0);
          const ModelRun run = fit_and_draw(s, ones, spec, opts, Provenance::unweighted, result, "unwt");
          table = summarize_draws(area_mu(run.draws, frame, family), Method::unwt);
          break;
        }
        case Method::wt:
        case Method::wtrscl: {
          if (!weighted) {
            if (!weighted_error.empty()) throw NumericalError(weighted_error);
            try {
              weighted = fit_and_draw(s, s.w_norm, spec, opts, Provenance::weighted, result, "wt");
            } catch (const std::exception& e) {
              weighted_error = e.what();
              throw;
            }
          }
          if (m == Method::wt) {
            table = summarize_draws(area_mu(weighted->draws, frame, family), Method::wt);
            break;
          }
          const ParamLayout& HL = weighted->fit.layout;
          std::vector<double> fallback(s.num_areas);
          for (int i = 0; i < s.num_areas; ++i)
            fallback[i] = weighted->fit.mode[HL.beta0()] + weighted->fit.mode[HL.u(i)];
          ModelSpec fixed = spec;
          fixed.parameterization = Parameterization::fixed_intercepts;
          const FitResult mle = fit_pseudo_mle_fixed(s, s.w_norm, fixed, fallback, opts.fit);
          if (!mle.converged)
            result.warnings.push_back("wtrscl: pseudo-MLE gradient " + std::to_string(mle.gradient_norm));
          const Eigen::MatrixXd H = estimate_H(mle, s, s.w_norm, &result.hessian_check);
          RandomStream rng(opts.seed, StreamPurpose::resample, opts.stream_index);
          const Eigen::MatrixXd J = estimate_J(mle, s, s.w_norm, opts.resample_B, rng);
          std::vector<int> excluded;
          for (int a : mle.flagged_areas) excluded.push_back(mle.layout.intercept(a));
          DesignEffectMatrices mats = design_effect_matrices(H, J, excluded);
          if (!mats.h_positive_definite)
            result.warnings.push_back("wtrscl: H is not positive definite; draws left unadjusted");
          if (mats.j_jitter > 0.0)
            result.warnings.push_back("wtrscl: ridge " + std::to_string(mats.j_jitter) +
                                      " added to H^-1 J H^-1");
          const PseudoPosteriorDraws adjusted = rescale_draws(
              to_fixed_parameterization(weighted->draws), mats, opts.center, &mle.mode);
          table = summarize_draws(area_mu(adjusted, frame, family), Method::wtrscl);
          for (AreaEstimate& e : table) {
            if (per_area[e.area] == 0) {
              e.point = e.lo90 = e.hi90 = std::numeric_limits<double>::quiet_NaN();
              e.missing = true;
            }
          }
          result.design_effect = std::move(mats);
          break;
        }
      }
      result.tables.emplace_back(m, std::move(table));
    } catch (const std::exception& e) {
      result.failures.push_back({m, e.what()});
    }
  }
  return result;
}

}  // namespace pbsae
