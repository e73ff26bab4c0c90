#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pbsae/design.hpp"
#include "pbsae/estimands.hpp"
#include "pbsae/inference.hpp"
#include "pbsae/rescale.hpp"

namespace pbsae {

struct PipelineOptions {
  std::vector<Method> methods{Method::hajek, Method::greg, Method::unwt, Method::wt,
                              Method::wtrscl};
  int draws_K = 1000;
  int resample_B = 100;
  std::uint64_t seed = 1;
  std::uint64_t stream_index = 0;  // replication index in simulations
  FitOptions fit;
  RescaleCenter center = RescaleCenter::draw_mean;
  PriorSpec prior;
};

struct MethodFailure {
  Method method = Method::hajek;
  std::string message;
};

struct PipelineResult {
  std::vector<std::pair<Method, AreaEstimateTable>> tables;  // requested order
  std::vector<MethodFailure> failures;
  std::vector<std::string> warnings;
  std::optional<DesignEffectMatrices> design_effect;
  HessianCheck hessian_check;

  const AreaEstimateTable* table(Method m) const;
};

// Runs every requested estimator on one sample. Failures of one method are
// recorded and do not stop the others.
PipelineResult estimate_areas(const DrawnSample& sample, const AreaFrame& frame, Family family,
                              const PipelineOptions& opts);

}  // namespace pbsae
