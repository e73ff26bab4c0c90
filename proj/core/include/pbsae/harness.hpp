#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbsae/design.hpp"
#include "pbsae/estimands.hpp"
#include "pbsae/pipeline.hpp"
#include "pbsae/popgen.hpp"

namespace pbsae {

struct RunConfig {
  PopulationConfig population;
  DesignConfig design;
  std::vector<Method> methods{Method::hajek, Method::greg, Method::unwt, Method::wt,
                              Method::wtrscl};
  int replications = 200;
  int draws_K = 1000;
  int resample_B = 100;
  std::uint64_t master_seed = 1;
  std::string output_dir = ".";
  // Draw one response population and reuse it in every replication.
  bool fixed_responses = false;
  int threads = 0;  // 0: hardware concurrency
  bool write_estimates = false;
  bool write_diagnostics = false;
  // Write the population and sample CSVs of one replication.
  std::optional<int> export_replication;
  PriorSpec prior;

  void validate() const;
};

// JSON config; see configs/ for the accepted keys.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

struct ReplicationFailure {
  int replication = 0;
  std::string method;
  std::string message;
};

struct ReplicationOutput {
  int replication = 0;
  AreaTruths truths;
  std::vector<std::pair<Method, AreaEstimateTable>> tables;
  std::vector<ReplicationFailure> failures;
  std::vector<std::string> warnings;
  std::optional<DesignEffectMatrices> design_effect;
};

PipelineOptions pipeline_options(const RunConfig& cfg, int replication);

// One replication on a fixed auxiliary frame: responses, truths, sample,
// weights, estimators.
ReplicationOutput run_replication(const FinitePopulation& aux_frame, const AreaFrame& area_frame,
                                  const RunConfig& cfg, int replication);

struct SimulationResult {
  std::vector<MetricsRow> metrics;  // one per requested method
  std::vector<ReplicationFailure> failures;
  std::vector<ReplicationOutput> replications;  // kept only on request
};

// Replication loop over a worker pool. Results do not depend on thread count
// or scheduling.
SimulationResult run_simulation(const RunConfig& cfg, bool keep_replications = false);

// metrics.csv, failures.csv and the optional per-replication artifacts.
void write_simulation_outputs(const RunConfig& cfg, const SimulationResult& result);

struct EstimateConfig {
  std::string data_csv;
  std::string frame_csv;
  std::string out_csv;
  Family family = Family::gaussian;
  std::vector<Method> methods{Method::hajek, Method::greg, Method::unwt, Method::wt,
                              Method::wtrscl};
  std::vector<std::string> covariates{"x1"};
  std::uint64_t seed = 1;
  std::uint64_t stream_index = 0;
  int draws_K = 1000;
  int resample_B = 100;
  std::string diagnostics_csv;  // optional H/J dump
};

struct EstimateInputs {
  DrawnSample sample;
  AreaFrame frame;
};

// Reads the unit-record data (area, psu_id, stratum_id, weight, y, covariates)
// and the frame: either unit-level (area, covariates) or area-level
// (area, pop_size, covariate means; gaussian family only).
EstimateInputs load_estimate_inputs(const EstimateConfig& cfg);

struct EstimateOutput {
  AreaEstimateTable rows;
  std::vector<std::string> labels;
  std::vector<MethodFailure> failures;
};

EstimateOutput run_estimate(const EstimateConfig& cfg);

}  // namespace pbsae
