#include <benchmark/benchmark.h>

#include "pbsae/design.hpp"
#include "pbsae/harness.hpp"
#include "pbsae/inference.hpp"
#include "pbsae/popgen.hpp"
#include "pbsae/rescale.hpp"

using namespace pbsae;

namespace {

struct Fixture {
  PopulationConfig pop_cfg;
  DesignConfig design;
  FinitePopulation pop;
  DrawnSample sample;

  explicit Fixture(Family family) {
    pop_cfg.family = family;
    pop_cfg.seed = 11;
    design.design = DesignKind::pps2;
    RandomStream ra(11, StreamPurpose::aux_frame, 0);
    const FinitePopulation aux = generate_aux_frame(pop_cfg, ra);
    RandomStream rr(11, StreamPurpose::responses, 0);
    pop = simulate_responses(aux, pop_cfg, rr);
    RandomStream rs(11, StreamPurpose::sample, 0);
    sample = draw_sample(pop, design, rs);
    normalize_weights(sample);
  }
};

const Fixture& fixture(Family family) {
  static const Fixture gaussian(Family::gaussian);
  static const Fixture logit(Family::bernoulli_logit);
  return family == Family::gaussian ? gaussian : logit;
}

ModelSpec spec_for(Family family, Parameterization param = Parameterization::hierarchical) {
  ModelSpec s;
  s.family = family;
  s.parameterization = param;
  return s;
}

void BM_GeneratePopulation(benchmark::State& state) {
  PopulationConfig cfg;
  for (auto _ : state) {
    RandomStream ra(1, StreamPurpose::aux_frame, 0);
    const FinitePopulation aux = generate_aux_frame(cfg, ra);
    RandomStream rr(1, StreamPurpose::responses, 0);
    benchmark::DoNotOptimize(simulate_responses(aux, cfg, rr));
  }
}
BENCHMARK(BM_GeneratePopulation)->Unit(benchmark::kMillisecond);

void BM_DrawPps2(benchmark::State& state) {
  const Fixture& f = fixture(Family::gaussian);
  std::uint64_t rep = 0;
  for (auto _ : state) {
    RandomStream rs(3, StreamPurpose::sample, rep++);
    benchmark::DoNotOptimize(draw_sample(f.pop, f.design, rs));
  }
}
BENCHMARK(BM_DrawPps2)->Unit(benchmark::kMillisecond);

void BM_FitPseudoMap(benchmark::State& state) {
  const Family family = state.range(0) == 0 ? Family::gaussian : Family::bernoulli_logit;
  const Fixture& f = fixture(family);
  for (auto _ : state) benchmark::DoNotOptimize(fit_pseudo_map(f.sample, f.sample.w_norm, spec_for(family)));
}
BENCHMARK(BM_FitPseudoMap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Draws(benchmark::State& state) {
  const Family family = state.range(0) == 0 ? Family::gaussian : Family::bernoulli_logit;
  const Fixture& f = fixture(family);
  const ModelSpec spec = spec_for(family);
  const FitResult fit = fit_pseudo_map(f.sample, f.sample.w_norm, spec);
  for (auto _ : state) {
    RandomStream rng(5, StreamPurpose::draws, 0);
    benchmark::DoNotOptimize(
        draw_pseudo_posterior(f.sample, f.sample.w_norm, spec, fit, 1000, rng, Provenance::weighted));
  }
}
BENCHMARK(BM_Draws)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EstimateJ(benchmark::State& state) {
  const Fixture& f = fixture(Family::gaussian);
  const ModelSpec spec = spec_for(Family::gaussian, Parameterization::fixed_intercepts);
  const FitResult mle = fit_pseudo_mle_fixed(f.sample, f.sample.w_norm, spec);
  for (auto _ : state) {
    RandomStream rng(7, StreamPurpose::resample, 0);
    benchmark::DoNotOptimize(estimate_J(mle, f.sample, f.sample.w_norm, static_cast<int>(state.range(0)), rng));
  }
}
BENCHMARK(BM_EstimateJ)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_Replication(benchmark::State& state) {
  RunConfig cfg;
  cfg.population.family = state.range(0) == 0 ? Family::gaussian : Family::bernoulli_logit;
  cfg.design.design = DesignKind::pps2;
  const Fixture& f = fixture(cfg.population.family);
  const AreaFrame frame = AreaFrame::from_population(f.pop);
  int rep = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_replication(f.pop, frame, cfg, rep++));
}
BENCHMARK(BM_Replication)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
