#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pbsae/design.hpp"
#include "pbsae/popgen.hpp"
#include "pbsae/random.hpp"

namespace testing {

// Builds a sample from explicit columns. PSUs default to one per unit and the
// stratum to the area.
inline pbsae::DrawnSample make_sample(int m, const std::vector<int>& area,
                                      const std::vector<double>& y, const Eigen::MatrixXd& x,
                                      std::vector<double> w_raw = {}, std::vector<int> psu = {},
                                      std::vector<int> stratum = {}) {
  pbsae::DrawnSample s;
  const std::size_t n = y.size();
  if (w_raw.empty()) w_raw.assign(n, 1.0);
  if (psu.empty())
    for (std::size_t j = 0; j < n; ++j) psu.push_back(static_cast<int>(j));
  if (stratum.empty()) stratum = area;
  s.num_areas = m;
  for (std::size_t j = 0; j < n; ++j) {
    s.unit_id.push_back(static_cast<std::int64_t>(j + 1));
    s.area.push_back(area[j]);
    s.cluster.push_back(psu[j]);
    s.psu.push_back(psu[j]);
    s.stratum.push_back(stratum[j]);
    s.pi.push_back(1.0 / w_raw[j]);
    s.pi_psu.push_back(1.0 / w_raw[j]);
    s.w_raw.push_back(w_raw[j]);
    s.y.push_back(y[j]);
  }
  s.covariates = x;
  for (int k = 0; k < x.cols(); ++k) s.covariate_names.push_back("x" + std::to_string(k + 1));
  pbsae::normalize_weights(s);
  return s;
}

// Random gaussian or binary sample with a nested error structure.
inline pbsae::DrawnSample random_sample(int m, int per_area, bool binary, std::uint64_t seed,
                                        bool unequal_weights = true) {
  pbsae::RandomStream rng(seed);
  std::vector<int> area;
  std::vector<double> y, w;
  Eigen::MatrixXd x(m * per_area, 1);
  std::vector<double> u(m);
  for (int i = 0; i < m; ++i) u[i] = 0.5 * rng.normal();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < per_area; ++j) {
      const int r = i * per_area + j;
      x(r, 0) = rng.normal();
      const double eta = 0.3 + u[i] + 0.8 * x(r, 0);
      area.push_back(i);
      if (binary) {
        y.push_back(rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0);
      } else {
        y.push_back(eta + rng.normal());
      }
      w.push_back(unequal_weights ? 1.0 + 4.0 * rng.uniform() : 2.0);
    }
  }
  return make_sample(m, area, y, x, w);
}

// Small explicit population: m areas, c clusters per area, k units per cluster.
inline pbsae::FinitePopulation toy_population(int m, int c, int k, std::uint64_t seed,
                                              pbsae::Family family = pbsae::Family::gaussian) {
  pbsae::PopulationConfig cfg;
  cfg.m = m;
  cfg.clusters_per_area = c;
  cfg.cluster_size = k;
  cfg.family = family;
  cfg.seed = seed;
  pbsae::RandomStream ra(seed, pbsae::StreamPurpose::aux_frame);
  const auto aux = pbsae::generate_aux_frame(cfg, ra);
  pbsae::RandomStream rr(seed, pbsae::StreamPurpose::responses);
  return pbsae::simulate_responses(aux, cfg, rr);
}

}  // namespace testing
