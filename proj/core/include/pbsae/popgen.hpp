#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "pbsae/random.hpp"

namespace pbsae {

enum class Family { gaussian, bernoulli_logit };

const char* to_string(Family f) noexcept;
Family parse_family(std::string_view name);

// How the exponential size increment is parameterized.
enum class ExpParameterization { rate, mean };

struct PopulationConfig {
  int m = 20;                  // number of areas
  int clusters_per_area = 150;
  int cluster_size = 30;       // units per cluster
  double beta0 = 0.0;
  double beta1 = 1.0;
  double beta2 = 2.0;
  double noise_sd = 1.0;       // gaussian family only
  Family family = Family::gaussian;
  std::uint64_t seed = 1;

  // z2 = i/m + Exp(size_param); with `rate` the increment has mean 1/size_param.
  double size_param = 0.5;
  ExpParameterization size_param_kind = ExpParameterization::rate;
  // x1 is z1 as drawn; set to standardize it like the size variable instead.
  bool standardize_x1 = false;

  void validate() const;
  std::size_t population_size() const noexcept {
    return static_cast<std::size_t>(m) * clusters_per_area * cluster_size;
  }
};

// Complete unit frame. Units are stored area-major, then cluster, so area and
// cluster memberships are contiguous index ranges.
struct FinitePopulation {
  int m = 0;
  int clusters_per_area = 0;
  int cluster_size = 0;

  std::vector<int> area;     // 0-based area index per unit
  std::vector<int> cluster;  // global 0-based cluster index per unit
  std::vector<double> z1;
  std::vector<double> z2;    // unit size, > 0
  std::vector<double> x1;    // model covariate
  std::vector<double> x2;    // standardized unit size
  std::vector<double> x_tilde2;  // standardized cluster-total size, cluster constant
  std::vector<double> q;     // latent success probability (bernoulli family)
  std::vector<double> y;
  bool has_responses = false;

  std::size_t size() const noexcept { return area.size(); }
  int num_clusters() const noexcept { return m * clusters_per_area; }
  std::size_t area_begin(int i) const noexcept {
    return static_cast<std::size_t>(i) * clusters_per_area * cluster_size;
  }
  std::size_t area_end(int i) const noexcept { return area_begin(i + 1); }
  std::size_t cluster_begin(int c) const noexcept {
    return static_cast<std::size_t>(c) * cluster_size;
  }
  std::size_t cluster_end(int c) const noexcept { return cluster_begin(c + 1); }
  int area_of_cluster(int c) const noexcept { return c / clusters_per_area; }
  std::size_t area_size(int i) const noexcept { return area_end(i) - area_begin(i); }
};

struct AreaTruths {
  std::vector<double> ybar;  // indexed by area
};

// Centers and scales to mean 0, variance 1 using the population (divide by N)
// convention. Throws InvalidArgument for fewer than two values or constant input.
std::vector<double> standardize(std::span<const double> values);

FinitePopulation generate_aux_frame(const PopulationConfig& cfg, RandomStream& rng);

// Returns a copy of `frame` with responses drawn from the population model.
FinitePopulation simulate_responses(const FinitePopulation& frame, const PopulationConfig& cfg,
                                    RandomStream& rng);

AreaTruths finite_area_means(const FinitePopulation& pop);

// CSV with columns unit_id, area, cluster, z1, z2, x2, x_tilde2, y, x1. Areas
// and clusters are written 1-based.
void write_population_csv(const FinitePopulation& pop, std::ostream& out);

}  // namespace pbsae
