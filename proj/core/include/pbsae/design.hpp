#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pbsae/popgen.hpp"
#include "pbsae/random.hpp"

namespace pbsae {

enum class DesignKind { srs, pps1, pps2 };

const char* to_string(DesignKind d) noexcept;
DesignKind parse_design(std::string_view name);

// Which fixed-size PPS scheme the PPS designs use.
//  - generalized: inclusion probabilities proportional to size (capped at one),
//    drawn with the generalized Midzuno method (complement of Tille's
//    elimination procedure), as in R's sampling::UPmidzuno.
//  - classical: Midzuno-Sen; first unit with probability s_j / sum(s), the
//    remaining n-1 by simple random sampling without replacement.
enum class PpsMethod { generalized, classical };

const char* to_string(PpsMethod p) noexcept;
PpsMethod parse_pps_method(std::string_view name);

struct DesignConfig {
  DesignKind design = DesignKind::srs;
  int n_per_area = 30;
  int clusters_per_area_sampled = 6;   // PPS2 only
  int units_per_cluster_sampled = 5;   // PPS2 only
  PpsMethod pps_method = PpsMethod::generalized;
  std::uint64_t seed = 1;

  void validate(const FinitePopulation& pop) const;
};

// Sampled units, one entry per row. `pi` is the overall inclusion probability
// and `pi_psu` the first-stage probability of the row's PSU.
struct DrawnSample {
  int num_areas = 0;
  std::vector<std::int64_t> unit_id;  // 1-based population row
  std::vector<int> area;              // 0-based
  std::vector<int> cluster;           // 0-based cluster within the area
  std::vector<int> psu;               // PSU label, unique across the sample
  std::vector<int> stratum;           // 0-based
  std::vector<double> pi;
  std::vector<double> pi_psu;
  std::vector<double> w_raw;
  std::vector<double> w_norm;
  std::vector<double> y;
  Eigen::MatrixXd covariates;         // n x p, model covariates (x1, ...)
  std::vector<std::string> covariate_names;

  std::size_t size() const noexcept { return y.size(); }
  int num_covariates() const noexcept { return static_cast<int>(covariates.cols()); }
  std::vector<int> units_per_area() const;
};

// Classical Midzuno-Sen inclusion probabilities:
//   pi_j = (n-1)/(N-1) + p_j (N-n)/(N-1), p_j = s_j / sum(s).
std::vector<double> midzuno_inclusion_probs(std::span<const double> sizes, int n);

// Classical Midzuno-Sen draw. Returns sorted 0-based indices.
std::vector<int> draw_midzuno(std::span<const double> sizes, int n, RandomStream& rng);

// Inclusion probabilities proportional to size with iterative capping at one
// (R's sampling::inclusionprobabilities). Sums to n.
std::vector<double> pips_inclusion_probs(std::span<const double> sizes, int n);

// Generalized Midzuno draw realizing exactly the inclusion probabilities
// `pik` (which must sum to an integer). Returns sorted 0-based indices.
std::vector<int> draw_generalized_midzuno(std::span<const double> pik, RandomStream& rng);

// Simple random sample without replacement of n out of N, sorted.
std::vector<int> draw_srswor(int population, int n, RandomStream& rng);

DrawnSample draw_sample(const FinitePopulation& pop, const DesignConfig& cfg, RandomStream& rng);

// w_norm = w_raw * n / sum(w_raw); exactly one when all raw weights are equal.
void normalize_weights(DrawnSample& sample);

// Columns unit_id, area, cluster, psu_id, stratum_id, pi, w_raw, w_norm, y, x1
// (one trailing column per model covariate). Labels are written 1-based.
void write_sample_csv(const DrawnSample& sample, std::ostream& out);

}  // namespace pbsae
