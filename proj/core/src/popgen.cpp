#include "pbsae/popgen.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "pbsae/csv.hpp"
#include "pbsae/error.hpp"
#include "pbsae/model.hpp"

namespace pbsae {

const char* to_string(Family f) noexcept {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::bernoulli_logit: return "logit";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  if (name == "gaussian" || name == "continuous") return Family::gaussian;
  if (name == "logit" || name == "bernoulli-logit" || name == "binary" || name == "bernoulli_logit")
    return Family::bernoulli_logit;
  throw InvalidArgument("unknown family '" + std::string(name) + "'");
}

void PopulationConfig::validate() const {
  if (m < 1) throw InvalidArgument("population: m must be >= 1");
  if (clusters_per_area < 1) throw InvalidArgument("population: clusters_per_area must be >= 1");
  if (cluster_size < 1) throw InvalidArgument("population: cluster_size must be >= 1");
  if (!(noise_sd >= 0.0)) throw InvalidArgument("population: noise_sd must be >= 0");
  if (!(size_param > 0.0)) throw InvalidArgument("population: size_param must be > 0");
}

std::vector<double> standardize(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw InvalidArgument("standardize: need at least two values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (!(sd > 0.0) || !std::isfinite(sd)) throw InvalidArgument("standardize: zero variance input");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (values[i] - mean) / sd;
  return out;
}

FinitePopulation generate_aux_frame(const PopulationConfig& cfg, RandomStream& rng) {
  cfg.validate();
  FinitePopulation pop;
  pop.m = cfg.m;
  pop.clusters_per_area = cfg.clusters_per_area;
  pop.cluster_size = cfg.cluster_size;
  const std::size_t N = cfg.population_size();
  if (N < 2) throw InvalidArgument("population of one unit cannot be standardized");
  pop.area.resize(N);
  pop.cluster.resize(N);
  pop.z1.resize(N);
  pop.z2.resize(N);

  const double rate =
      cfg.size_param_kind == ExpParameterization::rate ? cfg.size_param : 1.0 / cfg.size_param;
  std::size_t j = 0;
  for (int i = 0; i < cfg.m; ++i) {
    const double loc = static_cast<double>(i + 1) / cfg.m;
    for (int c = 0; c < cfg.clusters_per_area; ++c) {
      const int gc = i * cfg.clusters_per_area + c;
      for (int k = 0; k < cfg.cluster_size; ++k, ++j) {
        pop.area[j] = i;
        pop.cluster[j] = gc;
        pop.z1[j] = rng.normal(loc, 1.0);
        pop.z2[j] = loc + rng.exponential(rate);
      }
    }
  }

  pop.x2 = standardize(pop.z2);

  std::vector<double> cluster_total(N);
  for (int c = 0; c < pop.num_clusters(); ++c) {
    double total = 0.0;
    for (std::size_t u = pop.cluster_begin(c); u < pop.cluster_end(c); ++u) total += pop.z2[u];
    for (std::size_t u = pop.cluster_begin(c); u < pop.cluster_end(c); ++u) cluster_total[u] = total;
  }
  pop.x_tilde2 = standardize(cluster_total);

  pop.x1 = cfg.standardize_x1 ? standardize(pop.z1) : pop.z1;
  return pop;
}

FinitePopulation simulate_responses(const FinitePopulation& frame, const PopulationConfig& cfg,
                                    RandomStream& rng) {
  cfg.validate();
  FinitePopulation pop = frame;
  const std::size_t N = pop.size();
  pop.y.resize(N);
  pop.q.assign(N, std::nan(""));
  for (std::size_t j = 0; j < N; ++j) {
    const double eta = cfg.beta0 + cfg.beta1 * pop.x1[j] + cfg.beta2 * pop.x_tilde2[j];
    if (cfg.family == Family::gaussian) {
      pop.y[j] = cfg.noise_sd > 0.0 ? eta + cfg.noise_sd * rng.normal() : eta;
    } else {
      const double q = expit(eta);
      pop.q[j] = q;
      pop.y[j] = rng.uniform() < q ? 1.0 : 0.0;
    }
  }
  pop.has_responses = true;
  return pop;
}

AreaTruths finite_area_means(const FinitePopulation& pop) {
  if (!pop.has_responses) throw InvalidArgument("finite_area_means: responses not simulated");
  AreaTruths t;
  t.ybar.assign(pop.m, 0.0);
  for (int i = 0; i < pop.m; ++i) {
    double s = 0.0;
    for (std::size_t j = pop.area_begin(i); j < pop.area_end(i); ++j) s += pop.y[j];
    t.ybar[i] = s / static_cast<double>(pop.area_size(i));
  }
  return t;
}

void write_population_csv(const FinitePopulation& pop, std::ostream& out) {
  using csv::format_double;
  out << "unit_id,area,cluster,z1,z2,x2,x_tilde2,y,x1\n";
  for (std::size_t j = 0; j < pop.size(); ++j) {
    const int c_in_area = pop.cluster[j] - pop.area[j] * pop.clusters_per_area;
    out << (j + 1) << ',' << (pop.area[j] + 1) << ',' << (c_in_area + 1) << ','
        << format_double(pop.z1[j]) << ',' << format_double(pop.z2[j]) << ','
        << format_double(pop.x2[j]) << ',' << format_double(pop.x_tilde2[j]) << ','
        << (pop.has_responses ? format_double(pop.y[j]) : std::string("NA")) << ','
        << format_double(pop.x1[j]) << '\n';
  }
}

}  // namespace pbsae
