#include "pbsae/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "pbsae/csv.hpp"
#include "pbsae/error.hpp"

namespace pbsae {

namespace {

// Units with probabilities within this distance of 0 or 1 are treated as
// certainly excluded or included, matching R's sampling package.
constexpr double kPikEps = 1e-6;

void check_sizes(std::span<const double> sizes, int n) {
  if (sizes.empty()) throw InvalidArgument("PPS draw: empty size vector");
  for (double s : sizes)
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("PPS draw: sizes must be positive");
  if (n < 1 || n > static_cast<int>(sizes.size()))
    throw InvalidArgument("PPS draw: need 1 <= n <= N (n=" + std::to_string(n) +
                          ", N=" + std::to_string(sizes.size()) + ")");
}

// Index drawn with probability proportional to `p` (nonnegative).
std::size_t draw_proportional(std::span<const double> p, RandomStream& rng) {
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  const double u = rng.uniform() * total;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] <= 0.0) continue;
    last_positive = j;
    cum += p[j];
    if (u < cum) return j;
  }
  return last_positive;
}

// Probabilities for sample size n from nonnegative a, capped at one.
std::vector<double> capped_probs(std::span<const double> a, double n) {
  const std::size_t N = a.size();
  std::vector<double> pik(N, 0.0);
  std::vector<char> capped(N, 0);
  int num_capped = 0;
  for (;;) {
    double free_total = 0.0;
    for (std::size_t j = 0; j < N; ++j)
      if (!capped[j]) free_total += a[j];
    const double remaining = n - num_capped;
    bool changed = false;
    for (std::size_t j = 0; j < N; ++j) {
      if (capped[j]) {
        pik[j] = 1.0;
        continue;
      }
      pik[j] = free_total > 0.0 ? remaining * a[j] / free_total : 0.0;
      if (pik[j] >= 1.0) {
        capped[j] = 1;
        ++num_capped;
        pik[j] = 1.0;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return pik;
}

// Tille's elimination procedure on probabilities `pik` (all interior).
// Returns 0/1 membership.
std::vector<char> tille_elimination(std::span<const double> pik, RandomStream& rng) {
  const std::size_t N = pik.size();
  const double total = std::accumulate(pik.begin(), pik.end(), 0.0);
  const long n = std::lround(total);
  std::vector<char> in(N, 1);
  std::vector<double> prev(N, 1.0);
  std::vector<double> p(N);
  for (long step = 1; step <= static_cast<long>(N) - n; ++step) {
    const auto a = capped_probs(pik, static_cast<double>(static_cast<long>(N) - step));
    for (std::size_t j = 0; j < N; ++j) {
      p[j] = in[j] ? std::max(0.0, 1.0 - a[j] / prev[j]) : 0.0;
    }
    const std::size_t drop = draw_proportional(p, rng);
    in[drop] = 0;
    prev = a;
  }
  return in;
}

std::vector<int> select_indices(const std::vector<char>& in) {
  std::vector<int> out;
  for (std::size_t j = 0; j < in.size(); ++j)
    if (in[j]) out.push_back(static_cast<int>(j));
  return out;
}

struct PpsDraw {
  std::vector<int> index;
  std::vector<double> pi;  // for selected units, aligned with index
};

PpsDraw draw_pps(std::span<const double> sizes, int n, PpsMethod method, RandomStream& rng) {
  PpsDraw d;
  std::vector<double> pik;
  if (method == PpsMethod::generalized) {
    pik = pips_inclusion_probs(sizes, n);
    d.index = draw_generalized_midzuno(pik, rng);
  } else {
    pik = midzuno_inclusion_probs(sizes, n);
    d.index = draw_midzuno(sizes, n, rng);
  }
  for (int j : d.index) d.pi.push_back(pik[j]);
  return d;
}

// s = v - min(v) + 1 over the given values.
std::vector<double> shifted_sizes(std::span<const double> v) {
  const double lo = *std::min_element(v.begin(), v.end());
  std::vector<double> s(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) s[j] = v[j] - lo + 1.0;
  return s;
}

}  // namespace

const char* to_string(DesignKind d) noexcept {
  switch (d) {
    case DesignKind::srs: return "SRS";
    case DesignKind::pps1: return "PPS1";
    case DesignKind::pps2: return "PPS2";
  }
  return "?";
}

DesignKind parse_design(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  if (s == "SRS") return DesignKind::srs;
  if (s == "PPS1") return DesignKind::pps1;
  if (s == "PPS2") return DesignKind::pps2;
  throw InvalidArgument("unknown design '" + std::string(name) + "'");
}

const char* to_string(PpsMethod p) noexcept {
  return p == PpsMethod::generalized ? "generalized" : "classical";
}

PpsMethod parse_pps_method(std::string_view name) {
  if (name == "generalized") return PpsMethod::generalized;
  if (name == "classical") return PpsMethod::classical;
  throw InvalidArgument("unknown pps_method '" + std::string(name) + "'");
}

void DesignConfig::validate(const FinitePopulation& pop) const {
  if (n_per_area < 1) throw InvalidArgument("design: n_per_area must be >= 1");
  for (int i = 0; i < pop.m; ++i) {
    if (static_cast<std::size_t>(n_per_area) > pop.area_size(i))
      throw InvalidArgument("design: n_per_area exceeds the units in area " + std::to_string(i + 1));
  }
  if (design == DesignKind::pps2) {
    if (clusters_per_area_sampled < 1 || units_per_cluster_sampled < 1)
      throw InvalidArgument("design: PPS2 needs positive cluster and unit counts");
    if (clusters_per_area_sampled * units_per_cluster_sampled != n_per_area)
      throw InvalidArgument("design: PPS2 requires clusters_per_area_sampled * "
                            "units_per_cluster_sampled == n_per_area");
    if (clusters_per_area_sampled > pop.clusters_per_area)
      throw InvalidArgument("design: more clusters sampled than exist per area");
    if (units_per_cluster_sampled > pop.cluster_size)
      throw InvalidArgument("design: more units per cluster sampled than cluster size");
  }
}

std::vector<int> DrawnSample::units_per_area() const {
  std::vector<int> counts(num_areas, 0);
  for (int a : area) ++counts[a];
  return counts;
}

std::vector<double> midzuno_inclusion_probs(std::span<const double> sizes, int n) {
  check_sizes(sizes, n);
  const std::size_t N = sizes.size();
  if (N == 1) return {1.0};
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  const double Nd = static_cast<double>(N);
  const double base = (n - 1) / (Nd - 1.0);
  const double slope = (Nd - n) / (Nd - 1.0);
  std::vector<double> pi(N);
  for (std::size_t j = 0; j < N; ++j) pi[j] = base + slope * sizes[j] / total;
  return pi;
}

std::vector<int> draw_srswor(int population, int n, RandomStream& rng) {
  if (n < 0 || n > population) throw InvalidArgument("draw_srswor: need 0 <= n <= N");
  std::vector<int> idx(population);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates.
  for (int k = 0; k < n; ++k) {
    const int j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(population - k)));
    std::swap(idx[k], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<int> draw_midzuno(std::span<const double> sizes, int n, RandomStream& rng) {
  check_sizes(sizes, n);
  const int N = static_cast<int>(sizes.size());
  if (n == N) {
    std::vector<int> all(N);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  const int first = static_cast<int>(draw_proportional(sizes, rng));
  auto rest = draw_srswor(N - 1, n - 1, rng);
  std::vector<int> out{first};
  for (int r : rest) out.push_back(r < first ? r : r + 1);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> pips_inclusion_probs(std::span<const double> sizes, int n) {
  check_sizes(sizes, n);
  return capped_probs(sizes, static_cast<double>(n));
}

std::vector<int> draw_generalized_midzuno(std::span<const double> pik, RandomStream& rng) {
  const double total = std::accumulate(pik.begin(), pik.end(), 0.0);
  if (std::abs(total - std::round(total)) > 1e-6)
    throw InvalidArgument("generalized Midzuno: inclusion probabilities must sum to an integer");
  std::vector<char> in(pik.size(), 0);
  std::vector<std::size_t> interior;
  std::vector<double> complement;
  for (std::size_t j = 0; j < pik.size(); ++j) {
    if (!(pik[j] >= 0.0) || pik[j] > 1.0 + 1e-12)
      throw InvalidArgument("generalized Midzuno: probabilities must lie in [0, 1]");
    if (pik[j] >= 1.0 - kPikEps) {
      in[j] = 1;
    } else if (pik[j] > kPikEps) {
      interior.push_back(j);
      complement.push_back(1.0 - pik[j]);
    }
  }
  if (!interior.empty()) {
    // Select the units to leave out with Tille's procedure on 1 - pik.
    const auto left_out = tille_elimination(complement, rng);
    for (std::size_t k = 0; k < interior.size(); ++k) in[interior[k]] = left_out[k] ? 0 : 1;
  }
  return select_indices(in);
}

DrawnSample draw_sample(const FinitePopulation& pop, const DesignConfig& cfg, RandomStream& rng) {
  cfg.validate(pop);
  DrawnSample s;
  s.num_areas = pop.m;
  std::vector<std::size_t> rows;
  std::vector<double> pi;
  std::vector<double> pi_psu;
  std::vector<int> psu;

  for (int i = 0; i < pop.m; ++i) {
    const std::size_t begin = pop.area_begin(i);
    const int Ni = static_cast<int>(pop.area_size(i));
    switch (cfg.design) {
      case DesignKind::srs: {
        const auto idx = draw_srswor(Ni, cfg.n_per_area, rng);
        const double p = static_cast<double>(cfg.n_per_area) / Ni;
        for (int k : idx) {
          rows.push_back(begin + k);
          pi.push_back(p);
          pi_psu.push_back(p);
          psu.push_back(static_cast<int>(begin + k));
        }
        break;
      }
      case DesignKind::pps1: {
        const auto sizes = shifted_sizes(std::span(pop.x2).subspan(begin, Ni));
        const auto d = draw_pps(sizes, cfg.n_per_area, cfg.pps_method, rng);
        for (std::size_t k = 0; k < d.index.size(); ++k) {
          rows.push_back(begin + d.index[k]);
          pi.push_back(d.pi[k]);
          pi_psu.push_back(d.pi[k]);
          psu.push_back(static_cast<int>(begin + d.index[k]));
        }
        break;
      }
      case DesignKind::pps2: {
        const int C = pop.clusters_per_area;
        const int first_cluster = i * C;
        std::vector<double> cluster_size(C);
        for (int c = 0; c < C; ++c)
          cluster_size[c] = pop.x_tilde2[pop.cluster_begin(first_cluster + c)];
        const auto csizes = shifted_sizes(cluster_size);
        const auto unit_sizes = shifted_sizes(std::span(pop.x2).subspan(begin, Ni));
        const auto stage1 = draw_pps(csizes, cfg.clusters_per_area_sampled, cfg.pps_method, rng);
        for (std::size_t k = 0; k < stage1.index.size(); ++k) {
          const int gc = first_cluster + stage1.index[k];
          const std::size_t cb = pop.cluster_begin(gc);
          const std::span<const double> within(unit_sizes.data() + (cb - begin),
                                               static_cast<std::size_t>(pop.cluster_size));
          const auto stage2 = draw_pps(within, cfg.units_per_cluster_sampled, cfg.pps_method, rng);
          for (std::size_t u = 0; u < stage2.index.size(); ++u) {
            rows.push_back(cb + stage2.index[u]);
            pi.push_back(stage1.pi[k] * stage2.pi[u]);
            pi_psu.push_back(stage1.pi[k]);
            psu.push_back(gc);
          }
        }
        break;
      }
    }
  }

  const std::size_t n = rows.size();
  s.unit_id.resize(n);
  s.area.resize(n);
  s.cluster.resize(n);
  s.stratum.resize(n);
  s.y.resize(n);
  s.covariates.resize(static_cast<Eigen::Index>(n), 1);
  s.covariate_names = {"x1"};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = rows[k];
    s.unit_id[k] = static_cast<std::int64_t>(j) + 1;
    s.area[k] = pop.area[j];
    s.cluster[k] = pop.cluster[j] - pop.area[j] * pop.clusters_per_area;
    s.stratum[k] = pop.area[j];
    s.y[k] = pop.has_responses ? pop.y[j] : std::nan("");
    s.covariates(static_cast<Eigen::Index>(k), 0) = pop.x1[j];
  }
  s.psu = std::move(psu);
  s.pi = std::move(pi);
  s.pi_psu = std::move(pi_psu);
  s.w_raw.resize(n);
  for (std::size_t k = 0; k < n; ++k) s.w_raw[k] = 1.0 / s.pi[k];
  normalize_weights(s);
  return s;
}

void normalize_weights(DrawnSample& sample) {
  const std::size_t n = sample.w_raw.size();
  if (n == 0) throw InvalidArgument("normalize_weights: empty sample");
  for (double w : sample.w_raw)
    if (!(w > 0.0) || !std::isfinite(w))
      throw InvalidArgument("normalize_weights: weights must be positive and finite");
  sample.w_norm.resize(n);
  const bool all_equal = std::all_of(sample.w_raw.begin(), sample.w_raw.end(),
                                     [&](double w) { return w == sample.w_raw.front(); });
  if (all_equal) {
    std::fill(sample.w_norm.begin(), sample.w_norm.end(), 1.0);
    return;
  }
  const double total = std::accumulate(sample.w_raw.begin(), sample.w_raw.end(), 0.0);
  const double scale = static_cast<double>(n) / total;
  for (std::size_t k = 0; k < n; ++k) sample.w_norm[k] = sample.w_raw[k] * scale;
}

void write_sample_csv(const DrawnSample& s, std::ostream& out) {
  using csv::format_double;
  out << "unit_id,area,cluster,psu_id,stratum_id,pi,w_raw,w_norm,y";
  for (const auto& name : s.covariate_names) out << ',' << name;
  out << '\n';
  for (std::size_t k = 0; k < s.size(); ++k) {
    out << s.unit_id[k] << ',' << (s.area[k] + 1) << ',' << (s.cluster[k] + 1) << ','
        << (s.psu[k] + 1) << ',' << (s.stratum[k] + 1) << ',' << format_double(s.pi[k]) << ','
        << format_double(s.w_raw[k]) << ',' << format_double(s.w_norm[k]) << ','
        << format_double(s.y[k]);
    for (Eigen::Index c = 0; c < s.covariates.cols(); ++c)
      out << ',' << format_double(s.covariates(static_cast<Eigen::Index>(k), c));
    out << '\n';
  }
}

}  // namespace pbsae
