// Acceptance checks. Each criterion prints one line:
//   CRITERION <n>: PASS|FAIL <details>
// Simulation criteria record their wall time in --timing-dir for criterion 12.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "helpers.hpp"
#include "pbsae/design.hpp"
#include "pbsae/estimands.hpp"
#include "pbsae/harness.hpp"
#include "pbsae/inference.hpp"
#include "pbsae/model.hpp"
#include "pbsae/pipeline.hpp"
#include "pbsae/popgen.hpp"
#include "pbsae/rescale.hpp"

using namespace pbsae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Settings {
  fs::path timing_dir;
  fs::path config_dir = fs::path(PBSAE_SOURCE_DIR) / "configs";
  int threads = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelSpec spec_for(Family f, Parameterization p) {
  ModelSpec s;
  s.family = f;
  s.parameterization = p;
  return s;
}

// The full-size default population with one response draw.
FinitePopulation default_population(Family family, std::uint64_t seed) {
  PopulationConfig cfg;
  cfg.family = family;
  cfg.seed = seed;
  RandomStream ra(seed, StreamPurpose::aux_frame, 0);
  const FinitePopulation aux = generate_aux_frame(cfg, ra);
  RandomStream rr(seed, StreamPurpose::responses, 0);
  return simulate_responses(aux, cfg, rr);
}

DrawnSample census_sample(const FinitePopulation& pop) {
  std::vector<int> area(pop.area.begin(), pop.area.end());
  const Eigen::MatrixXd x = Eigen::VectorXd::Map(pop.x1.data(), static_cast<Eigen::Index>(pop.size()));
  return testing::make_sample(pop.m, area, pop.y, x);
}

void criterion1(Outcome& o) {
  const FinitePopulation g = default_population(Family::gaussian, 101);
  const auto sg = census_sample(g);
  const FitResult fg =
      fit_pseudo_mle_fixed(sg, sg.w_norm, spec_for(Family::gaussian, Parameterization::fixed_intercepts));
  const AreaTruths truth = finite_area_means(g);
  double worst_mean = 0.0;
  for (int i = 0; i < g.m; ++i) {
    double xbar = 0.0;
    for (auto j = g.area_begin(i); j < g.area_end(i); ++j) xbar += g.x1[j];
    xbar /= static_cast<double>(g.area_size(i));
    const double fitted = fg.mode[fg.layout.intercept(i)] + xbar * fg.mode[fg.layout.slope(0)];
    worst_mean = std::max(worst_mean, std::abs(fitted - truth.ybar[i]));
  }

  const FinitePopulation b = default_population(Family::bernoulli_logit, 102);
  const auto sb = census_sample(b);
  const FitResult fb =
      fit_pseudo_mle_fixed(sb, sb.w_norm, spec_for(Family::bernoulli_logit, Parameterization::fixed_intercepts));
  double worst_count = 0.0;
  for (int i = 0; i < b.m; ++i) {
    double sq = 0.0, sy = 0.0;
    for (auto j = b.area_begin(i); j < b.area_end(i); ++j) {
      sq += expit(fb.mode[fb.layout.intercept(i)] + b.x1[j] * fb.mode[fb.layout.slope(0)]);
      sy += b.y[j];
    }
    worst_count = std::max(worst_count, std::abs(sq - sy) / sy);
  }
  o.detail << "max |fitted mean - Ybar| = " << worst_mean << " (tol 1e-8); max relative |sum q - sum y| = "
           << worst_count << " (tol 1e-6)";
  o.require(worst_mean <= 1e-8, "gaussian census means");
  o.require(worst_count <= 1e-6, "logistic census counts");
}

void criterion2(Outcome& o) {
  bool all_equal = true;
  for (Family fam : {Family::gaussian, Family::bernoulli_logit}) {
    const FinitePopulation pop = default_population(fam, 201);
    DesignConfig d;
    d.design = DesignKind::srs;
    RandomStream rs(201, StreamPurpose::sample, 0);
    DrawnSample s = draw_sample(pop, d, rs);
    normalize_weights(s);
    o.require(std::all_of(s.w_norm.begin(), s.w_norm.end(), [](double w) { return w == 1.0; }),
              "SRS normalized weights equal one");

    const ModelSpec spec = spec_for(fam, Parameterization::hierarchical);
    const std::vector<double> ones(s.size(), 1.0);
    const FitResult fw = fit_pseudo_map(s, s.w_norm, spec);
    const FitResult fu = fit_pseudo_map(s, ones, spec);
    RandomStream r1(9, StreamPurpose::draws, 0), r2(9, StreamPurpose::draws, 0);
    const auto dw = draw_pseudo_posterior(s, s.w_norm, spec, fw, 1000, r1, Provenance::weighted);
    const auto du = draw_pseudo_posterior(s, ones, spec, fu, 1000, r2, Provenance::unweighted);
    const bool draws_equal = dw.draws == du.draws;

    PipelineOptions opts;
    opts.methods = {Method::unwt, Method::wt};
    opts.seed = 9;
    const AreaFrame frame = AreaFrame::from_population(pop);
    const PipelineResult res = estimate_areas(s, frame, fam, opts);
    bool tables_equal = res.failures.empty() && res.tables.size() == 2;
    if (tables_equal) {
      const auto& a = res.tables[0].second;
      const auto& b = res.tables[1].second;
      for (std::size_t i = 0; i < a.size(); ++i)
        tables_equal = tables_equal && a[i].point == b[i].point && a[i].lo90 == b[i].lo90 && a[i].hi90 == b[i].hi90;
    }
    o.detail << to_string(fam) << ": draws " << (draws_equal ? "bit-equal" : "differ") << ", tables "
             << (tables_equal ? "bit-equal" : "differ") << "; ";
    all_equal = all_equal && draws_equal && tables_equal;
  }
  o.require(all_equal, "weighted and unweighted outputs bit-equal");
}

Eigen::MatrixXd random_spd(int d, RandomStream& r) {
  Eigen::MatrixXd A(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) A(i, j) = r.normal();
  return A * A.transpose() + d * Eigen::MatrixXd::Identity(d, d);
}

void criterion3(Outcome& o) {
  RandomStream r(301);
  const int d = 22, K = 1000;
  const ParamLayout L(Family::gaussian, Parameterization::fixed_intercepts, 20, 1);
  PseudoPosteriorDraws draws{.layout = L, .draws = Eigen::MatrixXd(K, d), .provenance = Provenance::weighted};
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < d; ++j) draws.draws(k, j) = 0.1 * j + r.normal();
  const Eigen::MatrixXd H = random_spd(d, r), J = random_spd(d, r);

  const auto same = rescale_draws(draws, design_effect_matrices(H, H));
  const double unchanged = (same.draws - draws.draws).cwiseAbs().maxCoeff();

  const ParamLayout L1(Family::bernoulli_logit, Parameterization::fixed_intercepts, 1, 0);
  PseudoPosteriorDraws one{.layout = L1, .draws = draws.draws.col(0), .provenance = Provenance::weighted};
  const auto doubled = rescale_draws(one, design_effect_matrices(Eigen::MatrixXd::Constant(1, 1, 1.0),
                                                                 Eigen::MatrixXd::Constant(1, 1, 4.0)));
  const double c0 = one.draws.col(0).mean();
  double spread = 0.0;
  for (int k = 0; k < K; ++k) spread = std::max(spread, std::abs((doubled.draws(k, 0) - c0) - 2.0 * (one.draws(k, 0) - c0)));

  const auto mats = design_effect_matrices(H, J);
  const auto adj = rescale_draws(draws, mats);
  const double mean_shift = (adj.draws.colwise().mean() - draws.draws.colwise().mean()).cwiseAbs().maxCoeff();

  double invariance = 0.0;
  for (double c : {1e-3, 0.5, 40.0, 1e5})
    invariance = std::max(invariance, (design_effect_matrices(c * H, c * J).adjustment - mats.adjustment).cwiseAbs().maxCoeff());

  o.detail << "J=H change " << unchanged << " (tol 1e-10); doubling error " << spread << "; mean shift "
           << mean_shift << " (tol 1e-12); scale invariance " << invariance << " (tol 1e-10)";
  o.require(unchanged <= 1e-10, "J = H identity");
  o.require(spread <= 1e-12, "spread doubled");
  o.require(mean_shift <= 1e-12, "mean preserved");
  o.require(invariance <= 1e-10, "scale invariance");
}

void criterion4(Outcome& o) {
  const std::vector<double> sizes{1.0, 2.5, 0.7, 3.1, 1.9, 0.4};
  const std::vector<double> y{3.0, -1.0, 4.5, 2.0, 0.25, 7.0};
  const int N = 6, n = 2;
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  // P(s) = sum_{j in s} p_j / C(N-1, n-1)
  const double comb = N - 1;
  const auto pi = midzuno_inclusion_probs(sizes, n);
  std::vector<double> incl(N, 0.0);
  double expected_ht = 0.0, mass = 0.0;
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b) {
      const double p = (sizes[a] + sizes[b]) / total / comb;
      mass += p;
      incl[a] += p;
      incl[b] += p;
      expected_ht += p * (y[a] / pi[a] + y[b] / pi[b]);
    }
  double worst = 0.0;
  for (int j = 0; j < N; ++j) worst = std::max(worst, std::abs(incl[j] - pi[j]));
  const double bias = std::abs(expected_ht - std::accumulate(y.begin(), y.end(), 0.0));
  o.detail << "max |pi - enumerated| = " << worst << " (tol 1e-12); HT bias " << bias
           << " (tol 1e-10); design mass " << mass;
  o.require(worst <= 1e-12, "inclusion probabilities");
  o.require(bias <= 1e-10, "Horvitz-Thompson unbiasedness");
  o.require(std::abs(mass - 1.0) <= 1e-12, "design sums to one");
}

void criterion5(Outcome& o) {
  double worst_g = 0.0, worst_h = 0.0;
  for (Family fam : {Family::gaussian, Family::bernoulli_logit}) {
    for (Parameterization par : {Parameterization::fixed_intercepts, Parameterization::hierarchical}) {
      const auto s = testing::random_sample(4, 8, fam == Family::bernoulli_logit, 501);
      const ParamLayout L(fam, par, 4, 1);
      RandomStream r(502);
      for (int point = 0; point < 20; ++point) {
        Eigen::VectorXd t(L.size());
        for (int k = 0; k < L.size(); ++k) t[k] = 0.8 * r.normal();
        if (L.hierarchical()) t[L.log_sigma_u()] = -0.5 + 0.3 * r.normal();
        if (L.has_sigma_eps()) t[L.log_sigma_eps()] = 0.3 * r.normal();
        const Eigen::VectorXd g = weighted_score(t, L, s);
        const Eigen::MatrixXd Hm = weighted_hessian(t, L, s);
        for (int k = 0; k < L.size(); ++k) {
          const double h = 1e-5 * std::max(1.0, std::abs(t[k]));
          Eigen::VectorXd a = t, b = t;
          a[k] += h;
          b[k] -= h;
          const double fd = (log_pseudo_likelihood(a, L, s) - log_pseudo_likelihood(b, L, s)) / (2 * h);
          worst_g = std::max(worst_g, std::abs(g[k] - fd) / std::max(1.0, std::abs(fd)));
          const Eigen::VectorXd col = (weighted_score(a, L, s) - weighted_score(b, L, s)) / (2 * h);
          for (int c = 0; c < L.size(); ++c)
            worst_h = std::max(worst_h, std::abs(Hm(c, k) - col[c]) / std::max(1.0, std::abs(col[c])));
        }
      }
    }
  }
  o.detail << "score relative error " << worst_g << " (tol 1e-5); Hessian relative error " << worst_h
           << " (tol 1e-4)";
  o.require(worst_g < 1e-5, "score");
  o.require(worst_h < 1e-4, "Hessian");
}

void criterion6(Outcome& o) {
  const std::vector<double> w{1, 3, 2, 5, 1, 2};
  const auto s = testing::make_sample(1, {0, 0, 0, 0, 0, 0}, {1.2, 0.4, 2.2, -0.3, 1.0, 0.9},
                                      Eigen::MatrixXd(6, 0), w);
  const double sigma = 1.5;
  FitOptions opts;
  opts.fixed_log_sigma_u = 0.0;
  opts.fixed_log_sigma_eps = std::log(sigma);
  const ModelSpec spec = spec_for(Family::gaussian, Parameterization::hierarchical);
  const FitResult fit = fit_pseudo_map(s, s.w_norm, spec, opts);
  RandomStream rng(601, StreamPurpose::draws);
  const int K = 50000;
  const auto d = draw_pseudo_posterior(s, s.w_norm, spec, fit, K, rng, Provenance::weighted, opts);
  const Eigen::VectorXd b = d.draws.col(d.layout.beta0()) + d.draws.col(d.layout.u(0));
  const double mean = b.mean();
  const double var = (b.array() - mean).square().sum() / (K - 1);
  double sw = 0.0, swy = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    sw += s.w_norm[j];
    swy += s.w_norm[j] * s.y[j];
  }
  const double target_mean = swy / sw, target_var = sigma * sigma / sw;
  const double se_mean = std::sqrt(target_var / K), se_var = target_var * std::sqrt(2.0 / (K - 1));
  const double z_mean = (mean - target_mean) / se_mean, z_var = (var - target_var) / se_var;
  o.detail << "mean z = " << z_mean << ", variance z = " << z_var << " (|z| <= 3)";
  o.require(std::abs(z_mean) <= 3.0, "mean");
  o.require(std::abs(z_var) <= 3.0, "variance");
}

void criterion7(Outcome& o) {
  const PcPrior pc;
  const double target = -std::log(0.05) / 3.0;
  const int n = 200000;
  const double hi = 60.0, h = hi / n;
  double sum = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double sigma = std::max(k * h, 1e-300);
    sum += std::exp(pc.log_density(sigma)) * (k == 0 || k == n ? 1.0 : (k % 2 ? 4.0 : 2.0));
  }
  const double mass = sum * h / 3.0;
  o.detail << "rate " << pc.rate() << " vs " << target << "; integral " << mass << " (tol 1e-6)";
  o.require(std::abs(pc.rate() - target) <= 1e-9, "rate");
  o.require(std::abs(pc.rate() - 0.998577) <= 5e-7, "rate to six places");
  o.require(std::abs(mass - 1.0) <= 1e-6, "integral");
}

const MetricsRow* find_row(const SimulationResult& r, Method m) {
  for (const auto& row : r.metrics)
    if (row.method == m) return &row;
  return nullptr;
}

void write_timing(const Settings& s, int criterion, double seconds) {
  if (s.timing_dir.empty()) return;
  fs::create_directories(s.timing_dir);
  std::ofstream(s.timing_dir / ("criterion_" + std::to_string(criterion) + ".seconds")) << seconds << '\n';
}

SimulationResult run_config(const Settings& s, int criterion, const std::string& name) {
  RunConfig cfg = load_run_config((s.config_dir / (name + ".json")).string());
  cfg.threads = s.threads;
  const auto t0 = std::chrono::steady_clock::now();
  SimulationResult r = run_simulation(cfg);
  write_timing(s, criterion, seconds_since(t0));
  if (!s.timing_dir.empty()) {
    cfg.output_dir = (s.timing_dir / name).string();
    write_simulation_outputs(cfg, r);
  }
  return r;
}

void report_rows(Outcome& o, const SimulationResult& r) {
  for (const auto& row : r.metrics)
    o.detail << ' ' << to_string(row.method) << "(cov " << 100.0 * row.cov90 << "%, rmse " << 100.0 * row.rmse
             << ", mil " << 100.0 * row.mil90 << ")";
  o.detail << "; failures " << r.failures.size();
}

void criterion8(Outcome& o, const Settings& s) {
  const SimulationResult r = run_config(s, 8, "table1_pps2");
  const MetricsRow* u = find_row(r, Method::unwt);
  const MetricsRow* w = find_row(r, Method::wtrscl);
  o.require(u && w, "unwt and wtrscl rows present");
  if (!u || !w) return;
  report_rows(o, r);
  o.require(u->cov90 >= 0.46 && u->cov90 <= 0.62, "unwt coverage in [0.46, 0.62]");
  o.require(w->cov90 >= 0.78 && w->cov90 <= 0.90, "wtrscl coverage in [0.78, 0.90]");
  o.require(100.0 * w->mil90 >= 170.0 && 100.0 * w->mil90 <= 230.0, "wtrscl MILx100 in [170, 230]");
  o.require(w->rmse <= u->rmse, "wtrscl RMSE <= unwt RMSE");
}

void criterion9(Outcome& o, const Settings& s) {
  const SimulationResult r = run_config(s, 9, "table1_srs");
  report_rows(o, r);
  for (Method m : {Method::unwt, Method::wt, Method::wtrscl}) {
    const MetricsRow* row = find_row(r, m);
    o.require(row != nullptr, std::string(to_string(m)) + " row present");
    if (row) o.require(row->cov90 >= 0.85 && row->cov90 <= 0.94, std::string(to_string(m)) + " coverage in [0.85, 0.94]");
  }
  const MetricsRow* u = find_row(r, Method::unwt);
  const MetricsRow* w = find_row(r, Method::wt);
  if (u && w) {
    o.require(100.0 * std::abs(w->rmse - u->rmse) < 0.5, "|wt - unwt| RMSEx100 < 0.5");
    o.require(100.0 * std::abs(w->mae - u->mae) < 0.5, "|wt - unwt| MAEx100 < 0.5");
    o.require(100.0 * std::abs(w->mil90 - u->mil90) < 0.5, "|wt - unwt| MILx100 < 0.5");
    o.require(100.0 * std::abs(w->cov90 - u->cov90) < 0.5, "|wt - unwt| coverage < 0.5 points");
  }
}

void criterion10(Outcome& o, const Settings& s) {
  const SimulationResult r = run_config(s, 10, "table3_pps2");
  const MetricsRow* w = find_row(r, Method::wt);
  const MetricsRow* x = find_row(r, Method::wtrscl);
  o.require(w && x, "wt and wtrscl rows present");
  if (!w || !x) return;
  report_rows(o, r);
  o.require(x->cov90 - w->cov90 >= 0.05, "wtrscl coverage exceeds wt by >= 5 points");
  o.require(x->cov90 >= 0.79 && x->cov90 <= 0.91, "wtrscl coverage in [0.79, 0.91]");
}

void criterion11(Outcome& o, const Settings& s) {
  const SimulationResult r = run_config(s, 11, "table2_pps2");
  const MetricsRow* u = find_row(r, Method::unwt);
  const MetricsRow* x = find_row(r, Method::wtrscl);
  o.require(u && x, "unwt and wtrscl rows present");
  if (!u || !x) return;
  report_rows(o, r);
  o.require(u->cov90 <= 0.55, "unwt coverage <= 0.55");
  o.require(x->cov90 >= 0.84 && x->cov90 <= 0.94, "wtrscl coverage in [0.84, 0.94]");
}

using PropertyCheck = std::function<void(Outcome&)>;

const std::map<int, PropertyCheck>& property_checks() {
  static const std::map<int, PropertyCheck> checks{{1, criterion1}, {2, criterion2}, {3, criterion3},
                                                   {4, criterion4}, {5, criterion5}, {6, criterion6},
                                                   {7, criterion7}};
  return checks;
}

void criterion12(Outcome& o, const Settings& s) {
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& [n, check] : property_checks()) {
    Outcome ignored;
    check(ignored);
  }
  const double fast = seconds_since(t0);
  o.detail << "criteria 1-7: " << fast << " s (limit 60);";
  o.require(fast < 60.0, "criteria 1-7 under one minute");

  const std::map<int, std::function<void(Outcome&, const Settings&)>> sims{
      {8, criterion8}, {9, criterion9}, {10, criterion10}, {11, criterion11}};
  for (const auto& [n, run] : sims) {
    const fs::path file = s.timing_dir / ("criterion_" + std::to_string(n) + ".seconds");
    double seconds = -1.0;
    if (!s.timing_dir.empty() && fs::exists(file)) std::ifstream(file) >> seconds;
    if (seconds < 0.0) {
      Settings local = s;
      if (local.timing_dir.empty()) local.timing_dir = fs::temp_directory_path() / "pbsae_acceptance";
      Outcome ignored;
      run(ignored, local);
      std::ifstream(local.timing_dir / ("criterion_" + std::to_string(n) + ".seconds")) >> seconds;
    }
    o.detail << " criterion " << n << ": " << seconds << " s;";
    o.require(seconds >= 0.0 && seconds < 1800.0, "criterion " + std::to_string(n) + " under 30 minutes");
  }
}

bool run_criterion(int n, const Settings& s) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (const auto it = property_checks().find(n); it != property_checks().end()) {
      it->second(o);
    } else if (n == 8) {
      criterion8(o, s);
    } else if (n == 9) {
      criterion9(o, s);
    } else if (n == 10) {
      criterion10(o, s);
    } else if (n == 11) {
      criterion11(o, s);
    } else if (n == 12) {
      criterion12(o, s);
    } else {
      o.require(false, "unknown criterion");
    }
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  std::cout << "CRITERION " << n << ": " << (o.pass ? "PASS" : "FAIL") << " (" << seconds_since(t0) << " s) "
            << o.detail.str() << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int criterion = 0;
  std::string timing_dir, config_dir;
  Settings settings;
  app.add_option("--criterion", criterion, "Criterion 1-12; 0 runs all")->check(CLI::Range(0, 12));
  app.add_option("--timing-dir", timing_dir, "Directory for simulation timings and metrics");
  app.add_option("--config-dir", config_dir, "Directory holding the simulation configs");
  app.add_option("--threads", settings.threads, "Worker threads for simulations (0: all cores)");
  CLI11_PARSE(app, argc, argv);
  settings.timing_dir = timing_dir;
  if (!config_dir.empty()) settings.config_dir = config_dir;

  bool ok = true;
  if (criterion == 0) {
    for (int n = 1; n <= 12; ++n) ok = run_criterion(n, settings) && ok;
  } else {
    ok = run_criterion(criterion, settings);
  }
  return ok ? 0 : 1;
}
