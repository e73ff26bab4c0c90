#include "pbsae/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "pbsae/csv.hpp"
#include "pbsae/error.hpp"

namespace pbsae {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) ==
        known.end())
      throw InvalidArgument("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read_key(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(std::string("config: key '") + key + "' has the wrong type");
  }
}

PcPrior parse_pc(const json& j, const std::string& where) {
  PcPrior p;
  if (!j.is_object()) throw InvalidArgument("config: " + where + " must be an object");
  reject_unknown(j, {"upper", "alpha"}, where);
  read_key(j, "upper", p.upper);
  read_key(j, "alpha", p.alpha);
  p.validate();
  return p;
}

std::filesystem::path rep_path(const std::string& dir, const std::string& stem, int rep,
                               const std::string& ext) {
  std::ostringstream name;
  name << stem << '_' << std::setw(4) << std::setfill('0') << rep << ext;
  return std::filesystem::path(dir) / name.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  return out;
}

// Orders labels numerically when both parse as numbers, lexically otherwise.
bool label_less(const std::string& a, const std::string& b) {
  double x = 0.0, y = 0.0;
  const auto ra = std::from_chars(a.data(), a.data() + a.size(), x);
  const auto rb = std::from_chars(b.data(), b.data() + b.size(), y);
  const bool na = ra.ec == std::errc() && ra.ptr == a.data() + a.size();
  const bool nb = rb.ec == std::errc() && rb.ptr == b.data() + b.size();
  if (na && nb && x != y) return x < y;
  if (na != nb) return na;
  return a < b;
}

RandomStream aux_stream(const RunConfig& cfg) {
  return RandomStream(cfg.population.seed, StreamPurpose::aux_frame, 0);
}

RandomStream response_stream(const RunConfig& cfg, int rep) {
  return RandomStream(cfg.master_seed, StreamPurpose::responses,
                      cfg.fixed_responses ? 0u : static_cast<std::uint64_t>(rep));
}

}  // namespace

void RunConfig::validate() const {
  population.validate();
  prior.sd_u.validate();
  prior.sd_eps.validate();
  if (replications < 1) throw InvalidArgument("replications must be >= 1");
  if (methods.empty()) throw InvalidArgument("methods must be nonempty");
  const bool model = std::any_of(methods.begin(), methods.end(), [](Method m) {
    return m == Method::unwt || m == Method::wt || m == Method::wtrscl;
  });
  if (model && draws_K < 2) throw InvalidArgument("draws_K must be >= 2");
  if (std::find(methods.begin(), methods.end(), Method::wtrscl) != methods.end() && resample_B < 2)
    throw InvalidArgument("resample_B must be >= 2");
  if (threads < 0) throw InvalidArgument("threads must be >= 0");
  if (export_replication && (*export_replication < 0 || *export_replication >= replications))
    throw InvalidArgument("export_replication must index an existing replication");
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw InvalidArgument("config: top level must be an object");
  reject_unknown(root,
                 {"population", "design", "methods", "replications", "draws_K", "resample_B",
                  "master_seed", "output_dir", "fixed_responses", "threads", "write_estimates",
                  "write_diagnostics", "export_replication", "prior"},
                 "top level");
  RunConfig cfg;
  if (root.contains("population")) {
    const json& p = root["population"];
    reject_unknown(p,
                   {"areas", "clusters_per_area", "cluster_size", "beta0", "beta1", "beta2",
                    "noise_sd", "family", "seed", "size_param", "size_param_kind", "standardize_x1"},
                   "population");
    auto& c = cfg.population;
    read_key(p, "areas", c.m);
    read_key(p, "clusters_per_area", c.clusters_per_area);
    read_key(p, "cluster_size", c.cluster_size);
    read_key(p, "beta0", c.beta0);
    read_key(p, "beta1", c.beta1);
    read_key(p, "beta2", c.beta2);
    read_key(p, "noise_sd", c.noise_sd);
    read_key(p, "seed", c.seed);
    read_key(p, "size_param", c.size_param);
    read_key(p, "standardize_x1", c.standardize_x1);
    std::string s;
    read_key(p, "family", s);
    if (!s.empty()) c.family = parse_family(s);
    s.clear();
    read_key(p, "size_param_kind", s);
    if (s == "mean") c.size_param_kind = ExpParameterization::mean;
    else if (!s.empty() && s != "rate") throw InvalidArgument("config: size_param_kind must be rate or mean");
  }
  if (root.contains("design")) {
    const json& d = root["design"];
    reject_unknown(d,
                   {"kind", "n_per_area", "clusters_per_area_sampled", "units_per_cluster_sampled",
                    "pps_method"},
                   "design");
    std::string s;
    read_key(d, "kind", s);
    if (!s.empty()) cfg.design.design = parse_design(s);
    read_key(d, "n_per_area", cfg.design.n_per_area);
    read_key(d, "clusters_per_area_sampled", cfg.design.clusters_per_area_sampled);
    read_key(d, "units_per_cluster_sampled", cfg.design.units_per_cluster_sampled);
    s.clear();
    read_key(d, "pps_method", s);
    if (!s.empty()) cfg.design.pps_method = parse_pps_method(s);
  }
  if (root.contains("methods")) {
    std::vector<std::string> names;
    read_key(root, "methods", names);
    cfg.methods.clear();
    for (const auto& n : names) {
      const Method m = parse_method(n);
      if (std::find(cfg.methods.begin(), cfg.methods.end(), m) == cfg.methods.end()) cfg.methods.push_back(m);
    }
  }
  read_key(root, "replications", cfg.replications);
  read_key(root, "draws_K", cfg.draws_K);
  read_key(root, "resample_B", cfg.resample_B);
  read_key(root, "master_seed", cfg.master_seed);
  read_key(root, "output_dir", cfg.output_dir);
  read_key(root, "fixed_responses", cfg.fixed_responses);
  read_key(root, "threads", cfg.threads);
  read_key(root, "write_estimates", cfg.write_estimates);
  read_key(root, "write_diagnostics", cfg.write_diagnostics);
  if (root.contains("export_replication") && !root["export_replication"].is_null()) {
    int r = 0;
    read_key(root, "export_replication", r);
    cfg.export_replication = r;
  }
  if (root.contains("prior")) {
    const json& p = root["prior"];
    reject_unknown(p, {"sd_u", "sd_eps"}, "prior");
    if (p.contains("sd_u")) cfg.prior.sd_u = parse_pc(p["sd_u"], "prior.sd_u");
    if (p.contains("sd_eps")) cfg.prior.sd_eps = parse_pc(p["sd_eps"], "prior.sd_eps");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

PipelineOptions pipeline_options(const RunConfig& cfg, int replication) {
  PipelineOptions o;
  o.methods = cfg.methods;
  o.draws_K = cfg.draws_K;
  o.resample_B = cfg.resample_B;
  o.seed = cfg.master_seed;
  o.stream_index = static_cast<std::uint64_t>(replication);
  o.prior = cfg.prior;
  return o;
}

ReplicationOutput run_replication(const FinitePopulation& aux, const AreaFrame& area_frame,
                                  const RunConfig& cfg, int rep) {
  ReplicationOutput out;
  out.replication = rep;
  try {
    RandomStream rr = response_stream(cfg, rep);
    const FinitePopulation pop = simulate_responses(aux, cfg.population, rr);
    out.truths = finite_area_means(pop);
    RandomStream rs(cfg.master_seed, StreamPurpose::sample, static_cast<std::uint64_t>(rep));
    DrawnSample sample = draw_sample(pop, cfg.design, rs);
    normalize_weights(sample);
    PipelineResult res = estimate_areas(sample, area_frame, cfg.population.family, pipeline_options(cfg, rep));
    out.tables = std::move(res.tables);
    for (const auto& f : res.failures) out.failures.push_back({rep, to_string(f.method), f.message});
    out.warnings = std::move(res.warnings);
    if (cfg.write_diagnostics) out.design_effect = std::move(res.design_effect);
  } catch (const std::exception& e) {
    out.failures.push_back({rep, "*", e.what()});
  }
  return out;
}

SimulationResult run_simulation(const RunConfig& cfg, bool keep_replications) {
  cfg.validate();
  RandomStream ra = aux_stream(cfg);
  const FinitePopulation aux = generate_aux_frame(cfg.population, ra);
  cfg.design.validate(aux);
  const AreaFrame frame = AreaFrame::from_population(aux);

  std::vector<ReplicationOutput> reps(static_cast<std::size_t>(cfg.replications));
  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, cfg.replications);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < cfg.replications; r = next++) reps[r] = run_replication(aux, frame, cfg, r);
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SimulationResult result;
  for (const auto& r : reps)
    result.failures.insert(result.failures.end(), r.failures.begin(), r.failures.end());
  const std::string design = to_string(cfg.design.design);
  for (Method m : cfg.methods) {
    std::vector<AreaEstimateTable> tables;
    std::vector<AreaTruths> truths;
    for (const auto& r : reps) {
      const auto it = std::find_if(r.tables.begin(), r.tables.end(), [&](const auto& t) { return t.first == m; });
      if (it == r.tables.end()) continue;
      try {
        (void)replication_metrics(it->second, r.truths);
      } catch (const std::exception& e) {
        result.failures.push_back({r.replication, to_string(m), e.what()});
        continue;
      }
      tables.push_back(it->second);
      truths.push_back(r.truths);
    }
    if (tables.empty()) {
      MetricsRow row;
      row.design = design;
      row.method = m;
      row.rmse = row.mae = row.mil90 = row.cov90 = std::numeric_limits<double>::quiet_NaN();
      result.metrics.push_back(row);
    } else {
      result.metrics.push_back(compute_metrics(tables, truths, design, m));
    }
  }
  std::stable_sort(result.failures.begin(), result.failures.end(),
                   [](const auto& a, const auto& b) { return a.replication < b.replication; });
  if (keep_replications) result.replications = std::move(reps);
  return result;
}

void write_simulation_outputs(const RunConfig& cfg, const SimulationResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  {
    auto out = open_out(fs::path(cfg.output_dir) / "metrics.csv");
    write_metrics_csv(result.metrics, out);
  }
  {
    auto out = open_out(fs::path(cfg.output_dir) / "failures.csv");
    out << "replication,method,message\n";
    for (const auto& f : result.failures) {
      std::string msg = f.message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << f.replication << ',' << f.method << ',' << msg << '\n';
    }
  }
  std::vector<std::string> labels;
  for (int i = 0; i < cfg.population.m; ++i) labels.push_back(std::to_string(i + 1));
  for (const auto& r : result.replications) {
    if (cfg.write_estimates) {
      fs::create_directories(fs::path(cfg.output_dir) / "estimates");
      auto out = open_out(rep_path(cfg.output_dir + "/estimates", "rep", r.replication, ".csv"));
      bool first = true;
      for (const auto& [m, t] : r.tables) {
        std::ostringstream part;
        write_estimates_csv(t, labels, part);
        std::string s = part.str();
        if (!first) s.erase(0, s.find('\n') + 1);
        out << s;
        first = false;
      }
    }
    if (cfg.write_diagnostics && r.design_effect) {
      fs::create_directories(fs::path(cfg.output_dir) / "diagnostics");
      auto out = open_out(rep_path(cfg.output_dir + "/diagnostics", "design_effect", r.replication, ".csv"));
      write_design_effect_csv(*r.design_effect, out);
    }
  }
  if (cfg.export_replication) {
    const int rep = *cfg.export_replication;
    RandomStream ra = aux_stream(cfg);
    const FinitePopulation aux = generate_aux_frame(cfg.population, ra);
    RandomStream rr = response_stream(cfg, rep);
    const FinitePopulation pop = simulate_responses(aux, cfg.population, rr);
    RandomStream rs(cfg.master_seed, StreamPurpose::sample, static_cast<std::uint64_t>(rep));
    DrawnSample sample = draw_sample(pop, cfg.design, rs);
    normalize_weights(sample);
    auto pout = open_out(rep_path(cfg.output_dir, "population", rep, ".csv"));
    write_population_csv(pop, pout);
    auto sout = open_out(rep_path(cfg.output_dir, "sample", rep, ".csv"));
    write_sample_csv(sample, sout);
  }
}

EstimateInputs load_estimate_inputs(const EstimateConfig& cfg) {
  if (cfg.covariates.empty()) throw InvalidArgument("estimate: at least one covariate is required");
  const csv::Table data = csv::Table::read(cfg.data_csv);
  const csv::Table frame = csv::Table::read(cfg.frame_csv);
  const std::string weight_col = !data.has_column("weight") && data.has_column("w_raw") ? "w_raw" : "weight";
  std::vector<std::string> need{"area", "psu_id", "stratum_id", weight_col, "y"};
  need.insert(need.end(), cfg.covariates.begin(), cfg.covariates.end());
  csv::require_columns(data, need);
  const bool area_level = frame.has_column("pop_size");
  std::vector<std::string> fneed{"area"};
  if (area_level) fneed.push_back("pop_size");
  fneed.insert(fneed.end(), cfg.covariates.begin(), cfg.covariates.end());
  csv::require_columns(frame, fneed);
  if (area_level && cfg.family != Family::gaussian)
    throw InvalidArgument("estimate: the logit family needs a unit-level frame");

  // Area order follows first appearance in the frame.
  std::vector<std::string> labels;
  std::map<std::string, int> area_index;
  const std::size_t fa = frame.column("area");
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    const std::string& a = frame.cell(r, fa);
    if (area_index.emplace(a, static_cast<int>(labels.size())).second) labels.push_back(a);
  }
  const int m = static_cast<int>(labels.size());
  if (m == 0) throw InvalidArgument("estimate: frame has no rows");
  const int p = static_cast<int>(cfg.covariates.size());

  EstimateInputs in;
  std::vector<std::size_t> fcols;
  for (const auto& c : cfg.covariates) fcols.push_back(frame.column(c));
  if (area_level) {
    if (static_cast<int>(frame.rows()) != m) throw InvalidArgument("estimate: area-level frame repeats an area");
    in.frame.labels = labels;
    in.frame.pop_size.resize(m);
    in.frame.covariate_means.resize(m, p);
    const std::size_t ps = frame.column("pop_size");
    for (std::size_t r = 0; r < frame.rows(); ++r) {
      const int i = area_index.at(frame.cell(r, fa));
      in.frame.pop_size[i] = frame.number(r, ps);
      if (!(in.frame.pop_size[i] > 0.0)) throw InvalidArgument("estimate: pop_size must be > 0");
      for (int k = 0; k < p; ++k) in.frame.covariate_means(i, k) = frame.number(r, fcols[k]);
    }
  } else {
    std::vector<int> area(frame.rows());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(frame.rows()), p);
    for (std::size_t r = 0; r < frame.rows(); ++r) {
      area[r] = area_index.at(frame.cell(r, fa));
      for (int k = 0; k < p; ++k) x(static_cast<Eigen::Index>(r), k) = frame.number(r, fcols[k]);
    }
    in.frame = AreaFrame::from_units(m, area, x, labels);
  }
  if (!in.frame.covariate_means.allFinite()) throw InvalidArgument("estimate: frame covariates must be finite");

  const std::size_t n = data.rows();
  if (n == 0) throw InvalidArgument("estimate: data has no rows");
  const std::size_t ca = data.column("area"), cp = data.column("psu_id"), cs = data.column("stratum_id"),
                    cw = data.column(weight_col), cy = data.column("y");
  std::vector<std::size_t> dcols;
  for (const auto& c : cfg.covariates) dcols.push_back(data.column(c));
  const bool has_uid = data.has_column("unit_id");

  // Strata and PSUs are relabeled by rank so that their order is preserved.
  std::vector<std::string> strata_labels;
  for (std::size_t r = 0; r < n; ++r) strata_labels.push_back(data.cell(r, cs));
  std::vector<std::string> sorted_strata = strata_labels;
  std::sort(sorted_strata.begin(), sorted_strata.end(), label_less);
  sorted_strata.erase(std::unique(sorted_strata.begin(), sorted_strata.end()), sorted_strata.end());
  auto stratum_rank = [&](const std::string& s) {
    return static_cast<int>(std::lower_bound(sorted_strata.begin(), sorted_strata.end(), s, label_less) -
                            sorted_strata.begin());
  };
  std::vector<std::pair<int, std::string>> psu_keys;
  for (std::size_t r = 0; r < n; ++r) psu_keys.emplace_back(stratum_rank(strata_labels[r]), data.cell(r, cp));
  auto psu_less = [](const std::pair<int, std::string>& a, const std::pair<int, std::string>& b) {
    if (a.first != b.first) return a.first < b.first;
    return label_less(a.second, b.second);
  };
  std::vector<std::pair<int, std::string>> sorted_psus = psu_keys;
  std::sort(sorted_psus.begin(), sorted_psus.end(), psu_less);
  sorted_psus.erase(std::unique(sorted_psus.begin(), sorted_psus.end()), sorted_psus.end());

  DrawnSample& s = in.sample;
  s.num_areas = m;
  s.covariates.resize(static_cast<Eigen::Index>(n), p);
  s.covariate_names = cfg.covariates;
  for (std::size_t r = 0; r < n; ++r) {
    const auto it = area_index.find(data.cell(r, ca));
    if (it == area_index.end())
      throw InvalidArgument("estimate: area '" + data.cell(r, ca) + "' in data is not in the frame");
    const double w = data.number(r, cw);
    if (!(w > 0.0) || !std::isfinite(w))
      throw InvalidArgument("estimate: weight must be > 0 (row " + std::to_string(r + 1) + ")");
    const double y = data.number(r, cy);
    if (!std::isfinite(y)) throw InvalidArgument("estimate: y must be finite (row " + std::to_string(r + 1) + ")");
    if (cfg.family == Family::bernoulli_logit && y != 0.0 && y != 1.0)
      throw InvalidArgument("estimate: logit family needs y in {0, 1}");
    s.unit_id.push_back(has_uid ? static_cast<std::int64_t>(data.number(r, data.column("unit_id")))
                                : static_cast<std::int64_t>(r + 1));
    s.area.push_back(it->second);
    s.cluster.push_back(0);
    s.stratum.push_back(psu_keys[r].first);
    s.psu.push_back(static_cast<int>(
        std::lower_bound(sorted_psus.begin(), sorted_psus.end(), psu_keys[r], psu_less) - sorted_psus.begin()));
    s.pi.push_back(1.0 / w);
    s.pi_psu.push_back(std::numeric_limits<double>::quiet_NaN());
    s.w_raw.push_back(w);
    s.y.push_back(y);
    for (int k = 0; k < p; ++k) s.covariates(static_cast<Eigen::Index>(r), k) = data.number(r, dcols[k]);
  }
  if (!s.covariates.allFinite()) throw InvalidArgument("estimate: data covariates must be finite");
  normalize_weights(s);
  return in;
}

EstimateOutput run_estimate(const EstimateConfig& cfg) {
  if (cfg.draws_K < 2) throw InvalidArgument("estimate: draws must be >= 2");
  const EstimateInputs in = load_estimate_inputs(cfg);
  PipelineOptions opts;
  opts.methods = cfg.methods;
  opts.draws_K = cfg.draws_K;
  opts.resample_B = cfg.resample_B;
  opts.seed = cfg.seed;
  opts.stream_index = cfg.stream_index;
  PipelineResult res = estimate_areas(in.sample, in.frame, cfg.family, opts);
  EstimateOutput out;
  out.labels = in.frame.labels;
  for (auto& [m, t] : res.tables) out.rows.insert(out.rows.end(), t.begin(), t.end());
  out.failures = res.failures;
  if (!cfg.out_csv.empty()) {
    std::ofstream f(cfg.out_csv);
    if (!f) throw InvalidArgument("cannot write '" + cfg.out_csv + "'");
    write_estimates_csv(out.rows, out.labels, f);
  }
  if (!cfg.diagnostics_csv.empty() && res.design_effect) {
    std::ofstream f(cfg.diagnostics_csv);
    if (!f) throw InvalidArgument("cannot write '" + cfg.diagnostics_csv + "'");
    write_design_effect_csv(*res.design_effect, f);
  }
  return out;
}

}  // namespace pbsae
