#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pbsae/csv.hpp"
#include "pbsae/error.hpp"
#include "pbsae/harness.hpp"

using namespace pbsae;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(PBSAE_TEST_TMP) / "harness" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

RunConfig small_config(const std::string& kind = "PPS2") {
  return parse_run_config(R"({
    "population": {"areas": 4, "clusters_per_area": 10, "cluster_size": 6, "seed": 99},
    "design": {"kind": ")" + kind + R"(", "n_per_area": 6, "clusters_per_area_sampled": 3,
               "units_per_cluster_sampled": 2},
    "replications": 4, "draws_K": 200, "resample_B": 20, "master_seed": 5, "threads": 1
  })");
}

// Data file for estimate mode: two areas, two strata, and one area absent.
const char* kData =
    "area,psu_id,stratum_id,weight,y,x1\n"
    "a,1,1,2,1.0,0.5\n"
    "a,2,1,3,2.0,-0.5\n"
    "a,3,1,2,1.5,1.0\n"
    "b,4,2,4,0.0,0.2\n"
    "b,5,2,1,-1.0,-1.2\n"
    "b,6,2,2,0.5,0.3\n";
const char* kFrame =
    "area,x1\n"
    "a,0.5\na,-0.5\na,1.0\na,0.0\n"
    "b,0.2\nb,-1.2\nb,0.3\nb,0.1\n"
    "c,0.4\nc,-0.3\n";

EstimateConfig estimate_config(const fs::path& dir) {
  EstimateConfig c;
  c.data_csv = (dir / "data.csv").string();
  c.frame_csv = (dir / "frame.csv").string();
  c.draws_K = 200;
  c.resample_B = 20;
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = small_config();
  CHECK(c.population.m == 4);
  CHECK(c.design.design == DesignKind::pps2);
  CHECK(c.methods.size() == 5);
  CHECK(c.master_seed == 5);
  CHECK_THROWS_AS(parse_run_config("{"), InvalidArgument);
  CHECK_THROWS_AS(parse_run_config(R"({"replicates": 3})"), InvalidArgument);
  CHECK_THROWS_AS(parse_run_config(R"({"population": {"area": 3}})"), InvalidArgument);
  CHECK_THROWS_AS(parse_run_config(R"({"replications": "many"})"), InvalidArgument);
  CHECK_THROWS_AS(parse_run_config(R"({"replications": 0})"), InvalidArgument);
  CHECK_THROWS_AS(parse_run_config(R"({"methods": []})"), InvalidArgument);
  CHECK_THROWS_AS(parse_run_config(R"({"methods": ["bayes"]})"), InvalidArgument);
  CHECK_THROWS_AS(parse_run_config(R"({"resample_B": 1})"), InvalidArgument);
  const RunConfig p = parse_run_config(R"({"prior": {"sd_u": {"upper": 2, "alpha": 0.05}}})");
  CHECK(p.prior.sd_u.upper == 2.0);
  CHECK_THROWS_AS(parse_run_config(R"({"prior": {"sd_u": {"upper": -1, "alpha": 0.05}}})"), InvalidArgument);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"table1_srs", "table1_pps1", "table1_pps2", "table2_pps2", "table3_pps2", "table4_pps2"}) {
    const fs::path p = fs::path(PBSAE_SOURCE_DIR) / "configs" / (std::string(name) + ".json");
    const RunConfig c = load_run_config(p.string());
    CHECK(c.replications == 200);
    CHECK(c.population.m == 20);
  }
}

TEST_CASE("census hajek has zero error") {
  RunConfig c = small_config("SRS");
  c.design.n_per_area = 60;
  c.methods = {Method::hajek};
  c.replications = 1;
  const SimulationResult r = run_simulation(c);
  REQUIRE(r.metrics.size() == 1);
  CHECK(r.metrics[0].rmse < 1e-12);
  CHECK(r.metrics[0].mil90 < 1e-12);
  CHECK(r.failures.empty());
}

TEST_CASE("results do not depend on the thread count") {
  RunConfig c = small_config();
  const SimulationResult one = run_simulation(c);
  c.threads = 3;
  const SimulationResult three = run_simulation(c);
  REQUIRE(one.metrics.size() == three.metrics.size());
  for (std::size_t k = 0; k < one.metrics.size(); ++k) {
    CHECK(one.metrics[k].rmse == three.metrics[k].rmse);
    CHECK(one.metrics[k].cov90 == three.metrics[k].cov90);
    CHECK(one.metrics[k].mil90 == three.metrics[k].mil90);
  }
  CHECK(one.failures.size() == three.failures.size());
}

TEST_CASE("fixed responses keep the truths across replications") {
  RunConfig c = small_config();
  c.methods = {Method::hajek};
  c.fixed_responses = true;
  const SimulationResult r = run_simulation(c, true);
  REQUIRE(r.replications.size() == 4);
  CHECK(r.replications[0].truths.ybar == r.replications[3].truths.ybar);
  c.fixed_responses = false;
  const SimulationResult v = run_simulation(c, true);
  CHECK(v.replications[0].truths.ybar != v.replications[3].truths.ybar);
}

TEST_CASE("simulation output files") {
  RunConfig c = small_config();
  c.replications = 2;
  c.output_dir = scratch("outputs").string();
  c.write_estimates = true;
  c.write_diagnostics = true;
  c.export_replication = 1;
  const SimulationResult r = run_simulation(c, true);
  write_simulation_outputs(c, r);
  const fs::path out(c.output_dir);
  const csv::Table metrics = csv::Table::read((out / "metrics.csv").string());
  CHECK(metrics.rows() == 5);
  CHECK(metrics.cell(0, metrics.column("design")) == "PPS2");
  CHECK(fs::exists(out / "failures.csv"));
  CHECK(fs::exists(out / "estimates" / "rep_0000.csv"));
  CHECK(fs::exists(out / "diagnostics" / "design_effect_0001.csv"));
  const csv::Table sample = csv::Table::read((out / "sample_0001.csv").string());
  CHECK(sample.rows() == 24);
  const csv::Table pop = csv::Table::read((out / "population_0001.csv").string());
  CHECK(pop.rows() == 240);
}

TEST_CASE("exported replication round-trips through estimate mode") {
  RunConfig c = small_config();
  c.replications = 2;
  c.output_dir = scratch("roundtrip").string();
  c.export_replication = 1;
  const SimulationResult r = run_simulation(c, true);
  write_simulation_outputs(c, r);

  EstimateConfig e;
  e.data_csv = (fs::path(c.output_dir) / "sample_0001.csv").string();
  e.frame_csv = (fs::path(c.output_dir) / "population_0001.csv").string();
  e.draws_K = c.draws_K;
  e.resample_B = c.resample_B;
  e.seed = c.master_seed;
  e.stream_index = 1;
  const EstimateOutput est = run_estimate(e);
  CHECK(est.failures.empty());
  CHECK(est.labels == std::vector<std::string>{"1", "2", "3", "4"});

  const ReplicationOutput& mem = r.replications[1];
  std::size_t row = 0;
  for (const auto& [m, table] : mem.tables) {
    for (const AreaEstimate& a : table) {
      REQUIRE(row < est.rows.size());
      const AreaEstimate& b = est.rows[row++];
      CHECK(b.method == m);
      CHECK(b.area == a.area);
      CHECK(b.point == doctest::Approx(a.point).epsilon(1e-10));
      CHECK(b.lo90 == doctest::Approx(a.lo90).epsilon(1e-10));
      CHECK(b.hi90 == doctest::Approx(a.hi90).epsilon(1e-10));
    }
  }
  CHECK(row == est.rows.size());
}

TEST_CASE("estimate mode with an absent area") {
  const fs::path dir = scratch("absent");
  write_text(dir / "data.csv", kData);
  write_text(dir / "frame.csv", kFrame);
  EstimateConfig cfg = estimate_config(dir);
  cfg.methods = {Method::hajek, Method::unwt};
  cfg.out_csv = (dir / "out.csv").string();
  const EstimateOutput out = run_estimate(cfg);
  CHECK(out.failures.empty());
  CHECK(out.labels == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(out.rows.size() == 6);
  CHECK(out.rows[0].point == doctest::Approx((2.0 + 6.0 + 3.0) / 7.0));
  CHECK(out.rows[2].missing);
  CHECK(std::isnan(out.rows[2].point));
  CHECK(!out.rows[5].missing);
  CHECK(std::isfinite(out.rows[5].point));
  const csv::Table t = csv::Table::read(cfg.out_csv);
  CHECK(t.rows() == 6);
  CHECK(t.cell(2, t.column("area")) == "c");
  CHECK(t.cell(2, t.column("missing")) == "1");
}

TEST_CASE("estimate mode input errors") {
  const fs::path dir = scratch("errors");
  write_text(dir / "frame.csv", kFrame);
  EstimateConfig cfg = estimate_config(dir);

  write_text(dir / "data.csv", "area,psu_id,stratum_id,weight,x1\na,1,1,2,0.5\n");
  try {
    load_estimate_inputs(cfg);
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.column() == "y");
  }

  write_text(dir / "data.csv", "area,psu_id,stratum_id,weight,y,x1\na,1,1,0,1.0,0.5\na,2,1,1,1.0,0.5\n");
  CHECK_THROWS_AS(load_estimate_inputs(cfg), InvalidArgument);

  write_text(dir / "data.csv", "area,psu_id,stratum_id,weight,y,x1\nz,1,1,1,1.0,0.5\n");
  CHECK_THROWS_AS(load_estimate_inputs(cfg), InvalidArgument);

  write_text(dir / "data.csv", "area,psu_id,stratum_id,w_raw,y,x1\na,1,1,2,0.3,0.5\n");
  cfg.family = Family::bernoulli_logit;
  CHECK_THROWS_AS(load_estimate_inputs(cfg), InvalidArgument);
  cfg.family = Family::gaussian;
  CHECK(load_estimate_inputs(cfg).sample.w_raw[0] == 2.0);
}

TEST_CASE("estimate mode relabels strata and PSUs by rank") {
  const fs::path dir = scratch("labels");
  write_text(dir / "frame.csv", kFrame);
  write_text(dir / "data.csv",
             "area,psu_id,stratum_id,weight,y,x1\n"
             "a,10,2,1,1,0\na,9,2,1,2,0\nb,2,10,1,3,0\nb,2,10,1,4,0\n");
  const EstimateInputs in = load_estimate_inputs(estimate_config(dir));
  CHECK(in.sample.stratum == std::vector<int>{0, 0, 1, 1});
  CHECK(in.sample.psu == std::vector<int>{1, 0, 2, 2});
}

TEST_CASE("estimate mode with an area-level frame") {
  const fs::path dir = scratch("area_level");
  write_text(dir / "data.csv", kData);
  write_text(dir / "frame.csv", "area,pop_size,x1\na,40,0.25\nb,30,-0.1\n");
  EstimateConfig cfg = estimate_config(dir);
  cfg.methods = {Method::greg, Method::wt};
  const EstimateOutput out = run_estimate(cfg);
  CHECK(out.failures.empty());
  REQUIRE(out.rows.size() == 4);
  cfg.family = Family::bernoulli_logit;
  CHECK_THROWS_AS(run_estimate(cfg), InvalidArgument);
}

TEST_CASE("single-PSU stratum fails rescaling but not the other methods") {
  const fs::path dir = scratch("single_psu");
  write_text(dir / "frame.csv", kFrame);
  write_text(dir / "data.csv",
             "area,psu_id,stratum_id,weight,y,x1\n"
             "a,1,1,2,1.0,0.5\na,2,1,3,2.0,-0.5\nb,4,2,4,0.0,0.2\nb,4,2,1,-1.0,-1.2\n");
  EstimateConfig cfg = estimate_config(dir);
  cfg.methods = {Method::wt, Method::wtrscl};
  const EstimateOutput out = run_estimate(cfg);
  REQUIRE(out.failures.size() == 1);
  CHECK(out.failures[0].method == Method::wtrscl);
  CHECK(out.failures[0].message.find("stratum 2") != std::string::npos);
  CHECK(out.rows.size() == 3);
}
