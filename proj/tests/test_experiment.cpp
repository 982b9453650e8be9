#include <doctest.h>

#include <fstream>
#include <sstream>

#include "bisirl/experiment.hpp"

using namespace bisirl;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory under the system temp dir.
fs::path scratch(const std::string& name)
{
   const auto dir = fs::temp_directory_path() / ("bisirl_test_" + name);
   fs::remove_all(dir);
   fs::create_directories(dir);
   return dir;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& doc, const std::string& name = "config.json")
{
   const auto path = dir / name;
   std::ofstream(path) << doc.dump(2);
   return path;
}

std::string slurp(const fs::path& path)
{
   std::ifstream in(path);
   std::stringstream ss;
   ss << in.rdbuf();
   return ss.str();
}

}  // namespace

TEST_CASE("experiment config parses every documented field")
{
   const nlohmann::json doc{
      {"environment", "security-4node"},
      {"features", "tabular"},
      {"driver",
       {{"K", 7},
        {"p_scale", 0.5},
        {"alpha0", 0.3},
        {"lambda", 0.2},
        {"beta", {0.2, 0.1}},
        {"demos", 12},
        {"n_avg", 4},
        {"perturbation", "exhaustive"},
        {"upper_objective", "estimated_rtheta_l"},
        {"expert_response", "best_response_soft"},
        {"exact_expectations", false},
        {"mc_rollouts", 50}}},
      {"baselines", {{"marl", false}, {"mlirl", true}, {"mlirl_steps", 3}, {"mlirl_demos", 4}}},
      {"n_seeds", 3},
      {"seed", 11},
      {"output_dir", "results"},
      {"timing", true},
      {"gradcheck", {{"random_games", 2}}},
      {"bench", {{"horizons", {2, 4}}, {"n_avg", 2}, {"repeats", 1}}}};
   const auto c = ExperimentConfig::from_json(doc, "/tmp");
   CHECK(c.features == FeatureKind::tabular);
   CHECK(c.driver.K == 7);
   CHECK(c.driver.lower.step_sizes == std::vector< double >{0.2, 0.1});
   CHECK(c.driver.spsa.design == PerturbationDesign::exhaustive);
   CHECK(c.driver.objective == UpperObjective::estimated_rtheta_l);
   CHECK(c.expert_response == ExpertResponse::best_response_soft);
   CHECK_FALSE(c.driver.lower.exact_expectations);
   CHECK_FALSE(c.baselines.marl);
   CHECK(c.baselines.mlirl_demos == 4);
   CHECK(c.n_seeds == 3);
   CHECK(c.seed == 11);
   CHECK(c.timing);
   CHECK(c.gradcheck.random_games == 2);
   CHECK(c.bench.horizons == std::vector< int >{2, 4});
}

TEST_CASE("experiment config rejects unknown keys and bad values")
{
   const auto fails = [](const nlohmann::json& doc) {
      CHECK_THROWS_AS(ExperimentConfig::from_json(doc, "/tmp"), ConfigError);
   };
   fails({{"enviroment", "security-4node"}});
   fails({{"driver", {{"alpha", 0.1}}}});
   fails({{"driver", {{"K", 0}}}});
   fails({{"driver", {{"lambda", -1.0}}}});
   fails({{"driver", {{"perturbation", "gaussian"}}}});
   fails({{"driver", {{"K", "ten"}}}});
   fails({{"n_seeds", 0}});
   fails({{"features", "neural"}});
   fails({{"environment", "does-not-exist.json"}});
   fails({{"bench", {{"horizons", nlohmann::json::array()}}}});
}

TEST_CASE("metrics CSV round-trips")
{
   std::vector< MetricsRow > rows{{"run-a", 3, 0, "outer", "J_l", 0.1 + 0.2, 0.0},
                                  {"run-a", 3, 1, "inner", "lower_loss", -1e-300, 12.5},
                                  {"run-a", 3, 0, "baseline", "marl_J_l", 1.0 / 3.0, 0.0}};
   std::stringstream ss;
   write_metrics_csv(ss, rows);
   CHECK(ss.str().rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
   CHECK(read_metrics_csv(ss) == rows);

   std::stringstream bad_metric;
   CHECK_THROWS_AS(write_metrics_csv(bad_metric, {{"x", 0, 0, "outer", "nonsense", 0.0, 0.0}}), InvalidArgument);
   std::stringstream bad_header("a,b,c\n");
   CHECK_THROWS_AS(read_metrics_csv(bad_header), ConfigError);
   std::stringstream bad_line(std::string(kMetricsHeader) + "\nx,1,2,outer\n");
   CHECK_THROWS_AS(read_metrics_csv(bad_line), ConfigError);
}

TEST_CASE("log-log slope recovers a power law")
{
   const std::vector< double > x{4, 8, 16, 32};
   std::vector< double > y;
   for(double v : x) {
      y.push_back(3.0 * v * v);
   }
   CHECK(loglog_slope(x, y) == doctest::Approx(2.0).epsilon(1e-12));
   CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), InvalidArgument);
   CHECK_THROWS_AS(loglog_slope({1.0, 2.0}, {1.0, 0.0}), InvalidArgument);
}

TEST_CASE("run writes one row per iteration per metric and is deterministic")
{
   const auto dir = scratch("run");
   const nlohmann::json doc{{"environment", "security-4node"},
                            {"driver", {{"K", 5}, {"n_avg", 4}, {"demos", 10}}},
                            {"baselines", {{"mlirl_steps", 5}, {"mlirl_demos", 10}}},
                            {"output_dir", "out"}};
   const auto path = write_config(dir, doc);
   std::stringstream out;
   std::stringstream err;
   REQUIRE(cmd_run(path, 1, out, err) == 0);
   const auto csv = dir / "out" / "metrics_security-4node-s0.csv";
   REQUIRE(fs::exists(csv));
   std::ifstream in(csv);
   const auto rows = read_metrics_csv(in);
   std::map< std::string, int > counts;
   for(const auto& r : rows) {
      CHECK(r.k >= 0);
      CHECK(r.k < 5);
      counts[r.metric] += 1;
   }
   for(const auto& [phase, metric] : metric_registry()) {
      if(phase == "baseline") {
         CHECK(counts[metric] == 1);
      } else {
         CHECK(counts[metric] == 5);
      }
   }
   const auto first = slurp(csv);
   const auto first_summary = slurp(dir / "out" / "summary.json");
   REQUIRE(cmd_run(path, 1, out, err) == 0);
   CHECK(slurp(csv) == first);
   CHECK(slurp(dir / "out" / "summary.json") == first_summary);
}

TEST_CASE("summary MARL value matches the baseline oracle")
{
   const auto dir = scratch("summary");
   const nlohmann::json doc{{"environment", "benchmark-2state"},
                            {"driver", {{"K", 3}, {"n_avg", 4}}},
                            {"baselines", {{"mlirl", false}}},
                            {"n_seeds", 3}};
   const auto path = write_config(dir, doc);
   std::stringstream out;
   std::stringstream err;
   REQUIRE(cmd_run(path, 2, out, err) == 0);
   const auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
   const auto sc = benchmark_scenario();
   const auto marl = run_marl_baseline(sc.model.game, sc.learner_truth.table(), sc.expert_truth.table());
   CHECK(std::abs(summary["methods"]["marl"]["J_l"]["mean"].get< double >() - marl.J_l) < 1e-12);
   CHECK(summary["methods"]["marl"]["J_l"]["std"].get< double >() == 0.0);
   CHECK(summary["runs"].size() == 3);
   CHECK_FALSE(summary["methods"].contains("mlirl"));
   for(int s = 0; s < 3; ++s) {
      CHECK(fs::exists(dir / "out" / ("metrics_benchmark-2state-s" + std::to_string(s) + ".csv")));
   }
}

TEST_CASE("parallel seeds match sequential seeds")
{
   const auto dir = scratch("jobs");
   const nlohmann::json doc{{"driver", {{"K", 4}, {"n_avg", 4}}}, {"n_seeds", 3}, {"seed", 5}, {"output_dir", "seq"}};
   auto par = doc;
   par["output_dir"] = "par";
   std::stringstream out;
   std::stringstream err;
   REQUIRE(cmd_run(write_config(dir, doc, "seq.json"), 1, out, err) == 0);
   REQUIRE(cmd_run(write_config(dir, par, "par.json"), 3, out, err) == 0);
   for(int s = 5; s < 8; ++s) {
      const auto name = "metrics_benchmark-2state-s" + std::to_string(s) + ".csv";
      CHECK(slurp(dir / "seq" / name) == slurp(dir / "par" / name));
   }
}

TEST_CASE("output root override and environment files relative to the config")
{
   const auto dir = scratch("paths");
   const auto root = scratch("paths_root");
   const nlohmann::json env{{"type", "grid"},
                            {"horizon", 3},
                            {"discount", 0.9},
                            {"features", "linear"},
                            {"grid", grid_spec_to_json(default_grid_spec())}};
   fs::create_directories(dir / "envs");
   write_config(dir / "envs", env, "grid.json");
   const auto path = write_config(dir, {{"environment", "envs/grid.json"}, {"driver", {{"K", 2}, {"n_avg", 2}}}, {"baselines", {{"mlirl", false}}}});
   setenv("BISIRL_OUTPUT_ROOT", root.c_str(), 1);
   std::stringstream out;
   std::stringstream err;
   const int code = cmd_run(path, 1, out, err);
   unsetenv("BISIRL_OUTPUT_ROOT");
   REQUIRE(code == 0);
   CHECK(fs::exists(root / "out" / "summary.json"));
   CHECK(fs::exists(root / "out" / "metrics_grid-3x3-s0.csv"));
   CHECK_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("config errors exit with code 2")
{
   const auto dir = scratch("errors");
   std::stringstream out;
   std::stringstream err;
   CHECK(cmd_run(dir / "missing.json", 1, out, err) == 2);
   std::ofstream(dir / "broken.json") << "{ not json";
   CHECK(cmd_run(dir / "broken.json", 1, out, err) == 2);
   CHECK(cmd_gradcheck(dir / "broken.json", std::nullopt, out, err) == 2);
   CHECK(cmd_bench(dir / "broken.json", 1, out, err) == 2);
   CHECK(err.str().find("config error") != std::string::npos);
}

TEST_CASE("gradcheck passes by default, fails on a corrupted gradient, and honours --tol")
{
   const auto dir = scratch("gradcheck");
   std::stringstream out;
   std::stringstream err;
   const auto ok = write_config(dir, {{"gradcheck", {{"random_games", 2}, {"n_avg", 500}}}}, "ok.json");
   CHECK(cmd_gradcheck(ok, std::nullopt, out, err) == 0);
   CHECK(out.str().find("FAIL") == std::string::npos);
   const auto bad = write_config(dir, {{"gradcheck", {{"random_games", 2}, {"n_avg", 500}, {"corrupt", true}}}}, "bad.json");
   out.str("");
   CHECK(cmd_gradcheck(bad, std::nullopt, out, err) == 1);
   CHECK(out.str().find("FAIL lower_grad_e") != std::string::npos);
   out.str("");
   CHECK(cmd_gradcheck(bad, 1e-2, out, err) == 0);
}

TEST_CASE("bench writes two rows per horizon and reports slopes")
{
   const auto dir = scratch("bench");
   const auto path = write_config(dir, {{"environment", "security-4node"}, {"bench", {{"horizons", {4, 8, 16}}, {"n_avg", 32}, {"repeats", 7}}}});
   std::stringstream out;
   std::stringstream err;
   REQUIRE(cmd_bench(path, 1, out, err) == 0);
   std::ifstream in(dir / "out" / "bench.csv");
   std::string line;
   std::getline(in, line);
   CHECK(line == "H,method,ms");
   std::vector< double > spsa;
   int rows = 0;
   while(std::getline(in, line)) {
      ++rows;
      if(line.find(",spsa,") != std::string::npos) {
         spsa.push_back(std::stod(line.substr(line.rfind(',') + 1)));
      }
   }
   CHECK(rows == 6);
   REQUIRE(spsa.size() == 3);
   CHECK(spsa[0] <= spsa[1]);
   CHECK(spsa[1] <= spsa[2]);
   const auto summary = nlohmann::json::parse(slurp(dir / "out" / "bench_summary.json"));
   CHECK(summary.contains("slope_spsa"));
   CHECK(summary.contains("slope_analytical"));
   CHECK(out.str().find("log-log slope") != std::string::npos);
}
