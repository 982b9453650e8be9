#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bisirl/driver.hpp"
#include "bisirl/envs.hpp"

namespace bisirl {

struct BaselineToggles {
   bool marl = true;
   bool mlirl = true;
   int mlirl_steps = 200;
   int mlirl_demos = 200;
};

struct GradcheckSettings {
   int random_games = 5;
   int n_states = 3;
   int n_learner = 2;
   int n_expert = 2;
   int horizon = 4;
   double discount = 0.9;
   int feature_dim = 3;
   double fd_step = 1e-5;
   /// First-derivative checks; --tol replaces both tolerances.
   double tol_first = 1e-6;
   double tol_second = 1e-5;
   int n_avg = 2000;
   double p = 1e-3;
   double min_cosine = 0.9;
   int inner_steps = 500;
   /// Test hook: perturbs the analytical gradient under test.
   bool corrupt = false;
};

struct BenchSettings {
   std::vector< int > horizons{4, 8, 16, 32};
   int n_avg = 16;
   int repeats = 3;
};

/// Parsed experiment document. Relative paths resolve against `base_dir`
/// (the config file's directory).
struct ExperimentConfig {
   std::filesystem::path base_dir;
   /// Builtin name or path to an environment document.
   std::string environment = "benchmark-2state";
   FeatureKind features = FeatureKind::linear;
   DriverConfig driver;
   ExpertResponse expert_response = ExpertResponse::joint_soft;
   BaselineToggles baselines;
   int n_seeds = 1;
   std::uint64_t seed = 0;
   std::string output_dir = "out";
   /// Fill the ms column; off by default so reruns are byte-identical.
   bool timing = false;
   GradcheckSettings gradcheck;
   BenchSettings bench;

   /// Throws ConfigError on unknown keys, bad types or invariant violations.
   static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
   /// Output directory after the BISIRL_OUTPUT_ROOT override.
   [[nodiscard]] std::filesystem::path output_path() const;
   [[nodiscard]] Scenario scenario() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct MetricsRow {
   std::string run_id;
   std::uint64_t seed = 0;
   int k = 0;
   std::string phase;
   std::string metric;
   double value = 0.0;
   double ms = 0.0;

   bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader = "run_id,seed,k,phase,metric,value,ms";

/// Registered (phase, metric) pairs; writers reject anything else.
const std::vector< std::pair< std::string, std::string > >& metric_registry();

void write_metrics_csv(std::ostream& out, const std::vector< MetricsRow >& rows);
/// Throws ConfigError on a bad header or malformed line.
std::vector< MetricsRow > read_metrics_csv(std::istream& in);

/// Metric rows for one BISIRL run.
std::vector< MetricsRow > run_metrics(
   const std::string& run_id,
   std::uint64_t seed,
   const RunResult& result,
   bool timing
);

/// Least-squares slope of log(y) on log(x).
double loglog_slope(const std::vector< double >& x, const std::vector< double >& y);

struct BenchRow {
   int horizon = 0;
   std::string method;
   double ms = 0.0;
};

struct BenchResult {
   std::vector< BenchRow > rows;
   double slope_analytical = 0.0;
   double slope_spsa = 0.0;
};

/// Median wall-clock of the analytical and SPSA hypergradients per horizon.
BenchResult run_bench(const ExperimentConfig& config, int jobs);

// Subcommands. Exit codes: 0 success, 1 runtime failure or failed check,
// 2 configuration error.
int cmd_run(const std::filesystem::path& config_path, int jobs, std::ostream& out, std::ostream& err);
int cmd_gradcheck(
   const std::filesystem::path& config_path,
   std::optional< double > tol,
   std::ostream& out,
   std::ostream& err
);
int cmd_bench(const std::filesystem::path& config_path, int jobs, std::ostream& out, std::ostream& err);

}  // namespace bisirl
