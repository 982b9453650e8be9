#include "bisirl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json_util.hpp"

namespace bisirl {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

template< class T >
T get_field(const nlohmann::json& doc, const char* key, T fallback)
{
   if(!doc.contains(key)) {
      return fallback;
   }
   try {
      return doc.at(key).get< T >();
   } catch(const nlohmann::json::exception&) {
      throw ConfigError(std::string("field '") + key + "' has the wrong type");
   }
}

VectorXd vector_field(const nlohmann::json& doc, const char* key)
{
   const auto v = get_field< std::vector< double > >(doc, key, {});
   return Eigen::Map< const VectorXd >(v.data(), static_cast< Eigen::Index >(v.size()));
}

DriverConfig parse_driver(const nlohmann::json& doc, ExpertResponse& response)
{
   detail::check_keys(
      doc,
      {},
      {"K",
       "p_scale",
       "alpha0",
       "lambda",
       "beta",
       "demos",
       "n_avg",
       "perturbation",
       "upper_objective",
       "expert_response",
       "exact_expectations",
       "mc_rollouts",
       "theta_l_init",
       "theta_e_init"},
      "driver section"
   );
   DriverConfig d;
   d.K = get_field(doc, "K", d.K);
   d.p_scale = get_field(doc, "p_scale", d.p_scale);
   d.alpha0 = get_field(doc, "alpha0", d.alpha0);
   d.lower.lambda = get_field(doc, "lambda", d.lower.lambda);
   if(doc.contains("beta")) {
      if(doc.at("beta").is_array()) {
         d.lower.step_sizes = get_field< std::vector< double > >(doc, "beta", {});
      } else {
         d.lower.step_sizes = {get_field(doc, "beta", 0.1)};
      }
   }
   d.demos = get_field(doc, "demos", d.demos);
   d.spsa.n_avg = get_field(doc, "n_avg", d.spsa.n_avg);
   const auto design = get_field< std::string >(doc, "perturbation", "random");
   if(design == "exhaustive") {
      d.spsa.design = PerturbationDesign::exhaustive;
   } else if(design != "random") {
      throw ConfigError("perturbation must be 'random' or 'exhaustive'");
   }
   const auto objective = get_field< std::string >(doc, "upper_objective", "true_rl");
   if(objective == "estimated_rtheta_l") {
      d.objective = UpperObjective::estimated_rtheta_l;
   } else if(objective != "true_rl") {
      throw ConfigError("upper_objective must be 'true_rl' or 'estimated_rtheta_l'");
   }
   const auto mode = get_field< std::string >(doc, "expert_response", "joint_soft");
   if(mode == "best_response_soft") {
      response = ExpertResponse::best_response_soft;
   } else if(mode == "joint_soft") {
      response = ExpertResponse::joint_soft;
   } else {
      throw ConfigError("expert_response must be 'joint_soft' or 'best_response_soft'");
   }
   d.lower.exact_expectations = get_field(doc, "exact_expectations", d.lower.exact_expectations);
   d.lower.mc_rollouts = get_field(doc, "mc_rollouts", d.lower.mc_rollouts);
   if(doc.contains("theta_l_init")) {
      d.theta_l_init = vector_field(doc, "theta_l_init");
   }
   if(doc.contains("theta_e_init")) {
      d.theta_e_init = vector_field(doc, "theta_e_init");
   }
   return d;
}

GradcheckSettings parse_gradcheck(const nlohmann::json& doc)
{
   detail::check_keys(
      doc,
      {},
      {"random_games",
       "n_states",
       "n_learner",
       "n_expert",
       "horizon",
       "discount",
       "feature_dim",
       "fd_step",
       "tol_first",
       "tol_second",
       "n_avg",
       "p",
       "min_cosine",
       "inner_steps",
       "corrupt"},
      "gradcheck section"
   );
   GradcheckSettings g;
   g.random_games = get_field(doc, "random_games", g.random_games);
   g.n_states = get_field(doc, "n_states", g.n_states);
   g.n_learner = get_field(doc, "n_learner", g.n_learner);
   g.n_expert = get_field(doc, "n_expert", g.n_expert);
   g.horizon = get_field(doc, "horizon", g.horizon);
   g.discount = get_field(doc, "discount", g.discount);
   g.feature_dim = get_field(doc, "feature_dim", g.feature_dim);
   g.fd_step = get_field(doc, "fd_step", g.fd_step);
   g.tol_first = get_field(doc, "tol_first", g.tol_first);
   g.tol_second = get_field(doc, "tol_second", g.tol_second);
   g.n_avg = get_field(doc, "n_avg", g.n_avg);
   g.p = get_field(doc, "p", g.p);
   g.min_cosine = get_field(doc, "min_cosine", g.min_cosine);
   g.inner_steps = get_field(doc, "inner_steps", g.inner_steps);
   g.corrupt = get_field(doc, "corrupt", g.corrupt);
   if(g.random_games < 1 || g.n_states < 1 || g.n_learner < 1 || g.n_expert < 1 || g.horizon < 1 || g.feature_dim < 1
      || !(g.fd_step > 0.0) || !(g.tol_first > 0.0) || !(g.tol_second > 0.0) || g.n_avg < 1 || !(g.p > 0.0)
      || g.inner_steps < 0) {
      throw ConfigError("gradcheck settings out of range");
   }
   return g;
}

BenchSettings parse_bench(const nlohmann::json& doc)
{
   detail::check_keys(doc, {}, {"horizons", "n_avg", "repeats"}, "bench section");
   BenchSettings b;
   b.horizons = get_field(doc, "horizons", b.horizons);
   b.n_avg = get_field(doc, "n_avg", b.n_avg);
   b.repeats = get_field(doc, "repeats", b.repeats);
   if(b.horizons.empty() || b.n_avg < 1 || b.repeats < 1) {
      throw ConfigError("bench settings out of range");
   }
   for(int h : b.horizons) {
      if(h < 1) {
         throw ConfigError("bench horizons must be positive");
      }
   }
   return b;
}

std::string format_double(double v)
{
   char buf[32];
   std::snprintf(buf, sizeof(buf), "%.17g", v);
   return buf;
}

struct Stats {
   double mean = 0.0;
   double std = 0.0;
};

Stats stats(const std::vector< double >& xs)
{
   Stats s;
   if(xs.empty()) {
      return s;
   }
   for(double x : xs) {
      s.mean += x;
   }
   s.mean /= static_cast< double >(xs.size());
   if(xs.size() > 1) {
      double ss = 0.0;
      for(double x : xs) {
         ss += (x - s.mean) * (x - s.mean);
      }
      s.std = std::sqrt(ss / static_cast< double >(xs.size() - 1));
   }
   return s;
}

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. The first
/// exception is rethrown after all workers stop.
template< class Fn >
void parallel_for(int count, int jobs, Fn&& fn)
{
   jobs = std::max(1, std::min(jobs, count));
   if(jobs == 1) {
      for(int i = 0; i < count; ++i) {
         fn(i);
      }
      return;
   }
   std::atomic< int > next{0};
   std::exception_ptr failure;
   std::mutex failure_mutex;
   std::vector< std::thread > workers;
   for(int w = 0; w < jobs; ++w) {
      workers.emplace_back([&]() {
         for(int i = next++; i < count; i = next++) {
            try {
               fn(i);
            } catch(...) {
               const std::lock_guard lock(failure_mutex);
               if(!failure) {
                  failure = std::current_exception();
               }
            }
         }
      });
   }
   for(auto& t : workers) {
      t.join();
   }
   if(failure) {
      std::rethrow_exception(failure);
   }
}

ExpertOracle make_oracle(const Scenario& sc, ExpertResponse mode) { return {sc.expert_truth, sc.learner_truth, mode}; }

VectorXd random_point(int dim, double radius, Rng& rng)
{
   VectorXd v(dim);
   for(int i = 0; i < dim; ++i) {
      v[i] = 2.0 * rng.uniform() - 1.0;
   }
   return v * (radius * rng.uniform() / std::max(v.norm(), 1e-12));
}

VectorXd fd_gradient(const ScalarObjective& f, const VectorXd& x, double step)
{
   VectorXd g(x.size());
   for(Eigen::Index i = 0; i < x.size(); ++i) {
      VectorXd xp = x;
      VectorXd xm = x;
      xp[i] += step;
      xm[i] -= step;
      g[i] = (f(xp) - f(xm)) / (2.0 * step);
   }
   return g;
}

MatrixXd fd_jacobian(const VectorObjective& g, const VectorXd& x, double step)
{
   MatrixXd jac;
   for(Eigen::Index i = 0; i < x.size(); ++i) {
      VectorXd xp = x;
      VectorXd xm = x;
      xp[i] += step;
      xm[i] -= step;
      const VectorXd col = (g(xp) - g(xm)) / (2.0 * step);
      if(jac.size() == 0) {
         jac = MatrixXd::Zero(col.size(), x.size());
      }
      jac.col(i) = col;
   }
   return jac;
}

double relative_error(const MatrixXd& got, const MatrixXd& want)
{
   return (got - want).norm() / std::max(want.norm(), 1e-8);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc, const fs::path& base_dir)
{
   detail::check_keys(
      doc,
      {},
      {"environment", "features", "driver", "baselines", "n_seeds", "seed", "output_dir", "timing", "gradcheck", "bench"},
      "experiment config"
   );
   ExperimentConfig c;
   c.base_dir = base_dir;
   c.environment = get_field(doc, "environment", c.environment);
   const auto features = get_field< std::string >(doc, "features", "linear");
   if(features == "tabular") {
      c.features = FeatureKind::tabular;
   } else if(features != "linear") {
      throw ConfigError("features must be 'linear' or 'tabular'");
   }
   if(doc.contains("driver")) {
      c.driver = parse_driver(doc.at("driver"), c.expert_response);
   }
   if(doc.contains("baselines")) {
      const auto& b = doc.at("baselines");
      detail::check_keys(b, {}, {"marl", "mlirl", "mlirl_steps", "mlirl_demos"}, "baselines section");
      c.baselines.marl = get_field(b, "marl", c.baselines.marl);
      c.baselines.mlirl = get_field(b, "mlirl", c.baselines.mlirl);
      c.baselines.mlirl_steps = get_field(b, "mlirl_steps", c.baselines.mlirl_steps);
      c.baselines.mlirl_demos = get_field(b, "mlirl_demos", c.baselines.mlirl_demos);
      if(c.baselines.mlirl_steps < 0 || c.baselines.mlirl_demos < 1) {
         throw ConfigError("baseline settings out of range");
      }
   }
   c.n_seeds = get_field(doc, "n_seeds", c.n_seeds);
   c.seed = get_field(doc, "seed", c.seed);
   c.output_dir = get_field(doc, "output_dir", c.output_dir);
   c.timing = get_field(doc, "timing", c.timing);
   if(doc.contains("gradcheck")) {
      c.gradcheck = parse_gradcheck(doc.at("gradcheck"));
   }
   if(doc.contains("bench")) {
      c.bench = parse_bench(doc.at("bench"));
   }
   if(c.n_seeds < 1) {
      throw ConfigError("n_seeds must be at least 1");
   }
   try {
      c.driver.validate();
   } catch(const InvalidArgument& e) {
      throw ConfigError(std::string("driver: ") + e.what());
   }
   const auto names = builtin_scenario_names();
   if(std::find(names.begin(), names.end(), c.environment) == names.end() && !fs::exists(base_dir / c.environment)) {
      throw ConfigError("environment '" + c.environment + "' is neither a builtin nor an existing file");
   }
   return c;
}

fs::path ExperimentConfig::output_path() const
{
   const fs::path dir(output_dir);
   if(dir.is_absolute()) {
      return dir;
   }
   if(const char* root = std::getenv("BISIRL_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
      return fs::path(root) / dir;
   }
   return base_dir / dir;
}

Scenario ExperimentConfig::scenario() const
{
   const auto names = builtin_scenario_names();
   if(std::find(names.begin(), names.end(), environment) != names.end()) {
      return builtin_scenario(environment, features);
   }
   const auto path = base_dir / environment;
   std::ifstream in(path);
   if(!in) {
      throw ConfigError("cannot open environment file " + path.string());
   }
   nlohmann::json doc;
   try {
      in >> doc;
   } catch(const nlohmann::json::exception& e) {
      throw ConfigError("cannot parse " + path.string() + ": " + e.what());
   }
   return scenario_from_json(doc);
}

ExperimentConfig load_experiment_config(const fs::path& path)
{
   std::ifstream in(path);
   if(!in) {
      throw ConfigError("cannot open config file " + path.string());
   }
   nlohmann::json doc;
   try {
      in >> doc;
   } catch(const nlohmann::json::exception& e) {
      throw ConfigError("cannot parse " + path.string() + ": " + e.what());
   }
   return ExperimentConfig::from_json(doc, fs::absolute(path).parent_path());
}

const std::vector< std::pair< std::string, std::string > >& metric_registry()
{
   static const std::vector< std::pair< std::string, std::string > > registry{
      {"inner", "lower_loss"},
      {"inner", "inner_grad_norm"},
      {"inner", "theta_e_norm"},
      {"hypergrad", "hypergrad_norm"},
      {"hypergrad", "cg_residual"},
      {"outer", "f"},
      {"outer", "J_l"},
      {"outer", "J_e"},
      {"outer", "expert_gap"},
      {"outer", "theta_l_norm"},
      {"baseline", "marl_J_l"},
      {"baseline", "marl_J_e"},
      {"baseline", "marl_expert_gap"},
      {"baseline", "mlirl_J_l"},
      {"baseline", "mlirl_J_e"},
      {"baseline", "mlirl_expert_gap"},
   };
   return registry;
}

void write_metrics_csv(std::ostream& out, const std::vector< MetricsRow >& rows)
{
   const auto& registry = metric_registry();
   out << kMetricsHeader << '\n';
   for(const auto& r : rows) {
      if(std::find(registry.begin(), registry.end(), std::pair(r.phase, r.metric)) == registry.end()) {
         throw InvalidArgument("unregistered metric " + r.phase + "/" + r.metric);
      }
      if(r.run_id.find_first_of(",\n") != std::string::npos) {
         throw InvalidArgument("run id must not contain commas or newlines");
      }
      out << r.run_id << ',' << r.seed << ',' << r.k << ',' << r.phase << ',' << r.metric << ','
          << format_double(r.value) << ',' << format_double(r.ms) << '\n';
   }
}

std::vector< MetricsRow > read_metrics_csv(std::istream& in)
{
   std::string line;
   if(!std::getline(in, line) || line != kMetricsHeader) {
      throw ConfigError("metrics CSV has an unexpected header");
   }
   std::vector< MetricsRow > rows;
   int line_no = 1;
   while(std::getline(in, line)) {
      ++line_no;
      if(line.empty()) {
         continue;
      }
      std::vector< std::string > cells;
      std::stringstream ss(line);
      std::string cell;
      while(std::getline(ss, cell, ',')) {
         cells.push_back(cell);
      }
      if(cells.size() != 7) {
         throw ConfigError("metrics CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size())
                           + " fields");
      }
      try {
         MetricsRow r;
         r.run_id = cells[0];
         r.seed = std::stoull(cells[1]);
         r.k = std::stoi(cells[2]);
         r.phase = cells[3];
         r.metric = cells[4];
         r.value = std::stod(cells[5]);
         r.ms = std::stod(cells[6]);
         rows.push_back(std::move(r));
      } catch(const std::exception&) {
         throw ConfigError("metrics CSV line " + std::to_string(line_no) + " is malformed");
      }
   }
   return rows;
}

std::vector< MetricsRow > run_metrics(const std::string& run_id, std::uint64_t seed, const RunResult& result, bool timing)
{
   std::vector< MetricsRow > rows;
   for(const auto& rec : result.records) {
      const auto add = [&](const char* phase, const char* metric, double value, double ms) {
         rows.push_back({run_id, seed, rec.k, phase, metric, value, timing ? ms : 0.0});
      };
      const double loss = rec.lower_loss.empty() ? 0.0 : rec.lower_loss.back();
      const double inner_grad = rec.inner_grad_norm.empty() ? 0.0 : rec.inner_grad_norm.back();
      add("inner", "lower_loss", loss, rec.ms_inner);
      add("inner", "inner_grad_norm", inner_grad, rec.ms_inner);
      add("inner", "theta_e_norm", rec.theta_e.norm(), rec.ms_inner);
      add("hypergrad", "hypergrad_norm", rec.hypergrad_norm, rec.ms_hypergrad);
      add("hypergrad", "cg_residual", rec.cg_residual, rec.ms_hypergrad);
      add("outer", "f", rec.f, rec.ms_outer);
      add("outer", "J_l", rec.J_l, rec.ms_outer);
      add("outer", "J_e", rec.J_e, rec.ms_outer);
      add("outer", "expert_gap", rec.expert_gap, rec.ms_outer);
      add("outer", "theta_l_norm", rec.theta_l.norm(), rec.ms_outer);
   }
   return rows;
}

double loglog_slope(const std::vector< double >& x, const std::vector< double >& y)
{
   if(x.size() != y.size() || x.size() < 2) {
      throw InvalidArgument("slope fit needs at least two matching points");
   }
   const auto n = static_cast< double >(x.size());
   double mx = 0.0;
   double my = 0.0;
   for(std::size_t i = 0; i < x.size(); ++i) {
      if(!(x[i] > 0.0) || !(y[i] > 0.0)) {
         throw InvalidArgument("log-log fit needs positive values");
      }
      mx += std::log(x[i]);
      my += std::log(y[i]);
   }
   mx /= n;
   my /= n;
   double sxy = 0.0;
   double sxx = 0.0;
   for(std::size_t i = 0; i < x.size(); ++i) {
      const double dx = std::log(x[i]) - mx;
      sxy += dx * (std::log(y[i]) - my);
      sxx += dx * dx;
   }
   if(sxx == 0.0) {
      throw InvalidArgument("slope fit needs distinct x values");
   }
   return sxy / sxx;
}

BenchResult run_bench(const ExperimentConfig& config, int jobs)
{
   using Clock = std::chrono::steady_clock;
   const auto base = config.scenario();
   const auto& horizons = config.bench.horizons;
   std::vector< double > ms_analytical(horizons.size());
   std::vector< double > ms_spsa(horizons.size());

   parallel_for(static_cast< int >(horizons.size()), jobs, [&](int i) {
      auto model = base.model;
      model.game.horizon = horizons[i];
      Rng rng(config.seed);
      const VectorXd theta_l = random_point(model.learner.dim(), 0.5, rng);
      const VectorXd theta_e = random_point(model.expert.dim(), 0.5, rng);
      const auto sol = solve_soft(model.game, model.learner, theta_l, model.expert, theta_e);
      DemoSet demos;
      demos.horizon = horizons[i];
      for(int d = 0; d < config.driver.demos; ++d) {
         demos.trajectories.push_back(sample_trajectory(model.game, sol.policy, rng));
      }
      const UpperTarget target{config.driver.objective, base.learner_truth.table()};
      SpsaConfig spsa = config.driver.spsa;
      spsa.n_avg = config.bench.n_avg;
      spsa.p = 1e-3;
      {
         // Untimed warm-up so the first horizon does not pay for cold caches.
         Rng warm_rng(config.seed);
         static_cast< void >(analytical_hypergradient(model, target, theta_l, theta_e, config.driver.lower.lambda));
         static_cast< void >(estimate_hypergradient(model, target, theta_l, theta_e, demos, config.driver.lower.lambda, spsa, warm_rng));
      }
      std::vector< double > a_times;
      std::vector< double > s_times;
      for(int r = 0; r < config.bench.repeats; ++r) {
         auto start = Clock::now();
         const auto exact = analytical_hypergradient(model, target, theta_l, theta_e, config.driver.lower.lambda);
         a_times.push_back(std::chrono::duration< double, std::milli >(Clock::now() - start).count());
         start = Clock::now();
         Rng spsa_rng(config.seed + static_cast< std::uint64_t >(r));
         const auto est = estimate_hypergradient(model, target, theta_l, theta_e, demos, config.driver.lower.lambda, spsa, spsa_rng);
         s_times.push_back(std::chrono::duration< double, std::milli >(Clock::now() - start).count());
         if(!exact.allFinite() || !est.assembled.allFinite()) {
            throw Error("non-finite hypergradient during benchmark");
         }
      }
      std::sort(a_times.begin(), a_times.end());
      std::sort(s_times.begin(), s_times.end());
      ms_analytical[i] = a_times[a_times.size() / 2];
      ms_spsa[i] = s_times[s_times.size() / 2];
   });

   BenchResult out;
   std::vector< double > hs;
   for(std::size_t i = 0; i < horizons.size(); ++i) {
      out.rows.push_back({horizons[i], "analytical", ms_analytical[i]});
      out.rows.push_back({horizons[i], "spsa", ms_spsa[i]});
      hs.push_back(horizons[i]);
   }
   if(horizons.size() >= 2) {
      out.slope_analytical = loglog_slope(hs, ms_analytical);
      out.slope_spsa = loglog_slope(hs, ms_spsa);
   }
   return out;
}

namespace {

struct SeedOutcome {
   std::uint64_t seed = 0;
   RunRecord last;
   std::optional< PolicyValues > marl;
   double marl_gap = 0.0;
   std::optional< MlirlResult > mlirl;
   double mlirl_gap = 0.0;
};

SeedOutcome run_one_seed(const ExperimentConfig& config, const Scenario& sc, std::uint64_t seed, const fs::path& out_dir)
{
   const auto oracle = make_oracle(sc, config.expert_response);
   const auto r_l = sc.learner_truth.table();
   auto driver = config.driver;
   driver.seed = seed;
   const auto result = run_bisirl(sc.model, r_l, oracle, driver);
   const std::string run_id = sc.name + "-s" + std::to_string(seed);
   auto rows = run_metrics(run_id, seed, result, config.timing);

   SeedOutcome outcome;
   outcome.seed = seed;
   outcome.last = result.records.back();
   if(config.baselines.marl) {
      outcome.marl = run_marl_baseline(sc.model.game, r_l, sc.expert_truth.table());
      outcome.marl_gap = expert_value_gap(sc.model.game, oracle, outcome.marl->policy);
      rows.push_back({run_id, seed, 0, "baseline", "marl_J_l", outcome.marl->J_l, 0.0});
      rows.push_back({run_id, seed, 0, "baseline", "marl_J_e", outcome.marl->J_e, 0.0});
      rows.push_back({run_id, seed, 0, "baseline", "marl_expert_gap", outcome.marl_gap, 0.0});
   }
   if(config.baselines.mlirl) {
      Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
      const VectorXd theta_l0 = driver.theta_l_init.value_or(VectorXd::Zero(sc.model.learner.dim()));
      const auto demos = mlirl_demos(sc.model, theta_l0, oracle, config.baselines.mlirl_demos, rng);
      outcome.mlirl =
         run_mlirl_baseline(sc.model, r_l, theta_l0, oracle, demos, driver.lower, config.baselines.mlirl_steps);
      outcome.mlirl_gap = expert_value_gap(sc.model.game, oracle, outcome.mlirl->values.policy);
      rows.push_back({run_id, seed, 0, "baseline", "mlirl_J_l", outcome.mlirl->values.J_l, 0.0});
      rows.push_back({run_id, seed, 0, "baseline", "mlirl_J_e", outcome.mlirl->values.J_e, 0.0});
      rows.push_back({run_id, seed, 0, "baseline", "mlirl_expert_gap", outcome.mlirl_gap, 0.0});
   }

   std::ofstream csv(out_dir / ("metrics_" + run_id + ".csv"));
   if(!csv) {
      throw Error("cannot write metrics for " + run_id);
   }
   write_metrics_csv(csv, rows);
   return outcome;
}

nlohmann::json method_summary(const std::vector< double >& jl, const std::vector< double >& je, const std::vector< double >& gap)
{
   const auto entry = [](const std::vector< double >& xs) {
      const auto s = stats(xs);
      return nlohmann::json{{"mean", s.mean}, {"std", s.std}};
   };
   return {{"J_l", entry(jl)}, {"J_e", entry(je)}, {"expert_gap", entry(gap)}};
}

}  // namespace

int cmd_run(const fs::path& config_path, int jobs, std::ostream& out, std::ostream& err)
{
   ExperimentConfig config;
   std::optional< Scenario > loaded;
   try {
      config = load_experiment_config(config_path);
      loaded.emplace(config.scenario());
   } catch(const Error& e) {
      err << "config error: " << e.what() << '\n';
      return 2;
   }
   const Scenario& sc = *loaded;

   const auto out_dir = config.output_path();
   std::vector< std::optional< SeedOutcome > > outcomes(config.n_seeds);
   int status = 0;
   try {
      fs::create_directories(out_dir);
      std::mutex log_mutex;
      parallel_for(config.n_seeds, jobs, [&](int i) {
         const auto seed = config.seed + static_cast< std::uint64_t >(i);
         outcomes[i] = run_one_seed(config, sc, seed, out_dir);
         const std::lock_guard lock(log_mutex);
         out << "seed " << seed << ": J_l " << format_double(outcomes[i]->last.J_l) << ", expert gap "
             << format_double(outcomes[i]->last.expert_gap) << '\n';
      });
   } catch(const std::exception& e) {
      err << "run failed: " << e.what() << '\n';
      status = 1;
   }

   // Summary over whatever finished, so partial results survive a failure.
   std::vector< double > b_jl, b_je, b_gap, m_jl, m_je, m_gap, i_jl, i_je, i_gap;
   nlohmann::json runs = nlohmann::json::array();
   for(const auto& o : outcomes) {
      if(!o) {
         continue;
      }
      nlohmann::json run{{"seed", o->seed},
                         {"bisirl", {{"J_l", o->last.J_l}, {"J_e", o->last.J_e}, {"expert_gap", o->last.expert_gap}}}};
      b_jl.push_back(o->last.J_l);
      b_je.push_back(o->last.J_e);
      b_gap.push_back(o->last.expert_gap);
      if(o->marl) {
         run["marl"] = {{"J_l", o->marl->J_l}, {"J_e", o->marl->J_e}, {"expert_gap", o->marl_gap}};
         m_jl.push_back(o->marl->J_l);
         m_je.push_back(o->marl->J_e);
         m_gap.push_back(o->marl_gap);
      }
      if(o->mlirl) {
         run["mlirl"] = {{"J_l", o->mlirl->values.J_l}, {"J_e", o->mlirl->values.J_e}, {"expert_gap", o->mlirl_gap}};
         i_jl.push_back(o->mlirl->values.J_l);
         i_je.push_back(o->mlirl->values.J_e);
         i_gap.push_back(o->mlirl_gap);
      }
      runs.push_back(std::move(run));
   }
   nlohmann::json methods{{"bisirl", method_summary(b_jl, b_je, b_gap)}};
   if(!m_jl.empty()) {
      methods["marl"] = method_summary(m_jl, m_je, m_gap);
   }
   if(!i_jl.empty()) {
      methods["mlirl"] = method_summary(i_jl, i_je, i_gap);
   }
   const nlohmann::json summary{{"environment", sc.name},
                                {"n_seeds", config.n_seeds},
                                {"completed", runs.size()},
                                {"K", config.driver.K},
                                {"methods", std::move(methods)},
                                {"runs", std::move(runs)}};
   try {
      fs::create_directories(out_dir);
      std::ofstream js(out_dir / "summary.json");
      js << summary.dump(2) << '\n';
      if(!js) {
         throw Error("cannot write summary.json");
      }
   } catch(const std::exception& e) {
      err << "run failed: " << e.what() << '\n';
      return 1;
   }
   out << "wrote " << (out_dir / "summary.json").string() << '\n';
   return status;
}

int cmd_gradcheck(const fs::path& config_path, std::optional< double > tol, std::ostream& out, std::ostream& err)
{
   ExperimentConfig config;
   try {
      config = load_experiment_config(config_path);
   } catch(const ConfigError& e) {
      err << "config error: " << e.what() << '\n';
      return 2;
   }
   const auto& g = config.gradcheck;
   const double tol_first = tol.value_or(g.tol_first);
   const double tol_second = tol.value_or(g.tol_second);
   const double lambda = config.driver.lower.lambda;
   int failures = 0;
   const auto report = [&](const std::string& name, int game, double observed, double limit, bool ok) {
      out << (ok ? "PASS " : "FAIL ") << name << " game=" << game << " observed=" << format_double(observed)
          << " limit=" << format_double(limit) << '\n';
      failures += ok ? 0 : 1;
   };

   try {
      double cosine_sum = 0.0;
      for(int game = 0; game < g.random_games; ++game) {
         Rng rng(config.seed + static_cast< std::uint64_t >(game));
         const auto sc =
            random_scenario(g.n_states, g.n_learner, g.n_expert, g.horizon, g.discount, g.feature_dim, rng);
         const auto& model = sc.model;
         const VectorXd theta_l = random_point(model.learner.dim(), 0.9, rng);
         const VectorXd theta_e = random_point(model.expert.dim(), 0.9, rng);
         const auto sol = solve_soft(model.game, model.learner, theta_l, model.expert, theta_e);
         DemoSet demos;
         demos.horizon = model.game.horizon;
         for(int d = 0; d < 20; ++d) {
            demos.trajectories.push_back(sample_trajectory(model.game, sol.policy, rng));
         }
         const auto corrupt = [&](VectorXd v) {
            if(g.corrupt) {
               v[0] += 1e-3 * std::max(1.0, v.norm());
            }
            return v;
         };

         const auto grad_e = corrupt(lower_grad_e(model, theta_l, theta_e, demos, lambda));
         const auto fd_e = fd_gradient([&](const VectorXd& x) { return lower_loss(model, theta_l, x, demos, lambda); }, theta_e, g.fd_step);
         double err_val = relative_error(grad_e, fd_e);
         report("lower_grad_e", game, err_val, tol_first, err_val <= tol_first);

         const auto grad_l = lower_grad_l(model, theta_l, theta_e, demos);
         const auto fd_l = fd_gradient([&](const VectorXd& x) { return lower_loss(model, x, theta_e, demos, lambda); }, theta_l, g.fd_step);
         err_val = relative_error(grad_l, fd_l);
         report("lower_grad_l", game, err_val, tol_first, err_val <= tol_first);

         for(const auto objective : {UpperObjective::true_rl, UpperObjective::estimated_rtheta_l}) {
            const UpperTarget target{objective, sc.learner_truth.table()};
            const std::string tag = objective == UpperObjective::true_rl ? "" : "[estimated]";
            const auto d = analytical_derivatives(model, target, theta_l, theta_e, lambda);
            const auto fd_fl = fd_gradient([&](const VectorXd& x) { return upper_objective(model, target, x, theta_e); }, theta_l, g.fd_step);
            const auto fd_fe = fd_gradient([&](const VectorXd& x) { return upper_objective(model, target, theta_l, x); }, theta_e, g.fd_step);
            err_val = relative_error(d.grad_l_f, fd_fl);
            report("grad_l_f" + tag, game, err_val, tol_second, err_val <= tol_second);
            err_val = relative_error(d.grad_e_f, fd_fe);
            report("grad_e_f" + tag, game, err_val, tol_second, err_val <= tol_second);
            if(objective != UpperObjective::true_rl) {
               continue;
            }
            const auto fd_hee = fd_jacobian([&](const VectorXd& x) { return lower_grad_e(model, theta_l, x, demos, lambda); }, theta_e, g.fd_step);
            const auto fd_hle = fd_jacobian([&](const VectorXd& x) { return lower_grad_l(model, theta_l, x, demos); }, theta_e, g.fd_step);
            err_val = relative_error(d.hess_ee, fd_hee);
            report("hess_ee", game, err_val, tol_second, err_val <= tol_second);
            err_val = relative_error(d.hess_le, fd_hle);
            report("hess_le", game, err_val, tol_second, err_val <= tol_second);
         }

         LowerConfig lower = config.driver.lower;
         lower.exact_expectations = true;
         const auto fitted = inner_loop(model, theta_l, RewardParams(theta_e), demos, lower, g.inner_steps).theta_e.theta();
         const UpperTarget target{UpperObjective::true_rl, sc.learner_truth.table()};
         SpsaConfig spsa;
         spsa.p = g.p;
         spsa.n_avg = g.n_avg;
         const auto est = estimate_hypergradient(model, target, theta_l, fitted, demos, lambda, spsa, rng);
         const auto exact = analytical_hypergradient(model, target, theta_l, fitted, lambda);
         const double denom = est.assembled.norm() * exact.norm();
         const double cosine = denom > 0.0 ? est.assembled.dot(exact) / denom : 1.0;
         out << "INFO hypergrad_cosine game=" << game << " observed=" << format_double(cosine) << '\n';
         cosine_sum += cosine;
      }
      const double mean_cosine = cosine_sum / g.random_games;
      report("hypergrad_cosine_mean", -1, mean_cosine, g.min_cosine, mean_cosine > g.min_cosine);
   } catch(const std::exception& e) {
      err << "gradcheck failed: " << e.what() << '\n';
      return 1;
   }
   out << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed") << '\n';
   return failures == 0 ? 0 : 1;
}

int cmd_bench(const fs::path& config_path, int jobs, std::ostream& out, std::ostream& err)
{
   ExperimentConfig config;
   try {
      config = load_experiment_config(config_path);
      static_cast< void >(config.scenario());
   } catch(const Error& e) {
      err << "config error: " << e.what() << '\n';
      return 2;
   }
   try {
      const auto result = run_bench(config, jobs);
      const auto out_dir = config.output_path();
      fs::create_directories(out_dir);
      std::ofstream csv(out_dir / "bench.csv");
      csv << "H,method,ms\n";
      for(const auto& row : result.rows) {
         csv << row.horizon << ',' << row.method << ',' << format_double(row.ms) << '\n';
         out << "H=" << row.horizon << ' ' << row.method << ' ' << format_double(row.ms) << " ms\n";
      }
      const nlohmann::json summary{{"horizons", config.bench.horizons},
                                   {"slope_analytical", result.slope_analytical},
                                   {"slope_spsa", result.slope_spsa}};
      std::ofstream js(out_dir / "bench_summary.json");
      js << summary.dump(2) << '\n';
      if(!csv || !js) {
         throw Error("cannot write benchmark outputs");
      }
      out << "log-log slope: analytical " << format_double(result.slope_analytical) << ", spsa "
          << format_double(result.slope_spsa) << '\n';
   } catch(const std::exception& e) {
      err << "bench failed: " << e.what() << '\n';
      return 1;
   }
   return 0;
}

}  // namespace bisirl
