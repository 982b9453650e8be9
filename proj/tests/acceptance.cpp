// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "bisirl/driver.hpp"
#include "bisirl/envs.hpp"
#include "bisirl/experiment.hpp"
#include "bisirl/hypergrad.hpp"
#include "bisirl/lower_irl.hpp"
#include "bisirl/soft_solver.hpp"

using namespace bisirl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
   bool pass = false;
   std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
   return std::chrono::duration< double >(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0)
{
   char buf[256];
   std::snprintf(buf, sizeof buf, format, a, b, c, d);
   return buf;
}

VectorXd random_point(int dim, double radius, Rng& rng)
{
   VectorXd v(dim);
   for(int i = 0; i < dim; ++i) {
      v[i] = 2.0 * rng.uniform() - 1.0;
   }
   return v * (radius * rng.uniform() / std::max(v.norm(), 1e-12));
}

VectorXd fd_gradient(const std::function< double(const VectorXd&) >& f, const VectorXd& x, double step)
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

MatrixXd fd_jacobian(const std::function< VectorXd(const VectorXd&) >& g, const VectorXd& x, int rows, double step)
{
   MatrixXd jac(rows, x.size());
   for(Eigen::Index i = 0; i < x.size(); ++i) {
      VectorXd xp = x;
      VectorXd xm = x;
      xp[i] += step;
      xm[i] -= step;
      jac.col(i) = (g(xp) - g(xm)) / (2.0 * step);
   }
   return jac;
}

double rel_err(const MatrixXd& got, const MatrixXd& want)
{
   return (got - want).norm() / std::max(want.norm(), 1e-8);
}

DemoSet sample_demos(const BilevelModel& model, const VectorXd& tl, const VectorXd& te, int count, Rng& rng)
{
   const auto sol = solve_soft(model.game, model.learner, tl, model.expert, te);
   DemoSet demos;
   demos.horizon = model.game.horizon;
   for(int i = 0; i < count; ++i) {
      demos.trajectories.push_back(sample_trajectory(model.game, sol.policy, rng));
   }
   return demos;
}

std::vector< double > random_table(const MarkovGame& game, Rng& rng)
{
   std::vector< double > r(static_cast< std::size_t >(game.n_states) * game.n_joint());
   for(auto& x : r) {
      x = 2.0 * rng.uniform() - 1.0;
   }
   return r;
}

Outcome lower_gradients()
{
   const auto t0 = std::chrono::steady_clock::now();
   Rng rng(101);
   const double lambda = 0.1;
   double worst = 0.0;
   for(int game = 0; game < 20; ++game) {
      const int n = 1 + static_cast< int >(rng.uniform() * 6);
      const int nl = 1 + static_cast< int >(rng.uniform() * 3);
      const int ne = 1 + static_cast< int >(rng.uniform() * 3);
      const int H = 1 + static_cast< int >(rng.uniform() * 5);
      const int dim = 2 + static_cast< int >(rng.uniform() * 3);
      const auto sc = random_scenario(n, nl, ne, H, 0.9, dim, rng);
      const auto& m = sc.model;
      const VectorXd tl = random_point(dim, 1.0, rng);
      const VectorXd te = random_point(dim, 1.0, rng);
      const auto demos = sample_demos(m, random_point(dim, 1.0, rng), random_point(dim, 1.0, rng), 20, rng);
      const auto fd_e = fd_gradient([&](const VectorXd& x) { return lower_loss(m, tl, x, demos, lambda); }, te, 1e-5);
      const auto fd_l = fd_gradient([&](const VectorXd& x) { return lower_loss(m, x, te, demos, lambda); }, tl, 1e-5);
      worst = std::max(worst, rel_err(lower_grad_e(m, tl, te, demos, lambda), fd_e));
      worst = std::max(worst, rel_err(lower_grad_l(m, tl, te, demos), fd_l));
   }
   const double secs = seconds_since(t0);
   return {worst <= 1e-6 && secs < 30.0, fmt("max relative error %.2e (limit 1e-6), %.1f s (limit 30 s)", worst, secs)};
}

Outcome second_derivatives()
{
   const auto t0 = std::chrono::steady_clock::now();
   Rng rng(202);
   const double lambda = 0.1;
   double worst = 0.0;
   for(int game = 0; game < 10; ++game) {
      const auto sc = random_scenario(3, 2, 2, 4, 0.9, 3, rng);
      const auto& m = sc.model;
      const VectorXd tl = random_point(3, 1.0, rng);
      const VectorXd te = random_point(3, 1.0, rng);
      const auto demos = sample_demos(m, tl, te, 20, rng);
      const UpperTarget target{UpperObjective::true_rl, sc.learner_truth.table()};
      const auto d = analytical_derivatives(m, target, tl, te, lambda);
      const auto fd_ee = fd_jacobian([&](const VectorXd& x) { return lower_grad_e(m, tl, x, demos, lambda); }, te, 3, 1e-5);
      const auto fd_le = fd_jacobian([&](const VectorXd& x) { return lower_grad_l(m, tl, x, demos); }, te, 3, 1e-5);
      worst = std::max(worst, rel_err(d.hess_ee, fd_ee));
      worst = std::max(worst, rel_err(d.hess_le, fd_le));
   }
   const double secs = seconds_since(t0);
   return {worst <= 1e-5 && secs < 60.0, fmt("max relative error %.2e (limit 1e-5), %.1f s (limit 60 s)", worst, secs)};
}

Outcome spsa_unbiased()
{
   const auto t0 = std::chrono::steady_clock::now();
   MatrixXd a(3, 3);
   a << 3.0, 1.0, 1.0, 1.0, 2.0, -1.0, 1.0, -1.0, 2.5;
   Rng rng(303);
   SpsaConfig c;
   c.p = 0.05;
   c.n_avg = 10000;
   const auto h = spsa_hess([&](const VectorXd& x) -> VectorXd { return a * x; }, VectorXd::Ones(3), c, rng);
   const double worst_entry = ((h - a).cwiseAbs().array() / a.cwiseAbs().array()).maxCoeff();

   const double lambda = 0.7;
   c.n_avg = 1;
   double worst_diag = 0.0;
   for(int draw = 0; draw < 10000; ++draw) {
      const auto d = spsa_hess([&](const VectorXd& x) -> VectorXd { return lambda * x; }, VectorXd::Zero(3), c, rng);
      worst_diag = std::max(worst_diag, (d.diagonal().array() - lambda).abs().maxCoeff());
   }
   const double secs = seconds_since(t0);
   return {worst_entry <= 0.05 && worst_diag <= 1e-12 && secs < 10.0,
           fmt("max entry relative error %.3f (limit 0.05), regularizer diagonal error %.1e, %.1f s (limit 10 s)",
               worst_entry, worst_diag, secs)};
}

Outcome spsa_bias_scaling()
{
   const auto t0 = std::chrono::steady_clock::now();
   Rng setup(404);
   const auto sc = random_scenario(3, 2, 2, 4, 0.9, 3, setup);
   const auto& m = sc.model;
   const double lambda = 0.1;
   const UpperTarget target{UpperObjective::true_rl, sc.learner_truth.table()};
   double err_coarse = 0.0;
   double err_fine = 0.0;
   for(int seed = 0; seed < 20; ++seed) {
      Rng rng(static_cast< std::uint64_t >(seed));
      const VectorXd tl = random_point(3, 1.0, rng);
      const VectorXd te = random_point(3, 1.0, rng);
      const auto demos = sample_demos(m, tl, te, 20, rng);
      const auto exact = analytical_derivatives(m, target, tl, te, lambda).hess_ee;
      const auto grad = [&](const VectorXd& x) -> VectorXd { return lower_grad_e(m, tl, x, demos, lambda); };
      SpsaConfig c;
      c.design = PerturbationDesign::exhaustive;
      c.p = 0.2;
      err_coarse += (spsa_hess(grad, te, c, rng) - exact).norm() / 20.0;
      c.p = 0.1;
      err_fine += (spsa_hess(grad, te, c, rng) - exact).norm() / 20.0;
   }
   const double ratio = err_coarse / err_fine;
   const double secs = seconds_since(t0);
   return {ratio >= 2.5 && ratio <= 6.0 && secs < 120.0,
           fmt("error ratio %.3f (range [2.5, 6]; errors %.2e / %.2e), %.1f s (limit 120 s)", ratio, err_coarse,
               err_fine, secs)};
}

Outcome hypergradient_agreement()
{
   const auto t0 = std::chrono::steady_clock::now();
   double sum = 0.0;
   for(int game = 0; game < 10; ++game) {
      Rng rng(1000 + static_cast< std::uint64_t >(game));
      const auto sc = random_scenario(3, 2, 2, 4, 0.9, 3, rng);
      const auto& m = sc.model;
      VectorXd tl(3);
      for(int i = 0; i < 3; ++i) {
         tl[i] = 2.0 * rng.uniform() - 1.0;
      }
      tl *= 0.5 / tl.norm();
      const ExpertOracle oracle{sc.expert_truth, sc.learner_truth, ExpertResponse::joint_soft};
      const auto sol = solve_soft(m.game, m.learner, tl, m.expert, VectorXd::Zero(3));
      const auto marginal = learner_marginal(sol.policy);
      const auto demos = sample_interaction(m.game, marginal, expert_policy(oracle, m.game, marginal), 50, rng);
      LowerConfig lower;
      const auto fitted = inner_loop(m, tl, RewardParams::zeros(3), demos, lower, 500).theta_e.theta();
      const UpperTarget target{UpperObjective::true_rl, sc.learner_truth.table()};
      SpsaConfig c;
      c.p = 1e-3;
      c.n_avg = 2000;
      const auto est = estimate_hypergradient(m, target, tl, fitted, demos, lower.lambda, c, rng).assembled;
      const auto exact = analytical_hypergradient(m, target, tl, fitted, lower.lambda);
      sum += est.dot(exact) / (est.norm() * exact.norm());
   }
   const double mean = sum / 10.0;
   const double secs = seconds_since(t0);
   return {mean > 0.9 && secs < 300.0, fmt("mean cosine %.4f (limit > 0.9), %.1f s (limit 300 s)", mean, secs)};
}

double running_mean_sq(const RunResult& r)
{
   double s = 0.0;
   for(const auto& rec : r.records) {
      s += rec.hypergrad_norm * rec.hypergrad_norm;
   }
   return s / static_cast< double >(r.records.size());
}

Outcome convergence_trend()
{
   const auto t0 = std::chrono::steady_clock::now();
   const auto bench = benchmark_scenario();
   const ExpertOracle bench_oracle{bench.expert_truth, bench.learner_truth, ExpertResponse::joint_soft};
   int trend = 0;
   for(int seed = 0; seed < 10; ++seed) {
      DriverConfig c;
      c.seed = static_cast< std::uint64_t >(seed);
      c.K = 100;
      const double short_run = running_mean_sq(run_bisirl(bench.model, bench.learner_truth.table(), bench_oracle, c));
      c.K = 400;
      const double long_run = running_mean_sq(run_bisirl(bench.model, bench.learner_truth.table(), bench_oracle, c));
      trend += long_run < short_run ? 1 : 0;
   }

   const auto sec = builtin_scenario("security-4node");
   const ExpertOracle sec_oracle{sec.expert_truth, sec.learner_truth, ExpertResponse::joint_soft};
   const double marl = run_marl_baseline(sec.model.game, sec.learner_truth.table(), sec.expert_truth.table()).J_l;
   int close = 0;
   double worst = 0.0;
   for(int seed = 0; seed < 10; ++seed) {
      DriverConfig c;
      c.seed = static_cast< std::uint64_t >(seed);
      c.K = 200;
      const double final_jl = run_bisirl(sec.model, sec.learner_truth.table(), sec_oracle, c).records.back().J_l;
      const double rel = std::abs(final_jl - marl) / std::abs(marl);
      worst = std::max(worst, rel);
      close += rel <= 0.1 ? 1 : 0;
   }
   const double secs = seconds_since(t0);
   return {trend >= 8 && close >= 7 && secs < 1200.0,
           fmt("running mean decreased on %.0f/10 seeds (need 8), J_l within 10%% of MARL on %.0f/10 seeds (need 7, "
               "worst %.3f), %.0f s (limit 1200 s)",
               trend, close, worst, secs)};
}

Outcome expert_gap_trend()
{
   const auto t0 = std::chrono::steady_clock::now();
   const auto bench = benchmark_scenario(FeatureKind::linear);
   const ExpertOracle oracle{bench.expert_truth, bench.learner_truth, ExpertResponse::joint_soft};
   int ok = 0;
   for(int seed = 0; seed < 10; ++seed) {
      DriverConfig c;
      c.seed = static_cast< std::uint64_t >(seed);
      c.K = 100;
      const auto r = run_bisirl(bench.model, bench.learner_truth.table(), oracle, c);
      ok += r.records.back().expert_gap <= r.records.front().expert_gap ? 1 : 0;
   }
   return {ok >= 8, fmt("gap at K-1 <= gap at 0 on %.0f/10 seeds (need 8), %.0f s", ok, seconds_since(t0))};
}

Outcome complexity_trend()
{
   const auto t0 = std::chrono::steady_clock::now();
   ExperimentConfig config;
   config.environment = "security-4node";
   config.bench.horizons = {4, 8, 16, 32};
   const auto result = run_bench(config, 1);
   const double spsa = result.slope_spsa;
   const double analytical = result.slope_analytical;
   const double secs = seconds_since(t0);
   return {spsa <= 1.5 && analytical - spsa >= 0.5 && secs < 600.0,
           fmt("slopes spsa %.2f (limit 1.5), analytical %.2f (need spsa + 0.5; tolerance 0.3 not used), %.0f s "
               "(limit 600 s)",
               spsa, analytical, secs)};
}

Outcome monte_carlo_consistency()
{
   const auto t0 = std::chrono::steady_clock::now();
   const int rollouts = 100000;
   Rng rng(909);
   int failures = 0;
   double worst_rho = 0.0;
   double worst_tv = 0.0;
   double worst_mu = 0.0;
   double worst_cond = 0.0;
   double worst_se = 0.0;
   for(int game_index = 0; game_index < 5; ++game_index) {
      const int n = 3 + game_index % 2;
      const auto game = random_game(n, 2, 2, 4, 0.9, rng);
      FeatureMap fm = FeatureMap::zeros(3, game.n_states, game.n_actions_learner, game.n_actions_expert);
      for(auto& v : fm.values) {
         v = 2.0 * rng.uniform() - 1.0;
      }
      const auto model = RewardModel::linear(fm);
      const auto reward = random_table(game, rng);
      const auto sol = solve_soft(game, random_table(game, rng));

      const auto exact = occupancy(game, sol.policy);
      const auto mc = mc_occupancy(game, sol.policy, rollouts, rng);
      for(int h = 0; h < game.horizon; ++h) {
         double tv = 0.0;
         for(int s = 0; s < game.n_states; ++s) {
            double e_state = 0.0;
            double m_state = 0.0;
            for(int j = 0; j < game.n_joint(); ++j) {
               worst_rho = std::max(worst_rho, std::abs(exact.at(h, s, j) - mc.at(h, s, j)));
               e_state += exact.at(h, s, j);
               m_state += mc.at(h, s, j);
            }
            tv += 0.5 * std::abs(e_state - m_state) / std::pow(game.discount, h);
         }
         worst_tv = std::max(worst_tv, tv);
      }

      const auto mu = feature_expectation(exact, model);
      const auto mu_mc = mc_feature_expectation(game, sol.policy, model, rollouts, rng);
      worst_mu = std::max(worst_mu, (mu - mu_mc).cwiseAbs().maxCoeff());

      const auto cond = conditional_mu(game, sol, model, 1, 0, 0);
      const auto cond_mc = mc_conditional_mu(game, sol.policy, model, 1, 0, 0, rollouts, rng);
      worst_cond = std::max(worst_cond, (cond - cond_mc).cwiseAbs().maxCoeff());

      const double j = cumulative_reward(exact, reward);
      const auto j_mc = mc_cumulative_reward(game, sol.policy, reward, rollouts, rng);
      worst_se = std::max(worst_se, std::abs(j - j_mc.mean) / j_mc.standard_error);
   }
   failures += worst_rho > 0.01 ? 1 : 0;
   failures += worst_tv > 0.01 ? 1 : 0;
   failures += worst_mu > 0.01 ? 1 : 0;
   failures += worst_cond > 0.01 ? 1 : 0;
   failures += worst_se > 3.0 ? 1 : 0;
   const double secs = seconds_since(t0);
   return {failures == 0 && secs < 120.0,
           fmt("max |rho| diff %.4f, state TV %.4f, mu %.4f (limits 0.01)", worst_rho, worst_tv, worst_mu) +
              fmt(", conditional mu %.4f (limit 0.01), J %.2f SE (limit 3), %.1f s (limit 120 s)", worst_cond,
                  worst_se, secs)};
}

}  // namespace

int main(int argc, char** argv)
{
   const std::vector< std::pair< std::string, std::function< Outcome() > > > criteria{
      {"lower-level gradients vs finite differences", lower_gradients},
      {"second derivatives vs finite differences", second_derivatives},
      {"SPSA unbiased on quadratics", spsa_unbiased},
      {"SPSA bias shrinks quadratically in p", spsa_bias_scaling},
      {"SPSA hypergradient agrees with the analytical one", hypergradient_agreement},
      {"end-to-end convergence trend", convergence_trend},
      {"expert value gap does not grow", expert_gap_trend},
      {"hypergradient cost scaling in the horizon", complexity_trend},
      {"exact expectations match Monte-Carlo", monte_carlo_consistency},
   };
   std::set< int > selected;
   for(int i = 1; i < argc; ++i) {
      selected.insert(std::atoi(argv[i]));
   }
   int failed = 0;
   for(std::size_t i = 0; i < criteria.size(); ++i) {
      const int number = static_cast< int >(i) + 1;
      if(!selected.empty() && selected.count(number) == 0) {
         continue;
      }
      Outcome outcome;
      try {
         outcome = criteria[i].second();
      } catch(const std::exception& e) {
         outcome = {false, std::string("exception: ") + e.what()};
      }
      std::printf("%s criterion %d (%s): %s\n", outcome.pass ? "PASS" : "FAIL", number, criteria[i].first.c_str(),
                  outcome.detail.c_str());
      std::fflush(stdout);
      failed += outcome.pass ? 0 : 1;
   }
   return failed == 0 ? 0 : 1;
}
