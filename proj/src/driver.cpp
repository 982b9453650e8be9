#include "bisirl/driver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace bisirl {

namespace {

using Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start)
{
   return std::chrono::duration< double, std::milli >(Clock::now() - start).count();
}

double value_of(const MarkovGame& game, const JointPolicy& policy, const std::vector< double >& reward)
{
   return cumulative_reward(occupancy(game, policy), reward);
}

/// Soft backward induction on the single-agent MDP seen by the expert when
/// the learner plays `learner`.
StagePolicy induced_soft_policy(const MarkovGame& game, const StagePolicy& learner, const std::vector< double >& r_e)
{
   const int n_states = game.n_states;
   const int n_e = game.n_actions_expert;
   StagePolicy out(game.horizon, n_states, n_e);
   std::vector< double > v_next(n_states, 0.0);
   std::vector< double > v_cur(n_states);
   std::vector< double > q(n_e);
   for(int h = game.horizon - 1; h >= 0; --h) {
      for(int s = 0; s < n_states; ++s) {
         const auto pl = learner.row(h, s);
         double q_max = -std::numeric_limits< double >::infinity();
         for(int ae = 0; ae < n_e; ++ae) {
            double value = 0.0;
            for(int al = 0; al < game.n_actions_learner; ++al) {
               const int j = game.joint(al, ae);
               double cont = 0.0;
               if(h + 1 < game.horizon) {
                  const auto next = game.next_dist(s, j);
                  for(int sn = 0; sn < n_states; ++sn) {
                     cont += next[sn] * v_next[sn];
                  }
               }
               value += pl[al] * (r_e[static_cast< std::size_t >(s) * game.n_joint() + j] + game.discount * cont);
            }
            q[ae] = value;
            q_max = std::max(q_max, value);
         }
         double acc = 0.0;
         for(double x : q) {
            acc += std::exp(x - q_max);
         }
         v_cur[s] = q_max + std::log(acc);
         auto row = out.row(h, s);
         for(int ae = 0; ae < n_e; ++ae) {
            row[ae] = std::exp(q[ae] - v_cur[s]);
         }
      }
      v_next.swap(v_cur);
   }
   return out;
}

void check_learner_marginal(const MarkovGame& game, const StagePolicy& learner)
{
   if(learner.horizon() != game.horizon || learner.n_states() != game.n_states
      || learner.n_actions() != game.n_actions_learner) {
      throw ShapeMismatch("learner marginal does not match the game");
   }
   learner.check_normalized();
}

}  // namespace

ScheduleValues schedules(int k, int K, double p_scale, double alpha0)
{
   if(K < 1 || k < 0 || k >= K) {
      throw InvalidArgument("schedule index must satisfy 0 <= k < K");
   }
   ScheduleValues out;
   out.p = p_scale / (k + 1);
   out.alpha = alpha0 / std::sqrt(static_cast< double >(K));
   out.t = static_cast< int >(std::ceil(std::sqrt(std::sqrt(static_cast< double >(k + 1))) / 2.0));
   return out;
}

StagePolicy expert_policy(const ExpertOracle& oracle, const MarkovGame& game, const StagePolicy& learner)
{
   check_learner_marginal(game, learner);
   oracle.true_reward_e.model.check_shape(game);
   if(oracle.mode == ExpertResponse::joint_soft) {
      oracle.true_reward_l.model.check_shape(game);
      auto total = oracle.true_reward_l.table();
      const auto r_e = oracle.true_reward_e.table();
      for(std::size_t i = 0; i < total.size(); ++i) {
         total[i] += r_e[i];
      }
      return expert_marginal(solve_soft(game, total).policy);
   }
   return induced_soft_policy(game, learner, oracle.true_reward_e.table());
}

double expert_value_gap(const MarkovGame& game, const ExpertOracle& oracle, const JointPolicy& policy)
{
   const auto r_e = oracle.true_reward_e.table();
   const auto learner = learner_marginal(policy);
   const auto live = product_policy(learner, expert_policy(oracle, game, learner));
   return std::abs(value_of(game, policy, r_e) - value_of(game, live, r_e));
}

void DriverConfig::validate() const
{
   if(K < 1) {
      throw InvalidArgument("K must be at least 1");
   }
   if(!(p_scale > 0.0) || !std::isfinite(p_scale)) {
      throw InvalidArgument("p_scale must be positive");
   }
   if(!(alpha0 >= 0.0) || !std::isfinite(alpha0)) {
      throw InvalidArgument("alpha0 must be non-negative");
   }
   if(demos < 1) {
      throw InvalidArgument("demos per iteration must be positive");
   }
   lower.validate();
   spsa.validate();
}

RunResult run_bisirl(
   const BilevelModel& model,
   const std::vector< double >& true_learner_reward,
   const ExpertOracle& oracle,
   const DriverConfig& config
)
{
   config.validate();
   model.validate();
   const auto& game = model.game;
   const auto r_e_true = oracle.true_reward_e.table();
   if(true_learner_reward.size() != r_e_true.size()) {
      throw ShapeMismatch("true learner reward does not match the game");
   }

   VectorXd theta_l = config.theta_l_init.value_or(VectorXd::Zero(model.learner.dim()));
   RewardParams theta_e(config.theta_e_init.value_or(VectorXd::Zero(model.expert.dim())));
   if(theta_l.size() != model.learner.dim() || theta_e.dim() != model.expert.dim()) {
      throw ShapeMismatch("initial parameters do not match the reward models");
   }
   theta_l = RewardParams(theta_l).theta();

   const UpperTarget target{config.objective, true_learner_reward};
   Rng master(config.seed);
   RunResult result;
   for(int k = 0; k < config.K; ++k) {
      try {
         const auto sched = schedules(k, config.K, config.p_scale, config.alpha0);
         Rng demo_rng = master.fork();
         Rng spsa_rng = master.fork();
         Rng inner_rng = master.fork();
         RunRecord rec;
         rec.k = k;
         rec.theta_l = theta_l;

         auto start = Clock::now();
         const auto current = solve_soft(game, model.learner, theta_l, model.expert, theta_e.theta());
         const auto learner = learner_marginal(current.policy);
         const auto demos = sample_interaction(game, learner, expert_policy(oracle, game, learner), config.demos, demo_rng);
         auto lower = inner_loop(model, theta_l, theta_e, demos, config.lower, sched.t, &inner_rng);
         theta_e = lower.theta_e;
         rec.theta_e = theta_e.theta();
         rec.lower_loss = std::move(lower.loss_history);
         rec.inner_grad_norm = std::move(lower.grad_norm_history);
         rec.ms_inner = ms_since(start);

         start = Clock::now();
         auto spsa = config.spsa;
         spsa.p = sched.p;
         const auto est = estimate_hypergradient(model, target, theta_l, theta_e.theta(), demos, config.lower.lambda, spsa, spsa_rng);
         rec.hypergrad_norm = est.assembled.norm();
         rec.cg_residual = est.cg_residual;
         rec.ms_hypergrad = ms_since(start);

         start = Clock::now();
         const auto fitted = solve_soft(game, model.learner, theta_l, model.expert, theta_e.theta());
         rec.f = upper_objective(model, target, theta_l, theta_e.theta());
         rec.J_l = value_of(game, fitted.policy, true_learner_reward);
         rec.J_e = value_of(game, fitted.policy, r_e_true);
         rec.expert_gap = expert_value_gap(game, oracle, fitted.policy);
         theta_l = project_ball(theta_l - sched.alpha * est.assembled).theta();
         rec.ms_outer = ms_since(start);
         result.records.push_back(std::move(rec));
      } catch(const Error& e) {
         throw Error("iteration " + std::to_string(k) + ": " + e.what());
      }
   }
   result.theta_l = theta_l;
   result.theta_e = theta_e.theta();
   result.policy = solve_soft(game, model.learner, theta_l, model.expert, theta_e.theta()).policy;
   return result;
}

PolicyValues run_marl_baseline(
   const MarkovGame& game,
   const std::vector< double >& true_learner_reward,
   const std::vector< double >& true_expert_reward
)
{
   validate_game(game);
   if(true_learner_reward.size() != true_expert_reward.size()) {
      throw ShapeMismatch("reward tables differ in size");
   }
   auto total = true_learner_reward;
   for(std::size_t i = 0; i < total.size(); ++i) {
      total[i] += true_expert_reward[i];
   }
   PolicyValues out;
   out.policy = solve_soft(game, total).policy;
   const auto occ = occupancy(game, out.policy);
   out.J_l = cumulative_reward(occ, true_learner_reward);
   out.J_e = cumulative_reward(occ, true_expert_reward);
   return out;
}

DemoSet mlirl_demos(const BilevelModel& model, const VectorXd& theta_l_init, const ExpertOracle& oracle, int count, Rng& rng)
{
   if(count < 0) {
      throw InvalidArgument("demo count must be non-negative");
   }
   auto total = model.learner.reward_table(theta_l_init);
   const auto r_e = oracle.true_reward_e.table();
   for(std::size_t i = 0; i < total.size(); ++i) {
      total[i] += r_e[i];
   }
   const auto policy = solve_soft(model.game, total).policy;
   DemoSet demos;
   demos.horizon = model.game.horizon;
   for(int i = 0; i < count; ++i) {
      demos.trajectories.push_back(sample_trajectory(model.game, policy, rng));
   }
   return demos;
}

MlirlResult run_mlirl_baseline(
   const BilevelModel& model,
   const std::vector< double >& true_learner_reward,
   const VectorXd& theta_l_init,
   const ExpertOracle& oracle,
   const DemoSet& demos,
   const LowerConfig& config,
   int steps
)
{
   model.validate();
   MlirlResult out;
   out.theta_e = VectorXd::Zero(model.expert.dim());
   if(steps > 0) {
      out.theta_e = inner_loop(model, theta_l_init, RewardParams(out.theta_e), demos, config, steps).theta_e.theta();
   }
   out.values.policy = solve_soft(model.game, model.learner, theta_l_init, model.expert, out.theta_e).policy;
   out.values.J_l = value_of(model.game, out.values.policy, true_learner_reward);
   out.values.J_e = value_of(model.game, out.values.policy, oracle.true_reward_e.table());
   return out;
}

}  // namespace bisirl
