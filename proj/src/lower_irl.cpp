#include "bisirl/lower_irl.hpp"

#include <algorithm>
#include <string>

namespace bisirl {

namespace {

using Eigen::VectorXd;

VectorXd feature_vector(const RewardModel& model, int s, int j)
{
   const auto phi = model.feature(s, j);
   return Eigen::Map< const VectorXd >(phi.data(), model.dim());
}

std::vector< double > total_reward(const BilevelModel& model, const VectorXd& theta_l, const VectorXd& theta_e)
{
   auto total = model.learner.reward_table(theta_l);
   const auto expert = model.expert.reward_table(theta_e);
   for(std::size_t i = 0; i < total.size(); ++i) {
      total[i] += expert[i];
   }
   return total;
}

double initial_value(const MarkovGame& game, const SoftSolution& sol)
{
   double v = 0.0;
   for(int s = 0; s < game.n_states; ++s) {
      v += game.initial_dist[s] * sol.v_at(0, s);
   }
   return v;
}

}  // namespace

void BilevelModel::validate() const
{
   validate_game(game);
   learner.check_shape(game);
   expert.check_shape(game);
}

double LowerConfig::step_size(int t) const
{
   if(step_sizes.empty()) {
      throw InvalidArgument("step size schedule is empty");
   }
   const auto idx = std::min(static_cast< std::size_t >(std::max(t, 0)), step_sizes.size() - 1);
   return step_sizes[idx];
}

void LowerConfig::validate() const
{
   if(!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw InvalidArgument("lambda must be positive");
   }
   if(step_sizes.empty()) {
      throw InvalidArgument("step size schedule is empty");
   }
   for(double b : step_sizes) {
      if(!(b >= 0.0) || !std::isfinite(b)) {
         throw InvalidArgument("step sizes must be finite and non-negative");
      }
   }
   if(mc_rollouts < 1) {
      throw InvalidArgument("mc_rollouts must be positive");
   }
}

EmpiricalFeatures empirical_features(const BilevelModel& model, const DemoSet& demos)
{
   if(demos.empty()) {
      throw InvalidArgument("demo set is empty");
   }
   const auto& game = model.game;
   EmpiricalFeatures out{VectorXd::Zero(model.learner.dim()), VectorXd::Zero(model.expert.dim())};
   for(const auto& traj : demos.trajectories) {
      if(traj.steps.size() != static_cast< std::size_t >(game.horizon)) {
         throw InvalidArgument("demo trajectory length " + std::to_string(traj.steps.size())
                               + " does not match horizon " + std::to_string(game.horizon));
      }
      double weight = 1.0;
      for(const auto& st : traj.steps) {
         if(st.state < 0 || st.state >= game.n_states || st.learner_action < 0
            || st.learner_action >= game.n_actions_learner || st.expert_action < 0
            || st.expert_action >= game.n_actions_expert) {
            throw InvalidArgument("demo step out of range");
         }
         const int j = game.joint(st.learner_action, st.expert_action);
         out.learner += weight * feature_vector(model.learner, st.state, j);
         out.expert += weight * feature_vector(model.expert, st.state, j);
         weight *= game.discount;
      }
   }
   const double d = static_cast< double >(demos.size());
   out.learner /= d;
   out.expert /= d;
   return out;
}

LowerEvaluation evaluate_lower(
   const BilevelModel& model,
   const VectorXd& theta_l,
   const VectorXd& theta_e,
   const EmpiricalFeatures& empirical,
   double lambda
)
{
   const auto sol = solve_soft(model.game, total_reward(model, theta_l, theta_e));
   const auto occ = occupancy(model.game, sol.policy);
   const double empirical_reward = empirical.learner.dot(theta_l) + empirical.expert.dot(theta_e);
   LowerEvaluation out;
   out.loss = initial_value(model.game, sol) - empirical_reward + 0.5 * lambda * theta_e.squaredNorm();
   out.grad_l = feature_expectation(occ, model.learner) - empirical.learner;
   out.grad_e = feature_expectation(occ, model.expert) - empirical.expert + lambda * theta_e;
   return out;
}

double lower_loss(
   const BilevelModel& model,
   const VectorXd& theta_l,
   const VectorXd& theta_e,
   const DemoSet& demos,
   double lambda
)
{
   return evaluate_lower(model, theta_l, theta_e, empirical_features(model, demos), lambda).loss;
}

double demo_negative_log_likelihood(
   const BilevelModel& model,
   const VectorXd& theta_l,
   const VectorXd& theta_e,
   const DemoSet& demos
)
{
   empirical_features(model, demos);  // shape checks
   const auto sol = solve_soft(model.game, total_reward(model, theta_l, theta_e));
   double nll = 0.0;
   for(const auto& traj : demos.trajectories) {
      for(int h = 0; h < model.game.horizon; ++h) {
         const auto& st = traj.steps[h];
         const int j = model.game.joint(st.learner_action, st.expert_action);
         nll -= sol.q_at(h, st.state, j) - sol.v_at(h, st.state);
      }
   }
   return nll / static_cast< double >(demos.size());
}

VectorXd lower_grad_e(
   const BilevelModel& model,
   const VectorXd& theta_l,
   const VectorXd& theta_e,
   const DemoSet& demos,
   double lambda
)
{
   return evaluate_lower(model, theta_l, theta_e, empirical_features(model, demos), lambda).grad_e;
}

VectorXd lower_grad_l(const BilevelModel& model, const VectorXd& theta_l, const VectorXd& theta_e, const DemoSet& demos)
{
   return evaluate_lower(model, theta_l, theta_e, empirical_features(model, demos), 0.0).grad_l;
}

LowerState inner_loop(
   const BilevelModel& model,
   const VectorXd& theta_l,
   const RewardParams& theta_e_init,
   const DemoSet& demos,
   const LowerConfig& config,
   int steps,
   Rng* rng
)
{
   config.validate();
   if(steps < 0) {
      throw InvalidArgument("inner loop step count must be non-negative");
   }
   if(!config.exact_expectations && rng == nullptr) {
      throw InvalidArgument("Monte-Carlo inner loop needs a random stream");
   }
   const auto empirical = empirical_features(model, demos);

   LowerState state;
   state.theta_e = theta_e_init;
   for(int t = 0; t < steps; ++t) {
      const auto& theta_e = state.theta_e.theta();
      auto eval = evaluate_lower(model, theta_l, theta_e, empirical, config.lambda);
      if(!config.exact_expectations) {
         const auto sol = solve_soft(model.game, model.learner, theta_l, model.expert, theta_e);
         eval.grad_e = mc_feature_expectation(model.game, sol.policy, model.expert, config.mc_rollouts, *rng)
                       - empirical.expert + config.lambda * theta_e;
      }
      state.loss_history.push_back(eval.loss);
      state.grad_norm_history.push_back(eval.grad_e.norm());
      state.theta_e = project_ball(theta_e - config.step_size(t) * eval.grad_e);
   }
   return state;
}

}  // namespace bisirl
