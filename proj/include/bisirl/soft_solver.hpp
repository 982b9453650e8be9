#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bisirl/game.hpp"
#include "bisirl/reward.hpp"

namespace bisirl {

/// Finite-horizon soft value iteration result. `q` is [h][s][joint], `v` is
/// [h][s]; the terminal value V_H is identically zero and not stored.
struct SoftSolution {
   int horizon = 0;
   int n_states = 0;
   int n_joint = 0;
   std::vector< double > q;
   std::vector< double > v;
   JointPolicy policy;

   [[nodiscard]] double q_at(int h, int s, int j) const
   {
      return q[(static_cast< std::size_t >(h) * n_states + s) * n_joint + j];
   }
   [[nodiscard]] double v_at(int h, int s) const { return v[static_cast< std::size_t >(h) * n_states + s]; }
};

/// Backward soft Bellman recursion with temperature 1:
///   Q_h = r + gamma * P V_{h+1},  V_h = logsumexp_a Q_h,  pi_h = exp(Q_h - V_h).
/// `reward_table` is the total reward laid out [s][joint].
SoftSolution solve_soft(const MarkovGame& game, std::span< const double > reward_table);

/// Soft solution for r_{theta_l} + r_{theta_e}.
SoftSolution solve_soft(
   const MarkovGame& game,
   const RewardModel& learner_model,
   const Eigen::VectorXd& theta_l,
   const RewardModel& expert_model,
   const Eigen::VectorXd& theta_e
);

/// rho[h][s][joint] = gamma^h * Pr(s^h = s, a^h = joint).
struct OccupancyMeasure {
   int horizon = 0;
   int n_states = 0;
   int n_joint = 0;
   std::vector< double > rho;

   [[nodiscard]] double at(int h, int s, int j) const
   {
      return rho[(static_cast< std::size_t >(h) * n_states + s) * n_joint + j];
   }
   /// Sum of rho over (s, a) at step h.
   [[nodiscard]] double mass(int h) const;
};

OccupancyMeasure occupancy(const MarkovGame& game, const JointPolicy& policy);

/// sum_{h,s,a} rho * phi(s, a).
Eigen::VectorXd feature_expectation(const OccupancyMeasure& occ, const RewardModel& model);

/// sum_{h,s,a} rho * r(s, a) for a [s][joint] reward table.
double cumulative_reward(const OccupancyMeasure& occ, std::span< const double > reward_table);
double cumulative_reward(const OccupancyMeasure& occ, const RewardModel& model, const Eigen::VectorXd& theta);

/// Expected discounted sums of a per-(s, a) vector quantity over the
/// remaining horizon, discounted relative to the conditioning step:
///   by_action[h][s][a] = E[sum_{j>=h} gamma^{j-h} x(s^j, a^j) | s^h = s, a^h = a]
///   by_state[h][s]     = sum_a pi_h(a|s) by_action[h][s][a]
/// Layers before `first_step` are left zero.
struct TailExpectation {
   int dim = 0;
   int horizon = 0;
   int n_states = 0;
   int n_joint = 0;
   std::vector< double > by_action;
   std::vector< double > by_state;

   [[nodiscard]] Eigen::Map< const Eigen::VectorXd > action(int h, int s, int j) const
   {
      return {by_action.data() + ((static_cast< std::size_t >(h) * n_states + s) * n_joint + j) * dim, dim};
   }
   [[nodiscard]] Eigen::Map< const Eigen::VectorXd > state(int h, int s) const
   {
      return {by_state.data() + (static_cast< std::size_t >(h) * n_states + s) * dim, dim};
   }
};

/// `values` holds x(s, a) laid out [s][joint][dim].
TailExpectation tail_expectation(
   const MarkovGame& game,
   const JointPolicy& policy,
   std::span< const double > values,
   int dim,
   int first_step = 0
);

/// Conditional feature expectation mu(s) at step h, or mu(s, a) when the
/// first joint action is given. Throws InvalidArgument on bad indices.
Eigen::VectorXd conditional_mu(
   const MarkovGame& game,
   const SoftSolution& solution,
   const RewardModel& model,
   int h,
   int s,
   std::optional< int > joint_action = std::nullopt
);

/// Debug dump of q, v and the policy; not a stable format.
nlohmann::json solution_to_json(const SoftSolution& solution);

// Monte-Carlo counterparts of the exact evaluators, driven by rollouts.

OccupancyMeasure mc_occupancy(const MarkovGame& game, const JointPolicy& policy, int rollouts, Rng& rng);

Eigen::VectorXd mc_feature_expectation(
   const MarkovGame& game,
   const JointPolicy& policy,
   const RewardModel& model,
   int rollouts,
   Rng& rng
);

struct MonteCarloEstimate {
   double mean = 0.0;
   double standard_error = 0.0;
};

MonteCarloEstimate mc_cumulative_reward(
   const MarkovGame& game,
   const JointPolicy& policy,
   std::span< const double > reward_table,
   int rollouts,
   Rng& rng
);

/// Rollouts started at (h, s) (and joint action a when given), averaging
/// sum_{j>=h} gamma^{j-h} phi(s^j, a^j).
Eigen::VectorXd mc_conditional_mu(
   const MarkovGame& game,
   const JointPolicy& policy,
   const RewardModel& model,
   int h,
   int s,
   std::optional< int > joint_action,
   int rollouts,
   Rng& rng
);

}  // namespace bisirl
