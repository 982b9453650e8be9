#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bisirl/hypergrad.hpp"
#include "bisirl/lower_irl.hpp"

namespace bisirl {

struct ScheduleValues {
   double p = 1.0;
   double alpha = 0.0;
   int t = 1;
};

/// p(k) = p_scale / (k + 1), alpha = alpha0 / sqrt(K), t_k = ceil((k + 1)^(1/4) / 2).
ScheduleValues schedules(int k, int K, double p_scale = 1.0, double alpha0 = 0.5);

enum class ExpertResponse {
   /// Expert marginal of the soft joint policy under both true rewards.
   joint_soft,
   /// Soft policy of the single-agent MDP induced by the learner's marginal.
   best_response_soft,
};

struct ExpertOracle {
   BoundReward true_reward_e;
   /// Needed by joint_soft only.
   BoundReward true_reward_l;
   ExpertResponse mode = ExpertResponse::joint_soft;
};

/// The live expert's action distribution given the learner's executed
/// marginal. Throws ShapeMismatch on inconsistent shapes.
StagePolicy expert_policy(const ExpertOracle& oracle, const MarkovGame& game, const StagePolicy& learner);

struct DriverConfig {
   int K = 100;
   double p_scale = 1.0;
   double alpha0 = 0.5;
   LowerConfig lower;
   /// `p` is replaced by the schedule value each iteration.
   SpsaConfig spsa;
   int demos = 50;
   UpperObjective objective = UpperObjective::true_rl;
   std::uint64_t seed = 0;
   std::optional< Eigen::VectorXd > theta_l_init;
   std::optional< Eigen::VectorXd > theta_e_init;

   void validate() const;
};

struct RunRecord {
   int k = 0;
   Eigen::VectorXd theta_l;
   Eigen::VectorXd theta_e;
   double f = 0.0;
   double J_l = 0.0;
   double J_e = 0.0;
   double expert_gap = 0.0;
   double hypergrad_norm = 0.0;
   double cg_residual = 0.0;
   std::vector< double > lower_loss;
   std::vector< double > inner_grad_norm;
   double ms_inner = 0.0;
   double ms_hypergrad = 0.0;
   double ms_outer = 0.0;
};

struct RunResult {
   std::vector< RunRecord > records;
   Eigen::VectorXd theta_l;
   Eigen::VectorXd theta_e;
   JointPolicy policy;
};

/// Outer loop: sample demos against the live expert, run the inner loop,
/// estimate the hypergradient and take a projected step on theta_l.
/// Iteration k's record is taken at (theta_l(k), theta_e after the inner
/// loop). Errors are rethrown with the iteration index.
RunResult run_bisirl(
   const BilevelModel& model,
   const std::vector< double >& true_learner_reward,
   const ExpertOracle& oracle,
   const DriverConfig& config
);

struct PolicyValues {
   JointPolicy policy;
   double J_l = 0.0;
   double J_e = 0.0;
};

/// Soft joint policy under both true rewards, with exact values.
PolicyValues run_marl_baseline(
   const MarkovGame& game,
   const std::vector< double >& true_learner_reward,
   const std::vector< double >& true_expert_reward
);

/// Trajectories of the joint soft policy for (r_{theta_l_init}, true r_e).
DemoSet mlirl_demos(
   const BilevelModel& model,
   const Eigen::VectorXd& theta_l_init,
   const ExpertOracle& oracle,
   int count,
   Rng& rng
);

struct MlirlResult {
   Eigen::VectorXd theta_e;
   PolicyValues values;
};

/// Inner-loop-only fit of theta_e to fixed demos; theta_l stays at its
/// initial value.
MlirlResult run_mlirl_baseline(
   const BilevelModel& model,
   const std::vector< double >& true_learner_reward,
   const Eigen::VectorXd& theta_l_init,
   const ExpertOracle& oracle,
   const DemoSet& demos,
   const LowerConfig& config,
   int steps
);

/// J_e of `policy` under the true expert reward minus J_e when the expert
/// part is replaced by the live expert's response, in absolute value.
double expert_value_gap(const MarkovGame& game, const ExpertOracle& oracle, const JointPolicy& policy);

}  // namespace bisirl
