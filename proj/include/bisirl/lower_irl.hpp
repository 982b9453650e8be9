#pragma once

#include <vector>

#include <Eigen/Dense>

#include "bisirl/game.hpp"
#include "bisirl/reward.hpp"
#include "bisirl/soft_solver.hpp"

namespace bisirl {

/// Game plus the learner's and expert's parametric reward models.
struct BilevelModel {
   MarkovGame game;
   RewardModel learner;
   RewardModel expert;

   /// Validates the game and both model shapes.
   void validate() const;
};

struct LowerConfig {
   double lambda = 0.1;
   /// beta_t for t = 0, 1, ...; the last entry repeats past the end.
   std::vector< double > step_sizes{0.1};
   /// Occupancy-based mu when true, rollout estimates otherwise.
   bool exact_expectations = true;
   int mc_rollouts = 1000;

   [[nodiscard]] double step_size(int t) const;
   /// lambda > 0, non-empty step sizes, each >= 0, mc_rollouts >= 1.
   void validate() const;
};

struct LowerState {
   RewardParams theta_e = RewardParams::zeros(1);
   std::vector< double > loss_history;
   std::vector< double > grad_norm_history;
};

/// (1/d) sum_i sum_h gamma^h phi(s^ih, a^ih) for both models.
struct EmpiricalFeatures {
   Eigen::VectorXd learner;
   Eigen::VectorXd expert;
};

/// Throws InvalidArgument on an empty set or out-of-range steps.
EmpiricalFeatures empirical_features(const BilevelModel& model, const DemoSet& demos);

/// Normalized ML-IRL loss
///   (1/d) sum_i [ sum_s P0(s) V_0(s) - sum_h gamma^h (r_l + r_e)(s^ih, a^ih) ] + lambda/2 |theta_e|^2
/// whose gradients are exactly the moment-matching forms below. It coincides
/// with the per-step negative log-likelihood when dynamics and the initial
/// state are deterministic and gamma = 1.
double lower_loss(
   const BilevelModel& model,
   const Eigen::VectorXd& theta_l,
   const Eigen::VectorXd& theta_e,
   const DemoSet& demos,
   double lambda
);

/// (1/d) sum_i sum_h -ln pi_h(a^ih | s^ih): the plain per-step likelihood.
double demo_negative_log_likelihood(
   const BilevelModel& model,
   const Eigen::VectorXd& theta_l,
   const Eigen::VectorXd& theta_e,
   const DemoSet& demos
);

/// mu_e(pi) - mu_hat_e + lambda theta_e.
Eigen::VectorXd lower_grad_e(
   const BilevelModel& model,
   const Eigen::VectorXd& theta_l,
   const Eigen::VectorXd& theta_e,
   const DemoSet& demos,
   double lambda
);

/// mu_l(pi) - mu_hat_l.
Eigen::VectorXd lower_grad_l(
   const BilevelModel& model,
   const Eigen::VectorXd& theta_l,
   const Eigen::VectorXd& theta_e,
   const DemoSet& demos
);

struct LowerEvaluation {
   double loss = 0.0;
   Eigen::VectorXd grad_l;
   Eigen::VectorXd grad_e;
};

/// Loss and both gradients from a single soft solve, with precomputed demo
/// moments.
LowerEvaluation evaluate_lower(
   const BilevelModel& model,
   const Eigen::VectorXd& theta_l,
   const Eigen::VectorXd& theta_e,
   const EmpiricalFeatures& empirical,
   double lambda
);

/// Projected gradient descent on theta_e for `steps` iterations with demos
/// and theta_l held fixed; returns the iterate after the last step. `rng` is
/// required when exact expectations are off.
LowerState inner_loop(
   const BilevelModel& model,
   const Eigen::VectorXd& theta_l,
   const RewardParams& theta_e_init,
   const DemoSet& demos,
   const LowerConfig& config,
   int steps,
   Rng* rng = nullptr
);

}  // namespace bisirl
