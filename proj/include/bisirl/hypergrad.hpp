#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "bisirl/lower_irl.hpp"

namespace bisirl {

enum class PerturbationDesign {
   /// n_avg independent Rademacher draws.
   random,
   /// Every one of the 2^m sign patterns once; n_avg is ignored. The average
   /// is then the exact expectation over Rademacher draws.
   exhaustive,
};

struct SpsaConfig {
   double p = 1e-3;
   int n_avg = 64;
   PerturbationDesign design = PerturbationDesign::random;

   void validate() const;
};

using ScalarObjective = std::function< double(const Eigen::VectorXd&) >;
using VectorObjective = std::function< Eigen::VectorXd(const Eigen::VectorXd&) >;

/// Average of [obj(x + p D) - obj(x - p D)] / (2 p D_i) over perturbations D.
Eigen::VectorXd spsa_grad(const ScalarObjective& objective, const Eigen::VectorXd& x0, const SpsaConfig& config, Rng& rng);

/// Rows i = [g(x + p D) - g(x - p D)] / (2 p D_i), averaged, then symmetrized.
Eigen::MatrixXd spsa_hess(const VectorObjective& grad, const Eigen::VectorXd& x0, const SpsaConfig& config, Rng& rng);

/// Column j = [g(x + p D) - g(x - p D)] / (2 p D_j), averaged; the result is
/// (output dim) x (input dim) and is not symmetrized.
Eigen::MatrixXd spsa_jacobian(
   const VectorObjective& grad,
   const Eigen::VectorXd& x0,
   const SpsaConfig& config,
   Rng& rng
);

struct CgResult {
   Eigen::VectorXd x;
   int iterations = 0;
   double relative_residual = 0.0;
};

/// Conjugate gradient for symmetric positive-definite systems. Stops when
/// |Hx - b| <= tol |b| or after max_iter iterations (default: dimension).
/// Throws NotPositiveDefinite on a direction with p'Hp <= 0.
CgResult cg_solve(const Eigen::MatrixXd& hess, const Eigen::VectorXd& rhs, double tol = 1e-10, int max_iter = -1);

/// Symmetrizes and raises the spectrum to at least `floor`: eigenvalue
/// clamping for dimension <= 64, a Gershgorin shift above that.
Eigen::MatrixXd damp_hessian(const Eigen::MatrixXd& hess, double floor);

enum class UpperObjective {
   /// f uses the ground-truth learner reward.
   true_rl,
   /// f uses the learner's parametric reward r_{theta_l}.
   estimated_rtheta_l,
};

/// f(theta_l, theta_e) = -J_l(pi_{theta_l, theta_e}); minimized by the
/// outer loop.
struct UpperTarget {
   UpperObjective objective = UpperObjective::true_rl;
   /// [s][joint] table; required for true_rl.
   std::vector< double > true_learner_reward;
};

double upper_objective(
   const BilevelModel& model,
   const UpperTarget& target,
   const Eigen::VectorXd& theta_l,
   const Eigen::VectorXd& theta_e
);

struct HypergradEstimate {
   Eigen::VectorXd grad_l_f;
   Eigen::VectorXd grad_e_f;
   Eigen::MatrixXd jac_le;
   Eigen::MatrixXd hess_ee;
   Eigen::VectorXd cg_solution;
   Eigen::VectorXd assembled;
   double cg_residual = 0.0;
   int cg_iterations = 0;
};

/// SPSA estimates of grad f and the lower-level second derivatives, an
/// eigenvalue floor of lambda/2 on the Hessian, a CG solve, and
///   g = grad_l f - J_le H_ee^{-1} grad_e f.
HypergradEstimate estimate_hypergradient(
   const BilevelModel& model,
   const UpperTarget& target,
   const Eigen::VectorXd& theta_l,
   const Eigen::VectorXd& theta_e,
   const DemoSet& demos,
   double lambda,
   const SpsaConfig& config,
   Rng& rng
);

/// Exact derivatives from score-function forms. Conditional expectations
/// are recomputed per step by a backward pass from that step.
struct AnalyticalDerivatives {
   Eigen::VectorXd grad_l_f;
   Eigen::VectorXd grad_e_f;
   /// d^2 L / d theta_e^2 (m x m).
   Eigen::MatrixXd hess_ee;
   /// d^2 L / d theta_l d theta_e (n x m).
   Eigen::MatrixXd hess_le;
};

/// The lower-level second derivatives do not depend on the demonstrations,
/// which enter L linearly.
AnalyticalDerivatives analytical_derivatives(
   const BilevelModel& model,
   const UpperTarget& target,
   const Eigen::VectorXd& theta_l,
   const Eigen::VectorXd& theta_e,
   double lambda
);

/// grad_l f - H_le H_ee^{-1} grad_e f with a direct factorization. Throws
/// NotPositiveDefinite when H_ee is singular or indefinite.
Eigen::VectorXd analytical_hypergradient(
   const BilevelModel& model,
   const UpperTarget& target,
   const Eigen::VectorXd& theta_l,
   const Eigen::VectorXd& theta_e,
   double lambda
);

}  // namespace bisirl
