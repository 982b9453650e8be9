#include "bisirl/hypergrad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bisirl {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kMaxExhaustiveDim = 20;
constexpr int kMaxEigenDampingDim = 64;

/// Calls visit(delta) for every perturbation of the design; returns the count.
template< class Visit >
long for_each_perturbation(int dim, const SpsaConfig& config, Rng& rng, Visit&& visit)
{
   VectorXd delta(dim);
   if(config.design == PerturbationDesign::exhaustive) {
      if(dim > kMaxExhaustiveDim) {
         throw InvalidArgument("exhaustive perturbation design is limited to dimension "
                               + std::to_string(kMaxExhaustiveDim));
      }
      const long patterns = 1L << dim;
      for(long bits = 0; bits < patterns; ++bits) {
         for(int i = 0; i < dim; ++i) {
            delta[i] = ((bits >> i) & 1L) != 0 ? 1.0 : -1.0;
         }
         visit(delta);
      }
      return patterns;
   }
   for(int draw = 0; draw < config.n_avg; ++draw) {
      for(int i = 0; i < dim; ++i) {
         delta[i] = rng.rademacher();
      }
      visit(delta);
   }
   return config.n_avg;
}

void check_finite(const VectorXd& v, const char* what)
{
   if(!v.allFinite()) {
      throw Error(std::string(what) + " produced a non-finite value");
   }
}

std::vector< double > upper_reward_table(const BilevelModel& model, const UpperTarget& target, const VectorXd& theta_l)
{
   if(target.objective == UpperObjective::estimated_rtheta_l) {
      return model.learner.reward_table(theta_l);
   }
   const auto expected = static_cast< std::size_t >(model.game.n_states) * model.game.n_joint();
   if(target.true_learner_reward.size() != expected) {
      throw ShapeMismatch("true learner reward table has " + std::to_string(target.true_learner_reward.size())
                          + " entries, expected " + std::to_string(expected));
   }
   return target.true_learner_reward;
}

}  // namespace

void SpsaConfig::validate() const
{
   if(!(p > 0.0) || !std::isfinite(p)) {
      throw InvalidArgument("SPSA perturbation radius must be positive");
   }
   if(n_avg < 1) {
      throw InvalidArgument("SPSA n_avg must be at least 1");
   }
}

VectorXd spsa_grad(const ScalarObjective& objective, const VectorXd& x0, const SpsaConfig& config, Rng& rng)
{
   config.validate();
   const int dim = static_cast< int >(x0.size());
   VectorXd acc = VectorXd::Zero(dim);
   const long count = for_each_perturbation(dim, config, rng, [&](const VectorXd& delta) {
      const double diff = objective(x0 + config.p * delta) - objective(x0 - config.p * delta);
      acc += (diff / (2.0 * config.p)) * delta.cwiseInverse();
   });
   acc /= static_cast< double >(count);
   check_finite(acc, "spsa_grad");
   return acc;
}

MatrixXd spsa_jacobian(const VectorObjective& grad, const VectorXd& x0, const SpsaConfig& config, Rng& rng)
{
   config.validate();
   const int dim = static_cast< int >(x0.size());
   MatrixXd acc;
   const long count = for_each_perturbation(dim, config, rng, [&](const VectorXd& delta) {
      const VectorXd diff = (grad(x0 + config.p * delta) - grad(x0 - config.p * delta)) / (2.0 * config.p);
      if(acc.size() == 0) {
         acc = MatrixXd::Zero(diff.size(), dim);
      }
      acc += diff * delta.cwiseInverse().transpose();
   });
   acc /= static_cast< double >(count);
   if(!acc.allFinite()) {
      throw Error("spsa_jacobian produced a non-finite value");
   }
   return acc;
}

MatrixXd spsa_hess(const VectorObjective& grad, const VectorXd& x0, const SpsaConfig& config, Rng& rng)
{
   // Row i of the raw estimate is column i of the Jacobian form.
   const MatrixXd jac = spsa_jacobian(grad, x0, config, rng);
   if(jac.rows() != jac.cols()) {
      throw ShapeMismatch("spsa_hess needs a gradient with the input's dimension");
   }
   const MatrixXd raw = jac.transpose();
   return 0.5 * (raw + raw.transpose());
}

CgResult cg_solve(const MatrixXd& hess, const VectorXd& rhs, double tol, int max_iter)
{
   if(hess.rows() != hess.cols() || hess.rows() != rhs.size()) {
      throw ShapeMismatch("cg_solve: matrix and right-hand side do not conform");
   }
   const int dim = static_cast< int >(rhs.size());
   if(max_iter < 0) {
      max_iter = dim;
   }
   CgResult out;
   out.x = VectorXd::Zero(dim);
   const double b_norm = rhs.norm();
   if(b_norm == 0.0) {
      return out;
   }
   VectorXd r = rhs;
   VectorXd p = r;
   double rr = r.squaredNorm();
   while(out.iterations < max_iter && std::sqrt(rr) > tol * b_norm) {
      const VectorXd hp = hess * p;
      const double curvature = p.dot(hp);
      if(!(curvature > 0.0)) {
         throw NotPositiveDefinite("hessian not positive definite");
      }
      const double alpha = rr / curvature;
      out.x += alpha * p;
      r -= alpha * hp;
      const double rr_next = r.squaredNorm();
      p = r + (rr_next / rr) * p;
      rr = rr_next;
      ++out.iterations;
   }
   out.relative_residual = (hess * out.x - rhs).norm() / b_norm;
   return out;
}

MatrixXd damp_hessian(const MatrixXd& hess, double floor)
{
   if(hess.rows() != hess.cols()) {
      throw ShapeMismatch("damp_hessian needs a square matrix");
   }
   const MatrixXd sym = 0.5 * (hess + hess.transpose());
   const auto dim = sym.rows();
   if(dim <= kMaxEigenDampingDim) {
      Eigen::SelfAdjointEigenSolver< MatrixXd > eig(sym);
      if(eig.info() != Eigen::Success) {
         throw Error("eigendecomposition failed while damping the hessian");
      }
      const VectorXd clamped = eig.eigenvalues().cwiseMax(floor);
      const MatrixXd out = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
      return 0.5 * (out + out.transpose());
   }
   double lower = std::numeric_limits< double >::infinity();
   for(Eigen::Index i = 0; i < dim; ++i) {
      const double off = sym.row(i).cwiseAbs().sum() - std::abs(sym(i, i));
      lower = std::min(lower, sym(i, i) - off);
   }
   MatrixXd out = sym;
   if(lower < floor) {
      out.diagonal().array() += floor - lower;
   }
   return out;
}

double upper_objective(const BilevelModel& model, const UpperTarget& target, const VectorXd& theta_l, const VectorXd& theta_e)
{
   const auto sol = solve_soft(model.game, model.learner, theta_l, model.expert, theta_e);
   const auto occ = occupancy(model.game, sol.policy);
   return -cumulative_reward(occ, upper_reward_table(model, target, theta_l));
}

HypergradEstimate estimate_hypergradient(
   const BilevelModel& model,
   const UpperTarget& target,
   const VectorXd& theta_l,
   const VectorXd& theta_e,
   const DemoSet& demos,
   double lambda,
   const SpsaConfig& config,
   Rng& rng
)
{
   config.validate();
   if(!(lambda > 0.0)) {
      throw InvalidArgument("lambda must be positive");
   }
   const int n = model.learner.dim();
   const int m = model.expert.dim();
   if(theta_l.size() != n || theta_e.size() != m) {
      throw ShapeMismatch("parameter dimensions do not match the reward models");
   }
   const auto empirical = empirical_features(model, demos);

   HypergradEstimate out;
   out.grad_l_f = spsa_grad([&](const VectorXd& x) { return upper_objective(model, target, x, theta_e); }, theta_l, config, rng);
   out.grad_e_f = spsa_grad([&](const VectorXd& x) { return upper_objective(model, target, theta_l, x); }, theta_e, config, rng);

   // One set of perturbations of theta_e serves both second-derivative
   // blocks: stack [grad_e L; grad_l L] and split the Jacobian estimate.
   const MatrixXd stacked = spsa_jacobian(
      [&](const VectorXd& x) {
         const auto eval = evaluate_lower(model, theta_l, x, empirical, lambda);
         VectorXd g(m + n);
         g << eval.grad_e, eval.grad_l;
         return g;
      },
      theta_e,
      config,
      rng
   );
   const MatrixXd raw_hess = stacked.topRows(m).transpose();
   out.hess_ee = damp_hessian(0.5 * (raw_hess + raw_hess.transpose()), 0.5 * lambda);
   out.jac_le = stacked.bottomRows(n);

   const auto cg = cg_solve(out.hess_ee, out.grad_e_f);
   out.cg_solution = cg.x;
   out.cg_residual = cg.relative_residual;
   out.cg_iterations = cg.iterations;
   out.assembled = out.grad_l_f - out.jac_le * out.cg_solution;
   check_finite(out.assembled, "estimate_hypergradient");
   return out;
}

AnalyticalDerivatives analytical_derivatives(
   const BilevelModel& model,
   const UpperTarget& target,
   const VectorXd& theta_l,
   const VectorXd& theta_e,
   double lambda
)
{
   model.validate();
   const auto& game = model.game;
   const int n = model.learner.dim();
   const int m = model.expert.dim();
   const auto sol = solve_soft(game, model.learner, theta_l, model.expert, theta_e);
   const auto occ = occupancy(game, sol.policy);
   const auto reward = upper_reward_table(model, target, theta_l);

   AnalyticalDerivatives out;
   out.grad_l_f = VectorXd::Zero(n);
   out.grad_e_f = VectorXd::Zero(m);
   out.hess_ee = lambda * MatrixXd::Identity(m, m);
   out.hess_le = MatrixXd::Zero(n, m);

   VectorXd score_l(n);
   VectorXd score_e(m);
   for(int h = 0; h < game.horizon; ++h) {
      // Conditional expectations from step h onward, computed afresh.
      const auto tail_l = tail_expectation(game, sol.policy, model.learner.features().values, n, h);
      const auto tail_e = tail_expectation(game, sol.policy, model.expert.features().values, m, h);
      const auto tail_r = tail_expectation(game, sol.policy, reward, 1, h);
      for(int s = 0; s < game.n_states; ++s) {
         const auto mean_l = tail_l.state(h, s);
         const auto mean_e = tail_e.state(h, s);
         for(int j = 0; j < game.n_joint(); ++j) {
            const double rho = occ.at(h, s, j);
            if(rho == 0.0) {
               continue;
            }
            score_l = tail_l.action(h, s, j) - mean_l;
            score_e = tail_e.action(h, s, j) - mean_e;
            const double value = tail_r.action(h, s, j)[0];
            // f = -J, so the score-function terms enter with a minus sign.
            out.grad_l_f -= rho * value * score_l;
            out.grad_e_f -= rho * value * score_e;
            out.hess_ee.noalias() += rho * score_e * score_e.transpose();
            out.hess_le.noalias() += rho * score_l * score_e.transpose();
         }
      }
   }
   if(target.objective == UpperObjective::estimated_rtheta_l) {
      out.grad_l_f -= feature_expectation(occ, model.learner);
   }
   return out;
}

VectorXd analytical_hypergradient(
   const BilevelModel& model,
   const UpperTarget& target,
   const VectorXd& theta_l,
   const VectorXd& theta_e,
   double lambda
)
{
   const auto d = analytical_derivatives(model, target, theta_l, theta_e, lambda);
   const Eigen::LLT< MatrixXd > llt(d.hess_ee);
   if(llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("hessian not positive definite");
   }
   return d.grad_l_f - d.hess_le * llt.solve(d.grad_e_f);
}

}  // namespace bisirl
