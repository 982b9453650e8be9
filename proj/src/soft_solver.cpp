#include "bisirl/soft_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bisirl {

namespace {

void check_reward_table(const MarkovGame& game, std::span< const double > table)
{
   if(table.size() != static_cast< std::size_t >(game.n_states) * game.n_joint()) {
      throw ShapeMismatch("reward table has " + std::to_string(table.size()) + " entries, expected "
                          + std::to_string(game.n_states * game.n_joint()));
   }
   for(std::size_t i = 0; i < table.size(); ++i) {
      if(!std::isfinite(table[i])) {
         throw InvalidArgument("reward table entry " + std::to_string(i) + " is not finite");
      }
   }
}

}  // namespace

SoftSolution solve_soft(const MarkovGame& game, std::span< const double > reward_table)
{
   validate_game(game);
   check_reward_table(game, reward_table);

   const int horizon = game.horizon;
   const int n_states = game.n_states;
   const int n_joint = game.n_joint();

   SoftSolution sol;
   sol.horizon = horizon;
   sol.n_states = n_states;
   sol.n_joint = n_joint;
   sol.q.assign(static_cast< std::size_t >(horizon) * n_states * n_joint, 0.0);
   sol.v.assign(static_cast< std::size_t >(horizon) * n_states, 0.0);
   sol.policy = JointPolicy(horizon, n_states, game.n_actions_learner, game.n_actions_expert);

   std::vector< double > v_next(n_states, 0.0);
   for(int h = horizon - 1; h >= 0; --h) {
      for(int s = 0; s < n_states; ++s) {
         double* q = sol.q.data() + (static_cast< std::size_t >(h) * n_states + s) * n_joint;
         double q_max = -std::numeric_limits< double >::infinity();
         for(int j = 0; j < n_joint; ++j) {
            double cont = 0.0;
            if(h + 1 < horizon) {
               const auto next = game.next_dist(s, j);
               for(int sn = 0; sn < n_states; ++sn) {
                  cont += next[sn] * v_next[sn];
               }
            }
            q[j] = reward_table[static_cast< std::size_t >(s) * n_joint + j] + game.discount * cont;
            q_max = std::max(q_max, q[j]);
         }
         double acc = 0.0;
         for(int j = 0; j < n_joint; ++j) {
            acc += std::exp(q[j] - q_max);
         }
         const double v = q_max + std::log(acc);
         sol.v[static_cast< std::size_t >(h) * n_states + s] = v;
         auto row = sol.policy.row(h, s);
         for(int j = 0; j < n_joint; ++j) {
            row[j] = std::exp(q[j] - v);
         }
      }
      std::copy_n(sol.v.data() + static_cast< std::size_t >(h) * n_states, n_states, v_next.data());
   }
   return sol;
}

SoftSolution solve_soft(
   const MarkovGame& game,
   const RewardModel& learner_model,
   const Eigen::VectorXd& theta_l,
   const RewardModel& expert_model,
   const Eigen::VectorXd& theta_e
)
{
   learner_model.check_shape(game);
   expert_model.check_shape(game);
   auto total = learner_model.reward_table(theta_l);
   const auto expert = expert_model.reward_table(theta_e);
   for(std::size_t i = 0; i < total.size(); ++i) {
      total[i] += expert[i];
   }
   return solve_soft(game, total);
}

double OccupancyMeasure::mass(int h) const
{
   const auto begin = rho.begin() + static_cast< std::ptrdiff_t >(h) * n_states * n_joint;
   double acc = 0.0;
   for(auto it = begin; it != begin + static_cast< std::ptrdiff_t >(n_states) * n_joint; ++it) {
      acc += *it;
   }
   return acc;
}

OccupancyMeasure occupancy(const MarkovGame& game, const JointPolicy& policy)
{
   policy.check_shape(game);
   const int n_states = game.n_states;
   const int n_joint = game.n_joint();

   OccupancyMeasure occ;
   occ.horizon = game.horizon;
   occ.n_states = n_states;
   occ.n_joint = n_joint;
   occ.rho.assign(static_cast< std::size_t >(game.horizon) * n_states * n_joint, 0.0);

   // State marginal (undiscounted) at the current step.
   std::vector< double > state_dist(game.initial_dist);
   std::vector< double > next_dist(n_states);
   double weight = 1.0;
   for(int h = 0; h < game.horizon; ++h) {
      std::fill(next_dist.begin(), next_dist.end(), 0.0);
      for(int s = 0; s < n_states; ++s) {
         if(state_dist[s] == 0.0) {
            continue;
         }
         const auto pi = policy.row(h, s);
         double* rho = occ.rho.data() + (static_cast< std::size_t >(h) * n_states + s) * n_joint;
         for(int j = 0; j < n_joint; ++j) {
            const double p_sa = state_dist[s] * pi[j];
            rho[j] = weight * p_sa;
            if(h + 1 < game.horizon && p_sa != 0.0) {
               const auto next = game.next_dist(s, j);
               for(int sn = 0; sn < n_states; ++sn) {
                  next_dist[sn] += p_sa * next[sn];
               }
            }
         }
      }
      state_dist.swap(next_dist);
      weight *= game.discount;
   }
   return occ;
}

Eigen::VectorXd feature_expectation(const OccupancyMeasure& occ, const RewardModel& model)
{
   if(model.n_states() != occ.n_states || model.n_joint() != occ.n_joint) {
      throw ShapeMismatch("reward model does not match occupancy measure");
   }
   const int pairs = occ.n_states * occ.n_joint;
   Eigen::VectorXd weights = Eigen::VectorXd::Zero(pairs);
   for(int h = 0; h < occ.horizon; ++h) {
      weights += Eigen::Map< const Eigen::VectorXd >(occ.rho.data() + static_cast< std::size_t >(h) * pairs, pairs);
   }
   const Eigen::Map< const Eigen::MatrixXd > phi(model.features().values.data(), model.dim(), pairs);
   return phi * weights;
}

double cumulative_reward(const OccupancyMeasure& occ, std::span< const double > reward_table)
{
   const auto pairs = static_cast< std::size_t >(occ.n_states) * occ.n_joint;
   if(reward_table.size() != pairs) {
      throw ShapeMismatch("reward table does not match occupancy measure");
   }
   double total = 0.0;
   for(int h = 0; h < occ.horizon; ++h) {
      const double* rho = occ.rho.data() + static_cast< std::size_t >(h) * pairs;
      for(std::size_t i = 0; i < pairs; ++i) {
         total += rho[i] * reward_table[i];
      }
   }
   return total;
}

double cumulative_reward(const OccupancyMeasure& occ, const RewardModel& model, const Eigen::VectorXd& theta)
{
   return cumulative_reward(occ, model.reward_table(theta));
}

TailExpectation tail_expectation(
   const MarkovGame& game,
   const JointPolicy& policy,
   std::span< const double > values,
   int dim,
   int first_step
)
{
   policy.check_shape(game);
   const int n_states = game.n_states;
   const int n_joint = game.n_joint();
   if(values.size() != static_cast< std::size_t >(n_states) * n_joint * dim) {
      throw ShapeMismatch("tail values do not match game shape and dimension");
   }
   if(first_step < 0 || first_step >= game.horizon) {
      throw InvalidArgument("first_step out of range");
   }

   TailExpectation tail;
   tail.dim = dim;
   tail.horizon = game.horizon;
   tail.n_states = n_states;
   tail.n_joint = n_joint;
   tail.by_action.assign(static_cast< std::size_t >(game.horizon) * n_states * n_joint * dim, 0.0);
   tail.by_state.assign(static_cast< std::size_t >(game.horizon) * n_states * dim, 0.0);

   using Vec = Eigen::Map< Eigen::VectorXd >;
   using ConstVec = Eigen::Map< const Eigen::VectorXd >;
   for(int h = game.horizon - 1; h >= first_step; --h) {
      const bool last = h + 1 == game.horizon;
      const Eigen::Map< const Eigen::MatrixXd > next_state(
         last ? nullptr : tail.by_state.data() + static_cast< std::size_t >(h + 1) * n_states * dim, dim, n_states
      );
      for(int s = 0; s < n_states; ++s) {
         Vec state(tail.by_state.data() + (static_cast< std::size_t >(h) * n_states + s) * dim, dim);
         const auto pi = policy.row(h, s);
         for(int j = 0; j < n_joint; ++j) {
            Vec action(tail.by_action.data() + ((static_cast< std::size_t >(h) * n_states + s) * n_joint + j) * dim, dim);
            action = ConstVec(values.data() + (static_cast< std::size_t >(s) * n_joint + j) * dim, dim);
            if(!last) {
               const auto next = game.next_dist(s, j);
               action += game.discount * (next_state * ConstVec(next.data(), n_states));
            }
            state += pi[j] * action;
         }
      }
   }
   return tail;
}

Eigen::VectorXd conditional_mu(
   const MarkovGame& game,
   const SoftSolution& solution,
   const RewardModel& model,
   int h,
   int s,
   std::optional< int > joint_action
)
{
   if(h < 0 || h >= game.horizon || s < 0 || s >= game.n_states) {
      throw InvalidArgument("conditional_mu: step or state out of range");
   }
   if(joint_action && (*joint_action < 0 || *joint_action >= game.n_joint())) {
      throw InvalidArgument("conditional_mu: joint action out of range");
   }
   model.check_shape(game);
   const auto tail = tail_expectation(game, solution.policy, model.features().values, model.dim(), h);
   if(joint_action) {
      return tail.action(h, s, *joint_action);
   }
   return tail.state(h, s);
}

nlohmann::json solution_to_json(const SoftSolution& solution)
{
   nlohmann::json q = nlohmann::json::array();
   nlohmann::json v = nlohmann::json::array();
   nlohmann::json policy = nlohmann::json::array();
   for(int h = 0; h < solution.horizon; ++h) {
      nlohmann::json qh = nlohmann::json::array();
      nlohmann::json vh = nlohmann::json::array();
      nlohmann::json ph = nlohmann::json::array();
      for(int s = 0; s < solution.n_states; ++s) {
         std::vector< double > qs(solution.n_joint);
         for(int j = 0; j < solution.n_joint; ++j) {
            qs[j] = solution.q_at(h, s, j);
         }
         qh.push_back(qs);
         vh.push_back(solution.v_at(h, s));
         auto row = solution.policy.row(h, s);
         ph.push_back(std::vector< double >(row.begin(), row.end()));
      }
      q.push_back(std::move(qh));
      v.push_back(std::move(vh));
      policy.push_back(std::move(ph));
   }
   return {{"q", std::move(q)}, {"v", std::move(v)}, {"policy", std::move(policy)}};
}

OccupancyMeasure mc_occupancy(const MarkovGame& game, const JointPolicy& policy, int rollouts, Rng& rng)
{
   if(rollouts < 1) {
      throw InvalidArgument("rollout count must be positive");
   }
   OccupancyMeasure occ;
   occ.horizon = game.horizon;
   occ.n_states = game.n_states;
   occ.n_joint = game.n_joint();
   occ.rho.assign(static_cast< std::size_t >(game.horizon) * game.n_states * game.n_joint(), 0.0);
   for(int i = 0; i < rollouts; ++i) {
      const auto traj = sample_trajectory(game, policy, rng);
      double weight = 1.0;
      for(int h = 0; h < game.horizon; ++h) {
         const auto& st = traj.steps[h];
         occ.rho[(static_cast< std::size_t >(h) * game.n_states + st.state) * game.n_joint()
                 + game.joint(st.learner_action, st.expert_action)] += weight;
         weight *= game.discount;
      }
   }
   for(double& x : occ.rho) {
      x /= rollouts;
   }
   return occ;
}

Eigen::VectorXd mc_feature_expectation(
   const MarkovGame& game,
   const JointPolicy& policy,
   const RewardModel& model,
   int rollouts,
   Rng& rng
)
{
   if(rollouts < 1) {
      throw InvalidArgument("rollout count must be positive");
   }
   model.check_shape(game);
   Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.dim());
   for(int i = 0; i < rollouts; ++i) {
      const auto traj = sample_trajectory(game, policy, rng);
      double weight = 1.0;
      for(const auto& st : traj.steps) {
         const auto phi = model.feature(st.state, game.joint(st.learner_action, st.expert_action));
         acc += weight * Eigen::Map< const Eigen::VectorXd >(phi.data(), model.dim());
         weight *= game.discount;
      }
   }
   return acc / rollouts;
}

MonteCarloEstimate mc_cumulative_reward(
   const MarkovGame& game,
   const JointPolicy& policy,
   std::span< const double > reward_table,
   int rollouts,
   Rng& rng
)
{
   if(rollouts < 2) {
      throw InvalidArgument("need at least two rollouts for a standard error");
   }
   check_reward_table(game, reward_table);
   double sum = 0.0;
   double sum_sq = 0.0;
   for(int i = 0; i < rollouts; ++i) {
      const auto traj = sample_trajectory(game, policy, rng);
      double ret = 0.0;
      double weight = 1.0;
      for(const auto& st : traj.steps) {
         ret += weight
                * reward_table[static_cast< std::size_t >(st.state) * game.n_joint()
                               + game.joint(st.learner_action, st.expert_action)];
         weight *= game.discount;
      }
      sum += ret;
      sum_sq += ret * ret;
   }
   const double mean = sum / rollouts;
   const double var = std::max(0.0, (sum_sq - rollouts * mean * mean) / (rollouts - 1));
   return {mean, std::sqrt(var / rollouts)};
}

Eigen::VectorXd mc_conditional_mu(
   const MarkovGame& game,
   const JointPolicy& policy,
   const RewardModel& model,
   int h,
   int s,
   std::optional< int > joint_action,
   int rollouts,
   Rng& rng
)
{
   if(rollouts < 1) {
      throw InvalidArgument("rollout count must be positive");
   }
   if(h < 0 || h >= game.horizon || s < 0 || s >= game.n_states) {
      throw InvalidArgument("mc_conditional_mu: step or state out of range");
   }
   policy.check_shape(game);
   model.check_shape(game);
   Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.dim());
   for(int i = 0; i < rollouts; ++i) {
      int state = s;
      double weight = 1.0;
      for(int t = h; t < game.horizon; ++t) {
         const int j = (t == h && joint_action) ? *joint_action : rng.categorical(policy.row(t, state));
         const auto phi = model.feature(state, j);
         acc += weight * Eigen::Map< const Eigen::VectorXd >(phi.data(), model.dim());
         weight *= game.discount;
         if(t + 1 < game.horizon) {
            state = rng.categorical(game.next_dist(state, j));
         }
      }
   }
   return acc / rollouts;
}

}  // namespace bisirl
