#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "bisirl/common.hpp"

namespace bisirl {

/// Finite-horizon two-agent Markov game with dense tabular dynamics.
///
/// Joint actions are flattened as `a_l * n_actions_expert + a_e`; the
/// transition tensor is stored row-major as [s][a_l][a_e][s'].
struct MarkovGame {
   int n_states = 0;
   int n_actions_learner = 0;
   int n_actions_expert = 0;
   int horizon = 0;
   double discount = 1.0;
   std::vector< double > initial_dist;
   std::vector< double > transition;

   [[nodiscard]] int n_joint() const { return n_actions_learner * n_actions_expert; }
   [[nodiscard]] int joint(int learner_action, int expert_action) const
   {
      return learner_action * n_actions_expert + expert_action;
   }
   [[nodiscard]] std::span< const double > next_dist(int state, int joint_action) const
   {
      const auto offset = (static_cast< std::size_t >(state) * n_joint() + joint_action) * n_states;
      return {transition.data() + offset, static_cast< std::size_t >(n_states)};
   }
   [[nodiscard]] std::span< double > next_dist(int state, int joint_action)
   {
      const auto offset = (static_cast< std::size_t >(state) * n_joint() + joint_action) * n_states;
      return {transition.data() + offset, static_cast< std::size_t >(n_states)};
   }

   /// Zero-initialized game of the given shape (not yet valid).
   static MarkovGame with_shape(int n_states, int n_learner, int n_expert, int horizon, double discount);
};

/// Throws InvalidGame naming the first violated invariant.
void validate_game(const MarkovGame& game);

struct Step {
   int state = 0;
   int learner_action = 0;
   int expert_action = 0;

   bool operator==(const Step&) const = default;
};

struct Trajectory {
   std::vector< Step > steps;

   bool operator==(const Trajectory&) const = default;
};

struct DemoSet {
   int horizon = 0;
   std::vector< Trajectory > trajectories;

   [[nodiscard]] std::size_t size() const { return trajectories.size(); }
   [[nodiscard]] bool empty() const { return trajectories.empty(); }
};

/// Time-indexed joint policy table [h][s][a_l][a_e].
class JointPolicy {
  public:
   JointPolicy() = default;
   JointPolicy(int horizon, int n_states, int n_learner, int n_expert);

   [[nodiscard]] int horizon() const { return horizon_; }
   [[nodiscard]] int n_states() const { return n_states_; }
   [[nodiscard]] int n_actions_learner() const { return n_learner_; }
   [[nodiscard]] int n_actions_expert() const { return n_expert_; }
   [[nodiscard]] int n_joint() const { return n_learner_ * n_expert_; }

   [[nodiscard]] std::span< const double > row(int h, int s) const
   {
      return {table_.data() + offset(h, s), static_cast< std::size_t >(n_joint())};
   }
   [[nodiscard]] std::span< double > row(int h, int s)
   {
      return {table_.data() + offset(h, s), static_cast< std::size_t >(n_joint())};
   }
   [[nodiscard]] const std::vector< double >& table() const { return table_; }

   /// Throws ShapeMismatch unless the policy fits the game.
   void check_shape(const MarkovGame& game) const;
   /// Throws InvalidGame if any row is negative or does not sum to 1 within tol.
   void check_normalized(double tol = 1e-10) const;

  private:
   [[nodiscard]] std::size_t offset(int h, int s) const
   {
      return (static_cast< std::size_t >(h) * n_states_ + s) * n_joint();
   }

   int horizon_ = 0;
   int n_states_ = 0;
   int n_learner_ = 0;
   int n_expert_ = 0;
   std::vector< double > table_;
};

/// Per-(h, s) distribution over a single agent's actions.
class StagePolicy {
  public:
   StagePolicy() = default;
   StagePolicy(int horizon, int n_states, int n_actions);

   [[nodiscard]] int horizon() const { return horizon_; }
   [[nodiscard]] int n_states() const { return n_states_; }
   [[nodiscard]] int n_actions() const { return n_actions_; }

   [[nodiscard]] std::span< const double > row(int h, int s) const
   {
      return {table_.data() + offset(h, s), static_cast< std::size_t >(n_actions_)};
   }
   [[nodiscard]] std::span< double > row(int h, int s)
   {
      return {table_.data() + offset(h, s), static_cast< std::size_t >(n_actions_)};
   }
   [[nodiscard]] const std::vector< double >& table() const { return table_; }

   void check_normalized(double tol = 1e-10) const;

   /// Same distribution at every (h, s).
   static StagePolicy uniform(int horizon, int n_states, int n_actions);

  private:
   [[nodiscard]] std::size_t offset(int h, int s) const
   {
      return (static_cast< std::size_t >(h) * n_states_ + s) * n_actions_;
   }

   int horizon_ = 0;
   int n_states_ = 0;
   int n_actions_ = 0;
   std::vector< double > table_;
};

StagePolicy learner_marginal(const JointPolicy& policy);
StagePolicy expert_marginal(const JointPolicy& policy);
/// pi(a_l, a_e | h, s) = learner(a_l | h, s) * expert(a_e | h, s).
JointPolicy product_policy(const StagePolicy& learner, const StagePolicy& expert);

/// Rolls out `policy` for the game's horizon. State h+1 is drawn from the
/// transition row of (state_h, joint action_h).
Trajectory sample_trajectory(const MarkovGame& game, const JointPolicy& policy, Rng& rng);

/// `count` trajectories in which learner and expert draw their actions
/// independently from their own marginals given the shared state.
DemoSet sample_interaction(
   const MarkovGame& game,
   const StagePolicy& learner,
   const StagePolicy& expert,
   int count,
   Rng& rng
);

nlohmann::json game_to_json(const MarkovGame& game);
/// Parses and validates; throws InvalidGame / ConfigError on bad documents.
MarkovGame game_from_json(const nlohmann::json& doc);
MarkovGame load_game(const std::filesystem::path& path);
void save_game(const MarkovGame& game, const std::filesystem::path& path);

}  // namespace bisirl
