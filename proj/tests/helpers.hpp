#pragma once

#include <Eigen/Dense>

#include "bisirl/envs.hpp"
#include "bisirl/game.hpp"
#include "bisirl/reward.hpp"

namespace testing {

/// Deterministic chain s -> min(s + 1, n - 1) for every joint action,
/// starting in state 0.
inline bisirl::MarkovGame chain_game(int n_states, int n_learner, int n_expert, int horizon, double discount = 1.0)
{
   auto game = bisirl::MarkovGame::with_shape(n_states, n_learner, n_expert, horizon, discount);
   game.initial_dist[0] = 1.0;
   for(int s = 0; s < n_states; ++s) {
      for(int j = 0; j < game.n_joint(); ++j) {
         game.next_dist(s, j)[std::min(s + 1, n_states - 1)] = 1.0;
      }
   }
   return game;
}

inline bisirl::JointPolicy uniform_joint(const bisirl::MarkovGame& game)
{
   bisirl::JointPolicy policy(game.horizon, game.n_states, game.n_actions_learner, game.n_actions_expert);
   for(int h = 0; h < game.horizon; ++h) {
      for(int s = 0; s < game.n_states; ++s) {
         for(auto& p : policy.row(h, s)) {
            p = 1.0 / game.n_joint();
         }
      }
   }
   return policy;
}

inline Eigen::VectorXd random_in_ball(int dim, double radius, bisirl::Rng& rng)
{
   Eigen::VectorXd v(dim);
   for(int i = 0; i < dim; ++i) {
      v[i] = 2.0 * rng.uniform() - 1.0;
   }
   return v * (radius / v.norm());
}

inline bisirl::FeatureMap random_features(int dim, const bisirl::MarkovGame& game, bisirl::Rng& rng)
{
   auto fm = bisirl::FeatureMap::zeros(dim, game.n_states, game.n_actions_learner, game.n_actions_expert);
   for(auto& x : fm.values) {
      x = 2.0 * rng.uniform() - 1.0;
   }
   return fm;
}

}  // namespace testing
