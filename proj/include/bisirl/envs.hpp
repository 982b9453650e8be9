#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bisirl/lower_irl.hpp"

namespace bisirl {

struct AttackEdge {
   int source = 0;
   int target = 0;
   double success_prob = 1.0;
   double attacker_cost = 0.0;
   double defender_cost = 0.0;
};

/// Attack graph for the defender (learner) / attacker (expert) game.
struct AttackGraph {
   int n_nodes = 0;
   std::vector< AttackEdge > edges;
   std::vector< double > compromise_reward;
   /// Nodes compromised at the start of every episode.
   std::vector< int > entry_nodes;

   /// Throws InvalidArgument; n_nodes must be in [1, 10].
   void validate() const;
};

struct GridCell {
   int x = 0;
   int y = 0;
   bool operator==(const GridCell&) const = default;
};

struct GridSpec {
   int width = 1;
   int height = 1;
   GridCell learner_start;
   GridCell expert_start;
   std::vector< GridCell > landmarks;
   /// Landmark the learner is rewarded for reaching.
   int target = 0;
   /// Landmark the expert believes is the goal.
   int expert_target = 0;
   double learner_step_cost = 0.0;
   double expert_step_cost = 0.0;

   void validate() const;
};

/// A game with parametric reward models and the ground truths behind them.
struct Scenario {
   std::string name;
   BilevelModel model;
   BoundReward learner_truth;
   BoundReward expert_truth;
};

enum class FeatureKind { linear, tabular };

/// State s is a bitmask of compromised nodes. Learner action 0 is a no-op
/// and action i >= 1 blocks edge i-1; expert action i >= 1 attacks edge
/// i-1. Rewards are expected immediate values over the attack outcome.
///
/// Linear features put the per-node probability of a new compromise and the
/// action cost in one vector, scaled so that the true parameters lie on the
/// unit sphere.
Scenario build_security_game(
   const AttackGraph& graph,
   int horizon,
   double discount,
   FeatureKind features = FeatureKind::linear
);

/// Joint state (learner cell, expert cell), 5 actions each: stay, up, down,
/// left, right (moves into walls stay put). Rewards depend on the current
/// cells and whether the agent moves.
Scenario build_grid_game(const GridSpec& spec, int horizon, double discount, FeatureKind features = FeatureKind::linear);

/// Transition rows and the initial distribution drawn from a flat Dirichlet.
MarkovGame random_game(int n_states, int n_learner, int n_expert, int horizon, double discount, Rng& rng);

/// Random game with random unit-norm features and truths, for tests.
Scenario random_scenario(
   int n_states,
   int n_learner,
   int n_expert,
   int horizon,
   double discount,
   int feature_dim,
   Rng& rng
);

/// Two-state coordination game with 2x2 actions used as the reference
/// benchmark.
Scenario benchmark_scenario(FeatureKind features = FeatureKind::linear);

AttackGraph default_attack_graph();
GridSpec default_grid_spec();

/// Builtin names: "security-4node", "benchmark-2state", "grid-3x3".
Scenario builtin_scenario(const std::string& name, FeatureKind features = FeatureKind::linear);
std::vector< std::string > builtin_scenario_names();

AttackGraph attack_graph_from_json(const nlohmann::json& doc);
nlohmann::json attack_graph_to_json(const AttackGraph& graph);
GridSpec grid_spec_from_json(const nlohmann::json& doc);
nlohmann::json grid_spec_to_json(const GridSpec& spec);

/// Environment document: {"type": "security"|"grid", "horizon", "discount",
/// "features": "linear"|"tabular", and "graph" or "grid"}.
Scenario scenario_from_json(const nlohmann::json& doc);

}  // namespace bisirl
