#include "bisirl/envs.hpp"

#include <cmath>
#include <cstdlib>

#include "json_util.hpp"

namespace bisirl {

namespace {

using Eigen::VectorXd;

constexpr int kMaxAttackNodes = 10;

bool has_node(int mask, int node) { return ((mask >> node) & 1) != 0; }

std::vector< double > one_hot_start(int n_states, int start)
{
   std::vector< double > dist(n_states, 0.0);
   dist[start] = 1.0;
   return dist;
}

/// Tabular model whose truth is the raw reward table.
BoundReward tabular_truth(const MarkovGame& game, const std::vector< double >& table)
{
   auto model = RewardModel::tabular(game.n_states, game.n_actions_learner, game.n_actions_expert);
   return {std::move(model), Eigen::Map< const VectorXd >(table.data(), static_cast< Eigen::Index >(table.size()))};
}

Scenario assemble(std::string name, MarkovGame game, BoundReward learner, BoundReward expert)
{
   Scenario sc{std::move(name), {std::move(game), learner.model, expert.model}, std::move(learner), std::move(expert)};
   sc.model.validate();
   return sc;
}

/// Scales the raw features so that `raw_theta / |raw_theta|` reproduces the
/// raw reward; returns that unit-norm parameter.
VectorXd normalize_truth(FeatureMap& features, const VectorXd& raw_theta)
{
   const double z = raw_theta.norm();
   for(double& v : features.values) {
      v *= z;
   }
   return raw_theta / z;
}

int manhattan(GridCell a, GridCell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

GridCell move(const GridSpec& spec, GridCell c, int action)
{
   switch(action) {
      case 1: c.y = std::max(0, c.y - 1); break;
      case 2: c.y = std::min(spec.height - 1, c.y + 1); break;
      case 3: c.x = std::max(0, c.x - 1); break;
      case 4: c.x = std::min(spec.width - 1, c.x + 1); break;
      default: break;
   }
   return c;
}

GridCell cell_from_json(const nlohmann::json& doc, const std::string& where)
{
   if(!doc.is_array() || doc.size() != 2) {
      throw ConfigError(where + " must be an [x, y] pair");
   }
   return {doc[0].get< int >(), doc[1].get< int >()};
}

}  // namespace

void AttackGraph::validate() const
{
   if(n_nodes < 1 || n_nodes > kMaxAttackNodes) {
      throw InvalidArgument("attack graph needs 1 to " + std::to_string(kMaxAttackNodes) + " nodes, got "
                            + std::to_string(n_nodes));
   }
   if(compromise_reward.size() != static_cast< std::size_t >(n_nodes)) {
      throw InvalidArgument("compromise_reward needs one entry per node");
   }
   for(std::size_t i = 0; i < edges.size(); ++i) {
      const auto& e = edges[i];
      if(e.source < 0 || e.source >= n_nodes || e.target < 0 || e.target >= n_nodes || e.source == e.target) {
         throw InvalidArgument("edge " + std::to_string(i) + " references an invalid node pair");
      }
      if(!(e.success_prob >= 0.0 && e.success_prob <= 1.0)) {
         throw InvalidArgument("edge " + std::to_string(i) + " success probability outside [0, 1]");
      }
      if(!std::isfinite(e.attacker_cost) || !std::isfinite(e.defender_cost)) {
         throw InvalidArgument("edge " + std::to_string(i) + " has a non-finite cost");
      }
   }
   for(int node : entry_nodes) {
      if(node < 0 || node >= n_nodes) {
         throw InvalidArgument("entry node " + std::to_string(node) + " out of range");
      }
   }
}

void GridSpec::validate() const
{
   if(width < 1 || height < 1) {
      throw InvalidArgument("grid dimensions must be positive");
   }
   const auto in_bounds = [&](GridCell c) { return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height; };
   if(!in_bounds(learner_start) || !in_bounds(expert_start)) {
      throw InvalidArgument("start cell out of bounds");
   }
   if(landmarks.empty()) {
      throw InvalidArgument("grid needs at least one landmark");
   }
   for(std::size_t i = 0; i < landmarks.size(); ++i) {
      if(!in_bounds(landmarks[i])) {
         throw InvalidArgument("landmark " + std::to_string(i) + " out of bounds");
      }
      for(std::size_t k = 0; k < i; ++k) {
         if(landmarks[k] == landmarks[i]) {
            throw InvalidArgument("landmarks must be distinct");
         }
      }
   }
   const int n = static_cast< int >(landmarks.size());
   if(target < 0 || target >= n || expert_target < 0 || expert_target >= n) {
      throw InvalidArgument("target landmark index out of range");
   }
   if(!std::isfinite(learner_step_cost) || !std::isfinite(expert_step_cost)) {
      throw InvalidArgument("step costs must be finite");
   }
}

Scenario build_security_game(const AttackGraph& graph, int horizon, double discount, FeatureKind features)
{
   graph.validate();
   const int n_nodes = graph.n_nodes;
   const int n_edges = static_cast< int >(graph.edges.size());
   const int n_states = 1 << n_nodes;
   const int n_actions = n_edges + 1;

   auto game = MarkovGame::with_shape(n_states, n_actions, n_actions, horizon, discount);
   int start = 0;
   for(int node : graph.entry_nodes) {
      start |= 1 << node;
   }
   game.initial_dist = one_hot_start(n_states, start);

   const int dim = n_nodes + 1;
   auto phi_l = FeatureMap::zeros(dim, n_states, n_actions, n_actions);
   auto phi_e = FeatureMap::zeros(dim, n_states, n_actions, n_actions);
   std::vector< double > r_l(static_cast< std::size_t >(n_states) * game.n_joint());
   std::vector< double > r_e(r_l.size());

   for(int s = 0; s < n_states; ++s) {
      for(int al = 0; al < n_actions; ++al) {
         for(int ae = 0; ae < n_actions; ++ae) {
            const int j = game.joint(al, ae);
            auto next = game.next_dist(s, j);
            next[s] = 1.0;
            double expected_gain = 0.0;
            const double block_cost = al > 0 ? graph.edges[al - 1].defender_cost : 0.0;
            const double attack_cost = ae > 0 ? graph.edges[ae - 1].attacker_cost : 0.0;
            if(ae > 0) {
               const auto& edge = graph.edges[ae - 1];
               const bool open = has_node(s, edge.source) && !has_node(s, edge.target) && al != ae;
               if(open && edge.success_prob > 0.0) {
                  next[s] = 1.0 - edge.success_prob;
                  next[s | (1 << edge.target)] = edge.success_prob;
                  expected_gain = edge.success_prob * graph.compromise_reward[edge.target];
                  phi_l.at(s, j)[edge.target] = -edge.success_prob;
                  phi_e.at(s, j)[edge.target] = edge.success_prob;
               }
            }
            phi_l.at(s, j)[n_nodes] = -block_cost;
            phi_e.at(s, j)[n_nodes] = -attack_cost;
            r_l[static_cast< std::size_t >(s) * game.n_joint() + j] = -expected_gain - block_cost;
            r_e[static_cast< std::size_t >(s) * game.n_joint() + j] = expected_gain - attack_cost;
         }
      }
   }
   validate_game(game);

   const std::string name = "security-" + std::to_string(n_nodes) + "node";
   if(features == FeatureKind::tabular) {
      auto truth_l = tabular_truth(game, r_l);
      auto truth_e = tabular_truth(game, r_e);
      return assemble(name, std::move(game), std::move(truth_l), std::move(truth_e));
   }
   VectorXd raw(dim);
   for(int k = 0; k < n_nodes; ++k) {
      raw[k] = graph.compromise_reward[k];
   }
   raw[n_nodes] = 1.0;
   const VectorXd theta_l = normalize_truth(phi_l, raw);
   const VectorXd theta_e = normalize_truth(phi_e, raw);
   return assemble(
      name,
      std::move(game),
      {RewardModel::linear(std::move(phi_l)), theta_l},
      {RewardModel::linear(std::move(phi_e)), theta_e}
   );
}

Scenario build_grid_game(const GridSpec& spec, int horizon, double discount, FeatureKind features)
{
   spec.validate();
   const int n_cells = spec.width * spec.height;
   const int n_states = n_cells * n_cells;
   constexpr int kActions = 5;
   const auto cell_of = [&](int idx) { return GridCell{idx % spec.width, idx / spec.width}; };
   const auto index_of = [&](GridCell c) { return c.y * spec.width + c.x; };

   auto game = MarkovGame::with_shape(n_states, kActions, kActions, horizon, discount);
   game.initial_dist = one_hot_start(n_states, index_of(spec.learner_start) * n_cells + index_of(spec.expert_start));

   const int n_landmarks = static_cast< int >(spec.landmarks.size());
   const int dim_l = 2 * n_landmarks + 1;
   const int dim_e = n_landmarks + 1;
   auto phi_l = FeatureMap::zeros(dim_l, n_states, kActions, kActions);
   auto phi_e = FeatureMap::zeros(dim_e, n_states, kActions, kActions);
   std::vector< double > r_l(static_cast< std::size_t >(n_states) * game.n_joint());
   std::vector< double > r_e(r_l.size());
   const GridCell goal = spec.landmarks[spec.target];
   const GridCell believed = spec.landmarks[spec.expert_target];

   for(int s = 0; s < n_states; ++s) {
      const GridCell lc = cell_of(s / n_cells);
      const GridCell ec = cell_of(s % n_cells);
      for(int al = 0; al < kActions; ++al) {
         for(int ae = 0; ae < kActions; ++ae) {
            const int j = game.joint(al, ae);
            const int next = index_of(move(spec, lc, al)) * n_cells + index_of(move(spec, ec, ae));
            game.next_dist(s, j)[next] = 1.0;
            const double cost_l = al != 0 ? spec.learner_step_cost : 0.0;
            const double cost_e = ae != 0 ? spec.expert_step_cost : 0.0;
            const auto idx = static_cast< std::size_t >(s) * game.n_joint() + j;
            r_l[idx] = -manhattan(lc, goal) + manhattan(ec, goal) - cost_l;
            r_e[idx] = -manhattan(ec, believed) - cost_e;
            auto fl = phi_l.at(s, j);
            auto fe = phi_e.at(s, j);
            for(int k = 0; k < n_landmarks; ++k) {
               fl[k] = -manhattan(lc, spec.landmarks[k]);
               fl[n_landmarks + k] = manhattan(ec, spec.landmarks[k]);
               fe[k] = -manhattan(ec, spec.landmarks[k]);
            }
            fl[2 * n_landmarks] = -cost_l;
            fe[n_landmarks] = -cost_e;
         }
      }
   }
   validate_game(game);

   const std::string name = "grid-" + std::to_string(spec.width) + "x" + std::to_string(spec.height);
   if(features == FeatureKind::tabular) {
      auto truth_l = tabular_truth(game, r_l);
      auto truth_e = tabular_truth(game, r_e);
      return assemble(name, std::move(game), std::move(truth_l), std::move(truth_e));
   }
   VectorXd raw_l = VectorXd::Zero(dim_l);
   raw_l[spec.target] = 1.0;
   raw_l[n_landmarks + spec.target] = 1.0;
   raw_l[2 * n_landmarks] = 1.0;
   VectorXd raw_e = VectorXd::Zero(dim_e);
   raw_e[spec.expert_target] = 1.0;
   raw_e[n_landmarks] = 1.0;
   const VectorXd theta_l = normalize_truth(phi_l, raw_l);
   const VectorXd theta_e = normalize_truth(phi_e, raw_e);
   return assemble(
      name,
      std::move(game),
      {RewardModel::linear(std::move(phi_l)), theta_l},
      {RewardModel::linear(std::move(phi_e)), theta_e}
   );
}

MarkovGame random_game(int n_states, int n_learner, int n_expert, int horizon, double discount, Rng& rng)
{
   if(n_states < 1 || n_learner < 1 || n_expert < 1) {
      throw InvalidArgument("random_game sizes must be positive");
   }
   auto game = MarkovGame::with_shape(n_states, n_learner, n_expert, horizon, discount);
   const auto dirichlet = [&](std::span< double > row) {
      double total = 0.0;
      for(double& x : row) {
         x = rng.exponential();
         total += x;
      }
      for(double& x : row) {
         x /= total;
      }
   };
   dirichlet(game.initial_dist);
   for(int s = 0; s < n_states; ++s) {
      for(int j = 0; j < game.n_joint(); ++j) {
         dirichlet(game.next_dist(s, j));
      }
   }
   validate_game(game);
   return game;
}

Scenario random_scenario(
   int n_states,
   int n_learner,
   int n_expert,
   int horizon,
   double discount,
   int feature_dim,
   Rng& rng
)
{
   auto game = random_game(n_states, n_learner, n_expert, horizon, discount, rng);
   const auto random_features = [&]() {
      auto f = FeatureMap::zeros(feature_dim, n_states, n_learner, n_expert);
      for(double& v : f.values) {
         v = 2.0 * rng.uniform() - 1.0;
      }
      return f;
   };
   const auto random_unit = [&]() {
      VectorXd v(feature_dim);
      for(int i = 0; i < feature_dim; ++i) {
         v[i] = 2.0 * rng.uniform() - 1.0;
      }
      return VectorXd(v / v.norm());
   };
   auto phi_l = random_features();
   auto phi_e = random_features();
   const VectorXd theta_l = random_unit();
   const VectorXd theta_e = random_unit();
   return assemble(
      "random",
      std::move(game),
      {RewardModel::linear(std::move(phi_l)), theta_l},
      {RewardModel::linear(std::move(phi_e)), theta_e}
   );
}

Scenario benchmark_scenario(FeatureKind features)
{
   constexpr int kStates = 2;
   constexpr int kActions = 2;
   // Features are scaled so the truths sit strictly inside the unit ball.
   constexpr double kScale = 3.0;
   auto game = MarkovGame::with_shape(kStates, kActions, kActions, 5, 0.9);
   game.initial_dist = {1.0, 0.0};
   // Learner features [good state, learner acts]; expert features
   // [expert acts, expert acts in the good state]. Keeping them disjoint
   // leaves the expert's reward identifiable from the joint policy.
   auto phi_l = FeatureMap::zeros(2, kStates, kActions, kActions);
   auto phi_e = FeatureMap::zeros(2, kStates, kActions, kActions);
   for(int s = 0; s < kStates; ++s) {
      for(int al = 0; al < kActions; ++al) {
         for(int ae = 0; ae < kActions; ++ae) {
            const int j = game.joint(al, ae);
            const double to_good = 0.1 + 0.35 * al + 0.35 * ae + 0.1 * s;
            auto next = game.next_dist(s, j);
            next[0] = 1.0 - to_good;
            next[1] = to_good;
            phi_l.at(s, j)[0] = kScale * s;
            phi_l.at(s, j)[1] = -kScale * al;
            phi_e.at(s, j)[0] = -kScale * ae;
            phi_e.at(s, j)[1] = kScale * ae * s;
         }
      }
   }
   validate_game(game);

   VectorXd theta_l(2);
   theta_l << 1.0 / kScale, 0.3 / kScale;
   VectorXd theta_e(2);
   theta_e << 2.0 / kScale, 1.5 / kScale;
   BoundReward learner{RewardModel::linear(std::move(phi_l)), theta_l};
   BoundReward expert{RewardModel::linear(std::move(phi_e)), theta_e};
   if(features == FeatureKind::tabular) {
      learner = tabular_truth(game, learner.table());
      expert = tabular_truth(game, expert.table());
   }
   return assemble("benchmark-2state", std::move(game), std::move(learner), std::move(expert));
}

AttackGraph default_attack_graph()
{
   AttackGraph g;
   g.n_nodes = 4;
   g.edges = {
      {0, 1, 0.8, 0.1, 0.2},
      {0, 2, 0.6, 0.1, 0.2},
      {1, 2, 0.7, 0.2, 0.1},
      {1, 3, 0.5, 0.3, 0.3},
      {2, 3, 0.9, 0.2, 0.3},
   };
   g.compromise_reward = {0.0, 1.0, 1.0, 3.0};
   g.entry_nodes = {0};
   return g;
}

GridSpec default_grid_spec()
{
   GridSpec g;
   g.width = 3;
   g.height = 3;
   g.learner_start = {0, 2};
   g.expert_start = {2, 2};
   g.landmarks = {{0, 0}, {2, 0}};
   g.target = 0;
   g.expert_target = 1;
   g.learner_step_cost = 0.1;
   g.expert_step_cost = 0.1;
   return g;
}

std::vector< std::string > builtin_scenario_names() { return {"security-4node", "benchmark-2state", "grid-3x3"}; }

Scenario builtin_scenario(const std::string& name, FeatureKind features)
{
   if(name == "security-4node") {
      return build_security_game(default_attack_graph(), 6, 0.95, features);
   }
   if(name == "benchmark-2state") {
      return benchmark_scenario(features);
   }
   if(name == "grid-3x3") {
      return build_grid_game(default_grid_spec(), 6, 0.95, features);
   }
   throw ConfigError("unknown builtin environment '" + name + "'");
}

AttackGraph attack_graph_from_json(const nlohmann::json& doc)
{
   detail::check_keys(doc, {"n_nodes", "edges", "compromise_reward"}, {"entry_nodes"}, "attack graph");
   AttackGraph g;
   try {
      g.n_nodes = doc.at("n_nodes").get< int >();
      for(const auto& e : doc.at("edges")) {
         detail::check_keys(e, {"source", "target"}, {"success_prob", "attacker_cost", "defender_cost"}, "edge");
         AttackEdge edge;
         edge.source = e.at("source").get< int >();
         edge.target = e.at("target").get< int >();
         edge.success_prob = e.value("success_prob", 1.0);
         edge.attacker_cost = e.value("attacker_cost", 0.0);
         edge.defender_cost = e.value("defender_cost", 0.0);
         g.edges.push_back(edge);
      }
      g.compromise_reward = doc.at("compromise_reward").get< std::vector< double > >();
      if(doc.contains("entry_nodes")) {
         g.entry_nodes = doc.at("entry_nodes").get< std::vector< int > >();
      }
   } catch(const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed attack graph: ") + e.what());
   }
   try {
      g.validate();
   } catch(const InvalidArgument& e) {
      throw ConfigError(e.what());
   }
   return g;
}

nlohmann::json attack_graph_to_json(const AttackGraph& graph)
{
   nlohmann::json edges = nlohmann::json::array();
   for(const auto& e : graph.edges) {
      edges.push_back({{"source", e.source},
                       {"target", e.target},
                       {"success_prob", e.success_prob},
                       {"attacker_cost", e.attacker_cost},
                       {"defender_cost", e.defender_cost}});
   }
   return {{"n_nodes", graph.n_nodes},
           {"edges", std::move(edges)},
           {"compromise_reward", graph.compromise_reward},
           {"entry_nodes", graph.entry_nodes}};
}

GridSpec grid_spec_from_json(const nlohmann::json& doc)
{
   detail::check_keys(
      doc,
      {"width", "height", "learner_start", "expert_start", "landmarks"},
      {"target", "expert_target", "learner_step_cost", "expert_step_cost"},
      "grid spec"
   );
   GridSpec g;
   try {
      g.width = doc.at("width").get< int >();
      g.height = doc.at("height").get< int >();
      g.learner_start = cell_from_json(doc.at("learner_start"), "learner_start");
      g.expert_start = cell_from_json(doc.at("expert_start"), "expert_start");
      for(const auto& c : doc.at("landmarks")) {
         g.landmarks.push_back(cell_from_json(c, "landmark"));
      }
      g.target = doc.value("target", 0);
      g.expert_target = doc.value("expert_target", g.target);
      g.learner_step_cost = doc.value("learner_step_cost", 0.0);
      g.expert_step_cost = doc.value("expert_step_cost", 0.0);
   } catch(const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed grid spec: ") + e.what());
   }
   try {
      g.validate();
   } catch(const InvalidArgument& e) {
      throw ConfigError(e.what());
   }
   return g;
}

nlohmann::json grid_spec_to_json(const GridSpec& spec)
{
   nlohmann::json landmarks = nlohmann::json::array();
   for(const auto& c : spec.landmarks) {
      landmarks.push_back({c.x, c.y});
   }
   return {{"width", spec.width},
           {"height", spec.height},
           {"learner_start", {spec.learner_start.x, spec.learner_start.y}},
           {"expert_start", {spec.expert_start.x, spec.expert_start.y}},
           {"landmarks", std::move(landmarks)},
           {"target", spec.target},
           {"expert_target", spec.expert_target},
           {"learner_step_cost", spec.learner_step_cost},
           {"expert_step_cost", spec.expert_step_cost}};
}

Scenario scenario_from_json(const nlohmann::json& doc)
{
   detail::check_keys(doc, {"type"}, {"horizon", "discount", "features", "graph", "grid"}, "environment document");
   FeatureKind features = FeatureKind::linear;
   int horizon = 6;
   double discount = 0.95;
   std::string type;
   try {
      type = doc.at("type").get< std::string >();
      horizon = doc.value("horizon", horizon);
      discount = doc.value("discount", discount);
      const auto kind = doc.value("features", std::string("linear"));
      if(kind == "tabular") {
         features = FeatureKind::tabular;
      } else if(kind != "linear") {
         throw ConfigError("features must be 'linear' or 'tabular', got '" + kind + "'");
      }
   } catch(const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed environment document: ") + e.what());
   }
   try {
      if(type == "security") {
         if(!doc.contains("graph")) {
            throw ConfigError("security environment needs a 'graph'");
         }
         return build_security_game(attack_graph_from_json(doc.at("graph")), horizon, discount, features);
      }
      if(type == "grid") {
         if(!doc.contains("grid")) {
            throw ConfigError("grid environment needs a 'grid'");
         }
         return build_grid_game(grid_spec_from_json(doc.at("grid")), horizon, discount, features);
      }
   } catch(const InvalidGame& e) {
      throw ConfigError(e.what());
   }
   throw ConfigError("unknown environment type '" + type + "'");
}

}  // namespace bisirl
