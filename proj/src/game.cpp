#include "bisirl/game.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace bisirl {

namespace {

constexpr double kSumTolerance = 1e-12;

void check_distribution(std::span< const double > probs, double tol, const std::string& where)
{
   double sum = 0.0;
   for(std::size_t i = 0; i < probs.size(); ++i) {
      if(!std::isfinite(probs[i])) {
         throw InvalidGame(where + ": non-finite probability at index " + std::to_string(i));
      }
      if(probs[i] < 0.0) {
         std::ostringstream msg;
         msg << where << ": negative probability " << probs[i] << " at index " << i;
         throw InvalidGame(msg.str());
      }
      sum += probs[i];
   }
   if(std::abs(sum - 1.0) > tol) {
      std::ostringstream msg;
      msg << where << ": row sums to " << sum;
      throw InvalidGame(msg.str());
   }
}

}  // namespace

MarkovGame MarkovGame::with_shape(int n_states, int n_learner, int n_expert, int horizon, double discount)
{
   if(n_states < 1 || n_learner < 1 || n_expert < 1) {
      throw InvalidArgument("game dimensions must be positive");
   }
   MarkovGame game;
   game.n_states = n_states;
   game.n_actions_learner = n_learner;
   game.n_actions_expert = n_expert;
   game.horizon = horizon;
   game.discount = discount;
   game.initial_dist.assign(n_states, 0.0);
   game.transition.assign(static_cast< std::size_t >(n_states) * n_learner * n_expert * n_states, 0.0);
   return game;
}

void validate_game(const MarkovGame& game)
{
   if(game.n_states < 1 || game.n_actions_learner < 1 || game.n_actions_expert < 1) {
      throw InvalidGame("state and action counts must be positive");
   }
   if(game.horizon < 1) {
      throw InvalidGame("horizon must be at least 1, got " + std::to_string(game.horizon));
   }
   if(!(game.discount > 0.0 && game.discount <= 1.0)) {
      std::ostringstream msg;
      msg << "discount must lie in (0, 1], got " << game.discount;
      throw InvalidGame(msg.str());
   }
   if(game.initial_dist.size() != static_cast< std::size_t >(game.n_states)) {
      throw InvalidGame("initial_dist has " + std::to_string(game.initial_dist.size()) + " entries, expected "
                        + std::to_string(game.n_states));
   }
   const auto expected = static_cast< std::size_t >(game.n_states) * game.n_joint() * game.n_states;
   if(game.transition.size() != expected) {
      throw InvalidGame("transition tensor has " + std::to_string(game.transition.size())
                        + " entries, expected " + std::to_string(expected));
   }
   check_distribution(game.initial_dist, kSumTolerance, "initial_dist");
   for(int s = 0; s < game.n_states; ++s) {
      for(int al = 0; al < game.n_actions_learner; ++al) {
         for(int ae = 0; ae < game.n_actions_expert; ++ae) {
            std::ostringstream where;
            where << "transition[" << s << "][" << al << "][" << ae << "]";
            check_distribution(game.next_dist(s, game.joint(al, ae)), kSumTolerance, where.str());
         }
      }
   }
}

JointPolicy::JointPolicy(int horizon, int n_states, int n_learner, int n_expert)
    : horizon_(horizon),
      n_states_(n_states),
      n_learner_(n_learner),
      n_expert_(n_expert),
      table_(static_cast< std::size_t >(horizon) * n_states * n_learner * n_expert, 0.0)
{
}

void JointPolicy::check_shape(const MarkovGame& game) const
{
   if(horizon_ != game.horizon || n_states_ != game.n_states || n_learner_ != game.n_actions_learner
      || n_expert_ != game.n_actions_expert) {
      throw ShapeMismatch("joint policy shape does not match game");
   }
}

void JointPolicy::check_normalized(double tol) const
{
   for(int h = 0; h < horizon_; ++h) {
      for(int s = 0; s < n_states_; ++s) {
         check_distribution(row(h, s), tol, "policy[" + std::to_string(h) + "][" + std::to_string(s) + "]");
      }
   }
}

StagePolicy::StagePolicy(int horizon, int n_states, int n_actions)
    : horizon_(horizon),
      n_states_(n_states),
      n_actions_(n_actions),
      table_(static_cast< std::size_t >(horizon) * n_states * n_actions, 0.0)
{
}

void StagePolicy::check_normalized(double tol) const
{
   for(int h = 0; h < horizon_; ++h) {
      for(int s = 0; s < n_states_; ++s) {
         check_distribution(row(h, s), tol, "marginal[" + std::to_string(h) + "][" + std::to_string(s) + "]");
      }
   }
}

StagePolicy StagePolicy::uniform(int horizon, int n_states, int n_actions)
{
   StagePolicy policy(horizon, n_states, n_actions);
   std::fill(policy.table_.begin(), policy.table_.end(), 1.0 / n_actions);
   return policy;
}

StagePolicy learner_marginal(const JointPolicy& policy)
{
   StagePolicy out(policy.horizon(), policy.n_states(), policy.n_actions_learner());
   for(int h = 0; h < policy.horizon(); ++h) {
      for(int s = 0; s < policy.n_states(); ++s) {
         auto src = policy.row(h, s);
         auto dst = out.row(h, s);
         for(int al = 0; al < policy.n_actions_learner(); ++al) {
            double acc = 0.0;
            for(int ae = 0; ae < policy.n_actions_expert(); ++ae) {
               acc += src[al * policy.n_actions_expert() + ae];
            }
            dst[al] = acc;
         }
      }
   }
   return out;
}

StagePolicy expert_marginal(const JointPolicy& policy)
{
   StagePolicy out(policy.horizon(), policy.n_states(), policy.n_actions_expert());
   for(int h = 0; h < policy.horizon(); ++h) {
      for(int s = 0; s < policy.n_states(); ++s) {
         auto src = policy.row(h, s);
         auto dst = out.row(h, s);
         for(int ae = 0; ae < policy.n_actions_expert(); ++ae) {
            double acc = 0.0;
            for(int al = 0; al < policy.n_actions_learner(); ++al) {
               acc += src[al * policy.n_actions_expert() + ae];
            }
            dst[ae] = acc;
         }
      }
   }
   return out;
}

JointPolicy product_policy(const StagePolicy& learner, const StagePolicy& expert)
{
   if(learner.horizon() != expert.horizon() || learner.n_states() != expert.n_states()) {
      throw ShapeMismatch("learner and expert marginals disagree on horizon or state count");
   }
   JointPolicy out(learner.horizon(), learner.n_states(), learner.n_actions(), expert.n_actions());
   for(int h = 0; h < learner.horizon(); ++h) {
      for(int s = 0; s < learner.n_states(); ++s) {
         auto pl = learner.row(h, s);
         auto pe = expert.row(h, s);
         auto dst = out.row(h, s);
         for(int al = 0; al < learner.n_actions(); ++al) {
            for(int ae = 0; ae < expert.n_actions(); ++ae) {
               dst[al * expert.n_actions() + ae] = pl[al] * pe[ae];
            }
         }
      }
   }
   return out;
}

Trajectory sample_trajectory(const MarkovGame& game, const JointPolicy& policy, Rng& rng)
{
   policy.check_shape(game);
   Trajectory traj;
   traj.steps.reserve(game.horizon);
   int state = rng.categorical(game.initial_dist);
   for(int h = 0; h < game.horizon; ++h) {
      const int joint = rng.categorical(policy.row(h, state));
      traj.steps.push_back({state, joint / game.n_actions_expert, joint % game.n_actions_expert});
      if(h + 1 < game.horizon) {
         state = rng.categorical(game.next_dist(state, joint));
      }
   }
   return traj;
}

DemoSet sample_interaction(
   const MarkovGame& game,
   const StagePolicy& learner,
   const StagePolicy& expert,
   int count,
   Rng& rng
)
{
   if(learner.horizon() != game.horizon || learner.n_states() != game.n_states
      || learner.n_actions() != game.n_actions_learner) {
      throw ShapeMismatch("learner marginal does not match game");
   }
   if(expert.horizon() != game.horizon || expert.n_states() != game.n_states
      || expert.n_actions() != game.n_actions_expert) {
      throw ShapeMismatch("expert marginal does not match game");
   }
   if(count < 0) {
      throw InvalidArgument("demo count must be non-negative");
   }
   DemoSet demos;
   demos.horizon = game.horizon;
   demos.trajectories.reserve(count);
   for(int i = 0; i < count; ++i) {
      Trajectory traj;
      traj.steps.reserve(game.horizon);
      int state = rng.categorical(game.initial_dist);
      for(int h = 0; h < game.horizon; ++h) {
         const int al = rng.categorical(learner.row(h, state));
         const int ae = rng.categorical(expert.row(h, state));
         traj.steps.push_back({state, al, ae});
         if(h + 1 < game.horizon) {
            state = rng.categorical(game.next_dist(state, game.joint(al, ae)));
         }
      }
      demos.trajectories.push_back(std::move(traj));
   }
   return demos;
}

nlohmann::json game_to_json(const MarkovGame& game)
{
   nlohmann::json transition = nlohmann::json::array();
   for(int s = 0; s < game.n_states; ++s) {
      nlohmann::json by_learner = nlohmann::json::array();
      for(int al = 0; al < game.n_actions_learner; ++al) {
         nlohmann::json by_expert = nlohmann::json::array();
         for(int ae = 0; ae < game.n_actions_expert; ++ae) {
            auto row = game.next_dist(s, game.joint(al, ae));
            by_expert.push_back(std::vector< double >(row.begin(), row.end()));
         }
         by_learner.push_back(std::move(by_expert));
      }
      transition.push_back(std::move(by_learner));
   }
   return {
      {"n_states", game.n_states},
      {"n_actions_learner", game.n_actions_learner},
      {"n_actions_expert", game.n_actions_expert},
      {"horizon", game.horizon},
      {"discount", game.discount},
      {"initial_dist", game.initial_dist},
      {"transition", std::move(transition)},
   };
}

MarkovGame game_from_json(const nlohmann::json& doc)
{
   static const char* const required[] = {
      "n_states", "n_actions_learner", "n_actions_expert", "horizon", "discount", "initial_dist", "transition"};
   if(!doc.is_object()) {
      throw ConfigError("game document must be a JSON object");
   }
   for(const char* key : required) {
      if(!doc.contains(key)) {
         throw ConfigError(std::string("game document is missing field '") + key + "'");
      }
   }
   for(const auto& item : doc.items()) {
      if(std::find_if(std::begin(required), std::end(required), [&](const char* k) { return item.key() == k; })
         == std::end(required)) {
         throw ConfigError("game document has unknown field '" + item.key() + "'");
      }
   }
   MarkovGame game;
   try {
      game.n_states = doc.at("n_states").get< int >();
      game.n_actions_learner = doc.at("n_actions_learner").get< int >();
      game.n_actions_expert = doc.at("n_actions_expert").get< int >();
      game.horizon = doc.at("horizon").get< int >();
      game.discount = doc.at("discount").get< double >();
      game.initial_dist = doc.at("initial_dist").get< std::vector< double > >();
      if(game.n_states < 1 || game.n_actions_learner < 1 || game.n_actions_expert < 1) {
         throw InvalidGame("state and action counts must be positive");
      }
      const auto& tr = doc.at("transition");
      if(!tr.is_array() || tr.size() != static_cast< std::size_t >(game.n_states)) {
         throw InvalidGame("transition must have n_states rows");
      }
      game.transition.reserve(static_cast< std::size_t >(game.n_states) * game.n_joint() * game.n_states);
      for(const auto& by_learner : tr) {
         if(!by_learner.is_array() || by_learner.size() != static_cast< std::size_t >(game.n_actions_learner)) {
            throw InvalidGame("transition[s] must have n_actions_learner entries");
         }
         for(const auto& by_expert : by_learner) {
            if(!by_expert.is_array() || by_expert.size() != static_cast< std::size_t >(game.n_actions_expert)) {
               throw InvalidGame("transition[s][a_l] must have n_actions_expert entries");
            }
            for(const auto& row : by_expert) {
               auto values = row.get< std::vector< double > >();
               if(values.size() != static_cast< std::size_t >(game.n_states)) {
                  throw InvalidGame("transition rows must have n_states entries");
               }
               game.transition.insert(game.transition.end(), values.begin(), values.end());
            }
         }
      }
   } catch(const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed game document: ") + e.what());
   }
   validate_game(game);
   return game;
}

MarkovGame load_game(const std::filesystem::path& path)
{
   std::ifstream in(path);
   if(!in) {
      throw ConfigError("cannot open game file " + path.string());
   }
   nlohmann::json doc;
   try {
      in >> doc;
   } catch(const nlohmann::json::exception& e) {
      throw ConfigError("cannot parse " + path.string() + ": " + e.what());
   }
   return game_from_json(doc);
}

void save_game(const MarkovGame& game, const std::filesystem::path& path)
{
   std::ofstream out(path);
   if(!out) {
      throw Error("cannot write " + path.string());
   }
   out << game_to_json(game).dump(2) << '\n';
}

}  // namespace bisirl
