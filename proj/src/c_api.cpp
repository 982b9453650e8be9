#include "bisirl/bisirl_c.h"

#include <cstring>
#include <iostream>
#include <string>

#include "bisirl/experiment.hpp"
#include "bisirl/game.hpp"
#include "bisirl/soft_solver.hpp"

struct bisirl_game {
   bisirl::MarkovGame game;
};

struct bisirl_solution {
   bisirl::SoftSolution solution;
};

namespace {

thread_local std::string last_error;

bisirl_status fail(bisirl_status code, const std::string& message)
{
   last_error = message;
   return code;
}

/// Maps the library's exception hierarchy onto status codes.
template< class Fn >
bisirl_status guarded(Fn&& fn)
{
   try {
      fn();
      last_error.clear();
      return BISIRL_OK;
   } catch(const bisirl::ConfigError& e) {
      return fail(BISIRL_ERR_CONFIG, e.what());
   } catch(const bisirl::InvalidGame& e) {
      return fail(BISIRL_ERR_INVALID_GAME, e.what());
   } catch(const bisirl::ShapeMismatch& e) {
      return fail(BISIRL_ERR_SHAPE, e.what());
   } catch(const bisirl::InvalidArgument& e) {
      return fail(BISIRL_ERR_INVALID_ARGUMENT, e.what());
   } catch(const bisirl::NotPositiveDefinite& e) {
      return fail(BISIRL_ERR_NOT_POSITIVE_DEFINITE, e.what());
   } catch(const nlohmann::json::exception& e) {
      return fail(BISIRL_ERR_CONFIG, e.what());
   } catch(const std::exception& e) {
      return fail(BISIRL_ERR_RUNTIME, e.what());
   } catch(...) {
      return fail(BISIRL_ERR_RUNTIME, "unknown error");
   }
}

char* copy_string(const std::string& s)
{
   auto* out = new char[s.size() + 1];
   std::memcpy(out, s.c_str(), s.size() + 1);
   return out;
}

}  // namespace

extern "C" {

const char* bisirl_last_error(void) { return last_error.c_str(); }

const char* bisirl_version(void) { return "0.1.0"; }

bisirl_status bisirl_game_load(const char* path, bisirl_game** out)
{
   if(path == nullptr || out == nullptr) {
      return fail(BISIRL_ERR_NULL, "null argument");
   }
   *out = nullptr;
   return guarded([&]() { *out = new bisirl_game{bisirl::load_game(path)}; });
}

bisirl_status bisirl_game_from_json(const char* json, bisirl_game** out)
{
   if(json == nullptr || out == nullptr) {
      return fail(BISIRL_ERR_NULL, "null argument");
   }
   *out = nullptr;
   return guarded([&]() {
      const auto doc = nlohmann::json::parse(json);
      *out = new bisirl_game{bisirl::game_from_json(doc)};
   });
}

void bisirl_game_free(bisirl_game* game) { delete game; }

bisirl_status bisirl_game_validate(const bisirl_game* game)
{
   if(game == nullptr) {
      return fail(BISIRL_ERR_NULL, "null game");
   }
   return guarded([&]() { bisirl::validate_game(game->game); });
}

bisirl_status bisirl_game_dims(
   const bisirl_game* game,
   int* n_states,
   int* n_actions_learner,
   int* n_actions_expert,
   int* horizon,
   double* discount
)
{
   if(game == nullptr) {
      return fail(BISIRL_ERR_NULL, "null game");
   }
   const auto& g = game->game;
   if(n_states != nullptr) {
      *n_states = g.n_states;
   }
   if(n_actions_learner != nullptr) {
      *n_actions_learner = g.n_actions_learner;
   }
   if(n_actions_expert != nullptr) {
      *n_actions_expert = g.n_actions_expert;
   }
   if(horizon != nullptr) {
      *horizon = g.horizon;
   }
   if(discount != nullptr) {
      *discount = g.discount;
   }
   last_error.clear();
   return BISIRL_OK;
}

bisirl_status bisirl_game_to_json(const bisirl_game* game, char** out)
{
   if(game == nullptr || out == nullptr) {
      return fail(BISIRL_ERR_NULL, "null argument");
   }
   *out = nullptr;
   return guarded([&]() { *out = copy_string(bisirl::game_to_json(game->game).dump()); });
}

void bisirl_string_free(char* s) { delete[] s; }

bisirl_status bisirl_solve_soft(const bisirl_game* game, const double* reward, size_t reward_len, bisirl_solution** out)
{
   if(game == nullptr || reward == nullptr || out == nullptr) {
      return fail(BISIRL_ERR_NULL, "null argument");
   }
   *out = nullptr;
   const auto& g = game->game;
   if(reward_len != static_cast< size_t >(g.n_states) * g.n_joint()) {
      return fail(BISIRL_ERR_SHAPE, "reward length does not match the game");
   }
   return guarded([&]() {
      *out = new bisirl_solution{bisirl::solve_soft(g, std::span< const double >(reward, reward_len))};
   });
}

void bisirl_solution_free(bisirl_solution* solution) { delete solution; }

bisirl_status bisirl_solution_policy(const bisirl_solution* solution, double* out, size_t* len)
{
   if(solution == nullptr || len == nullptr) {
      return fail(BISIRL_ERR_NULL, "null argument");
   }
   const auto& table = solution->solution.policy.table();
   if(out == nullptr) {
      *len = table.size();
      last_error.clear();
      return BISIRL_OK;
   }
   if(*len < table.size()) {
      *len = table.size();
      return fail(BISIRL_ERR_SHAPE, "output buffer too small");
   }
   std::memcpy(out, table.data(), table.size() * sizeof(double));
   *len = table.size();
   last_error.clear();
   return BISIRL_OK;
}

bisirl_status bisirl_solution_value(const bisirl_solution* solution, int h, int s, double* out)
{
   if(solution == nullptr || out == nullptr) {
      return fail(BISIRL_ERR_NULL, "null argument");
   }
   const auto& sol = solution->solution;
   if(h < 0 || h >= sol.horizon || s < 0 || s >= sol.n_states) {
      return fail(BISIRL_ERR_INVALID_ARGUMENT, "step or state out of range");
   }
   *out = sol.v_at(h, s);
   last_error.clear();
   return BISIRL_OK;
}

bisirl_status bisirl_solution_to_json(const bisirl_solution* solution, char** out)
{
   if(solution == nullptr || out == nullptr) {
      return fail(BISIRL_ERR_NULL, "null argument");
   }
   *out = nullptr;
   return guarded([&]() { *out = copy_string(bisirl::solution_to_json(solution->solution).dump()); });
}

int bisirl_cmd_run(const char* config_path, int jobs)
{
   if(config_path == nullptr) {
      return 2;
   }
   return bisirl::cmd_run(config_path, jobs, std::cout, std::cerr);
}

int bisirl_cmd_gradcheck(const char* config_path, int has_tol, double tol)
{
   if(config_path == nullptr) {
      return 2;
   }
   std::optional< double > override;
   if(has_tol != 0) {
      override = tol;
   }
   return bisirl::cmd_gradcheck(config_path, override, std::cout, std::cerr);
}

int bisirl_cmd_bench(const char* config_path, int jobs)
{
   if(config_path == nullptr) {
      return 2;
   }
   return bisirl::cmd_bench(config_path, jobs, std::cout, std::cerr);
}

}  // extern "C"
