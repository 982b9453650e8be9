#include <doctest.h>

#include <cmath>
#include <limits>

#include "bisirl/soft_solver.hpp"
#include "helpers.hpp"

using namespace bisirl;
using Eigen::VectorXd;

namespace {

std::vector< double > random_reward(const MarkovGame& game, Rng& rng)
{
   std::vector< double > r(static_cast< std::size_t >(game.n_states) * game.n_joint());
   for(auto& x : r) {
      x = 2.0 * rng.uniform() - 1.0;
   }
   return r;
}

void check_solution_invariants(const SoftSolution& sol)
{
   for(int h = 0; h < sol.horizon; ++h) {
      for(int s = 0; s < sol.n_states; ++s) {
         double q_max = sol.q_at(h, s, 0);
         for(int j = 1; j < sol.n_joint; ++j) {
            q_max = std::max(q_max, sol.q_at(h, s, j));
         }
         double acc = 0.0;
         for(int j = 0; j < sol.n_joint; ++j) {
            acc += std::exp(sol.q_at(h, s, j) - q_max);
         }
         CHECK(std::abs(sol.v_at(h, s) - (q_max + std::log(acc))) < 1e-9);
         double total = 0.0;
         for(int j = 0; j < sol.n_joint; ++j) {
            const double p = sol.policy.row(h, s)[j];
            CHECK(std::abs(p - std::exp(sol.q_at(h, s, j) - sol.v_at(h, s))) < 1e-9);
            total += p;
         }
         CHECK(std::abs(total - 1.0) < 1e-10);
      }
   }
}

}  // namespace

TEST_CASE("zero rewards give the uniform policy and counted entropy values")
{
   Rng rng(1);
   const auto game = random_game(3, 2, 3, 4, 0.8, rng);
   const std::vector< double > zero(3 * 6, 0.0);
   const auto sol = solve_soft(game, zero);
   check_solution_invariants(sol);
   for(int h = 0; h < 4; ++h) {
      double expected = 0.0;
      for(int j = 0; j <= 3 - h; ++j) {
         expected += std::pow(0.8, j) * std::log(6.0);
      }
      for(int s = 0; s < 3; ++s) {
         CHECK(sol.v_at(h, s) == doctest::Approx(expected).epsilon(1e-12));
         for(double p : sol.policy.row(h, s)) {
            CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
         }
      }
   }
}

TEST_CASE("single-step softmax over two joint actions")
{
   const auto game = testing::chain_game(1, 2, 1, 1);
   const std::vector< double > r{1.0, 0.0};
   const auto sol = solve_soft(game, r);
   const double e = std::exp(1.0);
   CHECK(sol.policy.row(0, 0)[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-14));
   CHECK(sol.policy.row(0, 0)[0] == doctest::Approx(0.73106).epsilon(1e-5));
}

TEST_CASE("adding a constant to both rewards shifts V and keeps the policy")
{
   Rng rng(2);
   const auto game = random_game(2, 2, 2, 1, 1.0, rng);
   const auto r_l = random_reward(game, rng);
   const auto r_e = random_reward(game, rng);
   const double c = 0.4;
   std::vector< double > base(8);
   std::vector< double > shifted(8);
   for(int i = 0; i < 8; ++i) {
      base[i] = r_l[i] + r_e[i];
      shifted[i] = (r_l[i] + c) + (r_e[i] + c);
   }
   const auto a = solve_soft(game, base);
   const auto b = solve_soft(game, shifted);
   for(int s = 0; s < 2; ++s) {
      CHECK(b.v_at(0, s) - a.v_at(0, s) == doctest::Approx(2 * c).epsilon(1e-12));
      for(int j = 0; j < 4; ++j) {
         CHECK(std::abs(b.policy.row(0, s)[j] - a.policy.row(0, s)[j]) < 1e-12);
      }
   }
}

TEST_CASE("state-dependent shift of Q leaves the policy unchanged")
{
   Rng rng(3);
   const auto game = random_game(3, 2, 2, 1, 1.0, rng);
   const auto r = random_reward(game, rng);
   auto shifted = r;
   for(int s = 0; s < 3; ++s) {
      for(int j = 0; j < 4; ++j) {
         shifted[s * 4 + j] += 5.0 * (s + 1);
      }
   }
   const auto a = solve_soft(game, r);
   const auto b = solve_soft(game, shifted);
   for(int s = 0; s < 3; ++s) {
      for(int j = 0; j < 4; ++j) {
         CHECK(std::abs(a.policy.row(0, s)[j] - b.policy.row(0, s)[j]) < 1e-10);
      }
   }
}

TEST_CASE("solutions satisfy the logsumexp and policy invariants on random games")
{
   Rng rng(4);
   for(int trial = 0; trial < 10; ++trial) {
      const auto game = random_game(1 + trial % 5, 1 + trial % 3, 1 + (trial + 1) % 3, 1 + trial % 6, 0.5 + 0.05 * trial, rng);
      check_solution_invariants(solve_soft(game, random_reward(game, rng)));
   }
}

TEST_CASE("large rewards do not overflow")
{
   const auto game = testing::chain_game(2, 2, 2, 3);
   std::vector< double > r(8, 800.0);
   r[1] = 801.0;
   const auto sol = solve_soft(game, r);
   check_solution_invariants(sol);
   CHECK(std::isfinite(sol.v_at(0, 0)));
}

TEST_CASE("solve_soft rejects invalid games and mismatched rewards")
{
   auto game = testing::chain_game(2, 2, 2, 3);
   CHECK_THROWS_AS(solve_soft(game, std::vector< double >(7, 0.0)), ShapeMismatch);
   game.initial_dist = {0.5, 0.4};
   CHECK_THROWS_AS(solve_soft(game, std::vector< double >(8, 0.0)), InvalidGame);
}

TEST_CASE("deterministic chain occupancy is one-hot")
{
   const auto game = testing::chain_game(4, 2, 1, 4);
   JointPolicy policy(4, 4, 2, 1);
   for(int h = 0; h < 4; ++h) {
      for(int s = 0; s < 4; ++s) {
         policy.row(h, s)[1] = 1.0;
      }
   }
   const auto occ = occupancy(game, policy);
   for(int h = 0; h < 4; ++h) {
      for(int s = 0; s < 4; ++s) {
         for(int j = 0; j < 2; ++j) {
            CHECK(occ.at(h, s, j) == ((s == h && j == 1) ? 1.0 : 0.0));
         }
      }
   }
}

TEST_CASE("occupancy mass per step is gamma^h")
{
   Rng rng(5);
   const auto game = random_game(4, 2, 2, 6, 0.5, rng);
   const auto occ = occupancy(game, solve_soft(game, random_reward(game, rng)).policy);
   for(int h = 0; h < 6; ++h) {
      CHECK(std::abs(occ.mass(h) - std::pow(0.5, h)) < 1e-9);
   }
   for(double x : occ.rho) {
      CHECK(x >= 0.0);
   }
}

TEST_CASE("occupancy agrees with Monte-Carlo frequencies")
{
   Rng rng(6);
   const auto game = random_game(3, 2, 2, 4, 0.9, rng);
   const auto policy = solve_soft(game, random_reward(game, rng)).policy;
   const auto exact = occupancy(game, policy);
   const auto mc = mc_occupancy(game, policy, 100000, rng);
   for(std::size_t i = 0; i < exact.rho.size(); ++i) {
      CHECK(std::abs(exact.rho[i] - mc.rho[i]) < 0.01);
   }
}

TEST_CASE("tabular feature expectation is the occupancy summed over steps")
{
   Rng rng(7);
   const auto game = random_game(3, 2, 2, 3, 0.9, rng);
   const auto occ = occupancy(game, solve_soft(game, random_reward(game, rng)).policy);
   const auto mu = feature_expectation(occ, RewardModel::tabular(3, 2, 2));
   for(int s = 0; s < 3; ++s) {
      for(int j = 0; j < 4; ++j) {
         double total = 0.0;
         for(int h = 0; h < 3; ++h) {
            total += occ.at(h, s, j);
         }
         CHECK(mu[s * 4 + j] == doctest::Approx(total).epsilon(1e-14));
      }
   }
}

TEST_CASE("single-step feature expectation is the first feature")
{
   const auto game = testing::chain_game(2, 2, 1, 1);
   JointPolicy policy(1, 2, 2, 1);
   policy.row(0, 0)[1] = 1.0;
   policy.row(0, 1)[0] = 1.0;
   Rng rng(8);
   const auto fm = testing::random_features(3, game, rng);
   const auto mu = feature_expectation(occupancy(game, policy), RewardModel::linear(fm));
   for(int i = 0; i < 3; ++i) {
      CHECK(mu[i] == fm.at(0, 1)[i]);
   }
}

TEST_CASE("feature expectation agrees with Monte-Carlo rollouts")
{
   Rng rng(9);
   const auto game = random_game(4, 2, 2, 5, 0.9, rng);
   const auto model = RewardModel::linear(testing::random_features(3, game, rng));
   const auto policy = solve_soft(game, random_reward(game, rng)).policy;
   const auto exact = feature_expectation(occupancy(game, policy), model);
   const auto mc = mc_feature_expectation(game, policy, model, 100000, rng);
   for(int i = 0; i < 3; ++i) {
      CHECK(std::abs(exact[i] - mc[i]) < 0.01);
   }
}

TEST_CASE("cumulative reward of a constant reward")
{
   const auto g1 = testing::chain_game(3, 2, 2, 5, 1.0);
   const std::vector< double > ones(12, 1.0);
   CHECK(cumulative_reward(occupancy(g1, testing::uniform_joint(g1)), ones) == doctest::Approx(5.0).epsilon(1e-14));
   const auto g2 = testing::chain_game(3, 2, 2, 3, 0.5);
   CHECK(cumulative_reward(occupancy(g2, testing::uniform_joint(g2)), ones) == doctest::Approx(1.75).epsilon(1e-14));
}

TEST_CASE("cumulative reward agrees with Monte-Carlo within three standard errors")
{
   Rng rng(10);
   const auto game = random_game(4, 2, 3, 5, 0.95, rng);
   const auto r = random_reward(game, rng);
   const auto policy = solve_soft(game, random_reward(game, rng)).policy;
   const double exact = cumulative_reward(occupancy(game, policy), r);
   const auto est = mc_cumulative_reward(game, policy, r, 100000, rng);
   CHECK(std::abs(exact - est.mean) < 3.0 * est.standard_error);
}

TEST_CASE("conditional mu: terminal step, tower property and consistency")
{
   Rng rng(11);
   const auto game = random_game(3, 2, 2, 4, 0.85, rng);
   const auto model = RewardModel::linear(testing::random_features(2, game, rng));
   const auto sol = solve_soft(game, random_reward(game, rng));
   for(int s = 0; s < 3; ++s) {
      for(int j = 0; j < 4; ++j) {
         const auto terminal = conditional_mu(game, sol, model, 3, s, j);
         CHECK(terminal[0] == model.feature(s, j)[0]);
         CHECK(terminal[1] == model.feature(s, j)[1]);
      }
   }
   for(int h = 0; h < 4; ++h) {
      for(int s = 0; s < 3; ++s) {
         VectorXd mixed = VectorXd::Zero(2);
         for(int j = 0; j < 4; ++j) {
            mixed += sol.policy.row(h, s)[j] * conditional_mu(game, sol, model, h, s, j);
         }
         CHECK((mixed - conditional_mu(game, sol, model, h, s)).norm() < 1e-10);
      }
   }
   VectorXd start = VectorXd::Zero(2);
   for(int s = 0; s < 3; ++s) {
      start += game.initial_dist[s] * conditional_mu(game, sol, model, 0, s);
   }
   CHECK((start - feature_expectation(occupancy(game, sol.policy), model)).norm() < 1e-9);
   CHECK_THROWS_AS(conditional_mu(game, sol, model, 4, 0), InvalidArgument);
   CHECK_THROWS_AS(conditional_mu(game, sol, model, 0, 3), InvalidArgument);
   CHECK_THROWS_AS(conditional_mu(game, sol, model, 0, 0, 4), InvalidArgument);
}

TEST_CASE("conditional mu agrees with conditional Monte-Carlo")
{
   Rng rng(12);
   const auto game = random_game(3, 2, 2, 4, 0.9, rng);
   const auto model = RewardModel::linear(testing::random_features(2, game, rng));
   const auto sol = solve_soft(game, random_reward(game, rng));
   const auto exact = conditional_mu(game, sol, model, 1, 2, 3);
   const auto mc = mc_conditional_mu(game, sol.policy, model, 1, 2, 3, 100000, rng);
   for(int i = 0; i < 2; ++i) {
      CHECK(std::abs(exact[i] - mc[i]) < 0.01);
   }
}

TEST_CASE("solution JSON has the documented tensors")
{
   const auto game = testing::chain_game(2, 2, 1, 2);
   const auto doc = solution_to_json(solve_soft(game, std::vector< double >(4, 0.0)));
   CHECK(doc.contains("q"));
   CHECK(doc.contains("v"));
   CHECK(doc.contains("policy"));
}

TEST_CASE("non-finite rewards are rejected")
{
   const auto game = testing::chain_game(2, 1, 1, 2);
   std::vector< double > r{0.0, std::nan("")};
   CHECK_THROWS_AS(solve_soft(game, r), InvalidArgument);
   r[1] = std::numeric_limits< double >::infinity();
   CHECK_THROWS_AS(solve_soft(game, r), InvalidArgument);
}
