#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bisirl/common.hpp"
#include "bisirl/game.hpp"

namespace bisirl {

/// Feature vectors phi(s, a_l, a_e), stored [s][a_l][a_e][dim].
struct FeatureMap {
   int dim = 0;
   int n_states = 0;
   int n_actions_learner = 0;
   int n_actions_expert = 0;
   std::vector< double > values;

   static FeatureMap zeros(int dim, int n_states, int n_learner, int n_expert);

   [[nodiscard]] int n_joint() const { return n_actions_learner * n_actions_expert; }
   [[nodiscard]] std::span< const double > at(int s, int joint) const
   {
      return {values.data() + (static_cast< std::size_t >(s) * n_joint() + joint) * dim,
              static_cast< std::size_t >(dim)};
   }
   [[nodiscard]] std::span< double > at(int s, int joint)
   {
      return {values.data() + (static_cast< std::size_t >(s) * n_joint() + joint) * dim,
              static_cast< std::size_t >(dim)};
   }

   /// Throws InvalidArgument on dim < 1, size mismatch or non-finite entries.
   void validate() const;
};

enum class RewardKind { linear, tabular };

/// r_theta(s, a) = <theta, phi(s, a)>. The tabular kind is the linear model
/// over one-hot features with one parameter per (s, a_l, a_e) triple.
class RewardModel {
  public:
   static RewardModel linear(FeatureMap features);
   static RewardModel tabular(int n_states, int n_learner, int n_expert);

   [[nodiscard]] RewardKind kind() const { return kind_; }
   [[nodiscard]] int dim() const { return features_.dim; }
   [[nodiscard]] int n_states() const { return features_.n_states; }
   [[nodiscard]] int n_joint() const { return features_.n_joint(); }
   [[nodiscard]] const FeatureMap& features() const { return features_; }
   [[nodiscard]] std::span< const double > feature(int s, int joint) const { return features_.at(s, joint); }

   /// Throws ShapeMismatch when the feature tensor does not fit the game.
   void check_shape(const MarkovGame& game) const;

   /// Reward of every (s, joint action) pair, laid out [s][joint].
   [[nodiscard]] std::vector< double > reward_table(const Eigen::VectorXd& theta) const;

  private:
   RewardModel(RewardKind kind, FeatureMap features) : kind_(kind), features_(std::move(features)) {}

   RewardKind kind_ = RewardKind::linear;
   FeatureMap features_;
};

/// Parameter vector in the closed unit L2 ball.
class RewardParams {
  public:
   static constexpr double kRadiusTolerance = 1e-12;

   /// Throws InvalidArgument when the norm exceeds 1 + kRadiusTolerance.
   explicit RewardParams(Eigen::VectorXd theta);
   static RewardParams zeros(int dim) { return RewardParams(Eigen::VectorXd::Zero(dim)); }

   [[nodiscard]] const Eigen::VectorXd& theta() const { return theta_; }
   [[nodiscard]] int dim() const { return static_cast< int >(theta_.size()); }

  private:
   Eigen::VectorXd theta_;
};

/// A reward model together with fixed parameters (used for ground truths).
struct BoundReward {
   RewardModel model;
   Eigen::VectorXd theta;

   [[nodiscard]] std::vector< double > table() const { return model.reward_table(theta); }
};

double reward_value(const RewardModel& model, const RewardParams& params, int s, int al, int ae);
Eigen::VectorXd reward_grad(const RewardModel& model, const RewardParams& params, int s, int al, int ae);
/// Identically zero for the linear and tabular kinds.
Eigen::MatrixXd reward_hess(const RewardModel& model, const RewardParams& params, int s, int al, int ae);

/// Euclidean projection onto the unit ball. Throws InvalidArgument on
/// non-finite input.
RewardParams project_ball(const Eigen::VectorXd& theta);

nlohmann::json feature_map_to_json(const FeatureMap& features);
FeatureMap feature_map_from_json(const nlohmann::json& doc);

}  // namespace bisirl
