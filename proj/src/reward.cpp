#include "bisirl/reward.hpp"

#include <sstream>

namespace bisirl {

namespace {

void check_indices(const RewardModel& model, int s, int al, int ae)
{
   const auto& f = model.features();
   if(s < 0 || s >= f.n_states || al < 0 || al >= f.n_actions_learner || ae < 0 || ae >= f.n_actions_expert) {
      std::ostringstream msg;
      msg << "reward index (" << s << ", " << al << ", " << ae << ") out of range";
      throw InvalidArgument(msg.str());
   }
}

void check_dim(const RewardModel& model, const RewardParams& params)
{
   if(params.dim() != model.dim()) {
      throw ShapeMismatch("parameter dimension " + std::to_string(params.dim()) + " does not match model dimension "
                          + std::to_string(model.dim()));
   }
}

}  // namespace

FeatureMap FeatureMap::zeros(int dim, int n_states, int n_learner, int n_expert)
{
   FeatureMap f;
   f.dim = dim;
   f.n_states = n_states;
   f.n_actions_learner = n_learner;
   f.n_actions_expert = n_expert;
   f.values.assign(static_cast< std::size_t >(n_states) * n_learner * n_expert * dim, 0.0);
   return f;
}

void FeatureMap::validate() const
{
   if(dim < 1) {
      throw InvalidArgument("feature dimension must be at least 1");
   }
   if(n_states < 1 || n_actions_learner < 1 || n_actions_expert < 1) {
      throw InvalidArgument("feature map shape must be positive");
   }
   if(values.size() != static_cast< std::size_t >(n_states) * n_joint() * dim) {
      throw InvalidArgument("feature tensor size does not match its shape");
   }
   for(double v : values) {
      if(!std::isfinite(v)) {
         throw InvalidArgument("feature map contains a non-finite entry");
      }
   }
}

RewardModel RewardModel::linear(FeatureMap features)
{
   features.validate();
   return {RewardKind::linear, std::move(features)};
}

RewardModel RewardModel::tabular(int n_states, int n_learner, int n_expert)
{
   const int dim = n_states * n_learner * n_expert;
   auto f = FeatureMap::zeros(dim, n_states, n_learner, n_expert);
   for(int s = 0; s < n_states; ++s) {
      for(int j = 0; j < n_learner * n_expert; ++j) {
         f.at(s, j)[s * n_learner * n_expert + j] = 1.0;
      }
   }
   return {RewardKind::tabular, std::move(f)};
}

void RewardModel::check_shape(const MarkovGame& game) const
{
   if(features_.n_states != game.n_states || features_.n_actions_learner != game.n_actions_learner
      || features_.n_actions_expert != game.n_actions_expert) {
      throw ShapeMismatch("reward model shape does not match game");
   }
}

std::vector< double > RewardModel::reward_table(const Eigen::VectorXd& theta) const
{
   if(theta.size() != dim()) {
      throw ShapeMismatch("parameter dimension " + std::to_string(theta.size()) + " does not match model dimension "
                          + std::to_string(dim()));
   }
   const int pairs = features_.n_states * n_joint();
   std::vector< double > table(pairs);
   if(kind_ == RewardKind::tabular) {
      for(int i = 0; i < pairs; ++i) {
         table[i] = theta[i];
      }
      return table;
   }
   const Eigen::Map< const Eigen::MatrixXd > phi(features_.values.data(), dim(), pairs);
   Eigen::Map< Eigen::VectorXd >(table.data(), pairs) = phi.transpose() * theta;
   return table;
}

RewardParams::RewardParams(Eigen::VectorXd theta) : theta_(std::move(theta))
{
   if(!theta_.allFinite()) {
      throw InvalidArgument("reward parameters must be finite");
   }
   if(theta_.norm() > 1.0 + kRadiusTolerance) {
      std::ostringstream msg;
      msg << "reward parameters have norm " << theta_.norm() << " outside the unit ball";
      throw InvalidArgument(msg.str());
   }
}

double reward_value(const RewardModel& model, const RewardParams& params, int s, int al, int ae)
{
   check_indices(model, s, al, ae);
   check_dim(model, params);
   const auto phi = model.feature(s, al * model.features().n_actions_expert + ae);
   return Eigen::Map< const Eigen::VectorXd >(phi.data(), model.dim()).dot(params.theta());
}

Eigen::VectorXd reward_grad(const RewardModel& model, const RewardParams& params, int s, int al, int ae)
{
   check_indices(model, s, al, ae);
   check_dim(model, params);
   const auto phi = model.feature(s, al * model.features().n_actions_expert + ae);
   return Eigen::Map< const Eigen::VectorXd >(phi.data(), model.dim());
}

Eigen::MatrixXd reward_hess(const RewardModel& model, const RewardParams& params, int s, int al, int ae)
{
   check_indices(model, s, al, ae);
   check_dim(model, params);
   return Eigen::MatrixXd::Zero(model.dim(), model.dim());
}

RewardParams project_ball(const Eigen::VectorXd& theta)
{
   if(!theta.allFinite()) {
      throw InvalidArgument("cannot project a non-finite parameter vector");
   }
   const double norm = theta.norm();
   if(norm <= 1.0) {
      return RewardParams(theta);
   }
   Eigen::VectorXd scaled = theta / norm;
   // Division can leave the norm one ulp above 1; a second pass settles it.
   const double again = scaled.norm();
   if(again > 1.0) {
      scaled /= again;
   }
   return RewardParams(std::move(scaled));
}

nlohmann::json feature_map_to_json(const FeatureMap& features)
{
   nlohmann::json values = nlohmann::json::array();
   for(int s = 0; s < features.n_states; ++s) {
      nlohmann::json by_learner = nlohmann::json::array();
      for(int al = 0; al < features.n_actions_learner; ++al) {
         nlohmann::json by_expert = nlohmann::json::array();
         for(int ae = 0; ae < features.n_actions_expert; ++ae) {
            auto phi = features.at(s, al * features.n_actions_expert + ae);
            by_expert.push_back(std::vector< double >(phi.begin(), phi.end()));
         }
         by_learner.push_back(std::move(by_expert));
      }
      values.push_back(std::move(by_learner));
   }
   return {{"dim", features.dim}, {"values", std::move(values)}};
}

FeatureMap feature_map_from_json(const nlohmann::json& doc)
{
   if(!doc.is_object() || !doc.contains("dim") || !doc.contains("values")) {
      throw ConfigError("feature map document needs 'dim' and 'values'");
   }
   for(const auto& item : doc.items()) {
      if(item.key() != "dim" && item.key() != "values") {
         throw ConfigError("feature map document has unknown field '" + item.key() + "'");
      }
   }
   FeatureMap f;
   try {
      f.dim = doc.at("dim").get< int >();
      const auto& values = doc.at("values");
      f.n_states = static_cast< int >(values.size());
      if(f.n_states < 1 || !values[0].is_array() || values[0].empty() || !values[0][0].is_array()) {
         throw ConfigError("feature map 'values' must be nested [s][a_l][a_e] -> vector");
      }
      f.n_actions_learner = static_cast< int >(values[0].size());
      f.n_actions_expert = static_cast< int >(values[0][0].size());
      for(const auto& by_learner : values) {
         if(by_learner.size() != static_cast< std::size_t >(f.n_actions_learner)) {
            throw ConfigError("ragged feature map along the learner-action axis");
         }
         for(const auto& by_expert : by_learner) {
            if(by_expert.size() != static_cast< std::size_t >(f.n_actions_expert)) {
               throw ConfigError("ragged feature map along the expert-action axis");
            }
            for(const auto& phi : by_expert) {
               auto v = phi.get< std::vector< double > >();
               if(v.size() != static_cast< std::size_t >(f.dim)) {
                  throw ConfigError("feature vector length does not match 'dim'");
               }
               f.values.insert(f.values.end(), v.begin(), v.end());
            }
         }
      }
   } catch(const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed feature map: ") + e.what());
   }
   try {
      f.validate();
   } catch(const InvalidArgument& e) {
      throw ConfigError(e.what());
   }
   return f;
}

}  // namespace bisirl
