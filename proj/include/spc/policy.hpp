#pragma once

// Linear-softmax categorical policy over a finite action set. The desk-scale
// stand-in for pi_theta, pi_old and pi_ref.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "spc/core.hpp"

namespace spc {

struct FeatureVector {
  std::vector<std::pair<std::size_t, double>> entries;  // (feature index, value)

  void add(std::size_t index, double value = 1.0) { entries.emplace_back(index, value); }
  bool operator==(const FeatureVector&) const = default;
};

class CategoricalPolicy {
 public:
  CategoricalPolicy() = default;
  CategoricalPolicy(std::string feature_map_id, std::vector<std::string> features,
                    std::vector<std::string> actions);

  const std::string& feature_map_id() const { return feature_map_id_; }
  const std::vector<std::string>& features() const { return features_; }
  const std::vector<std::string>& actions() const { return actions_; }
  std::size_t num_features() const { return features_.size(); }
  std::size_t num_actions() const { return actions_.size(); }

  // Row-major [feature][action].
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  double& weight(std::size_t feature, std::size_t action) {
    return params_[feature * actions_.size() + action];
  }
  double weight(std::size_t feature, std::size_t action) const {
    return params_[feature * actions_.size() + action];
  }

  std::size_t action_index(std::string_view action) const;  // UnknownAction
  std::size_t feature_index(std::string_view feature) const;  // InvalidArgument

  std::vector<double> scores(const FeatureVector& x) const;
  // Softmax of scores / temperature; temperature 0 gives the argmax one-hot.
  std::vector<double> probabilities(const FeatureVector& x, double temperature = 1.0) const;
  std::vector<double> log_probabilities(const FeatureVector& x, double temperature = 1.0) const;
  double log_prob(const FeatureVector& x, std::size_t action) const;
  double log_prob(const FeatureVector& x, std::string_view action) const;

  // grad += scale * d log pi(action | x) / d params.
  void accumulate_log_prob_gradient(const FeatureVector& x, std::size_t action, double scale,
                                    std::vector<double>& grad) const;

  // Inverse-CDF sample with one uniform draw from Rng(seed).
  std::size_t sample(const FeatureVector& x, std::uint64_t seed, double temperature = 1.0) const;

  // Closed-form KL(pi_this(.|x) || pi_other(.|x)).
  double kl_to(const CategoricalPolicy& other, const FeatureVector& x) const;

  bool same_layout(const CategoricalPolicy& other) const;
  bool operator==(const CategoricalPolicy&) const = default;

  json to_json() const;
  static CategoricalPolicy from_json(const json& j);
  void save(const std::filesystem::path& path) const;
  static CategoricalPolicy load(const std::filesystem::path& path);

 private:
  void check_features(const FeatureVector& x) const;

  std::string feature_map_id_;
  std::vector<std::string> features_;
  std::vector<std::string> actions_;
  std::vector<double> params_;
};

}  // namespace spc
