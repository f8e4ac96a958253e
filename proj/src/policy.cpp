#include "spc/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spc/jsonl.hpp"
#include "spc/rng.hpp"

namespace spc {

namespace {
constexpr std::string_view kFormat = "spc-policy";
constexpr int kVersion = 1;
}  // namespace

CategoricalPolicy::CategoricalPolicy(std::string feature_map_id, std::vector<std::string> features,
                                     std::vector<std::string> actions)
    : feature_map_id_(std::move(feature_map_id)),
      features_(std::move(features)),
      actions_(std::move(actions)),
      params_(features_.size() * actions_.size(), 0.0) {
  if (actions_.empty()) throw SpcError(ErrorCode::InvalidArgument, "policy needs actions");
}

std::size_t CategoricalPolicy::action_index(std::string_view action) const {
  auto it = std::find(actions_.begin(), actions_.end(), action);
  if (it == actions_.end())
    throw SpcError(ErrorCode::UnknownAction, "unknown action: " + std::string(action));
  return static_cast<std::size_t>(it - actions_.begin());
}

std::size_t CategoricalPolicy::feature_index(std::string_view feature) const {
  auto it = std::find(features_.begin(), features_.end(), feature);
  if (it == features_.end())
    throw SpcError(ErrorCode::InvalidArgument, "unknown feature: " + std::string(feature));
  return static_cast<std::size_t>(it - features_.begin());
}

void CategoricalPolicy::check_features(const FeatureVector& x) const {
  for (const auto& [f, v] : x.entries)
    if (f >= features_.size())
      throw SpcError(ErrorCode::InvalidArgument, "feature index out of range");
}

std::vector<double> CategoricalPolicy::scores(const FeatureVector& x) const {
  check_features(x);
  std::vector<double> s(actions_.size(), 0.0);
  for (const auto& [f, v] : x.entries) {
    const double* row = &params_[f * actions_.size()];
    for (std::size_t a = 0; a < s.size(); ++a) s[a] += v * row[a];
  }
  return s;
}

std::vector<double> CategoricalPolicy::log_probabilities(const FeatureVector& x,
                                                         double temperature) const {
  auto s = scores(x);
  if (temperature <= 0.0) {
    auto best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    std::vector<double> out(s.size(), -std::numeric_limits<double>::infinity());
    out[best] = 0.0;
    return out;
  }
  for (auto& v : s) v /= temperature;
  double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - m);
  double lz = m + std::log(z);
  for (auto& v : s) v -= lz;
  return s;
}

std::vector<double> CategoricalPolicy::probabilities(const FeatureVector& x,
                                                     double temperature) const {
  auto lp = log_probabilities(x, temperature);
  for (auto& v : lp) v = std::exp(v);
  return lp;
}

double CategoricalPolicy::log_prob(const FeatureVector& x, std::size_t action) const {
  if (action >= actions_.size())
    throw SpcError(ErrorCode::UnknownAction, "action index out of range");
  return log_probabilities(x)[action];
}

double CategoricalPolicy::log_prob(const FeatureVector& x, std::string_view action) const {
  return log_prob(x, action_index(action));
}

void CategoricalPolicy::accumulate_log_prob_gradient(const FeatureVector& x, std::size_t action,
                                                     double scale,
                                                     std::vector<double>& grad) const {
  if (action >= actions_.size())
    throw SpcError(ErrorCode::UnknownAction, "action index out of range");
  auto p = probabilities(x);
  for (const auto& [f, v] : x.entries) {
    double* row = &grad[f * actions_.size()];
    for (std::size_t a = 0; a < p.size(); ++a)
      row[a] += scale * v * ((a == action ? 1.0 : 0.0) - p[a]);
  }
}

std::size_t CategoricalPolicy::sample(const FeatureVector& x, std::uint64_t seed,
                                      double temperature) const {
  auto p = probabilities(x, temperature);
  Rng rng(seed);
  return sample_categorical(p, rng.uniform01());
}

double CategoricalPolicy::kl_to(const CategoricalPolicy& other, const FeatureVector& x) const {
  auto lp = log_probabilities(x);
  auto lq = other.log_probabilities(x);
  double kl = 0.0;
  for (std::size_t a = 0; a < lp.size(); ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
  return kl;
}

bool CategoricalPolicy::same_layout(const CategoricalPolicy& other) const {
  return feature_map_id_ == other.feature_map_id_ && features_ == other.features_ &&
         actions_ == other.actions_;
}

json CategoricalPolicy::to_json() const {
  return json{{"format", kFormat},     {"version", kVersion},  {"feature_map", feature_map_id_},
              {"features", features_}, {"actions", actions_}, {"parameters", params_}};
}

CategoricalPolicy CategoricalPolicy::from_json(const json& j) {
  if (j.value("format", "") != kFormat)
    throw SpcError(ErrorCode::ParseFailure, "not a policy snapshot");
  if (j.value("version", 0) != kVersion)
    throw SpcError(ErrorCode::ParseFailure, "unsupported policy snapshot version");
  CategoricalPolicy p(j.at("feature_map").get<std::string>(),
                      j.at("features").get<std::vector<std::string>>(),
                      j.at("actions").get<std::vector<std::string>>());
  auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != p.params_.size())
    throw SpcError(ErrorCode::ParseFailure, "policy parameter count does not match layout");
  p.params_ = std::move(params);
  return p;
}

void CategoricalPolicy::save(const std::filesystem::path& path) const {
  write_json_file(path, to_json());
}

CategoricalPolicy CategoricalPolicy::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

}  // namespace spc
