#pragma once

// Behaviour cloning and offline policy-gradient training of categorical
// policies.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "spc/data.hpp"
#include "spc/policy.hpp"
#include "spc/toy_backends.hpp"

namespace spc {

struct RlConfig {
  int batch_size = 64;
  // LLM-scale runs use 5e-6 (sft) and 2e-6 (rl); these suit the toy policies.
  double learning_rate_sft = 0.05;
  double learning_rate_rl = 0.02;
  double kl_coefficient = 0.1;
  double sft_aux_coefficient = 0.15;
  int epochs_sft = 3;
  int epochs_rl = 30;
  std::optional<double> importance_ratio_clip;
  bool grad_check = false;
  bool exact_kl = false;
  bool old_logprob_fallback = true;

  void validate() const;
};

void to_json(json& j, const RlConfig& c);
void from_json(const json& j, RlConfig& c);

using toy::EncodedSample;

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // d loss / d params
};

// loss = -mean log pi(y | x).
LossAndGradient sft_loss(const CategoricalPolicy& policy, const std::vector<EncodedSample>& batch);

// A_i = R_i - mean(R) - beta * kl_i.
std::vector<double> advantage(const std::vector<double>& rewards, const std::vector<double>& kl,
                              double beta);

struct RlSample {
  EncodedSample sample;
  double reward = 0.0;
  double old_logprob = 0.0;
};

struct RlGradient {
  std::vector<double> gradient;  // ascent direction of the surrogate
  double surrogate = 0.0;
  std::vector<double> advantages;
  std::vector<double> kl;
  double mean_ratio = 0.0;
  double mean_kl = 0.0;
};

// Per-sample KL to the reference: log pi(y|x) - log pi_ref(y|x), or the
// closed-form KL over the action set when exact.
std::vector<double> kl_terms(const CategoricalPolicy& policy, const CategoricalPolicy& reference,
                             const std::vector<RlSample>& batch, bool exact);

// Surrogate with the advantages held fixed:
//   J = mean_i ratio_i * A_i + c_sft * mean_{i: R_i > 0} log pi(y_i | x_i)
// where ratio_i = pi(y_i|x_i) / pi_old(y_i|x_i).
double rl_surrogate(const CategoricalPolicy& policy, const std::vector<RlSample>& batch,
                    const std::vector<double>& advantages, const RlConfig& cfg);

// Gradient of rl_surrogate with the advantages computed (and detached) at the
// current parameters. NonFiniteGradient on overflow.
RlGradient rl_gradient(const CategoricalPolicy& policy, const std::vector<RlSample>& batch,
                       const CategoricalPolicy& reference, const RlConfig& cfg);

enum class TrainMode { Sft, Rl };

struct TrainReport {
  TrainMode mode = TrainMode::Sft;
  std::vector<double> loss_curve;  // per epoch
  std::vector<double> mean_ratio;  // per epoch (rl)
  std::vector<double> mean_kl;     // per epoch (rl)
  int steps = 0;
  int samples = 0;
  int fallback_old_logprobs = 0;
  double parameter_drift = 0.0;  // L2 distance from the initial parameters

  json to_json() const;
};

struct TrainResult {
  CategoricalPolicy policy;
  TrainReport report;
};

// Fixed-epoch SGD over seeded shuffles. In Rl mode, pi_ref is the initial
// policy and missing old log-probs fall back to it. Epoch snapshots go to
// snapshot_dir when given. DivergenceDetected on a non-finite loss.
TrainResult train_round(const CategoricalPolicy& init, const std::vector<TrainingSample>& samples,
                        const toy::SampleEncoder& encoder, const RlConfig& cfg, TrainMode mode,
                        std::uint64_t seed,
                        const std::optional<std::filesystem::path>& snapshot_dir = std::nullopt);

double l2_distance(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace spc
