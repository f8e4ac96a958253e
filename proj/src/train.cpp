#include "spc/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "spc/rng.hpp"

namespace spc {

void RlConfig::validate() const {
  if (batch_size <= 0) throw SpcError(ErrorCode::InvalidArgument, "batch_size must be positive");
  if (!(kl_coefficient >= 0.0) || !std::isfinite(kl_coefficient))
    throw SpcError(ErrorCode::InvalidArgument, "kl_coefficient must be finite and non-negative");
  if (!std::isfinite(sft_aux_coefficient) || !std::isfinite(learning_rate_rl) ||
      !std::isfinite(learning_rate_sft))
    throw SpcError(ErrorCode::InvalidArgument, "coefficients must be finite");
  if (epochs_sft < 0 || epochs_rl < 0)
    throw SpcError(ErrorCode::InvalidArgument, "epochs must be non-negative");
  if (importance_ratio_clip && !(*importance_ratio_clip > 0.0))
    throw SpcError(ErrorCode::InvalidArgument, "importance_ratio_clip must be positive");
}

void to_json(json& j, const RlConfig& c) {
  j = json{{"batch_size", c.batch_size},
           {"learning_rate_sft", c.learning_rate_sft},
           {"learning_rate_rl", c.learning_rate_rl},
           {"kl_coefficient", c.kl_coefficient},
           {"sft_aux_coefficient", c.sft_aux_coefficient},
           {"epochs_sft", c.epochs_sft},
           {"epochs_rl", c.epochs_rl},
           {"grad_check", c.grad_check},
           {"exact_kl", c.exact_kl},
           {"old_logprob_fallback", c.old_logprob_fallback}};
  j["importance_ratio_clip"] =
      c.importance_ratio_clip ? json(*c.importance_ratio_clip) : json(nullptr);
}

void from_json(const json& j, RlConfig& c) {
  c = RlConfig{};
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("learning_rate_sft")) c.learning_rate_sft = j["learning_rate_sft"].get<double>();
  if (j.contains("learning_rate_rl")) c.learning_rate_rl = j["learning_rate_rl"].get<double>();
  if (j.contains("kl_coefficient")) c.kl_coefficient = j["kl_coefficient"].get<double>();
  if (j.contains("sft_aux_coefficient")) c.sft_aux_coefficient = j["sft_aux_coefficient"].get<double>();
  if (j.contains("epochs_sft")) c.epochs_sft = j["epochs_sft"].get<int>();
  if (j.contains("epochs_rl")) c.epochs_rl = j["epochs_rl"].get<int>();
  if (j.contains("grad_check")) c.grad_check = j["grad_check"].get<bool>();
  if (j.contains("exact_kl")) c.exact_kl = j["exact_kl"].get<bool>();
  if (j.contains("old_logprob_fallback")) c.old_logprob_fallback = j["old_logprob_fallback"].get<bool>();
  if (j.contains("importance_ratio_clip") && !j["importance_ratio_clip"].is_null())
    c.importance_ratio_clip = j["importance_ratio_clip"].get<double>();
}

LossAndGradient sft_loss(const CategoricalPolicy& policy, const std::vector<EncodedSample>& batch) {
  if (batch.empty()) throw SpcError(ErrorCode::InvalidArgument, "sft_loss needs a non-empty batch");
  LossAndGradient out;
  out.gradient.assign(policy.parameters().size(), 0.0);
  double n = static_cast<double>(batch.size());
  for (const auto& s : batch) {
    out.loss -= policy.log_prob(s.features, s.action) / n;
    policy.accumulate_log_prob_gradient(s.features, s.action, -1.0 / n, out.gradient);
  }
  return out;
}

std::vector<double> advantage(const std::vector<double>& rewards, const std::vector<double>& kl,
                              double beta) {
  if (rewards.empty()) throw SpcError(ErrorCode::InvalidArgument, "advantage needs a non-empty batch");
  if (kl.size() != rewards.size())
    throw SpcError(ErrorCode::InvalidArgument, "rewards and kl sizes differ");
  double b = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = rewards[i] - b - beta * kl[i];
  return out;
}

std::vector<double> kl_terms(const CategoricalPolicy& policy, const CategoricalPolicy& reference,
                             const std::vector<RlSample>& batch, bool exact) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& s : batch) {
    if (exact) {
      out.push_back(policy.kl_to(reference, s.sample.features));
    } else {
      out.push_back(policy.log_prob(s.sample.features, s.sample.action) -
                    reference.log_prob(s.sample.features, s.sample.action));
    }
  }
  return out;
}

namespace {

struct RatioTerm {
  double ratio;
  bool clipped;
};

RatioTerm ratio_of(double logp, double old_logprob, const RlConfig& cfg) {
  double r = std::exp(logp - old_logprob);
  if (cfg.importance_ratio_clip && r > *cfg.importance_ratio_clip)
    return {*cfg.importance_ratio_clip, true};
  return {r, false};
}

}  // namespace

double rl_surrogate(const CategoricalPolicy& policy, const std::vector<RlSample>& batch,
                    const std::vector<double>& advantages, const RlConfig& cfg) {
  if (batch.empty()) throw SpcError(ErrorCode::InvalidArgument, "rl_surrogate needs a non-empty batch");
  double n = static_cast<double>(batch.size());
  double j = 0.0;
  double sft = 0.0;
  int positives = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double lp = policy.log_prob(batch[i].sample.features, batch[i].sample.action);
    j += ratio_of(lp, batch[i].old_logprob, cfg).ratio * advantages[i] / n;
    if (batch[i].reward > 0) {
      sft += lp;
      ++positives;
    }
  }
  if (positives > 0) j += cfg.sft_aux_coefficient * sft / positives;
  return j;
}

RlGradient rl_gradient(const CategoricalPolicy& policy, const std::vector<RlSample>& batch,
                       const CategoricalPolicy& reference, const RlConfig& cfg) {
  if (batch.empty()) throw SpcError(ErrorCode::InvalidArgument, "rl_gradient needs a non-empty batch");
  RlGradient out;
  std::vector<double> rewards;
  rewards.reserve(batch.size());
  for (const auto& s : batch) rewards.push_back(s.reward);
  out.kl = kl_terms(policy, reference, batch, cfg.exact_kl);
  out.advantages = advantage(rewards, out.kl, cfg.kl_coefficient);
  out.gradient.assign(policy.parameters().size(), 0.0);

  double n = static_cast<double>(batch.size());
  int positives = 0;
  for (const auto& s : batch) positives += s.reward > 0;
  double ratio_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i].sample;
    double lp = policy.log_prob(s.features, s.action);
    auto rt = ratio_of(lp, batch[i].old_logprob, cfg);
    ratio_sum += rt.ratio;
    double scale = rt.clipped ? 0.0 : rt.ratio * out.advantages[i] / n;
    if (batch[i].reward > 0 && positives > 0) scale += cfg.sft_aux_coefficient / positives;
    if (scale != 0.0) policy.accumulate_log_prob_gradient(s.features, s.action, scale, out.gradient);
  }
  out.surrogate = rl_surrogate(policy, batch, out.advantages, cfg);
  out.mean_ratio = ratio_sum / n;
  out.mean_kl = std::accumulate(out.kl.begin(), out.kl.end(), 0.0) / n;
  for (double g : out.gradient)
    if (!std::isfinite(g)) throw SpcError(ErrorCode::NonFiniteGradient, "non-finite policy gradient");
  return out;
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw SpcError(ErrorCode::InvalidArgument, "vector sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

json TrainReport::to_json() const {
  return json{{"mode", mode == TrainMode::Sft ? "sft" : "rl"},
              {"loss_curve", loss_curve},
              {"mean_ratio", mean_ratio},
              {"mean_kl", mean_kl},
              {"steps", steps},
              {"samples", samples},
              {"fallback_old_logprobs", fallback_old_logprobs},
              {"parameter_drift", parameter_drift}};
}

TrainResult train_round(const CategoricalPolicy& init, const std::vector<TrainingSample>& samples,
                        const toy::SampleEncoder& encoder, const RlConfig& cfg, TrainMode mode,
                        std::uint64_t seed,
                        const std::optional<std::filesystem::path>& snapshot_dir) {
  cfg.validate();
  TrainResult out{init, {}};
  out.report.mode = mode;
  out.report.samples = static_cast<int>(samples.size());
  if (samples.empty()) return out;

  std::vector<RlSample> data;
  data.reserve(samples.size());
  for (const auto& s : samples) {
    RlSample r;
    r.sample = encoder(s.input, s.output);
    r.reward = s.reward;
    if (s.old_logprob) {
      r.old_logprob = *s.old_logprob;
    } else if (mode == TrainMode::Rl) {
      if (!cfg.old_logprob_fallback)
        throw SpcError(ErrorCode::MissingOldLogprob, "sample " + s.sample_id + " has no old_logprob");
      r.old_logprob = init.log_prob(r.sample.features, r.sample.action);
      ++out.report.fallback_old_logprobs;
    }
    data.push_back(std::move(r));
  }

  const CategoricalPolicy& reference = init;
  auto& policy = out.policy;
  int epochs = mode == TrainMode::Sft ? cfg.epochs_sft : cfg.epochs_rl;
  double lr = mode == TrainMode::Sft ? cfg.learning_rate_sft : cfg.learning_rate_rl;
  std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  CategoricalPolicy last_good = policy;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double loss_sum = 0.0, ratio_sum = 0.0, kl_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      auto end = std::min(order.size(), start + bs);
      std::vector<double> step;
      double loss = 0.0;
      try {
        if (mode == TrainMode::Sft) {
          std::vector<EncodedSample> batch;
          for (auto k = start; k < end; ++k) batch.push_back(data[order[k]].sample);
          auto lg = sft_loss(policy, batch);
          loss = lg.loss;
          step = std::move(lg.gradient);
          for (auto& g : step) g = -lr * g;
        } else {
          std::vector<RlSample> batch;
          for (auto k = start; k < end; ++k) batch.push_back(data[order[k]]);
          auto rg = rl_gradient(policy, batch, reference, cfg);
          loss = -rg.surrogate;
          ratio_sum += rg.mean_ratio;
          kl_sum += rg.mean_kl;
          step = std::move(rg.gradient);
          for (auto& g : step) g = lr * g;
        }
      } catch (const SpcError& e) {
        if (e.code() != ErrorCode::NonFiniteGradient) throw;
        loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(loss)) {
        if (snapshot_dir) last_good.save(*snapshot_dir / "last_good.json");
        throw SpcError(ErrorCode::DivergenceDetected,
                       "non-finite loss at epoch " + std::to_string(epoch));
      }
      auto& params = policy.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) params[p] += step[p];
      loss_sum += loss;
      ++batches;
      ++out.report.steps;
    }
    last_good = policy;
    out.report.loss_curve.push_back(loss_sum / batches);
    if (mode == TrainMode::Rl) {
      out.report.mean_ratio.push_back(ratio_sum / batches);
      out.report.mean_kl.push_back(kl_sum / batches);
    }
    if (snapshot_dir)
      policy.save(*snapshot_dir / ("epoch_" + std::to_string(epoch + 1) + ".json"));
  }
  out.report.parameter_drift = l2_distance(policy.parameters(), init.parameters());
  return out;
}

}  // namespace spc
