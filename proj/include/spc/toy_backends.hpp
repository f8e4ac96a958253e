#pragma once

// Toy policies dressed as generation backends. Each backend recovers the
// problem, prefix and step from the rendered user prompt, maps them to
// features, samples an action from its categorical policy and renders text in
// the same format an LLM would be asked for.

#include <array>
#include <functional>
#include <memory>
#include <optional>

#include "spc/backend.hpp"
#include "spc/policy.hpp"
#include "spc/toyworld.hpp"

namespace spc::toy {

inline constexpr std::string_view kCriticFeatureMap = "toy-critic-v1";
inline constexpr std::string_view kSneakyFeatureMap = "toy-sneaky-v1";
inline constexpr std::string_view kSolverFeatureMap = "toy-solver-v1";

// Critic actions, in policy order.
inline constexpr std::size_t kCriticCorrect = 0;
inline constexpr std::size_t kCriticIncorrect = 1;
// Solver actions: 0 = correct step, 1 + i = kAllPerturbations[i].
inline constexpr std::size_t kSolverCorrect = 0;

struct CriticFeatureConfig {
  // Probability that the arithmetic residual is hidden, by |rhs| bucket
  // (< 10, < 100, >= 100).
  std::array<double, 3> residual_mask = {0.1, 0.3, 0.6};
  double operation_mask = 0.25;
};

void to_json(json& j, const CriticFeatureConfig& c);
void from_json(const json& j, CriticFeatureConfig& c);

CategoricalPolicy make_critic_policy();
CategoricalPolicy make_sneaky_policy();
CategoricalPolicy make_solver_policy();

// Solver that picks the correct step with probability 1 - error_rate and each
// perturbation with error_rate / 5, independent of context.
CategoricalPolicy make_planted_solver(double error_rate);

int magnitude_bucket(long v);  // 0: |v| < 10, 1: < 100, 2: otherwise

FeatureVector critic_features(const ToyProblem& p, const std::vector<ToyStep>& prefix,
                              const ToyStep& step, const CriticFeatureConfig& cfg);
FeatureVector sneaky_features(const ToyProblem& p, const std::vector<ToyStep>& prefix,
                              const ToyStep& step);
FeatureVector solver_features(const ToyProblem& p, std::size_t k, long lhs);

struct ToyContext {
  ToyProblem problem;
  std::vector<ToyStep> prefix;
  std::optional<ToyStep> step;
};

// Inverts the role's user template and parses the toy problem and steps.
std::optional<ToyContext> parse_context(const PromptTemplate& user_template,
                                        std::string_view user_text);

std::string critique_analysis(const ToyProblem& p, const std::vector<ToyStep>& prefix,
                              const ToyStep& step);
std::string transformation_text(const ToyStep& original, PerturbationAction action);

// Per-class probability that the solver re-reads the last prefix step,
// notices the mistake and redoes it before continuing.
struct SolverConfig {
  std::array<double, 7> notice = {0.0, 0.03, 0.05, 0.1, 0.2, 0.6, 0.5};  // indexed by MistakeClass

  double notice_probability(MistakeClass m) const { return notice[static_cast<std::size_t>(m)]; }
  static SolverConfig never_notices();
};

void to_json(json& j, const SolverConfig& c);
void from_json(const json& j, SolverConfig& c);

class ToyBackendBase : public Backend {
 public:
  ToyBackendBase(CategoricalPolicy policy, PromptTemplate user_template)
      : policy_(std::move(policy)), user_template_(std::move(user_template)) {}
  const CategoricalPolicy& policy() const { return policy_; }

 protected:
  // Parsed context plus the seed for this request, or an error response.
  struct Prepared {
    std::optional<ToyContext> ctx;
    std::uint64_t seed = 0;
    GenerationResponse error;
  };
  Prepared prepare(const GenerationRequest& request, bool needs_step) const;

  CategoricalPolicy policy_;
  PromptTemplate user_template_;
};

class ToyCriticBackend final : public ToyBackendBase {
 public:
  ToyCriticBackend(CategoricalPolicy policy, PromptTemplate user_template,
                   CriticFeatureConfig cfg = {});
  GenerationResponse generate(const GenerationRequest& request) override;
  std::string name() const override { return "toy-critic"; }

 private:
  CriticFeatureConfig cfg_;
};

// Judges with oracle_check; always right.
class OracleCriticBackend final : public Backend {
 public:
  explicit OracleCriticBackend(PromptTemplate user_template) : user_template_(std::move(user_template)) {}
  GenerationResponse generate(const GenerationRequest& request) override;
  std::string name() const override { return "oracle-critic"; }

 private:
  PromptTemplate user_template_;
};

class ToySneakyBackend final : public ToyBackendBase {
 public:
  using ToyBackendBase::ToyBackendBase;
  GenerationResponse generate(const GenerationRequest& request) override;
  std::string name() const override { return "toy-sneaky"; }
};

class ToySolverBackend final : public ToyBackendBase {
 public:
  ToySolverBackend(CategoricalPolicy policy, PromptTemplate user_template, SolverConfig cfg = {});
  GenerationResponse generate(const GenerationRequest& request) override;
  std::string name() const override { return "toy-solver"; }

 private:
  SolverConfig cfg_;
};

// Maps a (rendered input, output text) training pair to policy features and
// the action the output encodes.
struct EncodedSample {
  FeatureVector features;
  std::size_t action = 0;
};

using SampleEncoder = std::function<EncodedSample(const std::string& input, const std::string& output)>;

SampleEncoder critic_encoder(PromptTemplate critic_user, CriticFeatureConfig cfg = {});
SampleEncoder sneaky_encoder(PromptTemplate sneaky_user);

}  // namespace spc::toy
