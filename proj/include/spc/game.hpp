#pragma once

// The adversarial game: sneaky transformation, rollout validation, critic
// judgment and reward assignment.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spc/backend.hpp"
#include "spc/executor.hpp"
#include "spc/formats.hpp"
#include "spc/validate.hpp"

namespace spc {

enum class SneakyOutcome { InvalidAttack, DetectedByCritic, FooledCritic };

std::string_view to_string(SneakyOutcome o);
SneakyOutcome parse_outcome(std::string_view s);

struct Critique {
  std::string text;
  std::optional<StepVerdict> verdict;  // absent when no conclusion could be parsed
  bool critic_correct = false;
  std::optional<double> logprob;

  bool operator==(const Critique&) const = default;
};

void to_json(json& j, const Critique& c);
void from_json(const json& j, Critique& c);

struct RoundTag {
  std::string sneaky_version;
  std::string critic_version;

  bool operator==(const RoundTag&) const = default;
};

void to_json(json& j, const RoundTag& t);
void from_json(const json& j, RoundTag& t);

// A correct step harvested from a solver solution, ready to be attacked or
// critiqued.
struct GameInstance {
  std::string instance_id;
  Problem problem;
  Tier difficulty = Tier::Easy;
  std::vector<Step> prefix;
  Step step;
};

void to_json(json& j, const GameInstance& g);
void from_json(const json& j, GameInstance& g);

struct GameRecord {
  std::string instance_id;
  Problem problem;
  Tier difficulty = Tier::Easy;
  std::vector<Step> prefix;
  Step original_step;
  std::string sneaky_output;
  std::optional<SneakyTransformation> sneaky_transformation;
  std::optional<std::string> sneaky_failure;  // ParseFailure / IdenticalStep detail
  std::optional<ValidationResult> validation;
  std::vector<Critique> critiques;
  int r_sneaky = -1;
  std::vector<int> r_critic;
  std::optional<SneakyOutcome> outcome;  // absent for error records
  RoundTag round_tag;
  std::optional<std::string> error;

  bool operator==(const GameRecord&) const = default;
};

void to_json(json& j, const GameRecord& r);
void from_json(const json& j, GameRecord& r);

// Critiques of a genuine (correct) step, mixed into critic training data.
struct CritiqueRecord {
  std::string instance_id;
  Problem problem;
  Tier difficulty = Tier::Easy;
  std::vector<Step> prefix;
  Step step;
  StepVerdict truth = StepVerdict::Correct;
  std::vector<Critique> critiques;
  std::vector<int> r_critic;
  RoundTag round_tag;
  std::optional<std::string> error;

  bool operator==(const CritiqueRecord&) const = default;
};

void to_json(json& j, const CritiqueRecord& r);
void from_json(const json& j, CritiqueRecord& r);

struct CritiqueRequest {
  Problem problem;
  std::vector<Step> prefix;
  Step step;
};

// Throws ParseFailure, IdenticalStep or BackendError.
SneakyTransformation run_sneaky_turn(const Problem& problem, const std::vector<Step>& prefix,
                                     const Step& correct_step, Backend& sneaky,
                                     const RolePrompt& sneaky_prompt, const SamplingParams& params);

// Samples k critiques with seeds derived from params.seed. When truth is
// given, critic_correct is filled in (an absent verdict is never correct).
// Throws BackendError.
std::vector<Critique> run_critic_turn(const CritiqueRequest& request, Backend& critic,
                                      const RolePrompt& critic_prompt, int k,
                                      const SamplingParams& params,
                                      std::optional<StepVerdict> truth = std::nullopt);

struct Rewards {
  int r_sneaky = -1;
  std::vector<int> r_critic;

  bool operator==(const Rewards&) const = default;
};

// +1 per critique whose verdict equals truth, -1 otherwise.
std::vector<int> critic_rewards(const std::vector<std::optional<StepVerdict>>& verdicts,
                                StepVerdict truth);

// Invalid attack: (-1, []). Valid: per-critique rewards as above and
// r_sneaky = -r_critic[0]; the first critique is the one paired with the
// generator. InconsistentInputs for a valid attack without verdicts.
Rewards assign_rewards(const ValidationResult& validation,
                       const std::vector<std::optional<StepVerdict>>& verdicts, StepVerdict truth);

struct GameConfig {
  int k_critiques = 4;          // critiques per attacked step
  int k_genuine_critiques = 4;  // critiques per genuine step
  double sneaky_temperature = 1.0;
  double critic_temperature = 1.0;
  int max_tokens = 1024;
  ValidationConfig validation;

  void validate() const;
};

void to_json(json& j, const GameConfig& c);
void from_json(const json& j, GameConfig& c);

struct GameBackends {
  Backend* sneaky = nullptr;
  Backend* critic = nullptr;
  Backend* solver = nullptr;
};

// One record per instance, in input order. Failures are isolated per
// instance.
std::vector<GameRecord> play_round(const std::vector<GameInstance>& instances,
                                   const GameBackends& backends, const PromptSet& prompts,
                                   const GameConfig& cfg, const RoundTag& tag, std::uint64_t seed,
                                   const Executor& executor = Executor(1));

std::vector<CritiqueRecord> critique_genuine_steps(const std::vector<GameInstance>& instances,
                                                   Backend& critic, const PromptSet& prompts,
                                                   const GameConfig& cfg, const RoundTag& tag,
                                                   std::uint64_t seed,
                                                   const Executor& executor = Executor(1));

// The attacked step of a valid record, seen from the critic's side.
CritiqueRecord as_critique_record(const GameRecord& r);

struct RoundSummary {
  int total = 0;
  int errors = 0;
  int invalid_attack = 0;
  int detected = 0;
  int fooled = 0;
  int critiques = 0;
  int critiques_correct = 0;

  int valid() const { return detected + fooled; }
  double sneaky_win_rate() const;       // fooled / valid
  double attack_success_rate() const;   // valid / non-error records
  double critic_accuracy() const;       // correct critiques / critiques

  json to_json() const;
};

RoundSummary summarize(const std::vector<GameRecord>& records);

}  // namespace spc
