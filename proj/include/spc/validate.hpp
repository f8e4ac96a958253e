#pragma once

// Rollout-based validation of sneaky steps and problem difficulty tiering.

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spc/backend.hpp"
#include "spc/executor.hpp"

namespace spc {

struct ValidationConfig {
  int n_completions = 8;
  double original_min_success = 0.75;
  double sneaky_max_success = 0.0;
  int pregen_solutions = 4;
  std::set<int> medium_band = {1, 2};
  std::set<int> easy_band = {3, 4};
  double medium_fraction = 0.9;
  int medium_resample = 16;
  double temperature = 1.0;
  int max_tokens = 1024;

  void validate() const;  // InvalidArgument
};

void to_json(json& j, const ValidationConfig& c);
void from_json(const json& j, ValidationConfig& c);

struct RolloutAudit {
  std::string answer;  // canonical final answer, empty if none
  bool success = false;
  bool error = false;
  std::string error_detail;

  bool operator==(const RolloutAudit&) const = default;
};

struct ValidationResult {
  int original_successes = 0;
  int sneaky_successes = 0;
  int n = 0;
  int original_clean = 0;  // rollouts that finished without a backend error
  int sneaky_clean = 0;
  bool valid = false;
  std::vector<RolloutAudit> original_rollouts;
  std::vector<RolloutAudit> sneaky_rollouts;

  bool operator==(const ValidationResult&) const = default;
};

void to_json(json& j, const ValidationResult& r);
void from_json(const json& j, ValidationResult& r);

// The threshold rule on its own: original rate >= original_min_success and
// sneaky rate <= sneaky_max_success.
bool passes_thresholds(int original_successes, int sneaky_successes, int n,
                       const ValidationConfig& cfg);

// Runs n completions from prefix + original_step and n from prefix +
// sneaky_step. Rollouts that fail with a backend error are recorded in the
// audit trail and excluded from the counts; fewer than n clean rollouts on
// either side makes the result non-valid.
ValidationResult validate_sneaky(const Problem& problem, const std::vector<Step>& prefix,
                                 const Step& original_step, const Step& sneaky_step,
                                 Backend& solver, const RolePrompt& solver_prompt,
                                 const ValidationConfig& cfg, std::uint64_t seed,
                                 const Executor& executor = Executor(1));

enum class Tier { Unsolvable, Medium, Easy };

std::string_view to_string(Tier t);
Tier parse_tier(std::string_view s);

Tier tier_from_successes(int successes, const ValidationConfig& cfg);

struct TierResult {
  Tier tier = Tier::Unsolvable;
  int successes = 0;
  std::vector<Trajectory> solutions;
};

// Generates pregen_solutions complete solutions and tiers by success count.
// Throws BackendError when a generation fails.
TierResult tier_problem(const Problem& problem, Backend& solver, const RolePrompt& solver_prompt,
                        const ValidationConfig& cfg, std::uint64_t seed,
                        const Executor& executor = Executor(1));

struct HarvestedStep {
  std::vector<Step> prefix;
  Step step;
  Tier tier = Tier::Easy;
  std::size_t solution_index = 0;
};

// Optional domain check applied to each sampled step (toyworld uses the
// exact oracle).
using StepVerifier =
    std::function<bool(const Problem&, const std::vector<Step>& prefix, const Step& step)>;

// Medium problems get medium_resample fresh solutions, easy ones reuse the
// pregenerated set. One step is sampled uniformly from each correct
// solution. NoCorrectSolutions when nothing survives.
std::vector<HarvestedStep> harvest_correct_steps(const Problem& problem, const TierResult& tiered,
                                                 Backend& solver, const RolePrompt& solver_prompt,
                                                 const ValidationConfig& cfg, std::uint64_t seed,
                                                 const StepVerifier& verifier = {},
                                                 const Executor& executor = Executor(1));

}  // namespace spc
