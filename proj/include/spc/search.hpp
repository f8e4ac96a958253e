#pragma once

// Critic-guided stepwise decoding with a retry budget, plus self-consistency
// voting over independent searches.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spc/backend.hpp"
#include "spc/executor.hpp"

namespace spc {

enum class TieBreak { FirstSeen };

struct SearchConfig {
  int max_retries_per_step = 5;  // attempts per step, first try included
  int max_steps = 64;
  int self_consistency_samples = 5;
  TieBreak vote_tie_break = TieBreak::FirstSeen;
  double temperature_solver = 1.0;
  std::optional<double> temperature_retry;  // defaults to temperature_solver
  double temperature_critic = 1.0;
  int max_tokens = 512;

  void validate() const;
};

void to_json(json& j, const SearchConfig& c);
void from_json(const json& j, SearchConfig& c);

enum class AcceptedVia { CriticApproved, RetriesExhausted };

std::string_view to_string(AcceptedVia a);

struct SearchAttempt {
  Step step;
  std::optional<StepVerdict> verdict;
  std::string critique;

  bool operator==(const SearchAttempt&) const = default;
};

struct SearchStepTrace {
  std::vector<SearchAttempt> attempts;
  Step accepted_step;
  std::optional<AcceptedVia> accepted_via;  // absent for unguided steps

  bool operator==(const SearchStepTrace&) const = default;
};

struct SearchTrace {
  std::string problem_id;
  std::vector<SearchStepTrace> steps;
  std::string final_answer;  // canonical; empty when none was reached
  bool budget_exhausted = false;
  std::optional<std::string> error;
  int solver_calls = 0;
  int critic_calls = 0;
  int prompt_tokens = 0;
  int completion_tokens = 0;

  bool operator==(const SearchTrace&) const = default;
};

void to_json(json& j, const SearchTrace& t);

struct SearchOutcome {
  std::string answer;
  SearchTrace trace;
};

// generate one step -> critic verdict -> accept on Correct, otherwise
// regenerate; after max_retries_per_step rejections the last attempt is kept.
// Stops at a terminal step or after max_steps (budget_exhausted, empty
// answer). Backend failures throw BackendError.
SearchOutcome guided_solve(const Problem& problem, Backend& solver, Backend& critic,
                           const PromptSet& prompts, const SearchConfig& cfg, std::uint64_t seed);

// Same decoding without a critic. Uses the seeds guided_solve uses for first
// attempts, so an always-approving critic reproduces it exactly.
SearchOutcome unguided_solve(const Problem& problem, Backend& solver, const PromptSet& prompts,
                             const SearchConfig& cfg, std::uint64_t seed);

// Mode of the answers (empty answers vote too); ties go to the answer seen
// first.
std::string majority_vote(const std::vector<std::string>& answers, TieBreak tie_break = TieBreak::FirstSeen);

struct SelfConsistencyOutcome {
  std::string answer;
  std::vector<std::string> answers;
  std::vector<SearchTrace> traces;
};

// self_consistency_samples independent guided searches with seeds derived
// from `seed` (or all equal to `seed` when identical_seeds is set). Failed
// runs vote with an empty answer.
SelfConsistencyOutcome self_consistent_solve(const Problem& problem, Backend& solver,
                                             Backend& critic, const PromptSet& prompts,
                                             const SearchConfig& cfg, std::uint64_t seed,
                                             const Executor& executor = Executor(1),
                                             bool identical_seeds = false);

}  // namespace spc
