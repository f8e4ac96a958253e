#pragma once

// Shared domain types: problems, steps, trajectories, verdicts, roles and
// error types, plus the step splitter and answer canonicalizer used by every
// other module.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace spc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorCode {
  InvalidArgument,
  ParseFailure,
  IdenticalStep,
  InconsistentInputs,
  InconsistentPrefix,
  DifficultyOutOfRange,
  FixedPointPerturbation,
  UnknownAction,
  TemplateFieldMissing,
  BackendError,
  ScriptExhausted,
  NoCorrectSolutions,
  EmptyPool,
  MissingOldLogprob,
  NonFiniteGradient,
  DivergenceDetected,
  StepBudgetExhausted,
  PlanValidation,
  RegistryError,
  IoError,
};

std::string_view to_string(ErrorCode code);

class SpcError : public std::runtime_error {
 public:
  SpcError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// ---------------------------------------------------------------------------
// Enumerations with stable string codes
// ---------------------------------------------------------------------------

enum class StepVerdict { Correct, Incorrect };
enum class Role { Solver, Sneaky, Critic };

// The five predefined error categories a sneaky generator picks from before
// transforming a step.
enum class ErrorType {
  CalculationError,
  LogicalError,
  MisreadProblem,
  SignOrUnitError,
  UnjustifiedClaim,
};

inline constexpr std::size_t kErrorTypeCount = 5;

std::string_view to_string(StepVerdict v);
std::string_view to_string(Role r);
std::string_view to_string(ErrorType e);

StepVerdict parse_verdict(std::string_view s);
Role parse_role(std::string_view s);
ErrorType parse_error_type(std::string_view s);
std::optional<ErrorType> try_parse_error_type(std::string_view s);

const std::vector<ErrorType>& all_error_types();

StepVerdict opposite(StepVerdict v);

// ---------------------------------------------------------------------------
// Problems, steps, trajectories
// ---------------------------------------------------------------------------

struct Problem {
  std::string id;
  std::string statement;
  std::string gold_answer;  // canonical form
  std::string source_tag;

  bool operator==(const Problem&) const = default;
};

struct Step {
  std::size_t index = 0;
  std::string text;

  bool operator==(const Step&) const = default;
};

struct Trajectory {
  std::string problem_id;
  std::vector<Step> steps;
  bool complete = false;
  std::optional<std::string> final_answer;  // present iff complete

  bool operator==(const Trajectory&) const = default;
};

inline constexpr std::string_view kStepDelimiter = "\n\n";

// Splits on `delimiter`, trims each segment and drops empty ones. Indices are
// assigned contiguously from 0.
std::vector<Step> split_into_steps(std::string_view solution_text,
                                   std::string_view delimiter = kStepDelimiter);

std::string join_steps(const std::vector<Step>& steps,
                       std::string_view delimiter = kStepDelimiter);

// Re-indexes steps 0..n-1 in place.
void reindex(std::vector<Step>& steps);

std::vector<Step> make_steps(const std::vector<std::string>& texts);

// Canonical answer string: whitespace and `$` wrappers stripped, the last
// \boxed{...} unwrapped (repeatedly), numbers normalized ("7.0" -> "7").
// Empty when no answer can be extracted.
std::string canonicalize_answer(std::string_view raw);

// True when a step carries a final-answer marker: a \boxed{...} or a leading
// "The answer is".
bool is_terminal_step(std::string_view step_text);

// Builds a trajectory whose completion flag and final answer follow the last
// step's terminal marker.
Trajectory make_trajectory(std::string problem_id, std::vector<Step> steps);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// JSON mappings (lower_snake_case field names).
void to_json(json& j, const Problem& p);
void from_json(const json& j, Problem& p);
void to_json(json& j, const Step& s);
void from_json(const json& j, Step& s);
void to_json(json& j, const Trajectory& t);
void from_json(const json& j, Trajectory& t);

}  // namespace spc
