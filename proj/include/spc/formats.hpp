#pragma once

// Text contracts between roles: the sneaky generator's three-line answer and
// the critic's analysis + conclusion.

#include <optional>
#include <string>
#include <string_view>

#include "spc/core.hpp"

namespace spc {

struct SneakyTransformation {
  ErrorType error_type = ErrorType::CalculationError;
  std::string transformation;
  std::string sneaky_step;
  std::string raw_output;
  std::optional<double> logprob;  // log pi_old(raw_output | prompt) when known

  bool operator==(const SneakyTransformation&) const = default;
};

void to_json(json& j, const SneakyTransformation& s);
void from_json(const json& j, SneakyTransformation& s);

inline constexpr std::string_view kErrorTypeHeader = "Error type:";
inline constexpr std::string_view kTransformationHeader = "Transformation:";
inline constexpr std::string_view kSneakyStepHeader = "Sneaky step:";

// "Error type: X\nTransformation: ...\nSneaky step: ...". The sneaky step runs
// to the end of the output. Throws ParseFailure on a missing or unknown
// header, or an empty sneaky step.
SneakyTransformation parse_sneaky_output(std::string_view text);
std::string format_sneaky_output(ErrorType type, std::string_view transformation,
                                 std::string_view sneaky_step);

struct ParsedCritique {
  std::string analysis;
  std::optional<StepVerdict> verdict;
};

// The verdict comes from the last sentence mentioning correct/incorrect; the
// last such word in it decides, flipped by a preceding "not", "never" or "n't".
std::optional<StepVerdict> parse_verdict_sentence(std::string_view text);
ParsedCritique parse_critique(std::string_view text);
std::string format_critique(std::string_view analysis, StepVerdict verdict);

}  // namespace spc
