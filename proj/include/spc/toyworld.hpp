#pragma once

// Synthetic multi-step arithmetic domain with exact ground truth.
//
// A problem is a start value followed by 2..8 operations; a solution has one
// step per operation, written "lhs op operand = rhs". The final step carries
// ", so the answer is \boxed{rhs}".

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spc/core.hpp"

namespace spc::toy {

enum class Op { Add, Sub, Mul };

struct OpItem {
  Op op = Op::Add;
  int operand = 1;

  bool operator==(const OpItem&) const = default;
};

inline constexpr int kMinOps = 2;
inline constexpr int kMaxOps = 8;
inline constexpr int kMinOperand = 1;
inline constexpr int kMaxOperand = 9;

struct ToyProblem {
  long start_value = 0;
  std::vector<OpItem> ops;
  long gold_answer = 0;

  bool operator==(const ToyProblem&) const = default;
};

struct ToyStep {
  long lhs = 0;
  Op op = Op::Add;
  int operand = 1;
  long rhs_claimed = 0;

  bool operator==(const ToyStep&) const = default;
};

enum class PerturbationAction { OffByOne, SignFlip, WrongOperand, SwapOperator, CopyPreviousResult };

inline constexpr std::array<PerturbationAction, 5> kAllPerturbations = {
    PerturbationAction::OffByOne, PerturbationAction::SignFlip, PerturbationAction::WrongOperand,
    PerturbationAction::SwapOperator, PerturbationAction::CopyPreviousResult};

char op_symbol(Op op);
std::optional<Op> op_from_symbol(char c);
long apply_op(Op op, long lhs, int operand);

std::string_view to_string(PerturbationAction a);
PerturbationAction parse_perturbation(std::string_view s);  // UnknownAction
// The error category a perturbation realizes.
ErrorType error_type_of(PerturbationAction a);
PerturbationAction perturbation_for(ErrorType e);

// Folds ops over start_value.
long evaluate(long start_value, const std::vector<OpItem>& ops);

// Deterministic in (seed, difficulty). difficulty = number of ops.
ToyProblem sample_problem(std::uint64_t seed, int difficulty);
ToyProblem make_problem(long start_value, std::vector<OpItem> ops);

std::string statement(const ToyProblem& p);
std::optional<ToyProblem> parse_statement(std::string_view text);
Problem to_problem(const ToyProblem& p, std::string id);

// The correct step for operation k given the value it starts from.
ToyStep correct_step(const ToyProblem& p, std::size_t k, long lhs);
std::vector<ToyStep> correct_solution(const ToyProblem& p);

std::string format_step(const ToyStep& s, bool terminal);
std::optional<ToyStep> parse_step(std::string_view text);

// Correct iff lhs links to the previous claimed result (or start value), the
// operation is the problem's operation at this position, and rhs is exact.
// InconsistentPrefix when the prefix itself does not chain or is too long.
StepVerdict oracle_check(const ToyStep& step, const std::vector<ToyStep>& prefix,
                         const ToyProblem& problem);

// FixedPointPerturbation when the action would reproduce the input.
ToyStep apply_perturbation(const ToyStep& step, PerturbationAction action);

// Parses every step; nullopt if any step is not in toy format.
std::optional<std::vector<ToyStep>> parse_steps(const std::vector<Step>& steps);

// Text trajectory for a list of toy steps (last op index gets the terminal
// marker).
std::vector<Step> render_steps(const ToyProblem& p, const std::vector<ToyStep>& steps,
                               std::size_t first_index = 0);

// Classes of mistake a solver may notice when it re-reads the last step.
enum class MistakeClass { None, ArithmeticSlip, SignSlip, WrongOperand, WrongOperator, CopiedValue, BrokenChain };

std::string_view to_string(MistakeClass m);

// Classifies `step` at position k against the correct step from the same lhs.
MistakeClass classify_mistake(const ToyProblem& p, std::size_t k, const ToyStep& step, long expected_lhs);

}  // namespace spc::toy
