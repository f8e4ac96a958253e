#include "spc/toyworld.hpp"

#include <charconv>

#include "spc/rng.hpp"

namespace spc::toy {

char op_symbol(Op op) {
  switch (op) {
    case Op::Add: return '+';
    case Op::Sub: return '-';
    case Op::Mul: return '*';
  }
  return '+';
}

std::optional<Op> op_from_symbol(char c) {
  switch (c) {
    case '+': return Op::Add;
    case '-': return Op::Sub;
    case '*': return Op::Mul;
    default: return std::nullopt;
  }
}

long apply_op(Op op, long lhs, int operand) {
  switch (op) {
    case Op::Add: return lhs + operand;
    case Op::Sub: return lhs - operand;
    case Op::Mul: return lhs * operand;
  }
  return lhs;
}

std::string_view to_string(PerturbationAction a) {
  switch (a) {
    case PerturbationAction::OffByOne: return "OffByOne";
    case PerturbationAction::SignFlip: return "SignFlip";
    case PerturbationAction::WrongOperand: return "WrongOperand";
    case PerturbationAction::SwapOperator: return "SwapOperator";
    case PerturbationAction::CopyPreviousResult: return "CopyPreviousResult";
  }
  return "OffByOne";
}

PerturbationAction parse_perturbation(std::string_view s) {
  for (auto a : kAllPerturbations)
    if (to_string(a) == s) return a;
  throw SpcError(ErrorCode::UnknownAction, "unknown perturbation: " + std::string(s));
}

ErrorType error_type_of(PerturbationAction a) {
  switch (a) {
    case PerturbationAction::OffByOne: return ErrorType::CalculationError;
    case PerturbationAction::SignFlip: return ErrorType::SignOrUnitError;
    case PerturbationAction::WrongOperand: return ErrorType::MisreadProblem;
    case PerturbationAction::SwapOperator: return ErrorType::LogicalError;
    case PerturbationAction::CopyPreviousResult: return ErrorType::UnjustifiedClaim;
  }
  return ErrorType::CalculationError;
}

PerturbationAction perturbation_for(ErrorType e) {
  for (auto a : kAllPerturbations)
    if (error_type_of(a) == e) return a;
  throw SpcError(ErrorCode::UnknownAction, "no perturbation for error type");
}

long evaluate(long start_value, const std::vector<OpItem>& ops) {
  long v = start_value;
  for (const auto& o : ops) v = apply_op(o.op, v, o.operand);
  return v;
}

ToyProblem make_problem(long start_value, std::vector<OpItem> ops) {
  if (static_cast<int>(ops.size()) < kMinOps || static_cast<int>(ops.size()) > kMaxOps)
    throw SpcError(ErrorCode::DifficultyOutOfRange,
                   "difficulty must be in [2, 8], got " + std::to_string(ops.size()));
  for (const auto& o : ops)
    if (o.operand < kMinOperand || o.operand > kMaxOperand)
      throw SpcError(ErrorCode::InvalidArgument, "operand out of range");
  ToyProblem p;
  p.start_value = start_value;
  p.ops = std::move(ops);
  p.gold_answer = evaluate(p.start_value, p.ops);
  return p;
}

ToyProblem sample_problem(std::uint64_t seed, int difficulty) {
  if (difficulty < kMinOps || difficulty > kMaxOps)
    throw SpcError(ErrorCode::DifficultyOutOfRange,
                   "difficulty must be in [2, 8], got " + std::to_string(difficulty));
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(difficulty)));
  long start = 1 + static_cast<long>(rng.uniform_index(9));
  std::vector<OpItem> ops;
  for (int i = 0; i < difficulty; ++i) {
    auto op = static_cast<Op>(rng.uniform_index(3));
    int operand = kMinOperand + static_cast<int>(rng.uniform_index(kMaxOperand - kMinOperand + 1));
    ops.push_back({op, operand});
  }
  return make_problem(start, std::move(ops));
}

std::string statement(const ToyProblem& p) {
  std::string s = "Start with " + std::to_string(p.start_value) + ".";
  for (const auto& o : p.ops) {
    switch (o.op) {
      case Op::Add: s += " Add " + std::to_string(o.operand) + "."; break;
      case Op::Sub: s += " Subtract " + std::to_string(o.operand) + "."; break;
      case Op::Mul: s += " Multiply by " + std::to_string(o.operand) + "."; break;
    }
  }
  s += " What is the result?";
  return s;
}

namespace {

// Reads an optionally negative integer at `pos`, advancing it.
template <typename T>
bool read_int(std::string_view text, std::size_t& pos, T& out) {
  auto first = text.data() + pos;
  auto last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr == first) return false;
  pos += static_cast<std::size_t>(ptr - first);
  return true;
}

bool eat(std::string_view text, std::size_t& pos, std::string_view lit) {
  if (text.substr(pos, lit.size()) != lit) return false;
  pos += lit.size();
  return true;
}

}  // namespace

std::optional<ToyProblem> parse_statement(std::string_view text) {
  std::size_t pos = 0;
  long start = 0;
  if (!eat(text, pos, "Start with ") || !read_int(text, pos, start) || !eat(text, pos, "."))
    return std::nullopt;
  std::vector<OpItem> ops;
  while (pos < text.size()) {
    if (eat(text, pos, " What is the result?")) break;
    Op op;
    if (eat(text, pos, " Add ")) {
      op = Op::Add;
    } else if (eat(text, pos, " Subtract ")) {
      op = Op::Sub;
    } else if (eat(text, pos, " Multiply by ")) {
      op = Op::Mul;
    } else {
      return std::nullopt;
    }
    int operand = 0;
    if (!read_int(text, pos, operand) || !eat(text, pos, ".")) return std::nullopt;
    ops.push_back({op, operand});
  }
  if (pos != text.size()) return std::nullopt;
  try {
    return make_problem(start, std::move(ops));
  } catch (const SpcError&) {
    return std::nullopt;
  }
}

Problem to_problem(const ToyProblem& p, std::string id) {
  return Problem{std::move(id), statement(p), std::to_string(p.gold_answer), "toyworld"};
}

ToyStep correct_step(const ToyProblem& p, std::size_t k, long lhs) {
  const auto& o = p.ops.at(k);
  return ToyStep{lhs, o.op, o.operand, apply_op(o.op, lhs, o.operand)};
}

std::vector<ToyStep> correct_solution(const ToyProblem& p) {
  std::vector<ToyStep> out;
  long v = p.start_value;
  for (std::size_t k = 0; k < p.ops.size(); ++k) {
    out.push_back(correct_step(p, k, v));
    v = out.back().rhs_claimed;
  }
  return out;
}

std::string format_step(const ToyStep& s, bool terminal) {
  std::string out = std::to_string(s.lhs) + " " + op_symbol(s.op) + " " +
                    std::to_string(s.operand) + " = " + std::to_string(s.rhs_claimed);
  if (terminal) out += ", so the answer is \\boxed{" + std::to_string(s.rhs_claimed) + "}";
  return out;
}

std::optional<ToyStep> parse_step(std::string_view text) {
  std::size_t pos = 0;
  ToyStep s;
  if (!read_int(text, pos, s.lhs) || !eat(text, pos, " ") || pos >= text.size())
    return std::nullopt;
  auto op = op_from_symbol(text[pos]);
  if (!op) return std::nullopt;
  s.op = *op;
  ++pos;
  if (!eat(text, pos, " ") || !read_int(text, pos, s.operand) || !eat(text, pos, " = ") ||
      !read_int(text, pos, s.rhs_claimed))
    return std::nullopt;
  if (pos == text.size()) return s;
  std::size_t tail = pos;
  long boxed = 0;
  if (eat(text, tail, ", so the answer is \\boxed{") && read_int(text, tail, boxed) &&
      eat(text, tail, "}") && tail == text.size() && boxed == s.rhs_claimed)
    return s;
  return std::nullopt;
}

StepVerdict oracle_check(const ToyStep& step, const std::vector<ToyStep>& prefix,
                         const ToyProblem& problem) {
  if (prefix.size() >= problem.ops.size())
    throw SpcError(ErrorCode::InconsistentPrefix, "prefix covers every operation already");
  long expected = problem.start_value;
  for (const auto& s : prefix) {
    if (s.lhs != expected)
      throw SpcError(ErrorCode::InconsistentPrefix, "prefix steps do not chain");
    expected = s.rhs_claimed;
  }
  const auto& o = problem.ops[prefix.size()];
  bool ok = step.lhs == expected && step.op == o.op && step.operand == o.operand &&
            step.rhs_claimed == apply_op(step.op, step.lhs, step.operand);
  return ok ? StepVerdict::Correct : StepVerdict::Incorrect;
}

ToyStep apply_perturbation(const ToyStep& step, PerturbationAction action) {
  ToyStep out = step;
  switch (action) {
    case PerturbationAction::OffByOne:
      out.rhs_claimed = step.rhs_claimed + 1;
      break;
    case PerturbationAction::SignFlip:
      if (step.op == Op::Mul) {
        out.rhs_claimed = -step.rhs_claimed;
      } else {
        out.op = step.op == Op::Add ? Op::Sub : Op::Add;
        out.rhs_claimed = apply_op(out.op, out.lhs, out.operand);
      }
      break;
    case PerturbationAction::WrongOperand:
      out.operand = step.operand % kMaxOperand + 1;
      out.rhs_claimed = apply_op(out.op, out.lhs, out.operand);
      break;
    case PerturbationAction::SwapOperator:
      out.op = step.op == Op::Mul ? Op::Add : Op::Mul;
      out.rhs_claimed = apply_op(out.op, out.lhs, out.operand);
      break;
    case PerturbationAction::CopyPreviousResult:
      out.rhs_claimed = step.lhs;
      break;
  }
  if (out == step)
    throw SpcError(ErrorCode::FixedPointPerturbation,
                   std::string(to_string(action)) + " leaves the step unchanged");
  return out;
}

std::optional<std::vector<ToyStep>> parse_steps(const std::vector<Step>& steps) {
  std::vector<ToyStep> out;
  for (const auto& s : steps) {
    auto t = parse_step(s.text);
    if (!t) return std::nullopt;
    out.push_back(*t);
  }
  return out;
}

std::vector<Step> render_steps(const ToyProblem& p, const std::vector<ToyStep>& steps,
                               std::size_t first_index) {
  std::vector<Step> out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto k = first_index + i;
    out.push_back({k, format_step(steps[i], k + 1 == p.ops.size())});
  }
  return out;
}

std::string_view to_string(MistakeClass m) {
  switch (m) {
    case MistakeClass::None: return "none";
    case MistakeClass::ArithmeticSlip: return "arithmetic_slip";
    case MistakeClass::SignSlip: return "sign_slip";
    case MistakeClass::WrongOperand: return "wrong_operand";
    case MistakeClass::WrongOperator: return "wrong_operator";
    case MistakeClass::CopiedValue: return "copied_value";
    case MistakeClass::BrokenChain: return "broken_chain";
  }
  return "none";
}

MistakeClass classify_mistake(const ToyProblem& p, std::size_t k, const ToyStep& step,
                              long expected_lhs) {
  if (step.lhs != expected_lhs) return MistakeClass::BrokenChain;
  auto good = correct_step(p, k, expected_lhs);
  if (step.op != good.op) return MistakeClass::WrongOperator;
  if (step.operand != good.operand) return MistakeClass::WrongOperand;
  if (step.rhs_claimed == good.rhs_claimed) return MistakeClass::None;
  if (step.rhs_claimed == step.lhs) return MistakeClass::CopiedValue;
  if (step.rhs_claimed == -good.rhs_claimed) return MistakeClass::SignSlip;
  return MistakeClass::ArithmeticSlip;
}

}  // namespace spc::toy
