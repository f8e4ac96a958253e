#include "spc/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>

namespace spc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::IdenticalStep: return "IdenticalStep";
    case ErrorCode::InconsistentInputs: return "InconsistentInputs";
    case ErrorCode::InconsistentPrefix: return "InconsistentPrefix";
    case ErrorCode::DifficultyOutOfRange: return "DifficultyOutOfRange";
    case ErrorCode::FixedPointPerturbation: return "FixedPointPerturbation";
    case ErrorCode::UnknownAction: return "UnknownAction";
    case ErrorCode::TemplateFieldMissing: return "TemplateFieldMissing";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::ScriptExhausted: return "ScriptExhausted";
    case ErrorCode::NoCorrectSolutions: return "NoCorrectSolutions";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::MissingOldLogprob: return "MissingOldLogprob";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::StepBudgetExhausted: return "StepBudgetExhausted";
    case ErrorCode::PlanValidation: return "PlanValidation";
    case ErrorCode::RegistryError: return "RegistryError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(StepVerdict v) {
  return v == StepVerdict::Correct ? "correct" : "incorrect";
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Solver: return "solver";
    case Role::Sneaky: return "sneaky";
    case Role::Critic: return "critic";
  }
  return "unknown";
}

std::string_view to_string(ErrorType e) {
  switch (e) {
    case ErrorType::CalculationError: return "CalculationError";
    case ErrorType::LogicalError: return "LogicalError";
    case ErrorType::MisreadProblem: return "MisreadProblem";
    case ErrorType::SignOrUnitError: return "SignOrUnitError";
    case ErrorType::UnjustifiedClaim: return "UnjustifiedClaim";
  }
  return "Unknown";
}

StepVerdict parse_verdict(std::string_view s) {
  if (s == "correct") return StepVerdict::Correct;
  if (s == "incorrect") return StepVerdict::Incorrect;
  throw SpcError(ErrorCode::ParseFailure, "unknown verdict: " + std::string(s));
}

Role parse_role(std::string_view s) {
  if (s == "solver") return Role::Solver;
  if (s == "sneaky") return Role::Sneaky;
  if (s == "critic") return Role::Critic;
  throw SpcError(ErrorCode::ParseFailure, "unknown role: " + std::string(s));
}

const std::vector<ErrorType>& all_error_types() {
  static const std::vector<ErrorType> kAll = {
      ErrorType::CalculationError, ErrorType::LogicalError,
      ErrorType::MisreadProblem, ErrorType::SignOrUnitError,
      ErrorType::UnjustifiedClaim};
  return kAll;
}

std::optional<ErrorType> try_parse_error_type(std::string_view s) {
  for (auto e : all_error_types())
    if (to_string(e) == s) return e;
  return std::nullopt;
}

ErrorType parse_error_type(std::string_view s) {
  if (auto e = try_parse_error_type(s)) return *e;
  throw SpcError(ErrorCode::ParseFailure, "unknown error type: " + std::string(s));
}

StepVerdict opposite(StepVerdict v) {
  return v == StepVerdict::Correct ? StepVerdict::Incorrect : StepVerdict::Correct;
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<Step> split_into_steps(std::string_view text, std::string_view delimiter) {
  if (delimiter.empty())
    throw SpcError(ErrorCode::InvalidArgument, "step delimiter must be non-empty");
  std::vector<Step> steps;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto next = text.find(delimiter, pos);
    auto segment = text.substr(pos, next == std::string_view::npos ? std::string_view::npos
                                                                    : next - pos);
    auto cleaned = trim(segment);
    if (!cleaned.empty()) steps.push_back(Step{steps.size(), std::move(cleaned)});
    if (next == std::string_view::npos) break;
    pos = next + delimiter.size();
  }
  return steps;
}

std::string join_steps(const std::vector<Step>& steps, std::string_view delimiter) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out.append(delimiter);
    out.append(steps[i].text);
  }
  return out;
}

void reindex(std::vector<Step>& steps) {
  for (std::size_t i = 0; i < steps.size(); ++i) steps[i].index = i;
}

std::vector<Step> make_steps(const std::vector<std::string>& texts) {
  std::vector<Step> steps;
  steps.reserve(texts.size());
  for (const auto& t : texts) steps.push_back(Step{steps.size(), t});
  return steps;
}

namespace {

// Content of the last \boxed{...}, brace-matched; nullopt if none or unbalanced.
std::optional<std::string> last_boxed(std::string_view s) {
  static constexpr std::string_view kMarker = "\\boxed{";
  auto at = s.rfind(kMarker);
  if (at == std::string_view::npos) return std::nullopt;
  std::size_t i = at + kMarker.size();
  int depth = 1;
  std::size_t start = i;
  for (; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    else if (s[i] == '}' && --depth == 0) return std::string(s.substr(start, i - start));
  }
  return std::nullopt;
}

std::string strip_wrappers(std::string s) {
  bool changed = true;
  while (changed) {
    changed = false;
    auto t = trim(s);
    if (t != s) { s = t; changed = true; }
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
      s = s.substr(1, s.size() - 2);
      changed = true;
      continue;
    }
    if (!s.empty() && s.back() == '.') {
      s.pop_back();
      changed = true;
    }
  }
  return s;
}

std::optional<std::string> normalize_number(const std::string& s) {
  static const std::regex kPlain(R"(^([+-]?)(\d*)(?:\.(\d*))?$)");
  static const std::regex kThousands(R"(^([+-]?)(\d{1,3}(?:,\d{3})+)(?:\.(\d*))?$)");
  std::smatch m;
  std::string sign, integer, frac;
  if (std::regex_match(s, m, kPlain)) {
    sign = m[1]; integer = m[2]; frac = m[3];
  } else if (std::regex_match(s, m, kThousands)) {
    sign = m[1]; integer = m[2]; frac = m[3];
    integer.erase(std::remove(integer.begin(), integer.end(), ','), integer.end());
  } else {
    return std::nullopt;
  }
  if (integer.empty() && frac.empty()) return std::nullopt;
  auto nz = integer.find_first_not_of('0');
  integer = nz == std::string::npos ? "0" : integer.substr(nz);
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  std::string out = integer;
  if (!frac.empty()) out += "." + frac;
  if (sign == "-" && out != "0") out = "-" + out;
  return out;
}

}  // namespace

std::string canonicalize_answer(std::string_view raw) {
  std::string candidate;
  bool explicit_marker = false;
  std::string text(raw);
  // Nested or repeated boxes unwrap until none remain, keeping the function
  // idempotent.
  while (auto boxed = last_boxed(text)) {
    text = *boxed;
    explicit_marker = true;
  }
  if (explicit_marker) {
    candidate = text;
  } else {
    auto lower = to_lower(text);
    auto at = lower.rfind("answer is");
    if (at != std::string::npos) {
      candidate = text.substr(at + std::string_view("answer is").size());
      explicit_marker = true;
    } else {
      candidate = text;
    }
  }
  candidate = strip_wrappers(candidate);
  if (candidate.empty()) return {};
  bool has_space = std::any_of(candidate.begin(), candidate.end(),
                               [](unsigned char c) { return std::isspace(c) != 0; });
  if (!explicit_marker && has_space) {
    // Free text without an answer marker is not an answer.
    if (auto n = normalize_number(trim(candidate))) return *n;
    return {};
  }
  std::string compact;
  for (char c : candidate)
    if (!std::isspace(static_cast<unsigned char>(c))) compact.push_back(c);
  compact = strip_wrappers(compact);
  if (auto n = normalize_number(compact)) return *n;
  return compact;
}

bool is_terminal_step(std::string_view step_text) {
  if (step_text.find("\\boxed{") != std::string_view::npos) return true;
  auto lower = to_lower(trim(step_text));
  return lower.rfind("the answer is", 0) == 0;
}

Trajectory make_trajectory(std::string problem_id, std::vector<Step> steps) {
  Trajectory t;
  t.problem_id = std::move(problem_id);
  reindex(steps);
  t.steps = std::move(steps);
  if (!t.steps.empty() && is_terminal_step(t.steps.back().text)) {
    t.complete = true;
    t.final_answer = canonicalize_answer(t.steps.back().text);
  }
  return t;
}

void to_json(json& j, const Problem& p) {
  j = json{{"id", p.id},
           {"statement", p.statement},
           {"gold_answer", p.gold_answer},
           {"source_tag", p.source_tag}};
}

void from_json(const json& j, Problem& p) {
  j.at("id").get_to(p.id);
  j.at("statement").get_to(p.statement);
  p.gold_answer = j.value("gold_answer", std::string{});
  p.source_tag = j.value("source_tag", std::string{});
}

void to_json(json& j, const Step& s) { j = json{{"index", s.index}, {"text", s.text}}; }

void from_json(const json& j, Step& s) {
  j.at("index").get_to(s.index);
  j.at("text").get_to(s.text);
}

void to_json(json& j, const Trajectory& t) {
  j = json{{"problem_id", t.problem_id}, {"steps", t.steps}, {"complete", t.complete}};
  j["final_answer"] = t.final_answer ? json(*t.final_answer) : json(nullptr);
}

void from_json(const json& j, Trajectory& t) {
  j.at("problem_id").get_to(t.problem_id);
  j.at("steps").get_to(t.steps);
  t.complete = j.value("complete", false);
  if (j.contains("final_answer") && !j["final_answer"].is_null())
    t.final_answer = j["final_answer"].get<std::string>();
  else
    t.final_answer.reset();
}

}  // namespace spc
