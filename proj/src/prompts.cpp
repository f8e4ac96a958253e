#include "spc/prompts.hpp"

#include "spc/jsonl.hpp"

#include <algorithm>
#include <array>

namespace spc {

namespace {

constexpr std::array<std::string_view, 3> kPlaceholders = {"problem", "prefix", "step"};

constexpr std::string_view kSolverSystem =
    "You are a careful math solver. Solve the problem step by step.\n"
    "Write exactly one reasoning step per paragraph and separate steps with one blank line.\n"
    "When you reach the result, finish with a step that states "
    "\"The answer is \\boxed{<answer>}\".";

constexpr std::string_view kSolverUser =
    "Problem:\n{problem}\n\n"
    "Solution so far:\n{prefix}\n\n"
    "Continue the solution from here.";

constexpr std::string_view kSneakySystem =
    "You rewrite a correct reasoning step into a subtly incorrect one.\n"
    "First choose one error type from this list:\n"
    "- CalculationError: an arithmetic slip in an otherwise valid computation.\n"
    "- LogicalError: an invalid inference or a wrong operation.\n"
    "- MisreadProblem: a quantity or condition taken incorrectly from the problem.\n"
    "- SignOrUnitError: a flipped sign, direction or unit.\n"
    "- UnjustifiedClaim: a result asserted without the work that would support it.\n"
    "Then describe the transformation and give the rewritten step. The rewritten step must\n"
    "look plausible and must change the outcome of the solution.\n"
    "Answer in exactly this format:\n"
    "Error type: <one of the names above>\n"
    "Transformation: <how the step is changed>\n"
    "Sneaky step: <the rewritten step>";

constexpr std::string_view kSneakyUser =
    "Problem:\n{problem}\n\n"
    "Previous steps:\n{prefix}\n\n"
    "Correct step to transform:\n{step}";

constexpr std::string_view kCriticSystem =
    "You verify a single reasoning step. Given the problem, the previous steps and the\n"
    "latest step, briefly analyze the previous steps and the latest step, then state a\n"
    "definite conclusion. End with exactly one line:\n"
    "Conclusion: the step is correct.\n"
    "or\n"
    "Conclusion: the step is incorrect.";

constexpr std::string_view kCriticUser =
    "Problem:\n{problem}\n\n"
    "Previous steps:\n{prefix}\n\n"
    "Step to verify:\n{step}";

}  // namespace

bool PromptTemplate::is_placeholder_name(std::string_view name) {
  for (auto p : kPlaceholders)
    if (p == name) return true;
  return false;
}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  std::string literal;
  std::size_t i = 0;
  while (i < text_.size()) {
    if (text_[i] == '{') {
      auto close = text_.find('}', i + 1);
      if (close != std::string::npos) {
        auto name = std::string_view(text_).substr(i + 1, close - i - 1);
        if (is_placeholder_name(name)) {
          if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
          literal.clear();
          pieces_.push_back({true, std::string(name)});
          if (std::find(fields_.begin(), fields_.end(), name) == fields_.end())
            fields_.emplace_back(name);
          i = close + 1;
          continue;
        }
      }
    }
    literal.push_back(text_[i]);
    ++i;
  }
  if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
}

std::string PromptTemplate::render(const TemplateFields& values) const {
  std::string out;
  for (const auto& piece : pieces_) {
    if (!piece.is_field) {
      out += piece.value;
      continue;
    }
    auto it = values.find(piece.value);
    if (it == values.end())
      throw SpcError(ErrorCode::TemplateFieldMissing,
                     "template field missing: {" + piece.value + "}");
    out += it->second;
  }
  return out;
}

std::optional<TemplateFields> PromptTemplate::extract(std::string_view rendered) const {
  TemplateFields out;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < pieces_.size(); ++p) {
    const auto& piece = pieces_[p];
    if (!piece.is_field) {
      if (rendered.substr(pos, piece.value.size()) != piece.value) return std::nullopt;
      pos += piece.value.size();
      continue;
    }
    std::size_t end;
    if (p + 1 == pieces_.size()) {
      end = rendered.size();
    } else {
      // Adjacent placeholders are ambiguous; the template author must separate them.
      if (pieces_[p + 1].is_field) return std::nullopt;
      end = rendered.find(pieces_[p + 1].value, pos);
      if (end == std::string_view::npos) return std::nullopt;
    }
    std::string value(rendered.substr(pos, end - pos));
    auto [it, inserted] = out.emplace(piece.value, value);
    if (!inserted && it->second != value) return std::nullopt;
    pos = end;
  }
  if (pos != rendered.size()) return std::nullopt;
  return out;
}

const RolePrompt& PromptSet::for_role(Role role) const {
  switch (role) {
    case Role::Solver: return solver;
    case Role::Sneaky: return sneaky;
    case Role::Critic: return critic;
  }
  return solver;
}

PromptSet PromptSet::defaults() {
  PromptSet s;
  s.solver = {std::string(kSolverSystem), PromptTemplate(std::string(kSolverUser))};
  s.sneaky = {std::string(kSneakySystem), PromptTemplate(std::string(kSneakyUser))};
  s.critic = {std::string(kCriticSystem), PromptTemplate(std::string(kCriticUser))};
  return s;
}

std::vector<std::string> PromptSet::required_files() {
  std::vector<std::string> files;
  for (auto role : {Role::Solver, Role::Sneaky, Role::Critic}) {
    files.push_back(std::string(to_string(role)) + ".system.txt");
    files.push_back(std::string(to_string(role)) + ".user.txt");
  }
  return files;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  auto read = [&](Role role, std::string_view kind) {
    auto path = dir / (std::string(to_string(role)) + "." + std::string(kind) + ".txt");
    if (!std::filesystem::exists(path))
      throw SpcError(ErrorCode::IoError, "template file not found: " + path.string());
    return read_text_file(path);
  };
  PromptSet s;
  s.solver = {read(Role::Solver, "system"), PromptTemplate(read(Role::Solver, "user"))};
  s.sneaky = {read(Role::Sneaky, "system"), PromptTemplate(read(Role::Sneaky, "user"))};
  s.critic = {read(Role::Critic, "system"), PromptTemplate(read(Role::Critic, "user"))};
  return s;
}

void PromptSet::save(const std::filesystem::path& dir) const {
  for (auto role : {Role::Solver, Role::Sneaky, Role::Critic}) {
    const auto& rp = for_role(role);
    auto base = std::string(to_string(role));
    write_text_file(dir / (base + ".system.txt"), rp.system);
    write_text_file(dir / (base + ".user.txt"), rp.user.text());
  }
}

std::string render_prefix(const std::vector<Step>& prefix) {
  if (prefix.empty()) return std::string(kEmptyPrefix);
  return join_steps(prefix);
}

std::vector<Step> parse_prefix(std::string_view rendered) {
  if (trim(rendered) == kEmptyPrefix) return {};
  return split_into_steps(rendered);
}

TemplateFields make_fields(const Problem& problem, const std::vector<Step>& prefix) {
  return {{"problem", problem.statement}, {"prefix", render_prefix(prefix)}};
}

TemplateFields make_fields(const Problem& problem, const std::vector<Step>& prefix,
                           const Step& step) {
  auto f = make_fields(problem, prefix);
  f["step"] = step.text;
  return f;
}

}  // namespace spc
