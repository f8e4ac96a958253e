#pragma once

// Hand-traced scripted search runs. Each scenario has a golden trace under
// fixtures/search/<name>.json.

#include <string>
#include <vector>

#include "spc/jsonl.hpp"
#include "spc/search.hpp"
#include "support.hpp"

namespace spc::test {

inline const std::string kApprove =
    "Each value follows from the previous result.\nConclusion: the step is correct.";
inline const std::string kReject = "The arithmetic does not hold.\nConclusion: the step is incorrect.";

inline Problem scenario_problem() {
  return {"toy-1", "Start with 3. Add 4. Multiply by 2. What is the result?", "14", "toy"};
}

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"retries_exhausted", "planted_then_correct",
                                                 "unguided", "max_steps_zero", "budget_exhausted"};
  return names;
}

inline SearchTrace run_search_scenario(const std::string& name) {
  auto prompts = PromptSet::defaults();
  SearchConfig cfg;
  std::vector<std::string> solver, critic;
  bool guided = true;
  if (name == "retries_exhausted") {
    solver = {"3 + 4 = 7",  "7 * 2 = 15", "7 * 2 = 16", "7 * 2 = 13",
              "7 * 2 = 12", "7 * 2 = 11", "The answer is \\boxed{11}."};
    critic = {kApprove, kReject, kReject, kReject, kReject, kReject, kApprove};
  } else if (name == "planted_then_correct") {
    solver = {"3 + 4 = 7", "7 * 2 = 15, so the answer is \\boxed{15}",
              "7 * 2 = 14, so the answer is \\boxed{14}"};
    critic = {kApprove, kReject, kApprove};
  } else if (name == "unguided") {
    solver = {"3 + 4 = 7", "7 * 2 = 15, so the answer is \\boxed{15}"};
    guided = false;
  } else if (name == "max_steps_zero") {
    cfg.max_steps = 0;
  } else if (name == "budget_exhausted") {
    cfg.max_steps = 2;
    solver = {"3 + 4 = 7", "7 * 2 = 14"};
    critic = {kApprove, kApprove};
  } else {
    throw SpcError(ErrorCode::InvalidArgument, "unknown scenario " + name);
  }
  auto s = ScriptedBackend::from_responses(solver);
  auto c = ScriptedBackend::from_responses(critic);
  auto p = scenario_problem();
  auto out = guided ? guided_solve(p, *s, *c, prompts, cfg, 11) : unguided_solve(p, *s, prompts, cfg, 11);
  if (s->remaining() != 0 || c->remaining() != 0)
    throw SpcError(ErrorCode::InconsistentInputs, name + ": script not fully consumed");
  return out.trace;
}

inline std::string render_trace(const SearchTrace& t) { return json(t).dump(2) + "\n"; }

inline std::string golden_trace(const std::string& name) {
  return read_text_file(fixture_dir() / "search" / (name + ".json"));
}

}  // namespace spc::test
