#include "spc/search.hpp"

#include <map>

#include "spc/formats.hpp"
#include "spc/game.hpp"
#include "spc/rng.hpp"

namespace spc {

void SearchConfig::validate() const {
  if (max_retries_per_step < 1)
    throw SpcError(ErrorCode::InvalidArgument, "max_retries_per_step must be at least 1");
  if (max_steps < 0) throw SpcError(ErrorCode::InvalidArgument, "max_steps must be non-negative");
  if (self_consistency_samples < 1)
    throw SpcError(ErrorCode::InvalidArgument, "self_consistency_samples must be at least 1");
}

void to_json(json& j, const SearchConfig& c) {
  j = json{{"max_retries_per_step", c.max_retries_per_step},
           {"max_steps", c.max_steps},
           {"self_consistency_samples", c.self_consistency_samples},
           {"vote_tie_break", "first_seen"},
           {"temperature_solver", c.temperature_solver},
           {"temperature_critic", c.temperature_critic},
           {"max_tokens", c.max_tokens}};
  j["temperature_retry"] = c.temperature_retry ? json(*c.temperature_retry) : json(nullptr);
}

void from_json(const json& j, SearchConfig& c) {
  c = SearchConfig{};
  if (j.contains("max_retries_per_step")) c.max_retries_per_step = j["max_retries_per_step"].get<int>();
  if (j.contains("max_steps")) c.max_steps = j["max_steps"].get<int>();
  if (j.contains("self_consistency_samples"))
    c.self_consistency_samples = j["self_consistency_samples"].get<int>();
  if (j.contains("vote_tie_break") && j["vote_tie_break"] != "first_seen")
    throw SpcError(ErrorCode::InvalidArgument, "unsupported vote_tie_break");
  if (j.contains("temperature_solver")) c.temperature_solver = j["temperature_solver"].get<double>();
  if (j.contains("temperature_critic")) c.temperature_critic = j["temperature_critic"].get<double>();
  if (j.contains("max_tokens")) c.max_tokens = j["max_tokens"].get<int>();
  if (j.contains("temperature_retry") && !j["temperature_retry"].is_null())
    c.temperature_retry = j["temperature_retry"].get<double>();
}

std::string_view to_string(AcceptedVia a) {
  return a == AcceptedVia::CriticApproved ? "critic_approved" : "retries_exhausted";
}

void to_json(json& j, const SearchTrace& t) {
  json steps = json::array();
  for (const auto& s : t.steps) {
    json attempts = json::array();
    for (const auto& a : s.attempts) {
      attempts.push_back({{"step", a.step.text},
                          {"verdict", a.verdict ? json(to_string(*a.verdict)) : json(nullptr)},
                          {"critique", a.critique}});
    }
    steps.push_back({{"attempts", attempts},
                     {"accepted_step", s.accepted_step.text},
                     {"accepted_via", s.accepted_via ? json(to_string(*s.accepted_via)) : json(nullptr)}});
  }
  j = json{{"problem_id", t.problem_id},
           {"steps", steps},
           {"final_answer", t.final_answer},
           {"budget_exhausted", t.budget_exhausted},
           {"error", t.error ? json(*t.error) : json(nullptr)},
           {"solver_calls", t.solver_calls},
           {"critic_calls", t.critic_calls},
           {"prompt_tokens", t.prompt_tokens},
           {"completion_tokens", t.completion_tokens}};
}

namespace {

void count_usage(SearchTrace& t, const GenerationResponse& r) {
  if (!r.usage) return;
  t.prompt_tokens += r.usage->prompt_tokens;
  t.completion_tokens += r.usage->completion_tokens;
}

std::uint64_t attempt_seed(std::uint64_t seed, int step, int attempt) {
  return derive_seed(seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(attempt));
}

// Shared decoding loop; critic == nullptr means unguided.
SearchOutcome stepwise(const Problem& problem, Backend& solver, Backend* critic,
                       const PromptSet& prompts, const SearchConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SearchOutcome out;
  out.trace.problem_id = problem.id;
  Trajectory traj{problem.id, {}, false, std::nullopt};
  int attempts_allowed = critic ? cfg.max_retries_per_step : 1;
  for (int k = 0; k < cfg.max_steps; ++k) {
    SearchStepTrace st;
    GeneratedStep accepted;
    for (int a = 0; a < attempts_allowed; ++a) {
      double temp = a == 0 ? cfg.temperature_solver
                           : cfg.temperature_retry.value_or(cfg.temperature_solver);
      SamplingParams sp{temp, cfg.max_tokens, attempt_seed(seed, k, a)};
      auto gs = generate_step(solver, problem, traj, prompts.solver, sp);
      ++out.trace.solver_calls;
      count_usage(out.trace, gs.response);
      SearchAttempt attempt{gs.step, std::nullopt, {}};
      if (critic) {
        SamplingParams cp{cfg.temperature_critic, cfg.max_tokens,
                          derive_seed(attempt_seed(seed, k, a), "critic")};
        auto critiques = run_critic_turn({problem, traj.steps, gs.step}, *critic, prompts.critic,
                                         1, cp);
        ++out.trace.critic_calls;
        attempt.verdict = critiques.front().verdict;
        attempt.critique = critiques.front().text;
      }
      st.attempts.push_back(attempt);
      accepted = std::move(gs);
      if (!critic) break;
      if (attempt.verdict == StepVerdict::Correct) {
        st.accepted_via = AcceptedVia::CriticApproved;
        break;
      }
    }
    if (critic && !st.accepted_via) st.accepted_via = AcceptedVia::RetriesExhausted;
    st.accepted_step = accepted.step;
    out.trace.steps.push_back(st);
    traj.steps.push_back(accepted.step);
    if (accepted.terminal) {
      traj.complete = true;
      traj.final_answer = accepted.final_answer;
      out.answer = accepted.final_answer.value_or("");
      out.trace.final_answer = out.answer;
      return out;
    }
  }
  out.trace.budget_exhausted = true;
  out.trace.error = std::string(to_string(ErrorCode::StepBudgetExhausted));
  return out;
}

}  // namespace

SearchOutcome guided_solve(const Problem& problem, Backend& solver, Backend& critic,
                           const PromptSet& prompts, const SearchConfig& cfg, std::uint64_t seed) {
  return stepwise(problem, solver, &critic, prompts, cfg, seed);
}

SearchOutcome unguided_solve(const Problem& problem, Backend& solver, const PromptSet& prompts,
                             const SearchConfig& cfg, std::uint64_t seed) {
  return stepwise(problem, solver, nullptr, prompts, cfg, seed);
}

std::string majority_vote(const std::vector<std::string>& answers, TieBreak) {
  if (answers.empty()) return {};
  std::map<std::string, int> counts;
  for (const auto& a : answers) ++counts[a];
  int best = 0;
  for (const auto& [a, c] : counts) best = std::max(best, c);
  for (const auto& a : answers)
    if (counts[a] == best) return a;
  return {};
}

SelfConsistencyOutcome self_consistent_solve(const Problem& problem, Backend& solver,
                                             Backend& critic, const PromptSet& prompts,
                                             const SearchConfig& cfg, std::uint64_t seed,
                                             const Executor& executor, bool identical_seeds) {
  cfg.validate();
  auto n = static_cast<std::size_t>(cfg.self_consistency_samples);
  SelfConsistencyOutcome out;
  out.answers.resize(n);
  out.traces.resize(n);
  executor.parallel_for(n, [&](std::size_t i) {
    auto s = identical_seeds || n == 1 ? seed : derive_seed(derive_seed(seed, "sc"), i);
    try {
      auto r = guided_solve(problem, solver, critic, prompts, cfg, s);
      out.answers[i] = r.answer;
      out.traces[i] = std::move(r.trace);
    } catch (const SpcError& e) {
      out.answers[i].clear();
      out.traces[i].problem_id = problem.id;
      out.traces[i].error = e.what();
    }
  });
  out.answer = majority_vote(out.answers, cfg.vote_tie_break);
  return out;
}

}  // namespace spc
