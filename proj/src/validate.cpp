#include "spc/validate.hpp"

#include <algorithm>

#include "spc/rng.hpp"

namespace spc {

void ValidationConfig::validate() const {
  if (n_completions <= 0) throw SpcError(ErrorCode::InvalidArgument, "n_completions must be positive");
  if (pregen_solutions <= 0)
    throw SpcError(ErrorCode::InvalidArgument, "pregen_solutions must be positive");
  if (medium_resample <= 0)
    throw SpcError(ErrorCode::InvalidArgument, "medium_resample must be positive");
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(original_min_success) || !in_unit(sneaky_max_success) || !in_unit(medium_fraction))
    throw SpcError(ErrorCode::InvalidArgument, "rates must lie in [0, 1]");
  if (!(sneaky_max_success < original_min_success))
    throw SpcError(ErrorCode::InvalidArgument,
                   "sneaky_max_success must be below original_min_success");
  for (int m : medium_band)
    if (easy_band.count(m))
      throw SpcError(ErrorCode::InvalidArgument, "medium and easy bands overlap");
}

void to_json(json& j, const ValidationConfig& c) {
  j = json{{"n_completions", c.n_completions},
           {"original_min_success", c.original_min_success},
           {"sneaky_max_success", c.sneaky_max_success},
           {"pregen_solutions", c.pregen_solutions},
           {"medium_band", c.medium_band},
           {"easy_band", c.easy_band},
           {"medium_fraction", c.medium_fraction},
           {"medium_resample", c.medium_resample},
           {"temperature", c.temperature},
           {"max_tokens", c.max_tokens}};
}

void from_json(const json& j, ValidationConfig& c) {
  c = ValidationConfig{};
  if (j.contains("n_completions")) c.n_completions = j["n_completions"].get<int>();
  if (j.contains("original_min_success")) c.original_min_success = j["original_min_success"].get<double>();
  if (j.contains("sneaky_max_success")) c.sneaky_max_success = j["sneaky_max_success"].get<double>();
  if (j.contains("pregen_solutions")) c.pregen_solutions = j["pregen_solutions"].get<int>();
  if (j.contains("medium_band")) c.medium_band = j["medium_band"].get<std::set<int>>();
  if (j.contains("easy_band")) c.easy_band = j["easy_band"].get<std::set<int>>();
  if (j.contains("medium_fraction")) c.medium_fraction = j["medium_fraction"].get<double>();
  if (j.contains("medium_resample")) c.medium_resample = j["medium_resample"].get<int>();
  if (j.contains("temperature")) c.temperature = j["temperature"].get<double>();
  if (j.contains("max_tokens")) c.max_tokens = j["max_tokens"].get<int>();
}

namespace {

json audit_json(const std::vector<RolloutAudit>& rs) {
  json a = json::array();
  for (const auto& r : rs) {
    json e = {{"answer", r.answer}, {"success", r.success}};
    if (r.error) e["error"] = r.error_detail;
    a.push_back(e);
  }
  return a;
}

std::vector<RolloutAudit> audit_from_json(const json& a) {
  std::vector<RolloutAudit> out;
  for (const auto& e : a) {
    RolloutAudit r;
    r.answer = e.at("answer").get<std::string>();
    r.success = e.at("success").get<bool>();
    if (e.contains("error")) {
      r.error = true;
      r.error_detail = e["error"].get<std::string>();
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace

void to_json(json& j, const ValidationResult& r) {
  j = json{{"original_successes", r.original_successes},
           {"sneaky_successes", r.sneaky_successes},
           {"n", r.n},
           {"original_clean", r.original_clean},
           {"sneaky_clean", r.sneaky_clean},
           {"valid", r.valid},
           {"original_rollouts", audit_json(r.original_rollouts)},
           {"sneaky_rollouts", audit_json(r.sneaky_rollouts)}};
}

void from_json(const json& j, ValidationResult& r) {
  r.original_successes = j.at("original_successes").get<int>();
  r.sneaky_successes = j.at("sneaky_successes").get<int>();
  r.n = j.at("n").get<int>();
  r.original_clean = j.value("original_clean", r.n);
  r.sneaky_clean = j.value("sneaky_clean", r.n);
  r.valid = j.at("valid").get<bool>();
  r.original_rollouts = audit_from_json(j.value("original_rollouts", json::array()));
  r.sneaky_rollouts = audit_from_json(j.value("sneaky_rollouts", json::array()));
}

bool passes_thresholds(int original_successes, int sneaky_successes, int n,
                       const ValidationConfig& cfg) {
  if (n <= 0) return false;
  // Compare counts against rate * n with a small slack so 0.75 * 8 = 6 is exact
  // even for rates that are not dyadic.
  constexpr double eps = 1e-9;
  bool original_ok = original_successes >= cfg.original_min_success * n - eps;
  bool sneaky_ok = sneaky_successes <= cfg.sneaky_max_success * n + eps;
  return original_ok && sneaky_ok;
}

namespace {

RolloutAudit run_rollout(const Problem& problem, const std::vector<Step>& steps, Backend& solver,
                         const RolePrompt& prompt, const ValidationConfig& cfg,
                         std::uint64_t seed) {
  RolloutAudit a;
  try {
    auto prefix = make_trajectory(problem.id, steps);
    SamplingParams params{cfg.temperature, cfg.max_tokens, seed};
    auto full = complete_solution(solver, problem, prefix, prompt, params);
    a.answer = full.final_answer.value_or("");
    a.success = !a.answer.empty() && a.answer == problem.gold_answer;
  } catch (const SpcError& e) {
    if (e.code() != ErrorCode::BackendError) throw;
    a.error = true;
    a.error_detail = e.what();
  }
  return a;
}

}  // namespace

ValidationResult validate_sneaky(const Problem& problem, const std::vector<Step>& prefix,
                                 const Step& original_step, const Step& sneaky_step,
                                 Backend& solver, const RolePrompt& solver_prompt,
                                 const ValidationConfig& cfg, std::uint64_t seed,
                                 const Executor& executor) {
  cfg.validate();
  auto with = [&](const Step& s) {
    auto steps = prefix;
    steps.push_back(s);
    reindex(steps);
    return steps;
  };
  auto original = with(original_step);
  auto sneaky = with(sneaky_step);
  std::size_t n = static_cast<std::size_t>(cfg.n_completions);
  std::vector<RolloutAudit> audits(2 * n);
  executor.parallel_for(2 * n, [&](std::size_t i) {
    bool is_sneaky = i >= n;
    std::size_t r = is_sneaky ? i - n : i;
    audits[i] = run_rollout(problem, is_sneaky ? sneaky : original, solver, solver_prompt, cfg,
                            derive_seed(seed, is_sneaky ? 2u : 1u, r));
  });

  ValidationResult out;
  out.n = cfg.n_completions;
  out.original_rollouts.assign(audits.begin(), audits.begin() + static_cast<long>(n));
  out.sneaky_rollouts.assign(audits.begin() + static_cast<long>(n), audits.end());
  for (const auto& a : out.original_rollouts) {
    if (a.error) continue;
    ++out.original_clean;
    out.original_successes += a.success;
  }
  for (const auto& a : out.sneaky_rollouts) {
    if (a.error) continue;
    ++out.sneaky_clean;
    out.sneaky_successes += a.success;
  }
  out.valid = out.original_clean == out.n && out.sneaky_clean == out.n &&
              passes_thresholds(out.original_successes, out.sneaky_successes, out.n, cfg);
  return out;
}

std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::Unsolvable: return "unsolvable";
    case Tier::Medium: return "medium";
    case Tier::Easy: return "easy";
  }
  return "unsolvable";
}

Tier parse_tier(std::string_view s) {
  auto l = to_lower(s);
  if (l == "unsolvable") return Tier::Unsolvable;
  if (l == "medium") return Tier::Medium;
  if (l == "easy") return Tier::Easy;
  throw SpcError(ErrorCode::InvalidArgument, "unknown tier: " + std::string(s));
}

Tier tier_from_successes(int successes, const ValidationConfig& cfg) {
  if (successes <= 0) return Tier::Unsolvable;
  if (cfg.medium_band.count(successes)) return Tier::Medium;
  if (cfg.easy_band.count(successes)) return Tier::Easy;
  return Tier::Unsolvable;
}

namespace {

std::vector<Trajectory> generate_solutions(const Problem& problem, Backend& solver,
                                           const RolePrompt& prompt, const ValidationConfig& cfg,
                                           int count, std::uint64_t seed,
                                           const Executor& executor) {
  std::vector<Trajectory> out(static_cast<std::size_t>(count));
  executor.parallel_for(out.size(), [&](std::size_t i) {
    SamplingParams params{cfg.temperature, cfg.max_tokens, derive_seed(seed, i)};
    out[i] = complete_solution(solver, problem, make_trajectory(problem.id, {}), prompt, params);
  });
  return out;
}

bool solved(const Problem& problem, const Trajectory& t) {
  return t.final_answer && !t.final_answer->empty() && *t.final_answer == problem.gold_answer;
}

}  // namespace

TierResult tier_problem(const Problem& problem, Backend& solver, const RolePrompt& solver_prompt,
                        const ValidationConfig& cfg, std::uint64_t seed,
                        const Executor& executor) {
  cfg.validate();
  TierResult out;
  out.solutions = generate_solutions(problem, solver, solver_prompt, cfg, cfg.pregen_solutions,
                                     derive_seed(seed, "pregen"), executor);
  for (const auto& s : out.solutions) out.successes += solved(problem, s);
  out.tier = tier_from_successes(out.successes, cfg);
  return out;
}

std::vector<HarvestedStep> harvest_correct_steps(const Problem& problem, const TierResult& tiered,
                                                 Backend& solver, const RolePrompt& solver_prompt,
                                                 const ValidationConfig& cfg, std::uint64_t seed,
                                                 const StepVerifier& verifier,
                                                 const Executor& executor) {
  if (tiered.tier == Tier::Unsolvable)
    throw SpcError(ErrorCode::InvalidArgument, "cannot harvest from an unsolvable problem");
  std::vector<Trajectory> solutions =
      tiered.tier == Tier::Medium
          ? generate_solutions(problem, solver, solver_prompt, cfg, cfg.medium_resample,
                               derive_seed(seed, "resample"), executor)
          : tiered.solutions;
  std::vector<HarvestedStep> out;
  for (std::size_t i = 0; i < solutions.size(); ++i) {
    const auto& s = solutions[i];
    if (!solved(problem, s) || s.steps.empty()) continue;
    Rng rng(derive_seed(derive_seed(seed, "pick"), i));
    auto k = rng.uniform_index(s.steps.size());
    HarvestedStep h;
    h.prefix.assign(s.steps.begin(), s.steps.begin() + static_cast<long>(k));
    h.step = s.steps[k];
    h.tier = tiered.tier;
    h.solution_index = i;
    if (verifier && !verifier(problem, h.prefix, h.step)) continue;
    out.push_back(std::move(h));
  }
  if (out.empty())
    throw SpcError(ErrorCode::NoCorrectSolutions,
                   "no correct solution to harvest for problem " + problem.id);
  return out;
}

}  // namespace spc
