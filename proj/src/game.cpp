#include "spc/game.hpp"

#include "spc/hash.hpp"
#include "spc/rng.hpp"

namespace spc {

std::string_view to_string(SneakyOutcome o) {
  switch (o) {
    case SneakyOutcome::InvalidAttack: return "invalid_attack";
    case SneakyOutcome::DetectedByCritic: return "detected_by_critic";
    case SneakyOutcome::FooledCritic: return "fooled_critic";
  }
  return "invalid_attack";
}

SneakyOutcome parse_outcome(std::string_view s) {
  for (auto o : {SneakyOutcome::InvalidAttack, SneakyOutcome::DetectedByCritic,
                 SneakyOutcome::FooledCritic})
    if (to_string(o) == s) return o;
  throw SpcError(ErrorCode::InvalidArgument, "unknown sneaky outcome: " + std::string(s));
}

namespace {

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
void opt_from(const json& j, const char* key, std::optional<T>& out) {
  out.reset();
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

json verdict_json(const std::optional<StepVerdict>& v) {
  return v ? json(to_string(*v)) : json(nullptr);
}

std::optional<StepVerdict> verdict_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return parse_verdict(j.get<std::string>());
}

}  // namespace

void to_json(json& j, const Critique& c) {
  j = json{{"text", c.text},
           {"verdict", verdict_json(c.verdict)},
           {"critic_correct", c.critic_correct},
           {"logprob", opt_json(c.logprob)}};
}

void from_json(const json& j, Critique& c) {
  c.text = j.at("text").get<std::string>();
  c.verdict = verdict_from(j.at("verdict"));
  c.critic_correct = j.at("critic_correct").get<bool>();
  opt_from(j, "logprob", c.logprob);
}

void to_json(json& j, const RoundTag& t) {
  j = json{{"sneaky_version", t.sneaky_version}, {"critic_version", t.critic_version}};
}

void from_json(const json& j, RoundTag& t) {
  t.sneaky_version = j.at("sneaky_version").get<std::string>();
  t.critic_version = j.at("critic_version").get<std::string>();
}

void to_json(json& j, const GameInstance& g) {
  j = json{{"instance_id", g.instance_id},
           {"problem", g.problem},
           {"difficulty", to_string(g.difficulty)},
           {"prefix", g.prefix},
           {"step", g.step}};
}

void from_json(const json& j, GameInstance& g) {
  g.instance_id = j.at("instance_id").get<std::string>();
  g.problem = j.at("problem").get<Problem>();
  g.difficulty = parse_tier(j.at("difficulty").get<std::string>());
  g.prefix = j.at("prefix").get<std::vector<Step>>();
  g.step = j.at("step").get<Step>();
}

void to_json(json& j, const GameRecord& r) {
  j = json{{"instance_id", r.instance_id},
           {"problem", r.problem},
           {"problem_id", r.problem.id},
           {"difficulty", to_string(r.difficulty)},
           {"prefix", r.prefix},
           {"original_step", r.original_step},
           {"sneaky_output", r.sneaky_output},
           {"sneaky_transformation", opt_json(r.sneaky_transformation)},
           {"sneaky_failure", opt_json(r.sneaky_failure)},
           {"validation", opt_json(r.validation)},
           {"critiques", r.critiques},
           {"r_sneaky", r.r_sneaky},
           {"r_critic", r.r_critic},
           {"round_tag", r.round_tag},
           {"error", opt_json(r.error)}};
  j["outcome"] = r.outcome ? json(to_string(*r.outcome)) : json(nullptr);
}

void from_json(const json& j, GameRecord& r) {
  r.instance_id = j.at("instance_id").get<std::string>();
  r.problem = j.at("problem").get<Problem>();
  r.difficulty = parse_tier(j.at("difficulty").get<std::string>());
  r.prefix = j.at("prefix").get<std::vector<Step>>();
  r.original_step = j.at("original_step").get<Step>();
  r.sneaky_output = j.value("sneaky_output", "");
  opt_from(j, "sneaky_transformation", r.sneaky_transformation);
  opt_from(j, "sneaky_failure", r.sneaky_failure);
  opt_from(j, "validation", r.validation);
  r.critiques = j.at("critiques").get<std::vector<Critique>>();
  r.r_sneaky = j.at("r_sneaky").get<int>();
  r.r_critic = j.at("r_critic").get<std::vector<int>>();
  r.outcome.reset();
  if (j.contains("outcome") && !j["outcome"].is_null())
    r.outcome = parse_outcome(j["outcome"].get<std::string>());
  r.round_tag = j.at("round_tag").get<RoundTag>();
  opt_from(j, "error", r.error);
}

void to_json(json& j, const CritiqueRecord& r) {
  j = json{{"instance_id", r.instance_id},
           {"problem", r.problem},
           {"difficulty", to_string(r.difficulty)},
           {"prefix", r.prefix},
           {"step", r.step},
           {"truth", to_string(r.truth)},
           {"critiques", r.critiques},
           {"r_critic", r.r_critic},
           {"round_tag", r.round_tag},
           {"error", opt_json(r.error)}};
}

void from_json(const json& j, CritiqueRecord& r) {
  r.instance_id = j.at("instance_id").get<std::string>();
  r.problem = j.at("problem").get<Problem>();
  r.difficulty = parse_tier(j.at("difficulty").get<std::string>());
  r.prefix = j.at("prefix").get<std::vector<Step>>();
  r.step = j.at("step").get<Step>();
  r.truth = parse_verdict(j.at("truth").get<std::string>());
  r.critiques = j.at("critiques").get<std::vector<Critique>>();
  r.r_critic = j.at("r_critic").get<std::vector<int>>();
  r.round_tag = j.at("round_tag").get<RoundTag>();
  opt_from(j, "error", r.error);
}

// ---------------------------------------------------------------------------

namespace {

GenerationResponse sneaky_generate(const Problem& problem, const std::vector<Step>& prefix,
                                   const Step& correct_step, Backend& sneaky,
                                   const RolePrompt& prompt, const SamplingParams& params) {
  auto req = build_request(prompt, make_fields(problem, prefix, correct_step), params);
  auto resp = sneaky.generate(req);
  if (!resp.ok())
    throw SpcError(ErrorCode::BackendError,
                   std::string(to_string(resp.error)) + ": " + resp.error_detail);
  return resp;
}

SneakyTransformation interpret_sneaky(const GenerationResponse& resp, const Step& correct_step) {
  auto st = parse_sneaky_output(resp.text);
  st.logprob = resp.logprob;
  if (trim(st.sneaky_step) == trim(correct_step.text))
    throw SpcError(ErrorCode::IdenticalStep, "sneaky step is identical to the original step");
  return st;
}

}  // namespace

SneakyTransformation run_sneaky_turn(const Problem& problem, const std::vector<Step>& prefix,
                                     const Step& correct_step, Backend& sneaky,
                                     const RolePrompt& sneaky_prompt,
                                     const SamplingParams& params) {
  auto resp = sneaky_generate(problem, prefix, correct_step, sneaky, sneaky_prompt, params);
  return interpret_sneaky(resp, correct_step);
}

std::vector<Critique> run_critic_turn(const CritiqueRequest& request, Backend& critic,
                                      const RolePrompt& critic_prompt, int k,
                                      const SamplingParams& params,
                                      std::optional<StepVerdict> truth) {
  if (k <= 0) throw SpcError(ErrorCode::InvalidArgument, "k_critiques must be positive");
  auto fields = make_fields(request.problem, request.prefix, request.step);
  std::vector<Critique> out;
  for (int i = 0; i < k; ++i) {
    auto p = params;
    if (params.seed) p.seed = derive_seed(*params.seed, static_cast<std::uint64_t>(i));
    auto resp = critic.generate(build_request(critic_prompt, fields, p));
    if (!resp.ok())
      throw SpcError(ErrorCode::BackendError,
                     std::string(to_string(resp.error)) + ": " + resp.error_detail);
    Critique c;
    c.text = resp.text;
    c.verdict = parse_critique(resp.text).verdict;
    c.critic_correct = truth && c.verdict && *c.verdict == *truth;
    c.logprob = resp.logprob;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<int> critic_rewards(const std::vector<std::optional<StepVerdict>>& verdicts,
                                StepVerdict truth) {
  std::vector<int> out;
  out.reserve(verdicts.size());
  for (const auto& v : verdicts) out.push_back(v && *v == truth ? 1 : -1);
  return out;
}

Rewards assign_rewards(const ValidationResult& validation,
                       const std::vector<std::optional<StepVerdict>>& verdicts, StepVerdict truth) {
  if (!validation.valid) return Rewards{-1, {}};
  if (verdicts.empty())
    throw SpcError(ErrorCode::InconsistentInputs, "valid attack without any critic verdict");
  Rewards r;
  r.r_critic = critic_rewards(verdicts, truth);
  r.r_sneaky = -r.r_critic.front();
  return r;
}

void GameConfig::validate() const {
  if (k_critiques <= 0 || k_genuine_critiques <= 0)
    throw SpcError(ErrorCode::InvalidArgument, "critique counts must be positive");
  validation.validate();
}

void to_json(json& j, const GameConfig& c) {
  j = json{{"k_critiques", c.k_critiques},
           {"k_genuine_critiques", c.k_genuine_critiques},
           {"sneaky_temperature", c.sneaky_temperature},
           {"critic_temperature", c.critic_temperature},
           {"max_tokens", c.max_tokens},
           {"validation", c.validation}};
}

void from_json(const json& j, GameConfig& c) {
  c = GameConfig{};
  if (j.contains("k_critiques")) c.k_critiques = j["k_critiques"].get<int>();
  if (j.contains("k_genuine_critiques")) c.k_genuine_critiques = j["k_genuine_critiques"].get<int>();
  if (j.contains("sneaky_temperature")) c.sneaky_temperature = j["sneaky_temperature"].get<double>();
  if (j.contains("critic_temperature")) c.critic_temperature = j["critic_temperature"].get<double>();
  if (j.contains("max_tokens")) c.max_tokens = j["max_tokens"].get<int>();
  if (j.contains("validation")) c.validation = j["validation"].get<ValidationConfig>();
}

namespace {

GameRecord play_instance(const GameInstance& inst, const GameBackends& backends,
                         const PromptSet& prompts, const GameConfig& cfg, const RoundTag& tag,
                         std::uint64_t seed) {
  GameRecord rec;
  rec.instance_id = inst.instance_id;
  rec.problem = inst.problem;
  rec.difficulty = inst.difficulty;
  rec.prefix = inst.prefix;
  rec.original_step = inst.step;
  rec.round_tag = tag;
  auto iseed = derive_seed(seed, fnv1a64(inst.instance_id));
  try {
    SamplingParams sp{cfg.sneaky_temperature, cfg.max_tokens, derive_seed(iseed, "sneaky")};
    auto resp = sneaky_generate(inst.problem, inst.prefix, inst.step, *backends.sneaky,
                                prompts.sneaky, sp);
    rec.sneaky_output = resp.text;
    SneakyTransformation st;
    try {
      st = interpret_sneaky(resp, inst.step);
    } catch (const SpcError& e) {
      if (e.code() != ErrorCode::ParseFailure && e.code() != ErrorCode::IdenticalStep) throw;
      rec.sneaky_failure = std::string(to_string(e.code())) + ": " + e.what();
      if (e.code() == ErrorCode::IdenticalStep) {
        st = parse_sneaky_output(resp.text);
        st.logprob = resp.logprob;
        rec.sneaky_transformation = st;
      }
      rec.r_sneaky = -1;
      rec.outcome = SneakyOutcome::InvalidAttack;
      return rec;
    }
    rec.sneaky_transformation = st;
    Step sneaky_step{inst.step.index, st.sneaky_step};
    rec.validation = validate_sneaky(inst.problem, inst.prefix, inst.step, sneaky_step,
                                     *backends.solver, prompts.solver, cfg.validation,
                                     derive_seed(iseed, "validate"));
    if (rec.validation->valid) {
      SamplingParams cp{cfg.critic_temperature, cfg.max_tokens, derive_seed(iseed, "critic")};
      rec.critiques = run_critic_turn({inst.problem, inst.prefix, sneaky_step}, *backends.critic,
                                      prompts.critic, cfg.k_critiques, cp, StepVerdict::Incorrect);
    }
    std::vector<std::optional<StepVerdict>> verdicts;
    for (const auto& c : rec.critiques) verdicts.push_back(c.verdict);
    auto rewards = assign_rewards(*rec.validation, verdicts, StepVerdict::Incorrect);
    rec.r_sneaky = rewards.r_sneaky;
    rec.r_critic = rewards.r_critic;
    if (!rec.validation->valid) {
      rec.outcome = SneakyOutcome::InvalidAttack;
    } else {
      rec.outcome = rec.r_sneaky > 0 ? SneakyOutcome::FooledCritic : SneakyOutcome::DetectedByCritic;
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.outcome.reset();
    rec.critiques.clear();
    rec.r_critic.clear();
    rec.r_sneaky = -1;
  }
  return rec;
}

}  // namespace

std::vector<GameRecord> play_round(const std::vector<GameInstance>& instances,
                                   const GameBackends& backends, const PromptSet& prompts,
                                   const GameConfig& cfg, const RoundTag& tag, std::uint64_t seed,
                                   const Executor& executor) {
  cfg.validate();
  if (!backends.sneaky || !backends.critic || !backends.solver)
    throw SpcError(ErrorCode::InvalidArgument, "play_round needs sneaky, critic and solver backends");
  std::vector<GameRecord> out(instances.size());
  executor.parallel_for(instances.size(), [&](std::size_t i) {
    out[i] = play_instance(instances[i], backends, prompts, cfg, tag, seed);
  });
  return out;
}

std::vector<CritiqueRecord> critique_genuine_steps(const std::vector<GameInstance>& instances,
                                                   Backend& critic, const PromptSet& prompts,
                                                   const GameConfig& cfg, const RoundTag& tag,
                                                   std::uint64_t seed, const Executor& executor) {
  cfg.validate();
  std::vector<CritiqueRecord> out(instances.size());
  executor.parallel_for(instances.size(), [&](std::size_t i) {
    const auto& inst = instances[i];
    CritiqueRecord rec;
    rec.instance_id = inst.instance_id;
    rec.problem = inst.problem;
    rec.difficulty = inst.difficulty;
    rec.prefix = inst.prefix;
    rec.step = inst.step;
    rec.truth = StepVerdict::Correct;
    rec.round_tag = tag;
    try {
      auto iseed = derive_seed(seed, fnv1a64(inst.instance_id));
      SamplingParams cp{cfg.critic_temperature, cfg.max_tokens, derive_seed(iseed, "genuine")};
      rec.critiques = run_critic_turn({inst.problem, inst.prefix, inst.step}, critic,
                                      prompts.critic, cfg.k_genuine_critiques, cp,
                                      StepVerdict::Correct);
      std::vector<std::optional<StepVerdict>> verdicts;
      for (const auto& c : rec.critiques) verdicts.push_back(c.verdict);
      rec.r_critic = critic_rewards(verdicts, StepVerdict::Correct);
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.critiques.clear();
      rec.r_critic.clear();
    }
    out[i] = std::move(rec);
  });
  return out;
}

CritiqueRecord as_critique_record(const GameRecord& r) {
  CritiqueRecord c;
  c.instance_id = r.instance_id;
  c.problem = r.problem;
  c.difficulty = r.difficulty;
  c.prefix = r.prefix;
  c.step = {r.original_step.index,
            r.sneaky_transformation ? r.sneaky_transformation->sneaky_step : std::string()};
  c.truth = StepVerdict::Incorrect;
  c.critiques = r.critiques;
  c.r_critic = r.r_critic;
  c.round_tag = r.round_tag;
  c.error = r.error;
  return c;
}

double RoundSummary::sneaky_win_rate() const {
  return valid() == 0 ? 0.0 : static_cast<double>(fooled) / valid();
}

double RoundSummary::attack_success_rate() const {
  int n = total - errors;
  return n == 0 ? 0.0 : static_cast<double>(valid()) / n;
}

double RoundSummary::critic_accuracy() const {
  return critiques == 0 ? 0.0 : static_cast<double>(critiques_correct) / critiques;
}

json RoundSummary::to_json() const {
  return json{{"total", total},
              {"errors", errors},
              {"counts",
               {{to_string(SneakyOutcome::InvalidAttack), invalid_attack},
                {to_string(SneakyOutcome::DetectedByCritic), detected},
                {to_string(SneakyOutcome::FooledCritic), fooled}}},
              {"sneaky_win_rate", sneaky_win_rate()},
              {"attack_success_rate", attack_success_rate()},
              {"critic_accuracy", critic_accuracy()},
              {"critiques", critiques}};
}

RoundSummary summarize(const std::vector<GameRecord>& records) {
  RoundSummary s;
  for (const auto& r : records) {
    ++s.total;
    if (!r.outcome) {
      ++s.errors;
      continue;
    }
    switch (*r.outcome) {
      case SneakyOutcome::InvalidAttack: ++s.invalid_attack; break;
      case SneakyOutcome::DetectedByCritic: ++s.detected; break;
      case SneakyOutcome::FooledCritic: ++s.fooled; break;
    }
    for (const auto& c : r.critiques) {
      ++s.critiques;
      s.critiques_correct += c.critic_correct;
    }
  }
  return s;
}

}  // namespace spc
