#include "doctest.h"
#include "spc/game.hpp"
#include "spc/toy_backends.hpp"
#include "spc/validate.hpp"

using namespace spc;

namespace {

Problem toy_problem() {
  return {"toy-1", "Start with 3. Add 4. Multiply by 2. What is the result?", "14", "toy"};
}

const std::string kGood = "7 * 2 = 14, so the answer is \\boxed{14}";
const std::string kBad = "8 * 2 = 16, so the answer is \\boxed{16}";

// Rollouts from the original step succeed `orig` times out of n, rollouts from
// the sneaky step `sneaky` times.
std::shared_ptr<ScriptedBackend> planted_solver(int n, int orig, int sneaky) {
  std::vector<ScriptEntry> e;
  for (int i = 0; i < n; ++i) e.push_back({"3 + 4 = 7", i < orig ? kGood : "7 * 2 = 15, so the answer is \\boxed{15}"});
  for (int i = 0; i < n; ++i) e.push_back({"3 + 4 = 8", i < sneaky ? kGood : kBad});
  return std::make_shared<ScriptedBackend>(e);
}

ValidationResult run_validation(Backend& solver, int n) {
  ValidationConfig cfg;
  cfg.n_completions = n;
  return validate_sneaky(toy_problem(), {}, {0, "3 + 4 = 7"}, {0, "3 + 4 = 8"}, solver,
                         PromptSet::defaults().solver, cfg, 5);
}

}  // namespace

TEST_CASE("threshold table for n = 8") {
  ValidationConfig cfg;
  int valid_count = 0;
  for (int o = 0; o <= 8; ++o)
    for (int s = 0; s <= 8; ++s) {
      bool want = 4 * o >= 3 * 8 && s == 0;
      CHECK(passes_thresholds(o, s, 8, cfg) == want);
      valid_count += want;
    }
  CHECK(valid_count == 3);
  CHECK(passes_thresholds(6, 0, 8, cfg));
  CHECK_FALSE(passes_thresholds(5, 0, 8, cfg));
  CHECK_FALSE(passes_thresholds(8, 1, 8, cfg));
}

TEST_CASE("validate_sneaky reproduces planted rollout tables") {
  for (auto [o, s] : std::vector<std::pair<int, int>>{{6, 0}, {5, 0}, {8, 1}, {8, 0}, {0, 0}, {7, 3}}) {
    auto solver = planted_solver(8, o, s);
    auto r = run_validation(*solver, 8);
    CHECK(r.original_successes == o);
    CHECK(r.sneaky_successes == s);
    CHECK(r.n == 8);
    CHECK(r.valid == (o >= 6 && s == 0));
    CHECK(r.original_rollouts.size() == 8);
    CHECK(r.sneaky_rollouts.size() == 8);
    CHECK(solver->remaining() == 0);
  }
}

TEST_CASE("rollout errors are excluded and block validity") {
  std::vector<ScriptEntry> e;
  for (int i = 0; i < 7; ++i) e.push_back({"3 + 4 = 7", kGood});
  for (int i = 0; i < 8; ++i) e.push_back({"3 + 4 = 8", kBad});
  ScriptedBackend solver(e);
  auto r = run_validation(solver, 8);
  CHECK(r.original_clean == 7);
  CHECK(r.original_successes == 7);
  CHECK(r.sneaky_clean == 8);
  CHECK_FALSE(r.valid);
  int errors = 0;
  for (const auto& a : r.original_rollouts) errors += a.error;
  CHECK(errors == 1);
}

TEST_CASE("validation config checks") {
  ValidationConfig cfg;
  cfg.validate();
  cfg.sneaky_max_success = 0.8;
  CHECK_THROWS_AS(cfg.validate(), SpcError);
  cfg = {};
  cfg.easy_band = {2, 3, 4};
  CHECK_THROWS_AS(cfg.validate(), SpcError);
}

TEST_CASE("tiering") {
  ValidationConfig cfg;
  CHECK(tier_from_successes(0, cfg) == Tier::Unsolvable);
  CHECK(tier_from_successes(1, cfg) == Tier::Medium);
  CHECK(tier_from_successes(2, cfg) == Tier::Medium);
  CHECK(tier_from_successes(3, cfg) == Tier::Easy);
  CHECK(tier_from_successes(4, cfg) == Tier::Easy);
  auto prompts = PromptSet::defaults();
  auto p = toy::make_problem(3, {{toy::Op::Add, 4}, {toy::Op::Mul, 2}});
  toy::ToySolverBackend perfect(toy::make_planted_solver(1e-12), prompts.solver.user,
                                toy::SolverConfig::never_notices());
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto q = toy::sample_problem(s, 3);
    CHECK(tier_problem(toy::to_problem(q, "q"), perfect, prompts.solver, cfg, s).tier == Tier::Easy);
  }
  auto always_wrong = ScriptedBackend::from_responses(std::vector<std::string>(4, "\\boxed{0}"));
  CHECK(tier_problem(toy::to_problem(p, "p"), *always_wrong, prompts.solver, cfg, 1).tier ==
        Tier::Unsolvable);
  auto half = ScriptedBackend::from_responses({"3 + 4 = 7\n\n" + kGood, "\\boxed{1}", "\\boxed{2}",
                                               "3 + 4 = 7\n\n" + kGood});
  auto t = tier_problem(toy::to_problem(p, "p"), *half, prompts.solver, cfg, 1);
  CHECK(t.tier == Tier::Medium);
  CHECK(t.successes == 2);
}

TEST_CASE("harvesting correct steps") {
  auto prompts = PromptSet::defaults();
  ValidationConfig cfg;
  auto p = toy::to_problem(toy::make_problem(3, {{toy::Op::Add, 4}, {toy::Op::Mul, 2}}), "p");
  std::string good = "3 + 4 = 7\n\n" + kGood;
  auto easy_solver = ScriptedBackend::from_responses(std::vector<std::string>(4, good));
  auto tiered = tier_problem(p, *easy_solver, prompts.solver, cfg, 3);
  REQUIRE(tiered.tier == Tier::Easy);
  auto h = harvest_correct_steps(p, tiered, *easy_solver, prompts.solver, cfg, 3);
  CHECK(h.size() == 4);
  for (const auto& x : h) {
    CHECK(x.tier == Tier::Easy);
    CHECK(x.prefix.size() == x.step.index);
  }

  auto medium = ScriptedBackend::from_responses(
      {good, "\\boxed{0}", "\\boxed{0}", "\\boxed{0}"});
  auto mt = tier_problem(p, *medium, prompts.solver, cfg, 3);
  REQUIRE(mt.tier == Tier::Medium);
  std::vector<std::string> fresh(16, good);
  fresh[3] = "\\boxed{5}";
  auto resample = ScriptedBackend::from_responses(fresh);
  auto mh = harvest_correct_steps(p, mt, *resample, prompts.solver, cfg, 3);
  CHECK(mh.size() == 15);
  CHECK(resample->remaining() == 0);

  auto one = ScriptedBackend::from_responses(std::vector<std::string>(4, "The answer is \\boxed{14}"));
  auto ot = tier_problem(p, *one, prompts.solver, cfg, 3);
  auto oh = harvest_correct_steps(p, ot, *one, prompts.solver, cfg, 3);
  REQUIRE(oh.size() == 4);
  for (const auto& x : oh) CHECK(x.step.text == "The answer is \\boxed{14}");

  auto none = ScriptedBackend::from_responses({});
  TierResult empty{Tier::Easy, 0, {}};
  CHECK_THROWS_AS(harvest_correct_steps(p, empty, *none, prompts.solver, cfg, 3), SpcError);
}

TEST_CASE("reward assignment is total and zero-sum on the paired critique") {
  using V = std::optional<StepVerdict>;
  const V verdicts[] = {StepVerdict::Correct, StepVerdict::Incorrect, std::nullopt};
  for (bool valid : {true, false})
    for (const auto& v : verdicts)
      for (auto truth : {StepVerdict::Correct, StepVerdict::Incorrect}) {
        ValidationResult vr;
        vr.valid = valid;
        auto r = assign_rewards(vr, {v}, truth);
        CHECK((r.r_sneaky == 1 || r.r_sneaky == -1));
        if (!valid) {
          CHECK(r.r_sneaky == -1);
          CHECK(r.r_critic.empty());
          continue;
        }
        REQUIRE(r.r_critic.size() == 1);
        int want_critic = v && *v == truth ? 1 : -1;
        CHECK(r.r_critic[0] == want_critic);
        CHECK(r.r_sneaky == -r.r_critic[0]);
      }
  ValidationResult ok;
  ok.valid = true;
  CHECK(assign_rewards(ok, {StepVerdict::Incorrect}, StepVerdict::Incorrect) == Rewards{-1, {1}});
  CHECK(assign_rewards(ok, {StepVerdict::Correct}, StepVerdict::Incorrect) == Rewards{1, {-1}});
  CHECK(assign_rewards({}, {}, StepVerdict::Incorrect) == Rewards{-1, {}});
  CHECK_THROWS_AS(assign_rewards(ok, {}, StepVerdict::Incorrect), SpcError);
  auto four = assign_rewards(ok, {StepVerdict::Incorrect, StepVerdict::Correct, std::nullopt,
                                  StepVerdict::Incorrect},
                             StepVerdict::Incorrect);
  CHECK(four.r_critic == std::vector<int>{1, -1, -1, 1});
  CHECK(four.r_sneaky == -1);
}

TEST_CASE("sneaky turn") {
  auto prompts = PromptSet::defaults();
  auto pol = toy::make_sneaky_policy();
  pol.weight(0, 1) = 50.0;  // SignFlip
  toy::ToySneakyBackend sneaky(pol, prompts.sneaky.user);
  auto p = toy::to_problem(toy::make_problem(3, {{toy::Op::Add, 4}, {toy::Op::Mul, 2}}), "p");
  auto st = run_sneaky_turn(p, {}, {0, "3 + 4 = 7"}, sneaky, prompts.sneaky, {1.0, 256, 3});
  CHECK(st.error_type == ErrorType::SignOrUnitError);
  CHECK(st.sneaky_step == "3 - 4 = -1");
  auto parsed = toy::parse_step(st.sneaky_step);
  REQUIRE(parsed.has_value());
  CHECK(toy::oracle_check(*parsed, {}, toy::make_problem(3, {{toy::Op::Add, 4}, {toy::Op::Mul, 2}})) ==
        StepVerdict::Incorrect);

  auto headerless = ScriptedBackend::from_responses({"Transformation: x\nSneaky step: 3 + 4 = 8"});
  try {
    run_sneaky_turn(p, {}, {0, "3 + 4 = 7"}, *headerless, prompts.sneaky, {});
    FAIL("expected ParseFailure");
  } catch (const SpcError& e) {
    CHECK(e.code() == ErrorCode::ParseFailure);
  }
  auto same = ScriptedBackend::from_responses(
      {format_sneaky_output(ErrorType::CalculationError, "none", "3 + 4 = 7")});
  try {
    run_sneaky_turn(p, {}, {0, "3 + 4 = 7"}, *same, prompts.sneaky, {});
    FAIL("expected IdenticalStep");
  } catch (const SpcError& e) {
    CHECK(e.code() == ErrorCode::IdenticalStep);
  }
}

TEST_CASE("critic turn") {
  auto prompts = PromptSet::defaults();
  CritiqueRequest req{toy_problem(), {}, {0, "3 + 4 = 8"}};
  MockBackend mock;
  CHECK(run_critic_turn(req, mock, prompts.critic, 4, {1.0, 64, 1}).size() == 4);
  auto one = ScriptedBackend::from_responses({"The sum is off by one, so the step is incorrect."});
  auto c = run_critic_turn(req, *one, prompts.critic, 1, {}, StepVerdict::Incorrect);
  CHECK(c[0].verdict == StepVerdict::Incorrect);
  CHECK(c[0].critic_correct);
  auto mute = ScriptedBackend::from_responses({"Hmm."});
  auto m = run_critic_turn(req, *mute, prompts.critic, 1, {}, StepVerdict::Incorrect);
  CHECK_FALSE(m[0].verdict.has_value());
  CHECK_FALSE(m[0].critic_correct);
}

TEST_CASE("play_round matches a hand-traced golden round") {
  auto prompts = PromptSet::defaults();
  GameConfig cfg;
  cfg.k_critiques = 2;
  cfg.validation.n_completions = 2;
  auto problem = toy_problem();
  std::vector<GameInstance> instances = {
      {"g-a", problem, Tier::Medium, {}, {0, "3 + 4 = 7"}},
      {"g-b", problem, Tier::Easy, {}, {0, "3 + 4 = 7"}},
  };
  auto attack = format_sneaky_output(ErrorType::CalculationError, "add one to the result", "3 + 4 = 8");
  auto identical = format_sneaky_output(ErrorType::LogicalError, "keep it", "3 + 4 = 7");
  auto sneaky = ScriptedBackend::from_responses({attack, identical});
  auto solver = planted_solver(2, 2, 0);
  auto critic = ScriptedBackend::from_responses(
      {"Looks right.\nConclusion: the step is correct.", "3 + 4 is 7.\nConclusion: the step is incorrect."});
  RoundTag tag{"S0", "C0"};
  auto records = play_round(instances, {sneaky.get(), critic.get(), solver.get()}, prompts, cfg, tag, 21);

  GameRecord a;
  a.instance_id = "g-a";
  a.problem = problem;
  a.difficulty = Tier::Medium;
  a.original_step = {0, "3 + 4 = 7"};
  a.sneaky_output = attack;
  a.sneaky_transformation =
      SneakyTransformation{ErrorType::CalculationError, "add one to the result", "3 + 4 = 8", attack, std::nullopt};
  ValidationResult v;
  v.n = 2;
  v.original_successes = 2;
  v.sneaky_successes = 0;
  v.original_clean = 2;
  v.sneaky_clean = 2;
  v.valid = true;
  v.original_rollouts = {{"14", true, false, ""}, {"14", true, false, ""}};
  v.sneaky_rollouts = {{"16", false, false, ""}, {"16", false, false, ""}};
  a.validation = v;
  a.critiques = {{"Looks right.\nConclusion: the step is correct.", StepVerdict::Correct, false, std::nullopt},
                 {"3 + 4 is 7.\nConclusion: the step is incorrect.", StepVerdict::Incorrect, true, std::nullopt}};
  a.r_sneaky = 1;
  a.r_critic = {-1, 1};
  a.outcome = SneakyOutcome::FooledCritic;
  a.round_tag = tag;

  GameRecord b;
  b.instance_id = "g-b";
  b.problem = problem;
  b.difficulty = Tier::Easy;
  b.original_step = {0, "3 + 4 = 7"};
  b.sneaky_output = identical;
  b.sneaky_transformation = SneakyTransformation{ErrorType::LogicalError, "keep it", "3 + 4 = 7", identical, std::nullopt};
  b.sneaky_failure = "IdenticalStep: sneaky step is identical to the original step";
  b.r_sneaky = -1;
  b.outcome = SneakyOutcome::InvalidAttack;
  b.round_tag = tag;

  REQUIRE(records.size() == 2);
  CHECK(json(records[0]).dump() == json(a).dump());
  CHECK(json(records[1]).dump() == json(b).dump());
  CHECK(sneaky->remaining() == 0);
  CHECK(critic->remaining() == 0);
  CHECK(solver->remaining() == 0);
  // every invalid record has no critiques
  for (const auto& r : records)
    if (!r.validation || !r.validation->valid) CHECK(r.critiques.empty());
  auto sum = summarize(records);
  CHECK(sum.fooled == 1);
  CHECK(sum.invalid_attack == 1);
  CHECK(sum.sneaky_win_rate() == 1.0);
}

TEST_CASE("identical-step sneaky yields only invalid attacks and no critic calls") {
  auto prompts = PromptSet::defaults();
  GameConfig cfg;
  std::vector<GameInstance> instances;
  for (int i = 0; i < 5; ++i)
    instances.push_back({"i" + std::to_string(i), toy_problem(), Tier::Easy, {}, {0, "3 + 4 = 7"}});
  auto same = format_sneaky_output(ErrorType::CalculationError, "none", "3 + 4 = 7");
  auto sneaky = ScriptedBackend::from_responses(std::vector<std::string>(5, same));
  auto critic = ScriptedBackend::from_responses({});
  auto solver = ScriptedBackend::from_responses({});
  auto recs = play_round(instances, {sneaky.get(), critic.get(), solver.get()}, prompts, cfg, {"S", "C"}, 1);
  CHECK(recs.size() == 5);
  for (const auto& r : recs) CHECK(r.outcome == SneakyOutcome::InvalidAttack);
  CHECK(critic->consumed().empty());
}

TEST_CASE("failed instances are isolated as error records") {
  auto prompts = PromptSet::defaults();
  GameConfig cfg;
  cfg.validation.n_completions = 1;
  std::vector<GameInstance> instances = {{"x", toy_problem(), Tier::Easy, {}, {0, "3 + 4 = 7"}},
                                         {"y", toy_problem(), Tier::Easy, {}, {0, "3 + 4 = 7"}}};
  auto sneaky = ScriptedBackend::from_responses(
      {format_sneaky_output(ErrorType::CalculationError, "t", "3 + 4 = 8")});
  auto critic = ScriptedBackend::from_responses({});
  auto solver = ScriptedBackend::from_responses({});
  auto recs = play_round(instances, {sneaky.get(), critic.get(), solver.get()}, prompts, cfg, {"S", "C"}, 1);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].outcome == SneakyOutcome::InvalidAttack);  // rollouts failed, never valid
  CHECK(recs[1].error.has_value());
  CHECK_FALSE(recs[1].outcome.has_value());
}

TEST_CASE("toy round with an oracle critic never lets the sneaky win") {
  auto prompts = PromptSet::defaults();
  GameConfig cfg;
  cfg.k_critiques = 2;
  auto solver = std::make_shared<toy::ToySolverBackend>(toy::make_planted_solver(0.02), prompts.solver.user);
  toy::ToySneakyBackend sneaky(toy::make_sneaky_policy(), prompts.sneaky.user);
  toy::OracleCriticBackend oracle(prompts.critic.user);
  std::vector<GameInstance> instances;
  for (std::uint64_t s = 0; s < 40; ++s) {
    auto q = toy::sample_problem(s, 3);
    auto sol = toy::correct_solution(q);
    auto steps = toy::render_steps(q, sol);
    instances.push_back({"t" + std::to_string(s), toy::to_problem(q, "t"), Tier::Easy,
                         {steps.begin(), steps.begin() + 1}, steps[1]});
  }
  auto recs = play_round(instances, {&sneaky, &oracle, solver.get()}, prompts, cfg, {"S0", "oracle"}, 9);
  auto sum = summarize(recs);
  CHECK(sum.valid() > 0);
  CHECK(sum.fooled == 0);
  CHECK(sum.sneaky_win_rate() == 0.0);
}
