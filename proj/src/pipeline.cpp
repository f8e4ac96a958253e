#include "spc/pipeline.hpp"

#include <set>

#include "spc/hash.hpp"
#include "spc/jsonl.hpp"
#include "spc/rng.hpp"

namespace spc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Plans and config
// ---------------------------------------------------------------------------

void to_json(json& j, const RoundPlan& p) {
  json train = json::array();
  for (const auto& t : p.train)
    train.push_back({{"role", to_string(t.role)}, {"from", t.from}, {"to", t.to}});
  json mix = json::array();
  for (const auto& m : p.dataset_mix) mix.push_back({{"round", m.round}, {"weight", m.weight}});
  j = json{{"round_index", p.round_index},
           {"sneaky_version", p.sneaky_version},
           {"critic_version", p.critic_version},
           {"train", train},
           {"dataset_mix", mix},
           {"seed", p.seed ? json(*p.seed) : json(nullptr)}};
}

void from_json(const json& j, RoundPlan& p) {
  p = RoundPlan{};
  p.round_index = j.at("round_index").get<int>();
  p.sneaky_version = j.at("sneaky_version").get<std::string>();
  p.critic_version = j.at("critic_version").get<std::string>();
  for (const auto& t : j.value("train", json::array()))
    p.train.push_back({parse_role(t.at("role").get<std::string>()), t.at("from").get<std::string>(),
                       t.at("to").get<std::string>()});
  for (const auto& m : j.value("dataset_mix", json::array()))
    p.dataset_mix.push_back({m.at("round").get<int>(), m.value("weight", 1.0)});
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::uint64_t>();
}

std::vector<RoundPlan> default_schedule() {
  RoundPlan r1;
  r1.round_index = 1;
  r1.sneaky_version = "S0";
  r1.critic_version = "C0";
  r1.train = {{Role::Sneaky, "S0", "S1"}, {Role::Critic, "C0", "C1"}};
  r1.dataset_mix = {{1, 1.0}};
  RoundPlan r2;
  r2.round_index = 2;
  r2.sneaky_version = "S1";
  r2.critic_version = "C0";
  r2.train = {{Role::Sneaky, "S0", "S2"}, {Role::Critic, "C0", "C2"}};
  r2.dataset_mix = {{1, 1.0}, {2, 1.0}};
  return {r1, r2};
}

std::vector<RoundPlan> load_schedule(const fs::path& path) {
  auto j = read_json_file(path);
  const auto& rounds = j.contains("rounds") ? j["rounds"] : j;
  return rounds.get<std::vector<RoundPlan>>();
}

void save_schedule(const fs::path& path, const std::vector<RoundPlan>& plans) {
  write_json_file(path, json{{"rounds", plans}});
}

void to_json(json& j, const ToyWorldConfig& c) {
  j = json{{"problems_per_round", c.problems_per_round},
           {"min_difficulty", c.min_difficulty},
           {"max_difficulty", c.max_difficulty},
           {"solver_error_rate", c.solver_error_rate},
           {"solver", c.solver},
           {"critic_features", c.critic_features},
           {"sft_critic_pairs", c.sft_critic_pairs},
           {"sft_sneaky_pairs", c.sft_sneaky_pairs},
           {"sneaky_init_mix", c.sneaky_init_mix},
           {"sft_epochs", c.sft_epochs},
           {"sft_learning_rate", c.sft_learning_rate},
           {"probe_pairs", c.probe_pairs},
           {"matchup_problems", c.matchup_problems}};
}

void from_json(const json& j, ToyWorldConfig& c) {
  c = ToyWorldConfig{};
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) j[key].get_to(dst);
  };
  get("problems_per_round", c.problems_per_round);
  get("min_difficulty", c.min_difficulty);
  get("max_difficulty", c.max_difficulty);
  get("solver_error_rate", c.solver_error_rate);
  get("solver", c.solver);
  get("critic_features", c.critic_features);
  get("sft_critic_pairs", c.sft_critic_pairs);
  get("sft_sneaky_pairs", c.sft_sneaky_pairs);
  get("sneaky_init_mix", c.sneaky_init_mix);
  get("sft_epochs", c.sft_epochs);
  get("sft_learning_rate", c.sft_learning_rate);
  get("probe_pairs", c.probe_pairs);
  get("matchup_problems", c.matchup_problems);
}

void PipelineConfig::validate() const {
  game.validate();
  rl.validate();
  if (critic_dataset.target_size <= 0 || sneaky_dataset_size <= 0)
    throw SpcError(ErrorCode::InvalidArgument, "dataset sizes must be positive");
  if (toy.min_difficulty < toy::kMinOps || toy.max_difficulty > toy::kMaxOps ||
      toy.min_difficulty > toy.max_difficulty)
    throw SpcError(ErrorCode::DifficultyOutOfRange, "toy difficulty range must lie within [2, 8]");
  if (toy.problems_per_round <= 0) throw SpcError(ErrorCode::InvalidArgument, "problems_per_round must be positive");
  if (!(toy.solver_error_rate > 0.0 && toy.solver_error_rate < 1.0))
    throw SpcError(ErrorCode::InvalidArgument, "solver_error_rate must be in (0, 1)");
  if (workers == 0) throw SpcError(ErrorCode::InvalidArgument, "workers must be positive");
}

void to_json(json& j, const PipelineConfig& c) {
  j = json{{"seed", c.seed},
           {"game", c.game},
           {"critic_dataset", {{"target_size", c.critic_dataset.target_size}, {"pairing", c.critic_dataset.pairing}}},
           {"sneaky_dataset_size", c.sneaky_dataset_size},
           {"rl", c.rl},
           {"toy", c.toy},
           {"solver_version", c.solver_version},
           {"eval_temperature", c.eval_temperature},
           {"workers", c.workers}};
}

void from_json(const json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("game")) c.game = j["game"].get<GameConfig>();
  if (j.contains("critic_dataset")) {
    const auto& d = j["critic_dataset"];
    c.critic_dataset.target_size = d.value("target_size", c.critic_dataset.target_size);
    c.critic_dataset.pairing = d.value("pairing", c.critic_dataset.pairing);
  }
  if (j.contains("sneaky_dataset_size")) c.sneaky_dataset_size = j["sneaky_dataset_size"].get<int>();
  if (j.contains("rl")) c.rl = j["rl"].get<RlConfig>();
  if (j.contains("toy")) c.toy = j["toy"].get<ToyWorldConfig>();
  if (j.contains("solver_version")) c.solver_version = j["solver_version"].get<std::string>();
  if (j.contains("eval_temperature")) c.eval_temperature = j["eval_temperature"].get<double>();
  if (j.contains("workers")) c.workers = j["workers"].get<std::size_t>();
}

// ---------------------------------------------------------------------------
// Backends and instances
// ---------------------------------------------------------------------------

BackendPtr make_version_backend(const SnapshotRegistry& registry, std::string_view version,
                                const PromptSet& prompts, const PipelineConfig& cfg) {
  const auto& e = registry.entry(version);
  if (e.kind == "external") return make_backend(registry.load_snapshot_json(version).get<BackendConfig>());
  auto policy = registry.load_policy(version);
  switch (e.role) {
    case Role::Critic:
      return std::make_shared<toy::ToyCriticBackend>(std::move(policy), prompts.critic.user,
                                                     cfg.toy.critic_features);
    case Role::Sneaky:
      return std::make_shared<toy::ToySneakyBackend>(std::move(policy), prompts.sneaky.user);
    case Role::Solver:
      return std::make_shared<toy::ToySolverBackend>(std::move(policy), prompts.solver.user,
                                                     cfg.toy.solver);
  }
  throw SpcError(ErrorCode::RegistryError, "unhandled role");
}

namespace {

bool toy_step_verifier(const Problem& p, const std::vector<Step>& prefix, const Step& step) {
  auto tp = toy::parse_statement(p.statement);
  auto pre = toy::parse_steps(prefix);
  auto st = toy::parse_step(step.text);
  if (!tp || !pre || !st) return false;
  try {
    return toy::oracle_check(*st, *pre, *tp) == StepVerdict::Correct;
  } catch (const SpcError&) {
    return false;
  }
}

Problem toy_problem_at(const PipelineConfig& cfg, std::uint64_t seed, std::size_t i,
                       const std::string& id) {
  Rng rng(derive_seed(derive_seed(seed, "problem"), i));
  auto span = static_cast<std::size_t>(cfg.toy.max_difficulty - cfg.toy.min_difficulty + 1);
  int d = cfg.toy.min_difficulty + static_cast<int>(rng.uniform_index(span));
  return toy::to_problem(toy::sample_problem(rng.next(), d), id);
}

}  // namespace

std::vector<GameInstance> build_toy_instances(int n_problems, Backend& solver,
                                              const PromptSet& prompts, const PipelineConfig& cfg,
                                              std::uint64_t seed, const std::string& id_prefix) {
  Executor executor(cfg.workers);
  auto n = static_cast<std::size_t>(n_problems);
  std::vector<std::vector<GameInstance>> per(n);
  const auto& vcfg = cfg.game.validation;
  executor.parallel_for(n, [&](std::size_t i) {
    auto pid = id_prefix + "-p" + std::to_string(i);
    auto problem = toy_problem_at(cfg, seed, i, pid);
    auto tiered = tier_problem(problem, solver, prompts.solver, vcfg,
                               derive_seed(derive_seed(seed, "tier"), i));
    if (tiered.tier == Tier::Unsolvable) return;
    std::vector<HarvestedStep> steps;
    try {
      steps = harvest_correct_steps(problem, tiered, solver, prompts.solver, vcfg,
                                    derive_seed(derive_seed(seed, "harvest"), i), toy_step_verifier);
    } catch (const SpcError& e) {
      if (e.code() != ErrorCode::NoCorrectSolutions) throw;
      return;
    }
    for (std::size_t j = 0; j < steps.size(); ++j)
      per[i].push_back({pid + "-s" + std::to_string(j), problem, steps[j].tier, steps[j].prefix,
                        steps[j].step});
  });
  std::vector<GameInstance> all;
  for (auto& v : per)
    for (auto& g : v) all.push_back(std::move(g));
  std::vector<Tier> tiers;
  for (const auto& g : all) tiers.push_back(g.difficulty);
  auto sel = select_difficulty_mix(tiers, vcfg.medium_fraction, derive_seed(seed, "mix"));
  std::vector<GameInstance> out;
  for (auto i : sel.kept) out.push_back(std::move(all[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

json InitReport::to_json() const {
  return json{{"sneaky", sneaky.to_json()}, {"critic", critic.to_json()}};
}

namespace {

struct ToyPoint {
  toy::ToyProblem problem;
  std::vector<toy::ToyStep> prefix;
  toy::ToyStep step;
  Problem as_problem;
  std::vector<Step> prefix_steps;
};

ToyPoint random_point(const PipelineConfig& cfg, std::uint64_t seed, std::size_t i,
                      const std::string& id) {
  ToyPoint pt;
  pt.as_problem = toy_problem_at(cfg, seed, i, id);
  pt.problem = *toy::parse_statement(pt.as_problem.statement);
  auto sol = toy::correct_solution(pt.problem);
  Rng rng(derive_seed(derive_seed(seed, "position"), i));
  auto k = rng.uniform_index(sol.size());
  pt.prefix.assign(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(k));
  pt.step = sol[k];
  pt.prefix_steps = toy::render_steps(pt.problem, pt.prefix);
  return pt;
}

bool is_terminal(const ToyPoint& pt) { return pt.prefix.size() + 1 == pt.problem.ops.size(); }

// First action in the rotation starting at `first` that changes the step.
std::optional<std::pair<toy::PerturbationAction, toy::ToyStep>> perturb(
    const toy::ToyStep& step, const std::vector<toy::PerturbationAction>& actions, std::size_t first) {
  for (std::size_t t = 0; t < actions.size(); ++t) {
    auto a = actions[(first + t) % actions.size()];
    try {
      return std::make_pair(a, toy::apply_perturbation(step, a));
    } catch (const SpcError&) {
    }
  }
  return std::nullopt;
}

RlConfig sft_config(const PipelineConfig& cfg) {
  auto rl = cfg.rl;
  rl.epochs_sft = cfg.toy.sft_epochs;
  rl.learning_rate_sft = cfg.toy.sft_learning_rate;
  return rl;
}

}  // namespace

InitReport toy_init_sft(SnapshotRegistry& registry, const PromptSet& prompts,
                        const PipelineConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  auto seed = derive_seed(cfg.seed, "init-sft");
  InitReport report;

  Provenance solver_prov;
  solver_prov.note = "planted solver, per-step error rate " + std::to_string(cfg.toy.solver_error_rate);
  registry.register_policy(Role::Solver, cfg.solver_version,
                           toy::make_planted_solver(cfg.toy.solver_error_rate), solver_prov);

  // Critic: correct steps against arithmetic slips only.
  std::vector<RawPair> critic_raw;
  auto cseed = derive_seed(seed, "critic");
  const std::vector<toy::PerturbationAction> slips = {toy::PerturbationAction::OffByOne,
                                                      toy::PerturbationAction::CopyPreviousResult};
  for (int i = 0; i < cfg.toy.sft_critic_pairs; ++i) {
    auto idx = static_cast<std::size_t>(i);
    auto pt = random_point(cfg, cseed, idx, "init-c" + std::to_string(i));
    bool wrong = i % 2 == 1;
    auto step = pt.step;
    if (wrong) {
      auto p = perturb(pt.step, slips, static_cast<std::size_t>(i / 2) % slips.size());
      if (!p) continue;
      step = p->second;
    }
    auto verdict = wrong ? StepVerdict::Incorrect : StepVerdict::Correct;
    RawPair r;
    r.fields = make_fields(pt.as_problem, pt.prefix_steps,
                           Step{pt.prefix.size(), toy::format_step(step, is_terminal(pt))});
    r.output = format_critique(toy::critique_analysis(pt.problem, pt.prefix, step), verdict);
    r.truth = verdict;
    critic_raw.push_back(std::move(r));
  }
  auto critic_corpus = assemble_sft_corpus(Role::Critic, critic_raw, prompts, cseed);
  write_jsonl(out_dir / "critic_sft.jsonl", to_json_lines(critic_corpus));
  auto critic = train_round(toy::make_critic_policy(), critic_corpus,
                            toy::critic_encoder(prompts.critic.user, cfg.toy.critic_features),
                            sft_config(cfg), TrainMode::Sft, derive_seed(cseed, "train"));
  report.critic = critic.report;

  // Sneaky: skewed toward blatant edits.
  std::vector<RawPair> sneaky_raw;
  auto sseed = derive_seed(seed, "sneaky");
  std::vector<toy::PerturbationAction> all(toy::kAllPerturbations.begin(), toy::kAllPerturbations.end());
  for (int i = 0; i < cfg.toy.sft_sneaky_pairs; ++i) {
    auto idx = static_cast<std::size_t>(i);
    auto pt = random_point(cfg, sseed, idx, "init-s" + std::to_string(i));
    Rng rng(derive_seed(derive_seed(sseed, "action"), idx));
    auto a = sample_categorical(cfg.toy.sneaky_init_mix, rng.uniform01());
    auto p = perturb(pt.step, all, a);
    if (!p) continue;
    RawPair r;
    r.fields = make_fields(pt.as_problem, pt.prefix_steps,
                           Step{pt.prefix.size(), toy::format_step(pt.step, is_terminal(pt))});
    r.output = format_sneaky_output(toy::error_type_of(p->first),
                                    toy::transformation_text(pt.step, p->first),
                                    toy::format_step(p->second, is_terminal(pt)));
    sneaky_raw.push_back(std::move(r));
  }
  auto sneaky_corpus = assemble_sft_corpus(Role::Sneaky, sneaky_raw, prompts, sseed);
  write_jsonl(out_dir / "sneaky_sft.jsonl", to_json_lines(sneaky_corpus));
  auto sneaky = train_round(toy::make_sneaky_policy(), sneaky_corpus,
                            toy::sneaky_encoder(prompts.sneaky.user), sft_config(cfg),
                            TrainMode::Sft, derive_seed(sseed, "train"));
  report.sneaky = sneaky.report;

  auto corpus_ref = [&](const char* name) {
    auto path = out_dir / name;
    return ArtifactRef{path.filename().string(), sha256_file(path)};
  };
  Provenance cprov{std::nullopt, {}, {corpus_ref("critic_sft.jsonl")}, "toy SFT initialization"};
  Provenance sprov{std::nullopt, {}, {corpus_ref("sneaky_sft.jsonl")}, "toy SFT initialization"};
  registry.register_policy(Role::Critic, "C0", critic.policy, cprov);
  registry.register_policy(Role::Sneaky, "S0", sneaky.policy, sprov);
  write_json_file(out_dir / "init_report.json", report.to_json());
  return report;
}

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

std::vector<CritiqueRecord> critique_pool(const std::vector<GameRecord>& records,
                                          const std::vector<CritiqueRecord>& genuine) {
  std::vector<CritiqueRecord> pool;
  for (const auto& g : genuine)
    if (!g.error) pool.push_back(g);
  for (const auto& r : records)
    if (r.outcome && *r.outcome != SneakyOutcome::InvalidAttack) pool.push_back(as_critique_record(r));
  return pool;
}

void validate_schedule(const std::vector<RoundPlan>& plans, const SnapshotRegistry& registry) {
  auto fail = [](const std::string& msg) { throw SpcError(ErrorCode::PlanValidation, msg); };
  std::map<std::string, Role> known;
  for (const auto& e : registry.entries()) known[e.version] = e.role;
  std::set<int> rounds;
  std::set<std::string> produced;
  int last = 0;
  for (const auto& p : plans) {
    auto where = "round " + std::to_string(p.round_index) + ": ";
    if (p.round_index <= last) fail(where + "round indices must increase");
    last = p.round_index;
    auto need = [&](const std::string& v, Role role, const char* what) {
      auto it = known.find(v);
      if (it == known.end()) fail(where + what + " version " + v + " does not exist");
      if (it->second != role)
        fail(where + what + " version " + v + " is a " + std::string(to_string(it->second)));
    };
    need(p.sneaky_version, Role::Sneaky, "sneaky");
    need(p.critic_version, Role::Critic, "critic");
    rounds.insert(p.round_index);
    if (p.train.empty()) fail(where + "nothing to train");
    for (const auto& t : p.train) {
      if (t.role == Role::Solver) fail(where + "the solver is fixed and cannot be trained");
      need(t.from, t.role, "initial");
      if (!produced.insert(t.to).second) fail(where + "version " + t.to + " is produced twice");
      if (registry.contains(t.to) && registry.entry(t.to).provenance.round != p.round_index)
        fail(where + "version " + t.to + " already exists");
      known[t.to] = t.role;
    }
    if (p.dataset_mix.empty()) fail(where + "empty dataset mix");
    for (const auto& m : p.dataset_mix) {
      if (!rounds.count(m.round)) fail(where + "dataset mix names unknown round " + std::to_string(m.round));
      if (m.weight < 0.0) fail(where + "negative mix weight");
    }
  }
}

namespace {

fs::path round_dir(const fs::path& run_dir, int r) {
  return run_dir / "rounds" / ("round_" + std::to_string(r));
}

const char* dataset_file(Role role) {
  return role == Role::Critic ? "critic_dataset.jsonl" : "sneaky_dataset.jsonl";
}


json run_round(const RoundPlan& plan, SnapshotRegistry& registry, const PromptSet& prompts,
               const PipelineConfig& cfg, const fs::path& run_dir, const StageHook& hook) {
  auto dir = round_dir(run_dir, plan.round_index);
  fs::create_directories(dir);
  auto rs = plan.seed.value_or(derive_seed(derive_seed(cfg.seed, "round"),
                                           static_cast<std::uint64_t>(plan.round_index)));
  auto stage = [&](std::string_view s) {
    if (hook) hook(plan.round_index, s);
  };
  Executor executor(cfg.workers);
  auto solver = make_version_backend(registry, cfg.solver_version, prompts, cfg);
  auto sneaky = make_version_backend(registry, plan.sneaky_version, prompts, cfg);
  auto critic = make_version_backend(registry, plan.critic_version, prompts, cfg);

  auto instances = build_toy_instances(cfg.toy.problems_per_round, *solver, prompts, cfg,
                                       derive_seed(rs, "instances"), "r" + std::to_string(plan.round_index));
  write_jsonl(dir / "instances.jsonl", to_json_lines(instances));
  stage("instances");

  RoundTag tag{plan.sneaky_version, plan.critic_version};
  auto records = play_round(instances, {sneaky.get(), critic.get(), solver.get()}, prompts, cfg.game,
                            tag, derive_seed(rs, "game"), executor);
  auto genuine = critique_genuine_steps(instances, *critic, prompts, cfg.game, tag,
                                        derive_seed(rs, "genuine"), executor);
  write_jsonl(dir / "game_records.jsonl", to_json_lines(records));
  write_jsonl(dir / "genuine_critiques.jsonl", to_json_lines(genuine));
  stage("game");

  auto critic_ds = build_critic_dataset(critique_pool(records, genuine), prompts, cfg.critic_dataset, derive_seed(rs, "critic-data"));
  auto sneaky_ds = build_sneaky_dataset(records, prompts, cfg.sneaky_dataset_size, derive_seed(rs, "sneaky-data"));
  write_jsonl(dir / dataset_file(Role::Critic), to_json_lines(critic_ds.samples));
  write_json_file(dir / "critic_dataset.manifest.json", critic_ds.manifest.to_json());
  write_jsonl(dir / dataset_file(Role::Sneaky), to_json_lines(sneaky_ds.samples));
  write_json_file(dir / "sneaky_dataset.manifest.json", sneaky_ds.manifest.to_json());
  stage("datasets");

  json trained = json::object();
  for (const auto& t : plan.train) {
    std::vector<std::pair<std::vector<TrainingSample>, double>> parts;
    Provenance prov;
    prov.round = plan.round_index;
    prov.parents = {t.from};
    std::set<std::string> parents{t.from};
    for (const auto& m : plan.dataset_mix) {
      auto mdir = round_dir(run_dir, m.round);
      auto path = mdir / dataset_file(t.role);
      parts.emplace_back(from_json_lines<TrainingSample>(read_jsonl(path)), m.weight);
      auto manifest = mdir / (t.role == Role::Critic ? "critic_dataset.manifest.json" : "sneaky_dataset.manifest.json");
      prov.datasets.push_back({fs::relative(manifest, run_dir).generic_string(), sha256_file(manifest)});
      prov.datasets.push_back({fs::relative(path, run_dir).generic_string(), sha256_file(path)});
      auto played = read_json_file(mdir / "round_tag.json");
      for (const char* key : {"sneaky_version", "critic_version"}) {
        auto v = played.at(key).get<std::string>();
        if (parents.insert(v).second) prov.parents.push_back(v);
      }
    }
    auto samples = mix_datasets(parts, derive_seed(derive_seed(rs, "mix"), t.to));
    auto init = registry.load_policy(t.from);
    auto encoder = t.role == Role::Critic
                       ? toy::critic_encoder(prompts.critic.user, cfg.toy.critic_features)
                       : toy::sneaky_encoder(prompts.sneaky.user);
    auto res = train_round(init, samples, encoder, cfg.rl, TrainMode::Rl,
                           derive_seed(derive_seed(rs, "train"), t.to), dir / "train" / t.to);
    write_json_file(dir / "train" / t.to / "report.json", res.report.to_json());
    registry.register_policy(t.role, t.to, res.policy, prov);
    trained[t.to] = res.report.to_json();
    stage("train:" + t.to);
  }

  json report{{"round_index", plan.round_index},
              {"plan", plan},
              {"instances", instances.size()},
              {"game", summarize(records).to_json()},
              {"critic_dataset", critic_ds.manifest.to_json()},
              {"sneaky_dataset", sneaky_ds.manifest.to_json()},
              {"trained", trained}};
  std::vector<std::string> versions;
  for (const auto& t : plan.train) versions.push_back(t.to);
  report["evaluation"] = evaluate_versions(registry, versions, prompts, cfg);
  stage("report");
  write_json_file(dir / "round_report.json", report);
  return report;
}

}  // namespace

ScheduleResult run_schedule(const std::vector<RoundPlan>& plans, SnapshotRegistry& registry,
                            const PromptSet& prompts, const PipelineConfig& cfg,
                            const fs::path& run_dir, const StageHook& hook) {
  cfg.validate();
  validate_schedule(plans, registry);
  if (!registry.contains(cfg.solver_version))
    throw SpcError(ErrorCode::PlanValidation, "solver version " + cfg.solver_version + " does not exist");
  ScheduleResult out;
  for (const auto& plan : plans) {
    auto dir = round_dir(run_dir, plan.round_index);
    if (fs::exists(dir / "round_report.json")) {
      auto done = read_json_file(dir / "round_report.json");
      if (done.at("plan").get<RoundPlan>() != plan)
        throw SpcError(ErrorCode::PlanValidation, "round " + std::to_string(plan.round_index) +
                                                      " was completed with a different plan");
      out.round_reports.push_back(done);
      out.skipped_rounds.push_back(plan.round_index);
      continue;
    }
    try {
      fs::create_directories(dir);
      fs::remove(dir / "halted.json");
      write_json_file(dir / "round_tag.json", json{{"sneaky_version", plan.sneaky_version},
                                                    {"critic_version", plan.critic_version}});
      out.round_reports.push_back(run_round(plan, registry, prompts, cfg, run_dir, hook));
    } catch (const std::exception& e) {
      write_json_file(dir / "halted.json", json{{"round_index", plan.round_index}, {"error", e.what()}});
      throw;
    }
  }
  json summary{{"rounds", out.round_reports}, {"registry", registry.entries()}};
  write_json_file(run_dir / "schedule_report.json", summary);
  return out;
}

// ---------------------------------------------------------------------------
// Matchups and evaluation
// ---------------------------------------------------------------------------

json MatchupReport::to_json() const {
  auto j = summary.to_json();
  j["sneaky_version"] = sneaky_version;
  j["critic_version"] = critic_version;
  return j;
}

MatchupReport matchup_report(Backend& sneaky, Backend& critic, Backend& solver,
                             const std::vector<GameInstance>& instances, const PromptSet& prompts,
                             const GameConfig& cfg, const RoundTag& tag, std::uint64_t seed,
                             const Executor& executor) {
  auto records = play_round(instances, {&sneaky, &critic, &solver}, prompts, cfg, tag, seed, executor);
  return MatchupReport{tag.sneaky_version, tag.critic_version, summarize(records)};
}

std::vector<ProbeRecord> toy_probe_set(const PipelineConfig& cfg) {
  auto seed = derive_seed(cfg.seed, "held-out-probes");
  auto corpus = toy_labeled_corpus(cfg.toy.probe_pairs, cfg.toy.probe_pairs, cfg.toy.min_difficulty,
                                   cfg.toy.max_difficulty, seed);
  CorpusAdapter adapter;
  adapter.tag = "toyworld";
  return build_probes(corpus, adapter, seed).probes;
}

std::vector<Problem> toy_search_problems(int n, const PipelineConfig& cfg, std::uint64_t seed) {
  std::vector<Problem> out;
  auto span = static_cast<std::size_t>(cfg.toy.max_difficulty - cfg.toy.min_difficulty + 1);
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(derive_seed(seed, "problem"), static_cast<std::uint64_t>(i)));
    int d = cfg.toy.min_difficulty + static_cast<int>(rng.uniform_index(span));
    out.push_back(toy::to_problem(toy::sample_problem(rng.next(), d), "search-" + std::to_string(i)));
  }
  return out;
}

json evaluate_versions(const SnapshotRegistry& registry, const std::vector<std::string>& versions,
                       const PromptSet& prompts, const PipelineConfig& cfg) {
  json out = json::object();
  Executor executor(cfg.workers);
  std::optional<std::vector<ProbeRecord>> probes;
  std::optional<std::vector<GameInstance>> held_out;
  BackendPtr solver, reference_critic;
  auto eval_seed = derive_seed(cfg.seed, "evaluation");
  for (const auto& v : versions) {
    const auto& e = registry.entry(v);
    auto backend = make_version_backend(registry, v, prompts, cfg);
    if (e.role == Role::Critic) {
      if (!probes) probes = toy_probe_set(cfg);
      auto r = evaluate_critic(*probes, *backend, prompts.critic,
                               {cfg.eval_temperature, cfg.game.max_tokens, derive_seed(eval_seed, "critic")},
                               executor);
      out[v] = {{"role", "critic"}, {"accuracy", r.average}, {"report", r.to_json()}};
    } else if (e.role == Role::Sneaky) {
      if (!solver) solver = make_version_backend(registry, cfg.solver_version, prompts, cfg);
      if (!reference_critic) reference_critic = make_version_backend(registry, "C0", prompts, cfg);
      if (!held_out)
        held_out = build_toy_instances(cfg.toy.matchup_problems, *solver, prompts, cfg,
                                       derive_seed(eval_seed, "matchup"), "eval");
      auto m = matchup_report(*backend, *reference_critic, *solver, *held_out, prompts, cfg.game,
                              {v, "C0"}, derive_seed(eval_seed, "sneaky"), executor);
      out[v] = {{"role", "sneaky"},
                {"attack_success_rate", m.summary.attack_success_rate()},
                {"win_rate_vs_C0", m.summary.sneaky_win_rate()},
                {"matchup", m.to_json()}};
    }
  }
  return out;
}

json PairingAblation::to_json() const {
  return json{{"samples", samples},
              {"paired_accuracy", paired_accuracy},
              {"unpaired_accuracy", unpaired_accuracy},
              {"paired", paired.to_json()},
              {"unpaired", unpaired.to_json()}};
}

PairingAblation pairing_ablation(const SnapshotRegistry& registry, const std::string& init_version,
                                 const fs::path& round_dir, const PromptSet& prompts,
                                 const PipelineConfig& cfg) {
  auto records = from_json_lines<GameRecord>(read_jsonl(round_dir / "game_records.jsonl"));
  auto genuine = from_json_lines<CritiqueRecord>(read_jsonl(round_dir / "genuine_critiques.jsonl"));
  auto pool = critique_pool(records, genuine);
  auto seed = derive_seed(cfg.seed, "pairing-ablation");

  auto build = [&](bool pairing, int target) {
    CriticDatasetConfig dc{target, pairing};
    return build_critic_dataset(pool, prompts, dc, derive_seed(seed, "data"));
  };
  auto paired = build(true, cfg.critic_dataset.target_size);
  auto unpaired = build(false, cfg.critic_dataset.target_size);
  auto n = std::min(paired.samples.size(), unpaired.samples.size());
  if (paired.samples.size() != n) paired = build(true, static_cast<int>(n));
  if (unpaired.samples.size() != n) unpaired = build(false, static_cast<int>(n));
  if (paired.samples.size() != unpaired.samples.size())
    throw SpcError(ErrorCode::InconsistentInputs, "ablation datasets differ in size");

  auto init = registry.load_policy(init_version);
  auto encoder = toy::critic_encoder(prompts.critic.user, cfg.toy.critic_features);
  auto probes = toy_probe_set(cfg);
  Executor executor(cfg.workers);
  auto score = [&](const Dataset& d) {
    auto res = train_round(init, d.samples, encoder, cfg.rl, TrainMode::Rl, derive_seed(seed, "train"));
    toy::ToyCriticBackend critic(res.policy, prompts.critic.user, cfg.toy.critic_features);
    return evaluate_critic(probes, critic, prompts.critic,
                           {cfg.eval_temperature, cfg.game.max_tokens,
                            derive_seed(derive_seed(cfg.seed, "evaluation"), "critic")},
                           executor);
  };
  PairingAblation out;
  out.samples = static_cast<int>(n);
  out.paired = score(paired);
  out.unpaired = score(unpaired);
  out.paired_accuracy = out.paired.average;
  out.unpaired_accuracy = out.unpaired.average;
  return out;
}

}  // namespace spc
