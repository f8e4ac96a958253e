// spc: command-line entry point for the self-play critic pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "spc/evalbench.hpp"
#include "spc/jsonl.hpp"
#include "spc/pipeline.hpp"
#include "spc/rng.hpp"
#include "spc/search.hpp"

namespace fs = std::filesystem;
using namespace spc;

namespace {

struct Globals {
  std::string config_path;
  std::string out = "spc_run";
  std::string templates;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_concurrency;
};

struct Context {
  PipelineConfig pipeline;
  SearchConfig search;
  PromptSet prompts;
  fs::path out;
  json resolved;
};

Context load_context(const Globals& g, const std::string& command, const json& args) {
  Context ctx;
  json file = json::object();
  if (!g.config_path.empty()) {
    if (!fs::exists(g.config_path))
      throw SpcError(ErrorCode::IoError, "config file not found: " + g.config_path);
    file = read_json_file(g.config_path);
  }
  if (file.contains("pipeline")) ctx.pipeline = file["pipeline"].get<PipelineConfig>();
  if (file.contains("search")) ctx.search = file["search"].get<SearchConfig>();
  if (g.seed) ctx.pipeline.seed = *g.seed;
  if (g.max_concurrency) ctx.pipeline.workers = *g.max_concurrency;
  std::string templates = g.templates;
  if (templates.empty() && file.contains("templates") && !file["templates"].is_null())
    templates = file["templates"].get<std::string>();
  ctx.prompts = templates.empty() ? PromptSet::defaults() : PromptSet::load(templates);
  ctx.pipeline.validate();
  ctx.search.validate();
  ctx.out = g.out;
  ctx.resolved = json{{"pipeline", ctx.pipeline},
                      {"search", ctx.search},
                      {"templates", templates.empty() ? json(nullptr) : json(templates)},
                      {"out", g.out},
                      {"command", command},
                      {"args", args}};
  return ctx;
}

void write_resolved(const Context& ctx, const fs::path& dir) {
  fs::create_directories(dir);
  write_json_file(dir / "resolved_config.json", ctx.resolved);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
  return buf;
}

BackendPtr backend_from(const SnapshotRegistry& reg, const std::string& version,
                        const std::string& backend_file, const Context& ctx) {
  if (!backend_file.empty()) return make_backend(read_json_file(backend_file).get<BackendConfig>());
  return make_version_backend(reg, version, ctx.prompts, ctx.pipeline);
}

// ---------------------------------------------------------------------------

int cmd_init_sft(const Globals& g, bool toy, const std::string& critic_pairs,
                 const std::string& sneaky_pairs) {
  json args{{"toy", toy}, {"critic_pairs", critic_pairs}, {"sneaky_pairs", sneaky_pairs}};
  auto ctx = load_context(g, "init-sft", args);
  auto dir = ctx.out / "init";
  write_resolved(ctx, dir);
  if (toy) {
    SnapshotRegistry reg(ctx.out / "registry");
    auto rep = toy_init_sft(reg, ctx.prompts, ctx.pipeline, dir);
    for (const auto* v : {"S0", "C0", ctx.pipeline.solver_version.c_str()}) {
      const auto& e = reg.entry(v);
      std::cout << e.version << "  " << to_string(e.role) << "  " << e.snapshot_sha256 << "\n";
    }
    std::cout << "critic sft loss " << rep.critic.loss_curve.back() << ", sneaky sft loss "
              << rep.sneaky.loss_curve.back() << "\n";
    return 0;
  }
  if (critic_pairs.empty() && sneaky_pairs.empty())
    throw SpcError(ErrorCode::InvalidArgument, "init-sft needs --toy or raw pair files");
  auto build = [&](Role role, const std::string& path) {
    if (path.empty()) return;
    std::vector<RawPair> raw;
    for (const auto& j : read_jsonl(path)) {
      RawPair r;
      auto problem = j.at("problem").is_string() ? Problem{"", j["problem"].get<std::string>(), "", ""}
                                                 : j["problem"].get<Problem>();
      auto prefix = make_steps(j.value("prefix", std::vector<std::string>{}));
      r.fields = make_fields(problem, prefix, Step{prefix.size(), j.at("step").get<std::string>()});
      r.output = j.at("output").get<std::string>();
      if (j.contains("truth")) r.truth = parse_verdict(j["truth"].get<std::string>());
      if (j.contains("difficulty")) r.difficulty = parse_tier(j["difficulty"].get<std::string>());
      raw.push_back(std::move(r));
    }
    auto corpus = assemble_sft_corpus(role, raw, ctx.prompts, derive_seed(ctx.pipeline.seed, "init-sft"));
    auto out = dir / (std::string(to_string(role)) + "_sft.jsonl");
    write_jsonl(out, to_json_lines(corpus));
    std::cout << to_string(role) << ": " << corpus.size() << " samples -> " << out.string() << "\n";
  };
  build(Role::Critic, critic_pairs);
  build(Role::Sneaky, sneaky_pairs);
  return 0;
}

int cmd_run_rounds(const Globals& g, const std::string& schedule_path, bool dry_run,
                   const std::string& halt_at) {
  json args{{"schedule", schedule_path}, {"dry_run", dry_run}};
  auto ctx = load_context(g, "run-rounds", args);
  auto plans = schedule_path.empty() ? default_schedule() : load_schedule(schedule_path);
  SnapshotRegistry reg(ctx.out / "registry");
  validate_schedule(plans, reg);
  if (dry_run) {
    for (const auto& p : plans) {
      std::cout << "round " << p.round_index << ": " << p.sneaky_version << " vs " << p.critic_version
                << " ->";
      for (const auto& t : p.train) std::cout << " " << t.to << "(from " << t.from << ")";
      std::cout << "\n";
    }
    std::cout << "plan valid\n";
    return 0;
  }
  write_resolved(ctx, ctx.out / "rounds");
  save_schedule(ctx.out / "rounds" / "schedule.json", plans);
  StageHook hook;
  if (!halt_at.empty()) {
    hook = [halt_at](int round, std::string_view stage) {
      if (std::to_string(round) + ":" + std::string(stage) == halt_at)
        throw SpcError(ErrorCode::InvalidArgument, "halted at " + halt_at);
    };
  }
  auto res = run_schedule(plans, reg, ctx.prompts, ctx.pipeline, ctx.out, hook);
  std::set<int> skipped(res.skipped_rounds.begin(), res.skipped_rounds.end());
  std::printf("%-6s %-10s %9s %9s %9s  %s\n", "round", "matchup", "attack%", "win%", "critic%", "trained");
  for (const auto& r : res.round_reports) {
    int idx = r["round_index"].get<int>();
    const auto& game = r["game"];
    std::string trained;
    for (const auto& [v, e] : r["evaluation"].items()) {
      trained += v + "=";
      trained += e["role"] == "critic" ? pct(e["accuracy"].get<double>() / 100.0) + "%acc "
                                       : pct(e["attack_success_rate"].get<double>()) + "%atk ";
    }
    std::printf("%-6d %-10s %9s %9s %9s  %s%s\n", idx,
                (r["plan"]["sneaky_version"].get<std::string>() + "v" + r["plan"]["critic_version"].get<std::string>()).c_str(),
                pct(game["attack_success_rate"].get<double>()).c_str(),
                pct(game["sneaky_win_rate"].get<double>()).c_str(),
                pct(game["critic_accuracy"].get<double>()).c_str(), trained.c_str(),
                skipped.count(idx) ? " (already complete)" : "");
  }
  return 0;
}

int cmd_matchup(const Globals& g, const std::string& sneaky_v, const std::string& critic_v,
                int problems) {
  json args{{"sneaky", sneaky_v}, {"critic", critic_v}, {"problems", problems}};
  auto ctx = load_context(g, "matchup", args);
  SnapshotRegistry reg(ctx.out / "registry");
  auto dir = ctx.out / "matchups" / (sneaky_v + "v" + critic_v);
  write_resolved(ctx, dir);
  auto solver = make_version_backend(reg, ctx.pipeline.solver_version, ctx.prompts, ctx.pipeline);
  auto sneaky = make_version_backend(reg, sneaky_v, ctx.prompts, ctx.pipeline);
  auto critic = make_version_backend(reg, critic_v, ctx.prompts, ctx.pipeline);
  auto seed = derive_seed(ctx.pipeline.seed, "matchup");
  auto instances = build_toy_instances(problems, *solver, ctx.prompts, ctx.pipeline,
                                       derive_seed(seed, "instances"), "m");
  auto rep = matchup_report(*sneaky, *critic, *solver, instances, ctx.prompts, ctx.pipeline.game,
                            {sneaky_v, critic_v}, derive_seed(seed, "game"), Executor(ctx.pipeline.workers));
  write_json_file(dir / "matchup_report.json", rep.to_json());
  std::cout << sneaky_v << " vs " << critic_v << ": " << rep.summary.total << " games, attack success "
            << pct(rep.summary.attack_success_rate()) << "%, win rate " << pct(rep.summary.sneaky_win_rate())
            << "%\n";
  return 0;
}

struct SearchArgs {
  std::string critic = "C2";
  std::string critic_backend;
  std::string solver;
  std::string solver_backend;
  std::optional<double> planted_error_rate;
  int problems = 100;
  std::string problems_file;
  std::optional<int> sc;
  bool unguided = false;
};

int cmd_search(const Globals& g, const SearchArgs& a) {
  json args{{"critic", a.critic},        {"critic_backend", a.critic_backend},
            {"solver", a.solver},        {"solver_backend", a.solver_backend},
            {"problems", a.problems},    {"problems_file", a.problems_file},
            {"unguided", a.unguided},
            {"planted_error_rate", a.planted_error_rate ? json(*a.planted_error_rate) : json(nullptr)},
            {"sc", a.sc ? json(*a.sc) : json(nullptr)}};
  auto ctx = load_context(g, "search", args);
  if (a.sc) ctx.search.self_consistency_samples = *a.sc;
  ctx.search.validate();
  ctx.resolved["search"] = ctx.search;
  auto dir = ctx.out / "search";
  write_resolved(ctx, dir);
  SnapshotRegistry reg(ctx.out / "registry");

  BackendPtr solver;
  if (a.planted_error_rate) {
    solver = std::make_shared<toy::ToySolverBackend>(toy::make_planted_solver(*a.planted_error_rate),
                                                     ctx.prompts.solver.user,
                                                     toy::SolverConfig::never_notices());
  } else {
    solver = backend_from(reg, a.solver.empty() ? ctx.pipeline.solver_version : a.solver,
                          a.solver_backend, ctx);
  }
  BackendPtr critic;
  if (!a.unguided) critic = backend_from(reg, a.critic, a.critic_backend, ctx);

  std::vector<Problem> problems;
  auto seed = derive_seed(ctx.pipeline.seed, "search");
  if (!a.problems_file.empty()) {
    problems = from_json_lines<Problem>(read_jsonl(a.problems_file));
  } else {
    problems = toy_search_problems(a.problems, ctx.pipeline, seed);
  }
  bool sc = a.sc.has_value() && !a.unguided;
  std::vector<std::string> answers(problems.size());
  std::vector<std::vector<SearchTrace>> traces(problems.size());
  std::vector<std::string> failures(problems.size());
  Executor executor(ctx.pipeline.workers);
  executor.parallel_for(problems.size(), [&](std::size_t i) {
    auto s = derive_seed(seed, i);
    try {
      if (a.unguided) {
        auto r = unguided_solve(problems[i], *solver, ctx.prompts, ctx.search, s);
        answers[i] = r.answer;
        traces[i] = {r.trace};
      } else if (sc) {
        auto r = self_consistent_solve(problems[i], *solver, *critic, ctx.prompts, ctx.search, s);
        answers[i] = r.answer;
        traces[i] = r.traces;
      } else {
        auto r = guided_solve(problems[i], *solver, *critic, ctx.prompts, ctx.search, s);
        answers[i] = r.answer;
        traces[i] = {r.trace};
      }
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  std::vector<json> lines;
  int failed = 0;
  double attempts = 0, steps = 0, critic_calls = 0;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    json tr = json::array();
    for (const auto& t : traces[i]) {
      tr.push_back(t);
      for (const auto& st : t.steps) attempts += static_cast<double>(st.attempts.size());
      steps += static_cast<double>(t.steps.size());
      critic_calls += t.critic_calls;
    }
    if (!failures[i].empty()) ++failed;
    lines.push_back({{"problem_id", problems[i].id},
                     {"answer", answers[i]},
                     {"gold_answer", problems[i].gold_answer},
                     {"traces", tr},
                     {"error", failures[i].empty() ? json(nullptr) : json(failures[i])}});
  }
  write_jsonl(dir / "traces.jsonl", lines);
  double rate = score_solver_benchmark(problems, answers);
  json summary{{"problems", problems.size()},
               {"solve_rate", rate},
               {"failed", failed},
               {"mean_attempts_per_step", steps > 0 ? attempts / steps : 0.0},
               {"mean_critic_calls_per_problem", critic_calls / static_cast<double>(problems.size())},
               {"mode", a.unguided ? "unguided" : sc ? "self_consistency" : "guided"}};
  write_json_file(dir / "summary.json", summary);
  std::printf("%-18s %10s %16s %18s\n", "mode", "solve%", "attempts/step", "critic calls/prob");
  std::printf("%-18s %10.1f %16.2f %18.2f\n", summary["mode"].get<std::string>().c_str(), rate,
              summary["mean_attempts_per_step"].get<double>(),
              summary["mean_critic_calls_per_problem"].get<double>());
  if (failed) std::cout << failed << " problem(s) failed\n";
  return failed == static_cast<int>(problems.size()) && !problems.empty() ? 1 : 0;
}

struct EvalArgs {
  std::string critic = "C0";
  std::string critic_backend;
  std::string probes;
  std::string corpus;
  std::string adapter;
  int toy_probes = 0;
  std::string write_probes;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  json args{{"critic", a.critic}, {"critic_backend", a.critic_backend}, {"probes", a.probes},
            {"corpus", a.corpus}, {"adapter", a.adapter}, {"toy_probes", a.toy_probes}};
  auto ctx = load_context(g, "eval", args);
  auto dir = ctx.out / "eval" / (a.critic_backend.empty() ? a.critic : "external");
  write_resolved(ctx, dir);
  std::vector<ProbeRecord> probes;
  if (!a.probes.empty()) {
    probes = from_json_lines<ProbeRecord>(read_jsonl(a.probes));
  } else if (!a.corpus.empty()) {
    CorpusAdapter adapter;
    if (!a.adapter.empty()) adapter = read_json_file(a.adapter).get<CorpusAdapter>();
    auto set = build_probes(read_jsonl(a.corpus), adapter, derive_seed(ctx.pipeline.seed, "probes"));
    if (set.skipped_unlabeled) std::cout << "skipped " << set.skipped_unlabeled << " unlabeled record(s)\n";
    probes = std::move(set.probes);
  } else {
    auto cfg = ctx.pipeline;
    if (a.toy_probes > 0) cfg.toy.probe_pairs = a.toy_probes;
    probes = toy_probe_set(cfg);
  }
  if (!a.write_probes.empty()) write_jsonl(a.write_probes, to_json_lines(probes));
  SnapshotRegistry reg(ctx.out / "registry");
  auto critic = backend_from(reg, a.critic, a.critic_backend, ctx);
  auto rep = evaluate_critic(probes, *critic, ctx.prompts.critic,
                             {ctx.pipeline.eval_temperature, ctx.pipeline.game.max_tokens,
                              derive_seed(ctx.pipeline.seed, "eval")},
                             Executor(ctx.pipeline.workers));
  write_json_file(dir / "eval_report.json", rep.to_json());
  std::cout << rep.table();
  return 0;
}

int cmd_report(const Globals& g, std::vector<std::string> versions) {
  json args{{"versions", versions}};
  auto ctx = load_context(g, "report", args);
  SnapshotRegistry reg(ctx.out / "registry");
  reg.verify();
  if (versions.empty())
    for (const auto& e : reg.entries())
      if (e.role != Role::Solver && e.kind == "toy-policy") versions.push_back(e.version);
  auto ev = evaluate_versions(reg, versions, ctx.prompts, ctx.pipeline);
  write_resolved(ctx, ctx.out / "report");
  write_json_file(ctx.out / "report" / "versions.json", ev);
  std::printf("%-8s %-7s %12s %10s  %s\n", "version", "role", "metric", "value", "parents");
  for (const auto& v : versions) {
    const auto& e = reg.entry(v);
    std::string parents;
    for (const auto& p : e.provenance.parents) parents += (parents.empty() ? "" : ",") + p;
    const auto& r = ev[v];
    if (e.role == Role::Critic) {
      std::printf("%-8s %-7s %12s %10.1f  %s\n", v.c_str(), "critic", "probe acc%",
                  r["accuracy"].get<double>(), parents.c_str());
    } else {
      std::printf("%-8s %-7s %12s %10s  %s\n", v.c_str(), "sneaky", "attack%",
                  pct(r["attack_success_rate"].get<double>()).c_str(), parents.c_str());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-play critic pipeline: sneaky generator vs step critic"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Run config JSON (e.g. a resolved_config.json)");
  app.add_option("--out", g.out, "Run directory (registry, rounds, reports)");
  app.add_option("--templates", g.templates, "Directory with <role>.system.txt / <role>.user.txt");
  app.add_option("--seed", g.seed, "Global seed");
  app.add_option("--max-concurrency", g.max_concurrency, "Worker threads for backend fan-out");

  auto* init = app.add_subcommand("init-sft", "Build SFT corpora; with --toy also train S0 and C0");
  bool toy = false;
  std::string critic_pairs, sneaky_pairs;
  init->add_flag("--toy", toy, "Use the synthetic arithmetic world");
  init->add_option("--critic-pairs", critic_pairs, "Raw critic pairs JSONL");
  init->add_option("--sneaky-pairs", sneaky_pairs, "Raw sneaky pairs JSONL");

  auto* rounds = app.add_subcommand("run-rounds", "Run the round schedule (default: 2 rounds)");
  std::string schedule;
  bool dry_run = false;
  std::string halt_at;
  rounds->add_option("--schedule", schedule, "Schedule JSON {rounds: [...]}");
  rounds->add_flag("--dry-run", dry_run, "Validate the plan only");
  rounds->add_option("--halt-at", halt_at, "Stop with an error at <round>:<stage> (resumability checks)");

  auto* matchup = app.add_subcommand("matchup", "Play probe games without training");
  std::string m_sneaky = "S1", m_critic = "C0";
  int m_problems = 200;
  matchup->add_option("--sneaky", m_sneaky, "Sneaky version");
  matchup->add_option("--critic", m_critic, "Critic version");
  matchup->add_option("--problems", m_problems, "Toy problems to harvest instances from");

  auto* search = app.add_subcommand("search", "Critic-guided stepwise solving");
  SearchArgs sa;
  search->add_option("--critic", sa.critic, "Critic version");
  search->add_option("--critic-backend", sa.critic_backend, "BackendConfig JSON instead of a version");
  search->add_option("--solver", sa.solver, "Solver version (default: the pipeline's solver)");
  search->add_option("--solver-backend", sa.solver_backend, "BackendConfig JSON for the solver");
  search->add_option("--planted-error-rate", sa.planted_error_rate, "Toy solver with this per-step error rate");
  search->add_option("--problems", sa.problems, "Number of toy problems");
  search->add_option("--problems-file", sa.problems_file, "Problems JSONL instead of toy problems");
  search->add_option("--sc", sa.sc, "Self-consistency samples (default 5)");
  search->add_flag("--unguided", sa.unguided, "No critic");

  auto* eval = app.add_subcommand("eval", "Step-level critic benchmark");
  EvalArgs ea;
  eval->add_option("--critic", ea.critic, "Critic version");
  eval->add_option("--critic-backend", ea.critic_backend, "BackendConfig JSON instead of a version");
  eval->add_option("--probes", ea.probes, "Probe JSONL");
  eval->add_option("--corpus", ea.corpus, "Annotated corpus JSONL");
  eval->add_option("--adapter", ea.adapter, "Corpus adapter JSON");
  eval->add_option("--toy-probes", ea.toy_probes, "Probes per class from the toy corpus");
  eval->add_option("--write-probes", ea.write_probes, "Save the probes used");

  auto* report = app.add_subcommand("report", "Evaluate registered versions");
  std::vector<std::string> versions;
  report->add_option("--versions", versions, "Versions (default: all trained roles)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*init) return cmd_init_sft(g, toy, critic_pairs, sneaky_pairs);
    if (*rounds) return cmd_run_rounds(g, schedule, dry_run, halt_at);
    if (*matchup) return cmd_matchup(g, m_sneaky, m_critic, m_problems);
    if (*search) return cmd_search(g, sa);
    if (*eval) return cmd_eval(g, ea);
    if (*report) return cmd_report(g, versions);
  } catch (const SpcError& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return e.code() == ErrorCode::IoError || e.code() == ErrorCode::PlanValidation ||
                   e.code() == ErrorCode::InvalidArgument
               ? 2
               : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
