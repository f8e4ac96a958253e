#include <map>

#include "doctest.h"
#include "spc/hash.hpp"
#include "spc/jsonl.hpp"
#include "spc/pipeline.hpp"
#include "support.hpp"

using namespace spc;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config() {
  PipelineConfig c;
  c.seed = 3;
  c.toy.problems_per_round = 40;
  c.toy.sft_critic_pairs = 120;
  c.toy.sft_sneaky_pairs = 120;
  c.toy.probe_pairs = 60;
  c.toy.matchup_problems = 30;
  c.toy.sft_epochs = 4;
  c.critic_dataset = {160, true};
  c.sneaky_dataset_size = 60;
  c.rl.epochs_rl = 3;
  return c;
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "halted.json") continue;
    out[fs::relative(e.path(), root).generic_string()] = read_text_file(e.path());
  }
  return out;
}

struct Run {
  test::TempDir dir;
  SnapshotRegistry registry;
  explicit Run(const std::string& tag) : dir(tag), registry(dir.path() / "registry") {}
};

}  // namespace

TEST_CASE("registry entries are immutable and hash checked") {
  test::TempDir dir("registry");
  SnapshotRegistry reg(dir.path());
  auto p = toy::make_critic_policy();
  reg.register_policy(Role::Critic, "C0", p, {});
  reg.register_policy(Role::Critic, "C0", p, {});
  auto q = p;
  q.parameters()[0] = 1.0;
  CHECK_THROWS_AS(reg.register_policy(Role::Critic, "C0", q, {}), SpcError);
  Provenance orphan;
  orphan.parents = {"nope"};
  CHECK_THROWS_AS(reg.register_policy(Role::Critic, "C1", q, orphan), SpcError);
  Provenance child;
  child.round = 1;
  child.parents = {"C0"};
  reg.register_policy(Role::Critic, "C1", q, child);
  SnapshotRegistry reopened(dir.path());
  CHECK(reopened.load_policy("C1") == q);
  CHECK(reopened.entry("C1").provenance.parents == std::vector<std::string>{"C0"});
  reopened.verify();
  reg.register_external(Role::Critic, "remote", json{{"kind", "http"}}, {});
  CHECK_THROWS_AS(reg.load_policy("remote"), SpcError);

  write_text_file(dir.path() / "critic/C0/snapshot.json", "{}\n");
  CHECK_THROWS_AS(reopened.load_policy("C0"), SpcError);
  CHECK_THROWS_AS(reopened.verify(), SpcError);
}

TEST_CASE("registry verify detects provenance cycles") {
  test::TempDir dir("cycle");
  {
    SnapshotRegistry reg(dir.path());
    reg.register_policy(Role::Critic, "A", toy::make_critic_policy(), {});
    Provenance pb;
    pb.parents = {"A"};
    reg.register_policy(Role::Critic, "B", toy::make_critic_policy(), pb);
  }
  auto index = read_json_file(dir.path() / "registry.json");
  for (auto& e : index["entries"])
    if (e["version"] == "A") e["provenance"]["parents"] = json::array({"B"});
  write_json_file(dir.path() / "registry.json", index);
  SnapshotRegistry reg(dir.path());
  CHECK_THROWS_AS(reg.verify(), SpcError);
}

TEST_CASE("schedule json and default plan") {
  auto plans = default_schedule();
  REQUIRE(plans.size() == 2);
  CHECK(plans[0].sneaky_version == "S0");
  CHECK(plans[0].critic_version == "C0");
  CHECK(plans[1].sneaky_version == "S1");
  CHECK(plans[1].critic_version == "C0");
  CHECK(plans[1].dataset_mix.size() == 2);
  for (const auto& t : plans[1].train) CHECK((t.from == "S0" || t.from == "C0"));
  test::TempDir dir("schedule");
  save_schedule(dir.path() / "s.json", plans);
  CHECK(load_schedule(dir.path() / "s.json") == plans);
}

TEST_CASE("plan validation rejects bad schedules before running") {
  Run run("plans");
  auto prompts = PromptSet::defaults();
  auto cfg = small_config();
  auto plans = default_schedule();
  // nothing registered yet
  CHECK_THROWS_AS(validate_schedule(plans, run.registry), SpcError);
  toy_init_sft(run.registry, prompts, cfg, run.dir.path() / "init");
  validate_schedule(plans, run.registry);

  auto missing = plans;
  missing[1].sneaky_version = "S9";
  try {
    run_schedule(missing, run.registry, prompts, cfg, run.dir.path());
    FAIL("expected PlanValidation");
  } catch (const SpcError& e) {
    CHECK(e.code() == ErrorCode::PlanValidation);
  }
  CHECK_FALSE(fs::exists(run.dir.path() / "rounds"));

  auto wrong_role = plans;
  wrong_role[0].critic_version = "S0";
  CHECK_THROWS_AS(validate_schedule(wrong_role, run.registry), SpcError);
  auto twice = plans;
  twice[1].train[0].to = twice[0].train[0].to;
  CHECK_THROWS_AS(validate_schedule(twice, run.registry), SpcError);
  auto future_mix = plans;
  future_mix[0].dataset_mix = {{2, 1.0}};
  CHECK_THROWS_AS(validate_schedule(future_mix, run.registry), SpcError);
}

TEST_CASE("default schedule builds the full provenance DAG") {
  Run run("dag");
  auto prompts = PromptSet::defaults();
  auto cfg = small_config();
  toy_init_sft(run.registry, prompts, cfg, run.dir.path() / "init");
  auto result = run_schedule(default_schedule(), run.registry, prompts, cfg, run.dir.path());
  CHECK(result.round_reports.size() == 2);
  for (auto v : {"S0", "S1", "S2", "C0", "C1", "C2", "solver"}) CHECK(run.registry.contains(v));
  run.registry.verify();
  for (auto v : {"S1", "S2", "C1", "C2"}) {
    const auto& e = run.registry.entry(v);
    CAPTURE(v);
    CHECK(e.provenance.round.has_value());
    CHECK_FALSE(e.provenance.parents.empty());
    CHECK_FALSE(e.provenance.datasets.empty());
    for (const auto& d : e.provenance.datasets) CHECK(sha256_file(run.dir.path() / d.path) == d.sha256);
  }
  auto c2 = run.registry.entry("C2").provenance;
  CHECK(std::find(c2.parents.begin(), c2.parents.end(), "C0") != c2.parents.end());
  CHECK(c2.datasets.size() == 4);  // manifest + samples for each mixed round
  auto round2 = read_json_file(run.dir.path() / "rounds/round_2/round_report.json");
  CHECK(round2["plan"]["sneaky_version"] == "S1");
  auto records = read_jsonl(run.dir.path() / "rounds/round_2/game_records.jsonl");
  CHECK_FALSE(records.empty());
  for (const auto& r : records) CHECK(r["round_tag"]["sneaky_version"] == "S1");

  // manifests agree with a re-scan of their datasets
  for (auto role : {"critic", "sneaky"}) {
    auto dir = run.dir.path() / "rounds/round_1";
    auto samples = from_json_lines<TrainingSample>(read_jsonl(dir / (std::string(role) + "_dataset.jsonl")));
    auto manifest = DatasetManifest::from_json(read_json_file(dir / (std::string(role) + "_dataset.manifest.json")));
    CHECK(DatasetManifest::count_samples(samples) == manifest.counts);
  }

  // a second run over a completed directory skips both rounds
  auto again = run_schedule(default_schedule(), run.registry, prompts, cfg, run.dir.path());
  CHECK(again.skipped_rounds == std::vector<int>{1, 2});
}

TEST_CASE("interrupted schedule resumes to identical outputs") {
  auto prompts = PromptSet::defaults();
  auto cfg = small_config();
  Run straight("straight");
  toy_init_sft(straight.registry, prompts, cfg, straight.dir.path() / "init");
  run_schedule(default_schedule(), straight.registry, prompts, cfg, straight.dir.path());

  for (std::string stage : {"game", "train:C1", "datasets"}) {
    CAPTURE(stage);
    int halt_round = stage == "datasets" ? 2 : 1;
    Run halted("halted");
    toy_init_sft(halted.registry, prompts, cfg, halted.dir.path() / "init");
    auto hook = [&](int round, std::string_view s) {
      if (round == halt_round && s == stage) throw std::runtime_error("injected halt");
    };
    CHECK_THROWS(run_schedule(default_schedule(), halted.registry, prompts, cfg, halted.dir.path(), hook));
    CHECK(fs::exists(halted.dir.path() / ("rounds/round_" + std::to_string(halt_round)) / "halted.json"));
    SnapshotRegistry reopened(halted.dir.path() / "registry");
    auto resumed = run_schedule(default_schedule(), reopened, prompts, cfg, halted.dir.path());
    if (halt_round == 2) CHECK(resumed.skipped_rounds == std::vector<int>{1});
    CHECK(snapshot_tree(halted.dir.path()) == snapshot_tree(straight.dir.path()));
  }
}

TEST_CASE("pipeline config round trips") {
  auto cfg = small_config();
  json j = cfg;
  auto back = j.get<PipelineConfig>();
  CHECK(json(back) == j);
  auto bad = cfg;
  bad.workers = 0;
  CHECK_THROWS_AS(bad.validate(), SpcError);
}
