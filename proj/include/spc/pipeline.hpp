#pragma once

// Round orchestration: harvest instances, play the game between the plan's
// versions, build datasets, train, register snapshots. Plus toy
// initialization and the evaluation helpers the round reports use.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spc/data.hpp"
#include "spc/evalbench.hpp"
#include "spc/game.hpp"
#include "spc/registry.hpp"
#include "spc/toy_backends.hpp"
#include "spc/train.hpp"

namespace spc {

struct TrainTarget {
  Role role = Role::Critic;
  std::string from;  // initial snapshot
  std::string to;    // version to register

  bool operator==(const TrainTarget&) const = default;
};

struct MixEntry {
  int round = 0;
  double weight = 1.0;

  bool operator==(const MixEntry&) const = default;
};

struct RoundPlan {
  int round_index = 1;
  std::string sneaky_version;
  std::string critic_version;
  std::vector<TrainTarget> train;
  std::vector<MixEntry> dataset_mix;  // which rounds' datasets feed training
  std::optional<std::uint64_t> seed;  // default: derived from the global seed

  bool operator==(const RoundPlan&) const = default;
};

void to_json(json& j, const RoundPlan& p);
void from_json(const json& j, RoundPlan& p);

// Round 1: S0 vs C0 trains S1, C1. Round 2: S1 vs C0, data of both rounds
// trains S2 and C2 from S0 and C0.
std::vector<RoundPlan> default_schedule();

std::vector<RoundPlan> load_schedule(const std::filesystem::path& path);
void save_schedule(const std::filesystem::path& path, const std::vector<RoundPlan>& plans);

struct ToyWorldConfig {
  int problems_per_round = 300;
  int min_difficulty = 2;
  int max_difficulty = 6;
  double solver_error_rate = 0.08;  // per-step error of the fixed game solver
  toy::SolverConfig solver;
  toy::CriticFeatureConfig critic_features;
  // Initialization corpora.
  int sft_critic_pairs = 600;
  int sft_sneaky_pairs = 600;
  std::array<double, 5> sneaky_init_mix = {0.1, 0.25, 0.1, 0.2, 0.35};  // kAllPerturbations order
  int sft_epochs = 36;
  double sft_learning_rate = 0.05;
  // Held-out evaluation.
  int probe_pairs = 1000;
  int matchup_problems = 800;
};

void to_json(json& j, const ToyWorldConfig& c);
void from_json(const json& j, ToyWorldConfig& c);

struct PipelineConfig {
  std::uint64_t seed = 7;
  GameConfig game;
  CriticDatasetConfig critic_dataset{1600, true};
  int sneaky_dataset_size = 900;
  RlConfig rl;
  ToyWorldConfig toy;
  std::string solver_version = "solver";
  double eval_temperature = 1.0;
  std::size_t workers = 1;

  void validate() const;
};

void to_json(json& j, const PipelineConfig& c);
void from_json(const json& j, PipelineConfig& c);

// Backend for a registered version: toy policies become toy backends,
// external descriptors are BackendConfig objects.
BackendPtr make_version_backend(const SnapshotRegistry& registry, std::string_view version,
                                const PromptSet& prompts, const PipelineConfig& cfg);

// Problems tiered and harvested with the solver, difficulty mix applied.
std::vector<GameInstance> build_toy_instances(int n_problems, Backend& solver,
                                              const PromptSet& prompts, const PipelineConfig& cfg,
                                              std::uint64_t seed, const std::string& id_prefix);

// Registers the fixed solver plus SFT-trained S0 and C0. Writes the SFT
// corpora under out_dir. Idempotent for equal seeds.
struct InitReport {
  TrainReport sneaky;
  TrainReport critic;
  json to_json() const;
};

InitReport toy_init_sft(SnapshotRegistry& registry, const PromptSet& prompts,
                        const PipelineConfig& cfg, const std::filesystem::path& out_dir);

// Plan validation only: every played or initial version must be registered
// or produced by an earlier plan; outputs must be new; mixes may only name
// earlier or current rounds. Throws PlanValidation.
void validate_schedule(const std::vector<RoundPlan>& plans, const SnapshotRegistry& registry);

// Called after each stage ("instances", "game", "datasets", "train:<version>",
// "report"); throwing from it simulates a crash at that point.
using StageHook = std::function<void(int round, std::string_view stage)>;

struct ScheduleResult {
  std::vector<json> round_reports;
  std::vector<int> skipped_rounds;  // completed in an earlier run
};

// Rounds whose round_report.json already exists are skipped. A failing round
// writes halted.json in its directory and rethrows.
ScheduleResult run_schedule(const std::vector<RoundPlan>& plans, SnapshotRegistry& registry,
                            const PromptSet& prompts, const PipelineConfig& cfg,
                            const std::filesystem::path& run_dir, const StageHook& hook = {});

struct MatchupReport {
  std::string sneaky_version;
  std::string critic_version;
  RoundSummary summary;
  json to_json() const;
};

MatchupReport matchup_report(Backend& sneaky, Backend& critic, Backend& solver,
                             const std::vector<GameInstance>& instances, const PromptSet& prompts,
                             const GameConfig& cfg, const RoundTag& tag, std::uint64_t seed,
                             const Executor& executor = Executor(1));

// Seeded toy problems for search runs, difficulty uniform over the toy range.
std::vector<Problem> toy_search_problems(int n, const PipelineConfig& cfg, std::uint64_t seed);

// Held-out toy probes (balanced), independent of any round's data.
std::vector<ProbeRecord> toy_probe_set(const PipelineConfig& cfg);

// Critic accuracy on probes (mean of the two recalls) and sneaky attack
// success against the fixed solver on held-out instances, for each version.
json evaluate_versions(const SnapshotRegistry& registry, const std::vector<std::string>& versions,
                       const PromptSet& prompts, const PipelineConfig& cfg);

// Genuine critiques plus the critic's view of every valid attack.
std::vector<CritiqueRecord> critique_pool(const std::vector<GameRecord>& records,
                                          const std::vector<CritiqueRecord>& genuine);

struct PairingAblation {
  int samples = 0;  // per variant
  double paired_accuracy = 0.0;
  double unpaired_accuracy = 0.0;
  EvalReport paired;
  EvalReport unpaired;
  json to_json() const;
};

// Trains the critic from init_version twice on one round's game data, once
// with pair groups and once with one critique per step, at equal dataset
// size, and scores both on the held-out probes.
PairingAblation pairing_ablation(const SnapshotRegistry& registry, const std::string& init_version,
                                 const std::filesystem::path& round_dir, const PromptSet& prompts,
                                 const PipelineConfig& cfg);

}  // namespace spc
