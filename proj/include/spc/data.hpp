#pragma once

// Training-set construction from game records: paired critic samples with
// 1:1 sign and truth balance, 1:1:1 sneaky scenarios, difficulty mixing, and
// SFT corpus assembly.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spc/game.hpp"
#include "spc/prompts.hpp"

namespace spc {

struct TrainingSample {
  std::string sample_id;
  Role role = Role::Critic;
  std::string input;   // rendered user prompt
  std::string output;  // sampled critique / generator output
  double reward = 1.0;
  std::optional<std::string> pair_group;
  std::optional<double> old_logprob;
  Tier difficulty = Tier::Easy;
  std::string scenario;  // e.g. "correct/+1" or "fooled_critic"
  std::string round_tag;

  bool operator==(const TrainingSample&) const = default;
};

void to_json(json& j, const TrainingSample& s);
void from_json(const json& j, TrainingSample& s);

struct DatasetManifest {
  Role role = Role::Critic;
  std::map<std::string, int> counts;   // "<scenario>/<difficulty>" -> samples
  std::map<std::string, int> targets;  // "<scenario>" -> requested samples
  int total = 0;
  int pair_groups = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> source_round_tags;
  std::vector<std::string> warnings;

  json to_json() const;
  static DatasetManifest from_json(const json& j);
  // Recomputes counts from samples; used to check a manifest against data.
  static std::map<std::string, int> count_samples(const std::vector<TrainingSample>& samples);
};

struct CriticDatasetConfig {
  int target_size = 6400;
  bool pairing = true;  // false: one critique per step, no pair groups
};

struct Dataset {
  std::vector<TrainingSample> samples;
  DatasetManifest manifest;
};

// Cells (truth x reward sign) each receive target_size / 4 samples. With
// pairing, steps whose critiques include both a right and a wrong verdict
// contribute a pair group (first right, first wrong); other steps contribute
// at most one singleton (their first critique). Pairs fill cells first. When
// a cell runs short, every cell is cut to the largest balanced size and a
// warning is recorded. EmptyPool when no usable critique exists.
Dataset build_critic_dataset(const std::vector<CritiqueRecord>& records, const PromptSet& prompts,
                             const CriticDatasetConfig& cfg, std::uint64_t seed);

// InvalidAttack (-1), DetectedByCritic (-1) and FooledCritic (+1), each
// target_size / 3, or the largest balanced subset with a warning.
Dataset build_sneaky_dataset(const std::vector<GameRecord>& records, const PromptSet& prompts,
                             int target_size, std::uint64_t seed);

struct MixSelection {
  std::vector<std::size_t> kept;  // ascending indices
  std::optional<std::string> warning;
};

// Chooses the largest subset whose Medium share is medium_fraction, sampling
// uniformly without replacement. Only Medium and Easy tags are considered.
MixSelection select_difficulty_mix(const std::vector<Tier>& tags, double medium_fraction,
                                   std::uint64_t seed);

// Applies the mix to samples, treating each pair group as one unit so pairs
// are never split.
std::vector<TrainingSample> apply_difficulty_mix(const std::vector<TrainingSample>& samples,
                                                 double medium_fraction, std::uint64_t seed,
                                                 std::vector<std::string>* warnings = nullptr);

struct RawPair {
  TemplateFields fields;  // problem, prefix, step
  std::string output;
  std::optional<StepVerdict> truth;  // critic corpora only
  Tier difficulty = Tier::Easy;
};

// Renders inputs through the role's user template (TemplateFieldMissing on a
// missing field). Critic corpora are cut to a 1:1 truth mix.
std::vector<TrainingSample> assemble_sft_corpus(Role role, const std::vector<RawPair>& raw,
                                                const PromptSet& prompts, std::uint64_t seed);

// Concatenates datasets; weight w keeps round(w * n) samples (w <= 1 by
// subsampling, w > 1 by repetition).
std::vector<TrainingSample> mix_datasets(
    const std::vector<std::pair<std::vector<TrainingSample>, double>>& parts, std::uint64_t seed);

}  // namespace spc
