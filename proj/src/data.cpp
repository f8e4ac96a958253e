#include "spc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "spc/rng.hpp"

namespace spc {

void to_json(json& j, const TrainingSample& s) {
  j = json{{"sample_id", s.sample_id},
           {"role", to_string(s.role)},
           {"input", s.input},
           {"output", s.output},
           {"reward", s.reward},
           {"difficulty", to_string(s.difficulty)},
           {"scenario", s.scenario},
           {"round_tag", s.round_tag}};
  j["pair_group"] = s.pair_group ? json(*s.pair_group) : json(nullptr);
  j["old_logprob"] = s.old_logprob ? json(*s.old_logprob) : json(nullptr);
}

void from_json(const json& j, TrainingSample& s) {
  s.sample_id = j.at("sample_id").get<std::string>();
  s.role = parse_role(j.at("role").get<std::string>());
  s.input = j.at("input").get<std::string>();
  s.output = j.at("output").get<std::string>();
  s.reward = j.at("reward").get<double>();
  s.difficulty = parse_tier(j.at("difficulty").get<std::string>());
  s.scenario = j.value("scenario", "");
  s.round_tag = j.value("round_tag", "");
  s.pair_group.reset();
  if (j.contains("pair_group") && !j["pair_group"].is_null())
    s.pair_group = j["pair_group"].get<std::string>();
  s.old_logprob.reset();
  if (j.contains("old_logprob") && !j["old_logprob"].is_null())
    s.old_logprob = j["old_logprob"].get<double>();
}

json DatasetManifest::to_json() const {
  return json{{"role", to_string(role)},
              {"counts", counts},
              {"targets", targets},
              {"total", total},
              {"pair_groups", pair_groups},
              {"seed", seed},
              {"source_round_tags", source_round_tags},
              {"warnings", warnings}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  m.role = parse_role(j.at("role").get<std::string>());
  m.counts = j.at("counts").get<std::map<std::string, int>>();
  m.targets = j.at("targets").get<std::map<std::string, int>>();
  m.total = j.at("total").get<int>();
  m.pair_groups = j.at("pair_groups").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.source_round_tags = j.at("source_round_tags").get<std::vector<std::string>>();
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

std::map<std::string, int> DatasetManifest::count_samples(
    const std::vector<TrainingSample>& samples) {
  std::map<std::string, int> counts;
  for (const auto& s : samples) ++counts[s.scenario + "/" + std::string(to_string(s.difficulty))];
  return counts;
}

namespace {

std::string tag_string(const RoundTag& t) { return t.sneaky_version + "v" + t.critic_version; }

std::string sign_tag(double reward) { return reward > 0 ? "+1" : "-1"; }

std::string sample_id(Role role, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return std::string(to_string(role)) + "-" + buf;
}

void finalize(Dataset& d, Role role, std::uint64_t seed, const std::set<std::string>& tags) {
  for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i].sample_id = sample_id(role, i);
  d.manifest.role = role;
  d.manifest.seed = seed;
  d.manifest.counts = DatasetManifest::count_samples(d.samples);
  d.manifest.total = static_cast<int>(d.samples.size());
  std::set<std::string> groups;
  for (const auto& s : d.samples)
    if (s.pair_group) groups.insert(*s.pair_group);
  d.manifest.pair_groups = static_cast<int>(groups.size());
  d.manifest.source_round_tags.assign(tags.begin(), tags.end());
}

template <typename T>
std::vector<T> take_shuffled(std::vector<T> v, std::size_t n, Rng& rng) {
  rng.shuffle(v);
  if (v.size() > n) v.resize(n);
  return v;
}

}  // namespace

Dataset build_critic_dataset(const std::vector<CritiqueRecord>& records, const PromptSet& prompts,
                             const CriticDatasetConfig& cfg, std::uint64_t seed) {
  if (cfg.target_size <= 0) throw SpcError(ErrorCode::InvalidArgument, "target_size must be positive");
  using Unit = std::vector<TrainingSample>;  // a pair or a singleton
  // Indexed by truth (0 correct, 1 incorrect).
  std::vector<Unit> pairs[2];
  std::vector<Unit> singles_pos[2];
  std::vector<Unit> singles_neg[2];
  std::set<std::string> tags;

  for (const auto& r : records) {
    if (r.error || r.critiques.empty() || r.r_critic.size() != r.critiques.size()) continue;
    int t = r.truth == StepVerdict::Correct ? 0 : 1;
    auto input = prompts.critic.user.render(make_fields(r.problem, r.prefix, r.step));
    auto tag = tag_string(r.round_tag);
    tags.insert(tag);
    auto make = [&](std::size_t ci) {
      TrainingSample s;
      s.role = Role::Critic;
      s.input = input;
      s.output = r.critiques[ci].text;
      s.reward = r.r_critic[ci];
      s.old_logprob = r.critiques[ci].logprob;
      s.difficulty = r.difficulty;
      s.scenario = std::string(to_string(r.truth)) + "/" + sign_tag(s.reward);
      s.round_tag = tag;
      return s;
    };
    std::optional<std::size_t> first_pos, first_neg;
    for (std::size_t i = 0; i < r.critiques.size(); ++i) {
      if (r.r_critic[i] > 0 && !first_pos) first_pos = i;
      if (r.r_critic[i] < 0 && !first_neg) first_neg = i;
    }
    if (cfg.pairing && first_pos && first_neg) {
      auto a = make(*first_pos);
      auto b = make(*first_neg);
      if (a.output == b.output) continue;  // identical texts cannot form a pair
      std::string group = "pg:" + tag + ":" + r.instance_id + ":" + std::string(to_string(r.truth));
      a.pair_group = group;
      b.pair_group = group;
      pairs[t].push_back({a, b});
    } else {
      auto s = make(0);
      (s.reward > 0 ? singles_pos[t] : singles_neg[t]).push_back({s});
    }
  }
  std::size_t available = 0;
  for (int t = 0; t < 2; ++t)
    available += pairs[t].size() + singles_pos[t].size() + singles_neg[t].size();
  if (available == 0) throw SpcError(ErrorCode::EmptyPool, "no usable critiques for the critic dataset");

  Dataset d;
  std::size_t quota = static_cast<std::size_t>(cfg.target_size) / 4;
  std::size_t cell = quota;
  for (int t = 0; t < 2; ++t) {
    auto cap = pairs[t].size() + std::min(singles_pos[t].size(), singles_neg[t].size());
    cell = std::min(cell, cap);
  }
  for (const auto* name : {"correct/+1", "correct/-1", "incorrect/+1", "incorrect/-1"})
    d.manifest.targets[name] = static_cast<int>(quota);
  if (cell < quota)
    d.manifest.warnings.push_back("critic pool supports " + std::to_string(cell) +
                                  " samples per cell instead of " + std::to_string(quota));

  Rng rng(derive_seed(seed, "critic-dataset"));
  std::vector<Unit> units;
  for (int t = 0; t < 2; ++t) {
    auto p = take_shuffled(pairs[t], cell, rng);
    std::size_t rest = cell - p.size();
    auto sp = take_shuffled(singles_pos[t], rest, rng);
    auto sn = take_shuffled(singles_neg[t], rest, rng);
    for (auto* group : {&p, &sp, &sn})
      for (auto& u : *group) units.push_back(std::move(u));
  }
  rng.shuffle(units);
  for (auto& u : units)
    for (auto& s : u) d.samples.push_back(std::move(s));
  finalize(d, Role::Critic, seed, tags);
  return d;
}

Dataset build_sneaky_dataset(const std::vector<GameRecord>& records, const PromptSet& prompts,
                             int target_size, std::uint64_t seed) {
  if (target_size <= 0) throw SpcError(ErrorCode::InvalidArgument, "target_size must be positive");
  std::vector<TrainingSample> by_outcome[3];
  std::set<std::string> tags;
  for (const auto& r : records) {
    if (!r.outcome || r.error) continue;
    TrainingSample s;
    s.role = Role::Sneaky;
    s.input = prompts.sneaky.user.render(make_fields(r.problem, r.prefix, r.original_step));
    s.output = r.sneaky_output;
    s.reward = *r.outcome == SneakyOutcome::FooledCritic ? 1.0 : -1.0;
    if (r.sneaky_transformation) s.old_logprob = r.sneaky_transformation->logprob;
    s.difficulty = r.difficulty;
    s.scenario = std::string(to_string(*r.outcome));
    s.round_tag = tag_string(r.round_tag);
    tags.insert(s.round_tag);
    by_outcome[static_cast<int>(*r.outcome)].push_back(std::move(s));
  }
  std::size_t available = by_outcome[0].size() + by_outcome[1].size() + by_outcome[2].size();
  if (available == 0) throw SpcError(ErrorCode::EmptyPool, "no usable records for the sneaky dataset");

  Dataset d;
  std::size_t quota = static_cast<std::size_t>(target_size) / 3;
  std::size_t cell = quota;
  for (const auto& v : by_outcome) cell = std::min(cell, v.size());
  for (auto o : {SneakyOutcome::InvalidAttack, SneakyOutcome::DetectedByCritic,
                 SneakyOutcome::FooledCritic})
    d.manifest.targets[std::string(to_string(o))] = static_cast<int>(quota);
  if (cell < quota)
    d.manifest.warnings.push_back("sneaky pool supports " + std::to_string(cell) +
                                  " samples per scenario instead of " + std::to_string(quota));
  Rng rng(derive_seed(seed, "sneaky-dataset"));
  for (auto& v : by_outcome) {
    auto picked = take_shuffled(v, cell, rng);
    for (auto& s : picked) d.samples.push_back(std::move(s));
  }
  rng.shuffle(d.samples);
  finalize(d, Role::Sneaky, seed, tags);
  return d;
}

MixSelection select_difficulty_mix(const std::vector<Tier>& tags, double medium_fraction,
                                   std::uint64_t seed) {
  if (medium_fraction < 0.0 || medium_fraction > 1.0)
    throw SpcError(ErrorCode::InvalidArgument, "medium_fraction must lie in [0, 1]");
  std::vector<std::size_t> medium, easy, other;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == Tier::Medium) {
      medium.push_back(i);
    } else if (tags[i] == Tier::Easy) {
      easy.push_back(i);
    } else {
      other.push_back(i);
    }
  }
  MixSelection out;
  auto keep_all = [&](std::string why) {
    out.kept.resize(tags.size());
    for (std::size_t i = 0; i < tags.size(); ++i) out.kept[i] = i;
    out.warning = std::move(why);
    return out;
  };
  double f = medium_fraction;
  std::size_t m = 0, e = 0;
  double M = static_cast<double>(medium.size()), E = static_cast<double>(easy.size());
  if (f >= 1.0) {
    if (medium.empty()) return keep_all("difficulty mix infeasible: no medium samples");
    m = medium.size();
  } else if (f <= 0.0) {
    if (easy.empty()) return keep_all("difficulty mix infeasible: no easy samples");
    e = easy.size();
  } else {
    if (medium.empty() || easy.empty())
      return keep_all("difficulty mix infeasible: only one difficulty tier present");
    if (M * (1.0 - f) <= E * f) {
      m = medium.size();
      e = std::min(easy.size(), static_cast<std::size_t>(std::llround(M * (1.0 - f) / f)));
    } else {
      e = easy.size();
      m = std::min(medium.size(), static_cast<std::size_t>(std::llround(E * f / (1.0 - f))));
    }
  }
  Rng rng(derive_seed(seed, "difficulty-mix"));
  for (auto i : rng.sample_without_replacement(medium.size(), m)) out.kept.push_back(medium[i]);
  for (auto i : rng.sample_without_replacement(easy.size(), e)) out.kept.push_back(easy[i]);
  out.kept.insert(out.kept.end(), other.begin(), other.end());
  std::sort(out.kept.begin(), out.kept.end());
  return out;
}

std::vector<TrainingSample> apply_difficulty_mix(const std::vector<TrainingSample>& samples,
                                                 double medium_fraction, std::uint64_t seed,
                                                 std::vector<std::string>* warnings) {
  std::vector<std::vector<std::size_t>> units;
  std::map<std::string, std::size_t> group_unit;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& g = samples[i].pair_group;
    if (g) {
      auto [it, inserted] = group_unit.emplace(*g, units.size());
      if (inserted) units.emplace_back();
      units[it->second].push_back(i);
    } else {
      units.push_back({i});
    }
  }
  std::vector<Tier> tags;
  for (const auto& u : units) tags.push_back(samples[u.front()].difficulty);
  auto sel = select_difficulty_mix(tags, medium_fraction, seed);
  if (sel.warning && warnings) warnings->push_back(*sel.warning);
  std::vector<std::size_t> keep;
  for (auto u : sel.kept)
    for (auto i : units[u]) keep.push_back(i);
  std::sort(keep.begin(), keep.end());
  std::vector<TrainingSample> out;
  for (auto i : keep) out.push_back(samples[i]);
  return out;
}

std::vector<TrainingSample> assemble_sft_corpus(Role role, const std::vector<RawPair>& raw,
                                                const PromptSet& prompts, std::uint64_t seed) {
  const auto& tpl = prompts.for_role(role).user;
  std::vector<TrainingSample> correct, incorrect, all;
  for (const auto& r : raw) {
    TrainingSample s;
    s.role = role;
    s.input = tpl.render(r.fields);
    s.output = r.output;
    s.reward = 1.0;
    s.difficulty = r.difficulty;
    s.scenario = "sft";
    s.round_tag = "sft";
    if (role == Role::Critic) {
      if (!r.truth)
        throw SpcError(ErrorCode::InvalidArgument, "critic SFT pairs need a truth label");
      s.scenario = "sft/" + std::string(to_string(*r.truth));
      (*r.truth == StepVerdict::Correct ? correct : incorrect).push_back(std::move(s));
    } else {
      all.push_back(std::move(s));
    }
  }
  if (role == Role::Critic) {
    auto n = std::min(correct.size(), incorrect.size());
    Rng rng(derive_seed(seed, "sft-mix"));
    auto keep = [&](std::vector<TrainingSample>& v) {
      auto idx = rng.sample_without_replacement(v.size(), n);
      std::sort(idx.begin(), idx.end());
      for (auto i : idx) all.push_back(v[i]);
    };
    keep(correct);
    keep(incorrect);
  }
  for (std::size_t i = 0; i < all.size(); ++i) all[i].sample_id = sample_id(role, i);
  return all;
}

std::vector<TrainingSample> mix_datasets(
    const std::vector<std::pair<std::vector<TrainingSample>, double>>& parts, std::uint64_t seed) {
  std::vector<TrainingSample> out;
  Rng rng(derive_seed(seed, "mix"));
  for (const auto& [samples, weight] : parts) {
    if (weight < 0.0) throw SpcError(ErrorCode::InvalidArgument, "dataset weight must be non-negative");
    auto n = samples.size();
    if (n == 0) continue;
    auto target = static_cast<std::size_t>(std::llround(weight * static_cast<double>(n)));
    while (target >= n) {
      out.insert(out.end(), samples.begin(), samples.end());
      target -= n;
    }
    auto idx = rng.sample_without_replacement(n, target);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.push_back(samples[i]);
  }
  return out;
}

}  // namespace spc
