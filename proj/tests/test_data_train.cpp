#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "spc/data.hpp"
#include "spc/rng.hpp"
#include "spc/train.hpp"
#include "support.hpp"

using namespace spc;

namespace {

Critique crit(StepVerdict v, StepVerdict truth) {
  return {v == StepVerdict::Correct ? "fine.\nConclusion: the step is correct."
                                    : "off.\nConclusion: the step is incorrect.",
          v, v == truth, -0.5};
}

CritiqueRecord record(int i, StepVerdict truth, const std::vector<StepVerdict>& verdicts,
                      Tier tier = Tier::Medium) {
  CritiqueRecord r;
  r.instance_id = "r" + std::to_string(i) + (truth == StepVerdict::Correct ? "c" : "e");
  r.problem = {r.instance_id, "Start with " + std::to_string(i) + ". Add 1. What is the result?",
               std::to_string(i + 1), "toy"};
  r.difficulty = tier;
  r.step = {0, std::to_string(i) + " + 1 = " + std::to_string(i + (truth == StepVerdict::Correct ? 1 : 2))};
  r.truth = truth;
  for (auto v : verdicts) r.critiques.push_back(crit(v, truth));
  for (const auto& c : r.critiques) r.r_critic.push_back(c.critic_correct ? 1 : -1);
  r.round_tag = {"S0", "C0"};
  return r;
}

GameRecord game_record(int i, SneakyOutcome o) {
  GameRecord r;
  r.instance_id = "g" + std::to_string(i);
  r.problem = {r.instance_id, "Start with 1. Add 1. What is the result?", "2", "toy"};
  r.original_step = {0, "1 + 1 = 2"};
  r.sneaky_output = "Error type: CalculationError\nTransformation: t\nSneaky step: 1 + 1 = " + std::to_string(i + 3);
  r.outcome = o;
  r.r_sneaky = o == SneakyOutcome::FooledCritic ? 1 : -1;
  r.difficulty = i % 10 == 0 ? Tier::Easy : Tier::Medium;
  r.round_tag = {"S0", "C0"};
  return r;
}

// Independent softmax and its log-gradient for linear policies.
std::vector<double> probs_of(const CategoricalPolicy& p, const FeatureVector& x) {
  std::vector<double> s(p.num_actions(), 0.0);
  for (auto [f, v] : x.entries)
    for (std::size_t a = 0; a < s.size(); ++a) s[a] += v * p.weight(f, a);
  double m = *std::max_element(s.begin(), s.end()), z = 0;
  for (auto& e : s) z += (e = std::exp(e - m));
  for (auto& e : s) e /= z;
  return s;
}

void add_log_grad(const CategoricalPolicy& p, const FeatureVector& x, std::size_t action,
                  double scale, std::vector<double>& g) {
  auto pr = probs_of(p, x);
  for (auto [f, v] : x.entries)
    for (std::size_t a = 0; a < pr.size(); ++a)
      g[f * pr.size() + a] += scale * v * ((a == action ? 1.0 : 0.0) - pr[a]);
}

CategoricalPolicy random_policy(Rng& rng, std::size_t features = 4, std::size_t actions = 5) {
  std::vector<std::string> fs, as;
  for (std::size_t i = 0; i < features; ++i) fs.push_back("f" + std::to_string(i));
  for (std::size_t i = 0; i < actions; ++i) as.push_back("a" + std::to_string(i));
  CategoricalPolicy p("test", fs, as);
  for (auto& w : p.parameters()) w = rng.uniform01() * 3 - 1.5;
  return p;
}

EncodedSample random_sample(Rng& rng, const CategoricalPolicy& p) {
  EncodedSample s;
  s.features.add(0, 1.0);
  for (std::size_t f = 1; f < p.num_features(); ++f)
    if (rng.bernoulli(0.5)) s.features.add(f, rng.uniform01() * 2 - 1);
  s.action = rng.uniform_index(p.num_actions());
  return s;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST_CASE("critic pairs: 3 right + 1 wrong gives one pair group") {
  auto prompts = PromptSet::defaults();
  using V = StepVerdict;
  std::vector<CritiqueRecord> recs = {
      record(1, V::Incorrect, {V::Incorrect, V::Incorrect, V::Correct, V::Incorrect}),
      record(2, V::Correct, {V::Correct, V::Incorrect, V::Correct, V::Correct})};
  auto d = build_critic_dataset(recs, prompts, {4, true}, 3);
  CHECK(d.samples.size() == 4);
  CHECK(d.manifest.pair_groups == 2);
  std::map<std::string, std::vector<TrainingSample>> groups;
  for (const auto& s : d.samples) {
    REQUIRE(s.pair_group.has_value());
    groups[*s.pair_group].push_back(s);
  }
  for (const auto& [g, v] : groups) {
    REQUIRE(v.size() == 2);
    CHECK(v[0].input == v[1].input);
    CHECK(v[0].output != v[1].output);
    CHECK(v[0].reward + v[1].reward == 0.0);
  }
}

TEST_CASE("critic pairs: unanimous critiques give no pair") {
  auto prompts = PromptSet::defaults();
  using V = StepVerdict;
  std::vector<CritiqueRecord> recs = {
      record(1, V::Incorrect, {V::Incorrect, V::Incorrect, V::Incorrect, V::Incorrect}),
      record(2, V::Incorrect, {V::Correct, V::Correct, V::Correct, V::Correct}),
      record(3, V::Correct, {V::Correct, V::Correct, V::Correct, V::Correct}),
      record(4, V::Correct, {V::Incorrect, V::Incorrect, V::Incorrect, V::Incorrect})};
  auto d = build_critic_dataset(recs, prompts, {4, true}, 3);
  CHECK(d.manifest.pair_groups == 0);
  CHECK(d.samples.size() == 4);
  for (const auto& s : d.samples) CHECK_FALSE(s.pair_group.has_value());
  CHECK_THROWS_AS(build_critic_dataset({}, prompts, {4, true}, 3), SpcError);
}

TEST_CASE("critic dataset at 6400 is balanced by sign and truth") {
  auto prompts = PromptSet::defaults();
  using V = StepVerdict;
  std::vector<CritiqueRecord> recs;
  for (int i = 0; i < 2000; ++i) {
    recs.push_back(record(i, V::Incorrect, {V::Incorrect, V::Correct, V::Incorrect, V::Incorrect}));
    recs.push_back(record(i, V::Correct, {V::Correct, V::Correct, V::Incorrect, V::Correct}));
  }
  auto d = build_critic_dataset(recs, prompts, {6400, true}, 5);
  int pos = 0, neg = 0, truth_c = 0;
  for (const auto& s : d.samples) {
    (s.reward > 0 ? pos : neg)++;
    truth_c += s.scenario.rfind("correct", 0) == 0;
  }
  CHECK(d.manifest.total == 6400);
  CHECK(pos == 3200);
  CHECK(neg == 3200);
  CHECK(truth_c == 3200);
  CHECK(DatasetManifest::count_samples(d.samples) == d.manifest.counts);
  auto again = build_critic_dataset(recs, prompts, {6400, true}, 5);
  CHECK(json(again.samples[17]).dump() == json(d.samples[17]).dump());
  CHECK(again.manifest.to_json() == d.manifest.to_json());
  auto rt = DatasetManifest::from_json(d.manifest.to_json());
  CHECK(rt.to_json() == d.manifest.to_json());
}

TEST_CASE("sneaky dataset splits scenarios 1:1:1") {
  auto prompts = PromptSet::defaults();
  std::vector<GameRecord> recs;
  int id = 0;
  for (auto o : {SneakyOutcome::InvalidAttack, SneakyOutcome::DetectedByCritic, SneakyOutcome::FooledCritic})
    for (int i = 0; i < 2100; ++i) recs.push_back(game_record(id++, o));
  auto d = build_sneaky_dataset(recs, prompts, 6000, 1);
  std::map<std::string, int> by;
  for (const auto& s : d.samples) {
    ++by[s.scenario];
    if (s.scenario == "invalid_attack" || s.scenario == "detected_by_critic") CHECK(s.reward == -1.0);
    if (s.scenario == "fooled_critic") CHECK(s.reward == 1.0);
  }
  CHECK(by.size() == 3);
  for (const auto& [k, v] : by) CHECK(v == 2000);
  CHECK(d.manifest.warnings.empty());

  std::vector<GameRecord> lopsided;
  for (int i = 0; i < 30; ++i) lopsided.push_back(game_record(i, SneakyOutcome::InvalidAttack));
  for (int i = 30; i < 60; ++i) lopsided.push_back(game_record(i, SneakyOutcome::DetectedByCritic));
  for (int i = 60; i < 65; ++i) lopsided.push_back(game_record(i, SneakyOutcome::FooledCritic));
  auto small = build_sneaky_dataset(lopsided, prompts, 60, 1);
  CHECK(small.samples.size() == 15);
  CHECK_FALSE(small.manifest.warnings.empty());
}

TEST_CASE("difficulty mix") {
  std::vector<Tier> tags;
  for (int i = 0; i < 1000; ++i) tags.push_back(i % 2 ? Tier::Medium : Tier::Easy);
  auto m = select_difficulty_mix(tags, 0.9, 4);
  int med = 0;
  for (auto i : m.kept) med += tags[i] == Tier::Medium;
  CHECK(std::abs(static_cast<double>(med) / m.kept.size() - 0.9) <= 0.02);
  CHECK(std::is_sorted(m.kept.begin(), m.kept.end()));

  std::vector<Tier> big(900, Tier::Medium);
  big.insert(big.end(), 300, Tier::Easy);
  auto m2 = select_difficulty_mix(big, 0.9, 4);
  CHECK(m2.kept.size() == 1000);

  auto m3 = select_difficulty_mix(tags, 1.0, 4);
  for (auto i : m3.kept) CHECK(tags[i] == Tier::Medium);

  std::vector<Tier> easy(50, Tier::Easy);
  auto m4 = select_difficulty_mix(easy, 0.9, 4);
  CHECK(m4.kept.size() == 50);
  CHECK(m4.warning.has_value());
}

TEST_CASE("difficulty mix keeps pairs together") {
  auto prompts = PromptSet::defaults();
  using V = StepVerdict;
  std::vector<CritiqueRecord> recs;
  for (int i = 0; i < 200; ++i) {
    recs.push_back(record(i, V::Incorrect, {V::Incorrect, V::Correct}, i % 3 ? Tier::Medium : Tier::Easy));
    recs.push_back(record(i, V::Correct, {V::Correct, V::Incorrect}, i % 3 ? Tier::Medium : Tier::Easy));
  }
  auto d = build_critic_dataset(recs, prompts, {800, true}, 2);
  auto mixed = apply_difficulty_mix(d.samples, 0.9, 2);
  std::map<std::string, int> sizes;
  for (const auto& s : mixed)
    if (s.pair_group) ++sizes[*s.pair_group];
  for (const auto& [g, n] : sizes) CHECK(n == 2);
}

TEST_CASE("sft corpus assembly") {
  auto prompts = PromptSet::defaults();
  std::vector<RawPair> raw;
  for (int i = 0; i < 100; ++i) {
    RawPair r;
    r.fields = {{"problem", "P" + std::to_string(i)}, {"prefix", std::string(kEmptyPrefix)}, {"step", "S"}};
    r.output = "out";
    r.truth = i < 60 ? StepVerdict::Correct : StepVerdict::Incorrect;
    raw.push_back(r);
  }
  auto critic = assemble_sft_corpus(Role::Critic, raw, prompts, 1);
  int c = 0;
  for (const auto& s : critic) c += s.scenario == "sft/correct";
  CHECK(critic.size() == 80);
  CHECK(c == 40);
  for (const auto& s : critic) {
    auto f = prompts.critic.user.extract(s.input);
    REQUIRE(f.has_value());
    CHECK(f->at("step") == "S");
  }
  auto sneaky = assemble_sft_corpus(Role::Sneaky, std::vector<RawPair>(raw.begin(), raw.begin() + 20), prompts, 1);
  CHECK(sneaky.size() == 20);
  RawPair bad;
  bad.fields = {{"problem", "P"}, {"step", "S"}};
  bad.truth = StepVerdict::Correct;
  try {
    assemble_sft_corpus(Role::Critic, {bad}, prompts, 1);
    FAIL("expected TemplateFieldMissing");
  } catch (const SpcError& e) {
    CHECK(e.code() == ErrorCode::TemplateFieldMissing);
  }
}

TEST_CASE("dataset mixing by weight") {
  std::vector<TrainingSample> a(10), b(10);
  for (int i = 0; i < 10; ++i) {
    a[i].sample_id = "a" + std::to_string(i);
    b[i].sample_id = "b" + std::to_string(i);
  }
  CHECK(mix_datasets({{a, 1.0}, {b, 1.0}}, 1).size() == 20);
  CHECK(mix_datasets({{a, 0.5}, {b, 2.0}}, 1).size() == 25);
}

TEST_CASE("sft loss values") {
  CategoricalPolicy p("t", {"bias"}, {"a", "b", "c", "d", "e"});
  std::vector<EncodedSample> batch(3);
  for (std::size_t i = 0; i < 3; ++i) {
    batch[i].features.add(0);
    batch[i].action = i;
  }
  CHECK(sft_loss(p, batch).loss == doctest::Approx(std::log(5.0)));
  p.weight(0, 1) = 40.0;
  std::vector<EncodedSample> target(2);
  for (auto& t : target) {
    t.features.add(0);
    t.action = 1;
  }
  CHECK(sft_loss(p, target).loss < 1e-12);
}

TEST_CASE("sft loss gradient matches finite differences") {
  Rng rng(101);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    auto p = random_policy(rng);
    std::vector<EncodedSample> batch;
    for (int i = 0; i < 6; ++i) batch.push_back(random_sample(rng, p));
    auto lg = sft_loss(p, batch);
    for (std::size_t i = 0; i < p.parameters().size(); ++i) {
      auto plus = p, minus = p;
      plus.parameters()[i] += h;
      minus.parameters()[i] -= h;
      double fd = (sft_loss(plus, batch).loss - sft_loss(minus, batch).loss) / (2 * h);
      CHECK(rel_err(fd, lg.gradient[i]) <= 1e-4);
    }
  }
}

TEST_CASE("advantage examples and identities") {
  auto a = advantage({1, -1, 1, -1}, {0, 0, 0, 0}, 0.0);
  CHECK(a == std::vector<double>{1, -1, 1, -1});
  auto b = advantage({1, 1, 1, -1}, {0, 0, 0, 0}, 0.0);
  CHECK(b == std::vector<double>{0.5, 0.5, 0.5, -1.5});
  auto c = advantage({1, -1, 1}, {0, 0, 0}, 0.7);
  CHECK(c == advantage({1, -1, 1}, {0, 0, 0}, 0.0));
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    std::size_t n = 1 + rng.uniform_index(20);
    std::vector<double> r(n), kl(n), shifted(n);
    double beta = rng.uniform01();
    double shift = rng.uniform01() * 10 - 5;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.bernoulli(0.5) ? 1.0 : -1.0;
      kl[i] = rng.uniform01() - 0.3;
      shifted[i] = r[i] + shift;
    }
    auto A = advantage(r, kl, beta);
    auto S = advantage(shifted, kl, beta);
    double mean_a = std::accumulate(A.begin(), A.end(), 0.0) / n;
    double mean_kl = std::accumulate(kl.begin(), kl.end(), 0.0) / n;
    CHECK(std::abs(mean_a + beta * mean_kl) <= 1e-12);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(A[i] - S[i]) <= 1e-12);
  }
}

TEST_CASE("rl gradient reduces to REINFORCE with baseline") {
  Rng rng(7);
  RlConfig cfg;
  cfg.kl_coefficient = 0.0;
  cfg.sft_aux_coefficient = 0.0;
  for (int t = 0; t < 50; ++t) {
    auto p = random_policy(rng);
    std::vector<RlSample> batch;
    for (int i = 0; i < 8; ++i) {
      RlSample s{random_sample(rng, p), rng.bernoulli(0.5) ? 1.0 : -1.0, 0.0};
      s.old_logprob = p.log_prob(s.sample.features, s.sample.action);
      batch.push_back(s);
    }
    auto g = rl_gradient(p, batch, p, cfg);
    double b = 0;
    for (const auto& s : batch) b += s.reward;
    b /= batch.size();
    std::vector<double> want(p.parameters().size(), 0.0);
    for (const auto& s : batch) add_log_grad(p, s.sample.features, s.sample.action, (s.reward - b) / batch.size(), want);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(want[i] - g.gradient[i]) <= 1e-10);
    CHECK(g.mean_ratio == doctest::Approx(1.0));
  }
}

TEST_CASE("single-sample batch leaves only the KL term") {
  Rng rng(8);
  auto p = random_policy(rng);
  auto ref = random_policy(rng);
  RlConfig cfg;
  cfg.sft_aux_coefficient = 0.0;
  RlSample s{random_sample(rng, p), 1.0, 0.0};
  s.old_logprob = p.log_prob(s.sample.features, s.sample.action);
  auto g = rl_gradient(p, {s}, ref, cfg);
  double kl = p.log_prob(s.sample.features, s.sample.action) - ref.log_prob(s.sample.features, s.sample.action);
  REQUIRE(g.advantages.size() == 1);
  CHECK(g.advantages[0] == doctest::Approx(-cfg.kl_coefficient * kl));
  std::vector<double> want(p.parameters().size(), 0.0);
  add_log_grad(p, s.sample.features, s.sample.action, -cfg.kl_coefficient * kl, want);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(want[i] - g.gradient[i]) <= 1e-10);
}

TEST_CASE("rl gradient matches finite differences of the surrogate") {
  Rng rng(202);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    auto p = random_policy(rng);
    auto ref = random_policy(rng);
    RlConfig cfg;
    cfg.kl_coefficient = rng.uniform01();
    cfg.sft_aux_coefficient = rng.uniform01() * 0.3;
    cfg.exact_kl = trial % 2 == 1;
    std::vector<RlSample> batch;
    for (int i = 0; i < 6; ++i) {
      RlSample s{random_sample(rng, p), rng.bernoulli(0.5) ? 1.0 : -1.0, 0.0};
      s.old_logprob = p.log_prob(s.sample.features, s.sample.action) + (rng.uniform01() - 0.5);
      batch.push_back(s);
    }
    auto g = rl_gradient(p, batch, ref, cfg);
    for (std::size_t i = 0; i < p.parameters().size(); ++i) {
      auto plus = p, minus = p;
      plus.parameters()[i] += h;
      minus.parameters()[i] -= h;
      double fd = (rl_surrogate(plus, batch, g.advantages, cfg) - rl_surrogate(minus, batch, g.advantages, cfg)) / (2 * h);
      CHECK(rel_err(fd, g.gradient[i]) <= 1e-4);
    }
  }
}

namespace {

// Input "x<i>" maps to features {bias, i}; output is the action name.
toy::SampleEncoder simple_encoder(const CategoricalPolicy& p) {
  return [p](const std::string& input, const std::string& output) {
    EncodedSample e;
    e.features.add(0);
    e.features.add(1 + static_cast<std::size_t>(std::stoi(input.substr(1))));
    e.action = p.action_index(output);
    return e;
  };
}

std::vector<TrainingSample> simple_samples(Rng& rng, int n, bool constant_reward) {
  std::vector<TrainingSample> out;
  for (int i = 0; i < n; ++i) {
    TrainingSample s;
    s.sample_id = "s" + std::to_string(i);
    s.input = "x" + std::to_string(rng.uniform_index(3));
    s.output = "a" + std::to_string(rng.uniform_index(3));
    s.reward = constant_reward ? 1.0 : (rng.bernoulli(0.5) ? 1.0 : -1.0);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("train_round: zero reward variance leaves parameters unchanged") {
  Rng rng(3);
  auto init = random_policy(rng, 4, 3);
  auto samples = simple_samples(rng, 64, true);
  RlConfig cfg;
  cfg.kl_coefficient = 0.0;
  cfg.sft_aux_coefficient = 0.0;
  cfg.epochs_rl = 3;
  auto r = train_round(init, samples, simple_encoder(init), cfg, TrainMode::Rl, 1);
  CHECK(r.policy.parameters() == init.parameters());
  CHECK(r.report.parameter_drift == 0.0);
  CHECK(r.report.fallback_old_logprobs > 0);
}

TEST_CASE("train_round: a large KL coefficient limits drift") {
  Rng rng(4);
  auto init = random_policy(rng, 4, 3);
  auto samples = simple_samples(rng, 256, false);
  RlConfig cfg;
  cfg.epochs_rl = 5;
  cfg.exact_kl = true;
  cfg.kl_coefficient = 0.0;
  auto free = train_round(init, samples, simple_encoder(init), cfg, TrainMode::Rl, 1);
  auto tied_cfg = cfg;
  tied_cfg.kl_coefficient = 1e3;
  auto tied = train_round(init, samples, simple_encoder(init), tied_cfg, TrainMode::Rl, 1);
  CHECK(std::isfinite(tied.report.parameter_drift));
  CHECK(tied.report.parameter_drift < free.report.parameter_drift);
}

TEST_CASE("train_round is deterministic and writes epoch snapshots") {
  test::TempDir dir("train");
  Rng rng(6);
  auto init = random_policy(rng, 4, 3);
  auto samples = simple_samples(rng, 100, false);
  RlConfig cfg;
  cfg.epochs_sft = 2;
  auto a = train_round(init, samples, simple_encoder(init), cfg, TrainMode::Sft, 9, dir.path());
  auto b = train_round(init, samples, simple_encoder(init), cfg, TrainMode::Sft, 9);
  CHECK(a.policy == b.policy);
  CHECK(a.report.loss_curve.size() == 2);
  CHECK(std::filesystem::exists(dir.path() / "epoch_1.json"));
  CHECK(std::filesystem::exists(dir.path() / "epoch_2.json"));
  CHECK(a.report.loss_curve.back() < std::log(3.0) + 1.0);
}
