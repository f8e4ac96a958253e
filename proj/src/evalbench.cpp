#include "spc/evalbench.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "spc/formats.hpp"
#include "spc/hash.hpp"
#include "spc/rng.hpp"
#include "spc/toyworld.hpp"

namespace spc {

void to_json(json& j, const CorpusAdapter& a) {
  j = json{{"tag", a.tag},
           {"id_field", a.id_field},
           {"problem_field", a.problem_field},
           {"steps_field", a.steps_field},
           {"labels_field", a.labels_field},
           {"first_error_field", a.first_error_field},
           {"final_answer_field", a.final_answer_field},
           {"gold_answer_field", a.gold_answer_field},
           {"step_delimiter", a.step_delimiter},
           {"no_error_value", a.no_error_value},
           {"semantics", a.semantics == ErrorSemantics::FirstError ? "first_error" : "all_errors"}};
}

void from_json(const json& j, CorpusAdapter& a) {
  a = CorpusAdapter{};
  auto str = [&](const char* key, std::string& dst) {
    if (j.contains(key)) dst = j[key].get<std::string>();
  };
  str("tag", a.tag);
  str("id_field", a.id_field);
  str("problem_field", a.problem_field);
  str("steps_field", a.steps_field);
  str("labels_field", a.labels_field);
  str("first_error_field", a.first_error_field);
  str("final_answer_field", a.final_answer_field);
  str("gold_answer_field", a.gold_answer_field);
  str("step_delimiter", a.step_delimiter);
  if (j.contains("no_error_value")) a.no_error_value = j["no_error_value"].get<int>();
  if (j.contains("semantics")) {
    auto s = j["semantics"].get<std::string>();
    if (s == "first_error") a.semantics = ErrorSemantics::FirstError;
    else if (s == "all_errors") a.semantics = ErrorSemantics::AllErrors;
    else throw SpcError(ErrorCode::InvalidArgument, "unknown error semantics: " + s);
  }
}

std::optional<AnnotatedSolution> adapt_record(const json& record, const CorpusAdapter& adapter,
                                              std::size_t line) {
  if (!record.is_object()) throw SpcError(ErrorCode::ParseFailure, "corpus record is not an object");
  AnnotatedSolution sol;
  sol.source = adapter.tag;
  if (record.contains(adapter.id_field)) {
    const auto& id = record[adapter.id_field];
    sol.problem.id = id.is_string() ? id.get<std::string>() : id.dump();
  } else {
    sol.problem.id = adapter.tag + ":" + std::to_string(line);
  }
  if (!record.contains(adapter.problem_field))
    throw SpcError(ErrorCode::ParseFailure, "record " + sol.problem.id + " has no problem field");
  const auto& pf = record[adapter.problem_field];
  if (pf.is_string()) {
    sol.problem.statement = pf.get<std::string>();
  } else {
    sol.problem = pf.get<Problem>();
    if (sol.problem.id.empty()) sol.problem.id = adapter.tag + ":" + std::to_string(line);
  }
  if (record.contains(adapter.gold_answer_field))
    sol.problem.gold_answer = canonicalize_answer(record[adapter.gold_answer_field].get<std::string>());
  if (sol.problem.source_tag.empty()) sol.problem.source_tag = adapter.tag;

  if (!record.contains(adapter.steps_field))
    throw SpcError(ErrorCode::ParseFailure, "record " + sol.problem.id + " has no steps");
  const auto& sf = record[adapter.steps_field];
  if (sf.is_string()) {
    sol.steps = split_into_steps(sf.get<std::string>(), adapter.step_delimiter);
  } else {
    sol.steps = make_steps(sf.get<std::vector<std::string>>());
  }

  if (record.contains(adapter.labels_field) && record[adapter.labels_field].is_array()) {
    auto raw = record[adapter.labels_field].get<std::vector<int>>();
    if (raw.size() != sol.steps.size())
      throw SpcError(ErrorCode::ParseFailure,
                     "record " + sol.problem.id + ": label count differs from step count");
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != 0 && raw[i] != 1)
        throw SpcError(ErrorCode::ParseFailure, "record " + sol.problem.id + ": labels must be 0/1");
      sol.labels.push_back(raw[i] == 1 ? StepVerdict::Correct : StepVerdict::Incorrect);
      if (raw[i] == 0 && !sol.first_error) sol.first_error = static_cast<int>(i);
    }
    return sol;
  }
  if (record.contains(adapter.first_error_field) && record[adapter.first_error_field].is_number_integer()) {
    int fe = record[adapter.first_error_field].get<int>();
    if (fe != adapter.no_error_value) {
      if (fe < 0 || static_cast<std::size_t>(fe) >= sol.steps.size())
        throw SpcError(ErrorCode::ParseFailure, "record " + sol.problem.id + ": first error out of range");
      sol.first_error = fe;
    }
    return sol;
  }
  return std::nullopt;
}

void to_json(json& j, const ProbeRecord& p) {
  j = json{{"problem", p.problem},
           {"prefix", p.prefix},
           {"probe_step", p.probe_step},
           {"truth", to_string(p.truth)},
           {"source", p.source}};
}

void from_json(const json& j, ProbeRecord& p) {
  p.problem = j.at("problem").get<Problem>();
  p.prefix = j.at("prefix").get<std::vector<Step>>();
  p.probe_step = j.at("probe_step").get<Step>();
  p.truth = parse_verdict(j.at("truth").get<std::string>());
  p.source = j.value("source", "");
}

namespace {

ProbeRecord probe_at(const AnnotatedSolution& sol, std::size_t k, StepVerdict truth) {
  ProbeRecord p;
  p.problem = sol.problem;
  p.prefix.assign(sol.steps.begin(), sol.steps.begin() + static_cast<std::ptrdiff_t>(k));
  p.probe_step = sol.steps[k];
  p.truth = truth;
  p.source = sol.source;
  return p;
}

std::vector<ProbeRecord> downsample(std::vector<ProbeRecord> v, std::size_t n, Rng& rng) {
  if (v.size() <= n) return v;
  auto idx = rng.sample_without_replacement(v.size(), n);
  std::sort(idx.begin(), idx.end());
  std::vector<ProbeRecord> out;
  out.reserve(n);
  for (auto i : idx) out.push_back(std::move(v[i]));
  return out;
}

}  // namespace

ProbeSet build_probes(const std::vector<json>& corpus, const CorpusAdapter& adapter,
                      std::uint64_t seed) {
  ProbeSet out;
  std::vector<ProbeRecord> errors, corrects;
  auto step_seed = derive_seed(seed, "probe-step");
  for (std::size_t line = 0; line < corpus.size(); ++line) {
    auto sol = adapt_record(corpus[line], adapter, line);
    if (!sol) {
      ++out.skipped_unlabeled;
      continue;
    }
    if (sol->steps.empty()) {
      ++out.skipped_unlabeled;
      continue;
    }
    if (!sol->first_error) {
      Rng rng(derive_seed(derive_seed(step_seed, fnv1a64(sol->problem.id)), line));
      corrects.push_back(probe_at(*sol, rng.uniform_index(sol->steps.size()), StepVerdict::Correct));
      continue;
    }
    if (adapter.semantics == ErrorSemantics::AllErrors && !sol->labels.empty()) {
      for (std::size_t k = 0; k < sol->labels.size(); ++k)
        if (sol->labels[k] == StepVerdict::Incorrect)
          errors.push_back(probe_at(*sol, k, StepVerdict::Incorrect));
    } else {
      errors.push_back(probe_at(*sol, static_cast<std::size_t>(*sol->first_error),
                                StepVerdict::Incorrect));
    }
  }
  out.error_candidates = static_cast<int>(errors.size());
  out.correct_candidates = static_cast<int>(corrects.size());
  auto n = std::min(errors.size(), corrects.size());
  Rng rng(derive_seed(seed, "probe-balance"));
  errors = downsample(std::move(errors), n, rng);
  corrects = downsample(std::move(corrects), n, rng);
  out.probes = std::move(errors);
  for (auto& c : corrects) out.probes.push_back(std::move(c));
  return out;
}

double average_recall(double rc, double re) { return (rc + re) / 2.0; }

double harmonic_recall(double rc, double re) {
  if (rc + re == 0.0) return 0.0;
  return 2.0 * rc * re / (rc + re);
}

double RecallCounts::recall_correct() const {
  return correct_total == 0 ? 0.0 : 100.0 * correct_hits / correct_total;
}

double RecallCounts::recall_error() const {
  return error_total == 0 ? 0.0 : 100.0 * error_hits / error_total;
}

EvalReport report_from_counts(const RecallCounts& counts) {
  EvalReport r;
  r.counts = counts;
  r.recall_correct = counts.recall_correct();
  r.recall_error = counts.recall_error();
  r.average = average_recall(r.recall_correct, r.recall_error);
  r.harmonic_mean = harmonic_recall(r.recall_correct, r.recall_error);
  return r;
}

namespace {

json counts_json(const RecallCounts& c) {
  return json{{"correct_total", c.correct_total},
              {"correct_hits", c.correct_hits},
              {"error_total", c.error_total},
              {"error_hits", c.error_hits},
              {"recall_correct", c.recall_correct()},
              {"recall_error", c.recall_error()},
              {"average", average_recall(c.recall_correct(), c.recall_error())},
              {"harmonic_mean", harmonic_recall(c.recall_correct(), c.recall_error())}};
}

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

json EvalReport::to_json() const {
  json subs = json::object();
  for (const auto& [k, c] : subsets) subs[k] = counts_json(c);
  return json{{"recall_correct", recall_correct},
              {"recall_error", recall_error},
              {"average", average},
              {"harmonic_mean", harmonic_mean},
              {"counts", counts_json(counts)},
              {"unparsed", unparsed},
              {"backend_errors", backend_errors},
              {"subsets", subs}};
}

std::string EvalReport::table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s %7s\n", "subset", "Correct", "Error",
                "Average", "HarMean", "n");
  os << line;
  auto row = [&](const std::string& name, const RecallCounts& c) {
    double rc = c.recall_correct(), re = c.recall_error();
    std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s %7d\n", name.c_str(), fmt1(rc).c_str(),
                  fmt1(re).c_str(), fmt1(average_recall(rc, re)).c_str(),
                  fmt1(harmonic_recall(rc, re)).c_str(), c.correct_total + c.error_total);
    os << line;
  };
  if (subsets.size() > 1)
    for (const auto& [k, c] : subsets) row(k, c);
  row("all", counts);
  if (unparsed || backend_errors)
    os << "unparsed: " << unparsed << ", backend errors: " << backend_errors << "\n";
  return os.str();
}

EvalReport evaluate_critic(const std::vector<ProbeRecord>& probes, Backend& critic,
                           const RolePrompt& critic_prompt, const EvalOptions& opts,
                           const Executor& executor) {
  if (probes.empty()) throw SpcError(ErrorCode::InvalidArgument, "no probes to evaluate");
  enum class Outcome { Hit, Miss, Unparsed, BackendError };
  std::vector<Outcome> outcomes(probes.size());
  executor.parallel_for(probes.size(), [&](std::size_t i) {
    const auto& p = probes[i];
    SamplingParams sp{opts.temperature, opts.max_tokens, derive_seed(opts.seed, i)};
    auto resp = critic.generate(build_request(critic_prompt, make_fields(p.problem, p.prefix, p.probe_step), sp));
    if (!resp.ok()) {
      outcomes[i] = Outcome::BackendError;
      return;
    }
    auto v = parse_critique(resp.text).verdict;
    if (!v) outcomes[i] = Outcome::Unparsed;
    else outcomes[i] = *v == p.truth ? Outcome::Hit : Outcome::Miss;
  });

  RecallCounts all;
  std::map<std::string, RecallCounts> subsets;
  int unparsed = 0, backend_errors = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    bool hit = outcomes[i] == Outcome::Hit;
    unparsed += outcomes[i] == Outcome::Unparsed;
    backend_errors += outcomes[i] == Outcome::BackendError;
    for (auto* c : {&all, &subsets[probes[i].source]}) {
      if (probes[i].truth == StepVerdict::Correct) {
        ++c->correct_total;
        c->correct_hits += hit;
      } else {
        ++c->error_total;
        c->error_hits += hit;
      }
    }
  }
  auto r = report_from_counts(all);
  r.subsets = std::move(subsets);
  r.unparsed = unparsed;
  r.backend_errors = backend_errors;
  return r;
}

double score_solver_benchmark(const std::vector<Problem>& problems,
                              const std::vector<std::string>& answers) {
  if (problems.size() != answers.size())
    throw SpcError(ErrorCode::InvalidArgument, "answer count differs from problem count");
  if (problems.empty()) return 0.0;
  int right = 0;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    auto a = canonicalize_answer(answers[i]);
    if (!a.empty() && a == problems[i].gold_answer) ++right;
  }
  return 100.0 * right / static_cast<double>(problems.size());
}

json SolveRateSummary::to_json() const { return json{{"mean", mean}, {"runs", runs}}; }

SolveRateSummary score_solver_runs(const std::vector<Problem>& problems,
                                   const std::vector<std::vector<std::string>>& runs) {
  SolveRateSummary s;
  for (const auto& r : runs) s.runs.push_back(score_solver_benchmark(problems, r));
  if (!s.runs.empty()) {
    double sum = 0;
    for (double v : s.runs) sum += v;
    s.mean = sum / static_cast<double>(s.runs.size());
  }
  return s;
}

std::vector<json> toy_labeled_corpus(int n_correct, int n_error, int min_difficulty,
                                     int max_difficulty, std::uint64_t seed) {
  using namespace toy;
  if (min_difficulty > max_difficulty)
    throw SpcError(ErrorCode::InvalidArgument, "min_difficulty above max_difficulty");
  std::vector<json> out;
  int total = n_correct + n_error;
  for (int i = 0; i < total; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    int d = min_difficulty + static_cast<int>(rng.uniform_index(
                                 static_cast<std::size_t>(max_difficulty - min_difficulty + 1)));
    auto tp = sample_problem(rng.next(), d);
    auto steps = correct_solution(tp);
    bool erroneous = i >= n_correct;
    if (erroneous) {
      auto k = rng.uniform_index(steps.size());
      auto first = rng.uniform_index(kAllPerturbations.size());
      for (std::size_t t = 0; t < kAllPerturbations.size(); ++t) {
        try {
          steps[k] = apply_perturbation(steps[k], kAllPerturbations[(first + t) % kAllPerturbations.size()]);
          break;
        } catch (const SpcError&) {
        }
      }
      for (auto j = k + 1; j < steps.size(); ++j) steps[j] = correct_step(tp, j, steps[j - 1].rhs_claimed);
    }
    std::vector<int> labels;
    std::vector<ToyStep> prefix;
    for (const auto& s : steps) {
      labels.push_back(oracle_check(s, prefix, tp) == StepVerdict::Correct ? 1 : 0);
      prefix.push_back(s);
    }
    std::vector<std::string> texts;
    for (const auto& s : render_steps(tp, steps)) texts.push_back(s.text);
    auto id = "toy-" + std::to_string(seed) + "-" + std::to_string(i);
    out.push_back(json{{"id", id},
                       {"problem", statement(tp)},
                       {"gold_answer", std::to_string(tp.gold_answer)},
                       {"steps", texts},
                       {"labels", labels},
                       {"final_answer", std::to_string(steps.back().rhs_claimed)}});
  }
  return out;
}

}  // namespace spc
