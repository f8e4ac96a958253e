#pragma once

// Step-level critic benchmark: balanced correct/error probes from annotated
// solutions, recall per class, and solve-rate scoring for solver runs.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spc/backend.hpp"
#include "spc/executor.hpp"

namespace spc {

enum class ErrorSemantics { FirstError, AllErrors };

// Field mapping for one annotated corpus. Labels are 1 (correct) / 0
// (incorrect) per step; first_error_index uses no_error_value for solutions
// without an error. A string-valued steps field is split on step_delimiter.
struct CorpusAdapter {
  std::string tag = "corpus";
  std::string id_field = "id";
  std::string problem_field = "problem";
  std::string steps_field = "steps";
  std::string labels_field = "labels";
  std::string first_error_field = "first_error_index";
  std::string final_answer_field = "final_answer";
  std::string gold_answer_field = "gold_answer";
  std::string step_delimiter = std::string(kStepDelimiter);
  int no_error_value = -1;
  ErrorSemantics semantics = ErrorSemantics::FirstError;
};

void to_json(json& j, const CorpusAdapter& a);
void from_json(const json& j, CorpusAdapter& a);

struct AnnotatedSolution {
  Problem problem;
  std::vector<Step> steps;
  std::vector<StepVerdict> labels;  // empty when only a first-error index is known
  std::optional<int> first_error;   // resolved: nullopt = no error
  std::string source;
};

// Nullopt for records carrying neither labels nor a first-error index.
std::optional<AnnotatedSolution> adapt_record(const json& record, const CorpusAdapter& adapter,
                                              std::size_t line);

struct ProbeRecord {
  Problem problem;
  std::vector<Step> prefix;
  Step probe_step;
  StepVerdict truth = StepVerdict::Correct;
  std::string source;

  bool operator==(const ProbeRecord&) const = default;
};

void to_json(json& j, const ProbeRecord& p);
void from_json(const json& j, ProbeRecord& p);

struct ProbeSet {
  std::vector<ProbeRecord> probes;  // error probes first, then correct ones
  int skipped_unlabeled = 0;
  int error_candidates = 0;
  int correct_candidates = 0;
};

ProbeSet build_probes(const std::vector<json>& corpus, const CorpusAdapter& adapter,
                      std::uint64_t seed);

double average_recall(double recall_correct, double recall_error);
double harmonic_recall(double recall_correct, double recall_error);

struct RecallCounts {
  int correct_total = 0;
  int correct_hits = 0;
  int error_total = 0;
  int error_hits = 0;

  double recall_correct() const;  // percentages
  double recall_error() const;
};

struct EvalReport {
  double recall_correct = 0.0;
  double recall_error = 0.0;
  double average = 0.0;
  double harmonic_mean = 0.0;
  RecallCounts counts;
  int unparsed = 0;
  int backend_errors = 0;
  std::map<std::string, RecallCounts> subsets;

  json to_json() const;
  std::string table() const;
};

EvalReport report_from_counts(const RecallCounts& counts);

struct EvalOptions {
  double temperature = 0.0;
  int max_tokens = 1024;
  std::uint64_t seed = 0;
};

// One critique per probe. Unparseable critiques and backend failures are
// misses for the probe's truth class.
EvalReport evaluate_critic(const std::vector<ProbeRecord>& probes, Backend& critic,
                           const RolePrompt& critic_prompt, const EvalOptions& opts,
                           const Executor& executor = Executor(1));

double score_solver_benchmark(const std::vector<Problem>& problems,
                              const std::vector<std::string>& answers);

struct SolveRateSummary {
  double mean = 0.0;
  std::vector<double> runs;

  json to_json() const;
};

SolveRateSummary score_solver_runs(const std::vector<Problem>& problems,
                                   const std::vector<std::vector<std::string>>& runs);

// Toy corpus in the adapter's default schema: correct solutions plus
// solutions with one perturbed step, labelled by oracle_check.
std::vector<json> toy_labeled_corpus(int n_correct, int n_error, int min_difficulty,
                                     int max_difficulty, std::uint64_t seed);

}  // namespace spc
