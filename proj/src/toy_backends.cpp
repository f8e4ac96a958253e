#include "spc/toy_backends.hpp"

#include <cmath>
#include <cstdlib>

#include "spc/formats.hpp"
#include "spc/hash.hpp"
#include "spc/rng.hpp"

namespace spc::toy {

namespace {

const std::vector<std::string> kCriticFeatures = {
    "bias",     "resid:neg",   "resid:zero",  "resid:pos",  "resid:masked",
    "chain:ok", "chain:broken", "op:match",   "op:mismatch", "op:masked",
    "mag:small", "mag:mid",     "mag:large"};

const std::vector<std::string> kSneakyFeatures = {
    "bias",      "op:+",    "op:-",      "op:*",       "mag:small", "mag:mid",
    "mag:large", "pos:first", "pos:middle", "pos:last"};

const std::vector<std::string> kSolverFeatures = {"bias",      "op:+",    "op:-",    "op:*",
                                                  "mag:small", "mag:mid", "mag:large"};

std::vector<std::string> perturbation_names() {
  std::vector<std::string> out;
  for (auto a : kAllPerturbations) out.emplace_back(to_string(a));
  return out;
}

std::size_t op_feature(Op op) { return static_cast<std::size_t>(op); }

std::string context_key(const ToyProblem& p, const std::vector<ToyStep>& prefix,
                        const ToyStep& step) {
  std::string key = statement(p);
  for (const auto& s : prefix) key += "|" + format_step(s, false);
  key += "|" + format_step(step, false);
  return key;
}

}  // namespace

void to_json(json& j, const CriticFeatureConfig& c) {
  j = json{{"residual_mask", c.residual_mask}, {"operation_mask", c.operation_mask}};
}

void from_json(const json& j, CriticFeatureConfig& c) {
  c = CriticFeatureConfig{};
  if (j.contains("residual_mask")) c.residual_mask = j["residual_mask"].get<std::array<double, 3>>();
  if (j.contains("operation_mask")) c.operation_mask = j["operation_mask"].get<double>();
}

CategoricalPolicy make_critic_policy() {
  return CategoricalPolicy(std::string(kCriticFeatureMap), kCriticFeatures,
                           {std::string(to_string(StepVerdict::Correct)),
                            std::string(to_string(StepVerdict::Incorrect))});
}

CategoricalPolicy make_sneaky_policy() {
  return CategoricalPolicy(std::string(kSneakyFeatureMap), kSneakyFeatures, perturbation_names());
}

CategoricalPolicy make_solver_policy() {
  auto actions = perturbation_names();
  actions.insert(actions.begin(), "Correct");
  return CategoricalPolicy(std::string(kSolverFeatureMap), kSolverFeatures, actions);
}

CategoricalPolicy make_planted_solver(double error_rate) {
  if (!(error_rate > 0.0 && error_rate < 1.0))
    throw SpcError(ErrorCode::InvalidArgument, "planted error rate must be in (0, 1)");
  auto p = make_solver_policy();
  double n = static_cast<double>(kAllPerturbations.size());
  p.weight(0, kSolverCorrect) = std::log((1.0 - error_rate) * n / error_rate);
  return p;
}

int magnitude_bucket(long v) {
  auto a = std::labs(v);
  if (a < 10) return 0;
  if (a < 100) return 1;
  return 2;
}

FeatureVector critic_features(const ToyProblem& p, const std::vector<ToyStep>& prefix,
                              const ToyStep& step, const CriticFeatureConfig& cfg) {
  FeatureVector x;
  x.add(0);
  auto key = context_key(p, prefix, step);
  int mag = magnitude_bucket(step.rhs_claimed);
  long residual = step.rhs_claimed - apply_op(step.op, step.lhs, step.operand);
  if (hash_unit("resid|" + key) < cfg.residual_mask[static_cast<std::size_t>(mag)]) {
    x.add(4);
  } else {
    x.add(residual < 0 ? 1 : residual == 0 ? 2 : 3);
  }
  long expected_lhs = prefix.empty() ? p.start_value : prefix.back().rhs_claimed;
  x.add(step.lhs == expected_lhs ? 5 : 6);
  if (hash_unit("op|" + key) < cfg.operation_mask) {
    x.add(9);
  } else if (prefix.size() < p.ops.size()) {
    const auto& o = p.ops[prefix.size()];
    x.add(o.op == step.op && o.operand == step.operand ? 7 : 8);
  } else {
    x.add(8);
  }
  x.add(10 + static_cast<std::size_t>(mag));
  return x;
}

FeatureVector sneaky_features(const ToyProblem& p, const std::vector<ToyStep>& prefix,
                              const ToyStep& step) {
  FeatureVector x;
  x.add(0);
  x.add(1 + op_feature(step.op));
  x.add(4 + static_cast<std::size_t>(magnitude_bucket(step.rhs_claimed)));
  if (prefix.empty()) {
    x.add(7);
  } else if (prefix.size() + 1 >= p.ops.size()) {
    x.add(9);
  } else {
    x.add(8);
  }
  return x;
}

FeatureVector solver_features(const ToyProblem& p, std::size_t k, long lhs) {
  FeatureVector x;
  x.add(0);
  x.add(1 + op_feature(p.ops.at(k).op));
  x.add(4 + static_cast<std::size_t>(magnitude_bucket(lhs)));
  return x;
}

std::optional<ToyContext> parse_context(const PromptTemplate& user_template,
                                        std::string_view user_text) {
  auto fields = user_template.extract(user_text);
  if (!fields || !fields->count("problem") || !fields->count("prefix")) return std::nullopt;
  auto problem = parse_statement(fields->at("problem"));
  if (!problem) return std::nullopt;
  auto prefix = parse_steps(parse_prefix(fields->at("prefix")));
  if (!prefix) return std::nullopt;
  ToyContext ctx{*problem, *prefix, std::nullopt};
  if (auto it = fields->find("step"); it != fields->end()) {
    auto s = parse_step(trim(it->second));
    if (!s) return std::nullopt;
    ctx.step = *s;
  }
  return ctx;
}

std::string critique_analysis(const ToyProblem& p, const std::vector<ToyStep>& prefix,
                              const ToyStep& step) {
  std::string out;
  if (prefix.empty()) {
    out = "This is the first step, starting from " + std::to_string(p.start_value) + ".";
  } else {
    out = "The previous steps reach " + std::to_string(prefix.back().rhs_claimed) + ".";
  }
  out += " The step takes " + std::to_string(step.lhs) + ", applies " + op_symbol(step.op) + " " +
         std::to_string(step.operand) + " and claims " + std::to_string(step.rhs_claimed) + ".";
  return out;
}

std::string transformation_text(const ToyStep& original, PerturbationAction action) {
  switch (action) {
    case PerturbationAction::OffByOne:
      return "Increase the stated result by one while keeping the operation.";
    case PerturbationAction::SignFlip:
      return original.op == Op::Mul ? "Flip the sign of the product."
                                    : "Flip the direction of the operation and recompute.";
    case PerturbationAction::WrongOperand:
      return "Use operand " + std::to_string(original.operand % kMaxOperand + 1) + " instead of " +
             std::to_string(original.operand) + " and recompute.";
    case PerturbationAction::SwapOperator:
      return "Replace the operation with a different one and recompute.";
    case PerturbationAction::CopyPreviousResult:
      return "Restate the previous value as the result of this step.";
  }
  return {};
}

SolverConfig SolverConfig::never_notices() {
  SolverConfig c;
  c.notice.fill(0.0);
  return c;
}

void to_json(json& j, const SolverConfig& c) {
  j = json::object();
  for (std::size_t i = 1; i < c.notice.size(); ++i)
    j[std::string(to_string(static_cast<MistakeClass>(i)))] = c.notice[i];
}

void from_json(const json& j, SolverConfig& c) {
  c = SolverConfig{};
  for (std::size_t i = 1; i < c.notice.size(); ++i) {
    auto key = std::string(to_string(static_cast<MistakeClass>(i)));
    if (j.contains(key)) c.notice[i] = j[key].get<double>();
  }
}

// ---------------------------------------------------------------------------

ToyBackendBase::Prepared ToyBackendBase::prepare(const GenerationRequest& request,
                                                 bool needs_step) const {
  Prepared out;
  const ChatMessage* user = nullptr;
  for (const auto& m : request.messages)
    if (m.role == "user") user = &m;
  if (!user) {
    out.error = GenerationResponse::failure(BackendErrorKind::MalformedResponse, "no user message");
    return out;
  }
  auto ctx = parse_context(user_template_, user->content);
  if (!ctx || (needs_step && !ctx->step)) {
    out.error = GenerationResponse::failure(BackendErrorKind::MalformedResponse,
                                            "prompt is not a toyworld context");
    return out;
  }
  auto h = fnv1a64(user->content);
  out.seed = request.seed ? derive_seed(*request.seed, h) : h;
  out.ctx = std::move(ctx);
  return out;
}

ToyCriticBackend::ToyCriticBackend(CategoricalPolicy policy, PromptTemplate user_template,
                                   CriticFeatureConfig cfg)
    : ToyBackendBase(std::move(policy), std::move(user_template)), cfg_(cfg) {}

GenerationResponse ToyCriticBackend::generate(const GenerationRequest& request) {
  auto prep = prepare(request, true);
  if (!prep.ctx) return prep.error;
  const auto& ctx = *prep.ctx;
  auto x = critic_features(ctx.problem, ctx.prefix, *ctx.step, cfg_);
  auto action = policy_.sample(x, prep.seed, request.temperature);
  auto verdict = action == kCriticCorrect ? StepVerdict::Correct : StepVerdict::Incorrect;
  GenerationResponse r;
  r.text = format_critique(critique_analysis(ctx.problem, ctx.prefix, *ctx.step), verdict);
  r.logprob = policy_.log_probabilities(x, request.temperature)[action];
  return r;
}

GenerationResponse OracleCriticBackend::generate(const GenerationRequest& request) {
  const ChatMessage* user = nullptr;
  for (const auto& m : request.messages)
    if (m.role == "user") user = &m;
  if (!user) return GenerationResponse::failure(BackendErrorKind::MalformedResponse, "no user message");
  auto ctx = parse_context(user_template_, user->content);
  if (!ctx || !ctx->step)
    return GenerationResponse::failure(BackendErrorKind::MalformedResponse,
                                       "prompt is not a toyworld context");
  StepVerdict v;
  try {
    v = oracle_check(*ctx->step, ctx->prefix, ctx->problem);
  } catch (const SpcError&) {
    v = StepVerdict::Incorrect;
  }
  GenerationResponse r;
  r.text = format_critique(critique_analysis(ctx->problem, ctx->prefix, *ctx->step), v);
  r.logprob = 0.0;
  return r;
}

GenerationResponse ToySneakyBackend::generate(const GenerationRequest& request) {
  auto prep = prepare(request, true);
  if (!prep.ctx) return prep.error;
  const auto& ctx = *prep.ctx;
  const auto& step = *ctx.step;
  auto x = sneaky_features(ctx.problem, ctx.prefix, step);
  auto action_index = policy_.sample(x, prep.seed, request.temperature);
  auto action = kAllPerturbations[action_index];
  bool terminal = ctx.prefix.size() + 1 == ctx.problem.ops.size();
  ToyStep changed = step;
  try {
    changed = apply_perturbation(step, action);
  } catch (const SpcError&) {
    // A fixed point is reported as-is; the game rejects the identical step.
  }
  GenerationResponse r;
  r.text = format_sneaky_output(error_type_of(action), transformation_text(step, action),
                                format_step(changed, terminal));
  r.logprob = policy_.log_probabilities(x, request.temperature)[action_index];
  return r;
}

ToySolverBackend::ToySolverBackend(CategoricalPolicy policy, PromptTemplate user_template,
                                   SolverConfig cfg)
    : ToyBackendBase(std::move(policy), std::move(user_template)), cfg_(cfg) {}

GenerationResponse ToySolverBackend::generate(const GenerationRequest& request) {
  auto prep = prepare(request, false);
  if (!prep.ctx) return prep.error;
  const auto& p = prep.ctx->problem;
  const auto& prefix = prep.ctx->prefix;
  std::size_t k = prefix.size();
  long value = prefix.empty() ? p.start_value : prefix.back().rhs_claimed;

  std::vector<ToyStep> out;
  std::vector<bool> terminal;
  if (k > 0 && k <= p.ops.size()) {
    long expected_lhs = k >= 2 ? prefix[k - 2].rhs_claimed : p.start_value;
    auto mistake = classify_mistake(p, k - 1, prefix.back(), expected_lhs);
    if (mistake != MistakeClass::None) {
      Rng rng(derive_seed(prep.seed, "notice"));
      if (rng.bernoulli(cfg_.notice_probability(mistake))) {
        auto redo = correct_step(p, k - 1, prefix.back().lhs);
        out.push_back(redo);
        terminal.push_back(k == p.ops.size());
        value = redo.rhs_claimed;
      }
    }
  }
  if (k >= p.ops.size() && out.empty()) {
    GenerationResponse r;
    r.text = apply_stop_sequences("The answer is \\boxed{" + std::to_string(value) + "}.",
                                  request.stop);
    return r;
  }
  for (std::size_t j = k; j < p.ops.size(); ++j) {
    auto x = solver_features(p, j, value);
    auto action = policy_.sample(x, derive_seed(prep.seed, static_cast<std::uint64_t>(j)),
                                 request.temperature);
    auto step = correct_step(p, j, value);
    if (action != kSolverCorrect) {
      try {
        step = apply_perturbation(step, kAllPerturbations[action - 1]);
      } catch (const SpcError&) {
      }
    }
    out.push_back(step);
    terminal.push_back(j + 1 == p.ops.size());
    value = step.rhs_claimed;
  }
  std::string text;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i) text += kStepDelimiter;
    text += format_step(out[i], terminal[i]);
  }
  GenerationResponse r;
  r.text = apply_stop_sequences(std::move(text), request.stop);
  return r;
}

// ---------------------------------------------------------------------------

SampleEncoder critic_encoder(PromptTemplate critic_user, CriticFeatureConfig cfg) {
  return [tpl = std::move(critic_user), cfg](const std::string& input, const std::string& output) {
    auto ctx = parse_context(tpl, input);
    if (!ctx || !ctx->step)
      throw SpcError(ErrorCode::ParseFailure, "critic sample input is not a toyworld context");
    auto verdict = parse_critique(output).verdict;
    if (!verdict) throw SpcError(ErrorCode::ParseFailure, "critic sample output has no verdict");
    return EncodedSample{critic_features(ctx->problem, ctx->prefix, *ctx->step, cfg),
                         *verdict == StepVerdict::Correct ? kCriticCorrect : kCriticIncorrect};
  };
}

SampleEncoder sneaky_encoder(PromptTemplate sneaky_user) {
  return [tpl = std::move(sneaky_user)](const std::string& input, const std::string& output) {
    auto ctx = parse_context(tpl, input);
    if (!ctx || !ctx->step)
      throw SpcError(ErrorCode::ParseFailure, "sneaky sample input is not a toyworld context");
    auto parsed = parse_sneaky_output(output);
    auto action = perturbation_for(parsed.error_type);
    return EncodedSample{sneaky_features(ctx->problem, ctx->prefix, *ctx->step),
                         static_cast<std::size_t>(action)};
  };
}

}  // namespace spc::toy
