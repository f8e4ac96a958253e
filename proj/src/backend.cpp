#include "spc/backend.hpp"

#include "spc/hash.hpp"
#include "spc/jsonl.hpp"
#include "spc/rng.hpp"

namespace spc {

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
  }
  return "error";
}

std::string_view to_string(BackendErrorKind k) {
  switch (k) {
    case BackendErrorKind::None: return "none";
    case BackendErrorKind::Timeout: return "timeout";
    case BackendErrorKind::Transport: return "transport";
    case BackendErrorKind::ScriptExhausted: return "script_exhausted";
    case BackendErrorKind::MalformedResponse: return "malformed_response";
  }
  return "none";
}

GenerationResponse GenerationResponse::failure(BackendErrorKind kind, std::string detail) {
  GenerationResponse r;
  r.finish_reason = FinishReason::Error;
  r.error = kind;
  r.error_detail = std::move(detail);
  return r;
}

std::string apply_stop_sequences(std::string text, const std::vector<std::string>& stop) {
  auto cut = std::string::npos;
  for (const auto& s : stop) {
    if (s.empty()) continue;
    auto pos = text.find(s);
    if (pos < cut) cut = pos;
  }
  if (cut != std::string::npos) text.resize(cut);
  return text;
}

std::string request_text(const GenerationRequest& request) {
  std::string out;
  for (const auto& m : request.messages) {
    out += m.content;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

GenerationResponse MockBackend::generate(const GenerationRequest& request) {
  std::string key;
  for (const auto& m : request.messages) {
    key += m.role;
    key += '\x1f';
    key += m.content;
    key += '\x1e';
  }
  auto h = fnv1a64(key);
  Rng rng(request.seed ? derive_seed(h, *request.seed) : h);
  std::vector<Step> steps;
  long value = static_cast<long>(rng.uniform_index(10));
  for (int i = 0; i + 1 < steps_; ++i) {
    long add = 1 + static_cast<long>(rng.uniform_index(9));
    steps.push_back({0, std::to_string(value) + " + " + std::to_string(add) + " = " +
                            std::to_string(value + add)});
    value += add;
  }
  steps.push_back({0, "The answer is \\boxed{" + std::to_string(value) + "}."});
  GenerationResponse r;
  r.text = apply_stop_sequences(join_steps(steps), request.stop);
  r.usage = Usage{static_cast<int>(key.size() / 4), static_cast<int>(r.text.size() / 4)};
  return r;
}

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries)
    : entries_(std::move(entries)), used_(entries_.size(), false) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_responses(
    const std::vector<std::string>& responses) {
  std::vector<ScriptEntry> entries;
  for (const auto& r : responses) entries.push_back({std::nullopt, r});
  return std::make_shared<ScriptedBackend>(std::move(entries));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& jsonl) {
  std::vector<ScriptEntry> entries;
  for (const auto& j : read_jsonl(jsonl)) {
    if (!j.contains("response") || !j["response"].is_string())
      throw SpcError(ErrorCode::ParseFailure, jsonl.string() + ": script entry without response");
    ScriptEntry e;
    e.response = j["response"].get<std::string>();
    if (j.contains("match") && !j["match"].is_null()) e.match = j["match"].get<std::string>();
    entries.push_back(std::move(e));
  }
  return std::make_shared<ScriptedBackend>(std::move(entries));
}

GenerationResponse ScriptedBackend::generate(const GenerationRequest& request) {
  auto text = request_text(request);
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (used_[i]) continue;
    if (entries_[i].match && text.find(*entries_[i].match) == std::string::npos) continue;
    used_[i] = true;
    consumption_log_.push_back(i);
    GenerationResponse r;
    r.text = apply_stop_sequences(entries_[i].response, request.stop);
    return r;
  }
  return GenerationResponse::failure(BackendErrorKind::ScriptExhausted,
                                     "no unconsumed script entry matches the request");
}

std::vector<std::size_t> ScriptedBackend::consumed() const {
  std::lock_guard lock(mu_);
  return consumption_log_;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  return entries_.size() - consumption_log_.size();
}

// ---------------------------------------------------------------------------

ConcurrencyLimiter::ConcurrencyLimiter(std::size_t limit) : limit_(limit) {
  if (limit == 0) throw SpcError(ErrorCode::InvalidArgument, "concurrency limit must be positive");
}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_use_ < limit_; });
  ++in_use_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_use_;
  }
  cv_.notify_one();
}

LimitedBackend::LimitedBackend(BackendPtr inner, std::size_t max_concurrent)
    : inner_(std::move(inner)), limiter_(max_concurrent) {}

GenerationResponse LimitedBackend::generate(const GenerationRequest& request) {
  ConcurrencyLimiter::Permit permit(limiter_);
  return inner_->generate(request);
}

// ---------------------------------------------------------------------------

namespace {

std::string_view kind_name(BackendKind k) {
  switch (k) {
    case BackendKind::Mock: return "mock";
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Http: return "http";
    case BackendKind::Toy: return "toy";
  }
  return "mock";
}

BackendKind parse_kind(const std::string& s) {
  auto l = to_lower(s);
  if (l == "mock") return BackendKind::Mock;
  if (l == "scripted") return BackendKind::Scripted;
  if (l == "http") return BackendKind::Http;
  if (l == "toy") return BackendKind::Toy;
  throw SpcError(ErrorCode::InvalidArgument, "unknown backend kind: " + s);
}

}  // namespace

void BackendConfig::validate() const {
  if (max_concurrent_requests == 0)
    throw SpcError(ErrorCode::InvalidArgument, "max_concurrent_requests must be positive");
  if (retry_policy.max_retries < 0)
    throw SpcError(ErrorCode::InvalidArgument, "max_retries must be non-negative");
  if (kind == BackendKind::Http) {
    if (!endpoint_url || endpoint_url->empty())
      throw SpcError(ErrorCode::InvalidArgument, "http backend requires endpoint_url");
    if (!model_name || model_name->empty())
      throw SpcError(ErrorCode::InvalidArgument, "http backend requires model_name");
  }
  if (kind == BackendKind::Scripted && (!script_path || script_path->empty()))
    throw SpcError(ErrorCode::InvalidArgument, "scripted backend requires script_path");
}

void to_json(json& j, const BackendConfig& c) {
  j = json{{"kind", kind_name(c.kind)},
           {"max_concurrent_requests", c.max_concurrent_requests},
           {"request_timeout_ms", c.request_timeout.count()},
           {"retry_policy",
            {{"max_retries", c.retry_policy.max_retries},
             {"backoff_ms", c.retry_policy.backoff.count()}}}};
  j["endpoint_url"] = c.endpoint_url ? json(*c.endpoint_url) : json(nullptr);
  j["model_name"] = c.model_name ? json(*c.model_name) : json(nullptr);
  j["api_key_env_var"] = c.api_key_env_var ? json(*c.api_key_env_var) : json(nullptr);
  j["script_path"] = c.script_path ? json(*c.script_path) : json(nullptr);
}

void from_json(const json& j, BackendConfig& c) {
  c = BackendConfig{};
  if (j.contains("kind")) c.kind = parse_kind(j["kind"].get<std::string>());
  auto opt = [&](const char* key, std::optional<std::string>& out) {
    if (j.contains(key) && !j[key].is_null()) out = j[key].get<std::string>();
  };
  opt("endpoint_url", c.endpoint_url);
  opt("model_name", c.model_name);
  opt("api_key_env_var", c.api_key_env_var);
  opt("script_path", c.script_path);
  if (j.contains("max_concurrent_requests"))
    c.max_concurrent_requests = j["max_concurrent_requests"].get<std::size_t>();
  if (j.contains("request_timeout_ms"))
    c.request_timeout = std::chrono::milliseconds(j["request_timeout_ms"].get<long long>());
  if (j.contains("retry_policy")) {
    const auto& r = j["retry_policy"];
    if (r.contains("max_retries")) c.retry_policy.max_retries = r["max_retries"].get<int>();
    if (r.contains("backoff_ms"))
      c.retry_policy.backoff = std::chrono::milliseconds(r["backoff_ms"].get<long long>());
  }
}

BackendPtr make_backend(const BackendConfig& config) {
  config.validate();
  BackendPtr inner;
  switch (config.kind) {
    case BackendKind::Mock: inner = std::make_shared<MockBackend>(); break;
    case BackendKind::Scripted: inner = ScriptedBackend::from_file(*config.script_path); break;
    case BackendKind::Http: return std::make_shared<HttpBackend>(config);
    case BackendKind::Toy:
      throw SpcError(ErrorCode::InvalidArgument, "toy backends are built from policy snapshots");
  }
  return std::make_shared<LimitedBackend>(inner, config.max_concurrent_requests);
}

// ---------------------------------------------------------------------------

GenerationRequest build_request(const RolePrompt& prompt, const TemplateFields& fields,
                                const SamplingParams& params) {
  GenerationRequest req;
  if (!prompt.system.empty()) req.messages.push_back({"system", prompt.system});
  req.messages.push_back({"user", prompt.user.render(fields)});
  req.temperature = params.temperature;
  req.max_tokens = params.max_tokens;
  req.seed = params.seed;
  return req;
}

namespace {

[[noreturn]] void throw_backend(const GenerationResponse& r) {
  throw SpcError(ErrorCode::BackendError,
                 std::string(to_string(r.error)) + ": " + r.error_detail);
}

}  // namespace

GeneratedStep generate_step(Backend& solver, const Problem& problem, const Trajectory& prefix,
                            const RolePrompt& prompt, const SamplingParams& params) {
  auto req = build_request(prompt, make_fields(problem, prefix.steps), params);
  req.stop = {std::string(kStepDelimiter)};
  auto resp = solver.generate(req);
  if (!resp.ok()) throw_backend(resp);
  // Backends that ignore stop sequences still yield exactly one step.
  auto text = trim(apply_stop_sequences(trim(resp.text), req.stop));
  GeneratedStep out;
  out.step = {prefix.steps.size(), text};
  out.terminal = is_terminal_step(text);
  if (out.terminal) out.final_answer = canonicalize_answer(text);
  out.response = std::move(resp);
  return out;
}

Trajectory complete_solution(Backend& solver, const Problem& problem, const Trajectory& prefix,
                             const RolePrompt& prompt, const SamplingParams& params) {
  if (prefix.complete) return prefix;
  auto req = build_request(prompt, make_fields(problem, prefix.steps), params);
  auto resp = solver.generate(req);
  if (!resp.ok()) throw_backend(resp);
  auto steps = prefix.steps;
  for (auto& s : split_into_steps(resp.text)) {
    steps.push_back(std::move(s));
    if (is_terminal_step(steps.back().text)) break;
  }
  reindex(steps);
  return make_trajectory(problem.id, std::move(steps));
}

}  // namespace spc
