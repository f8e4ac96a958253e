#pragma once

// Generation backends. Every role (solver, sneaky generator, critic) produces
// text through this interface, whether the model is a deterministic mock, a
// recorded script, a remote chat-completions endpoint or a toy policy.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "spc/core.hpp"
#include "spc/prompts.hpp"

namespace spc {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct GenerationRequest {
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  int max_tokens = 1024;
  std::vector<std::string> stop;
  std::optional<std::uint64_t> seed;
};

enum class FinishReason { Stop, Length, Error };

enum class BackendErrorKind { None, Timeout, Transport, ScriptExhausted, MalformedResponse };

std::string_view to_string(FinishReason r);
std::string_view to_string(BackendErrorKind k);

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct GenerationResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::Stop;
  std::optional<Usage> usage;
  // log pi(text | prompt) under the sampling distribution, when the backend
  // can report it exactly (toy policies). Remote endpoints leave it empty.
  std::optional<double> logprob;
  BackendErrorKind error = BackendErrorKind::None;
  std::string error_detail;

  bool ok() const { return finish_reason != FinishReason::Error; }

  static GenerationResponse failure(BackendErrorKind kind, std::string detail);
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Never throws for transport-level problems; those come back with
  // finish_reason == Error.
  virtual GenerationResponse generate(const GenerationRequest& request) = 0;
  virtual std::string name() const = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

// Truncates at the earliest occurrence of any stop sequence.
std::string apply_stop_sequences(std::string text, const std::vector<std::string>& stop);

// Concatenation of all message contents; what script matchers look at.
std::string request_text(const GenerationRequest& request);

// Pure function of (messages, seed): same request, byte-identical response.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(int steps_per_response = 3) : steps_(steps_per_response) {}
  GenerationResponse generate(const GenerationRequest& request) override;
  std::string name() const override { return "mock"; }

 private:
  int steps_;
};

struct ScriptEntry {
  std::optional<std::string> match;
  std::string response;
};

// Replays recorded responses. Each call consumes the first unconsumed entry
// whose `match` is absent or occurs in the request text.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries);
  static std::shared_ptr<ScriptedBackend> from_responses(const std::vector<std::string>& responses);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& jsonl);

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string name() const override { return "scripted"; }

  std::vector<std::size_t> consumed() const;
  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::vector<ScriptEntry> entries_;
  std::vector<bool> used_;
  std::vector<std::size_t> consumption_log_;
};

// Blocks callers beyond `limit` concurrent holders.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(std::size_t limit);

  class Permit {
   public:
    explicit Permit(ConcurrencyLimiter& owner) : owner_(owner) { owner_.acquire(); }
    ~Permit() { owner_.release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    ConcurrencyLimiter& owner_;
  };

  std::size_t limit() const { return limit_; }

 private:
  void acquire();
  void release();

  std::size_t limit_;
  std::size_t in_use_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

// Caps in-flight calls to a wrapped backend.
class LimitedBackend final : public Backend {
 public:
  LimitedBackend(BackendPtr inner, std::size_t max_concurrent);
  GenerationResponse generate(const GenerationRequest& request) override;
  std::string name() const override { return inner_->name(); }

 private:
  BackendPtr inner_;
  ConcurrencyLimiter limiter_;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds backoff{200};  // doubled after each failed attempt
};

enum class BackendKind { Mock, Scripted, Http, Toy };

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  std::optional<std::string> endpoint_url;
  std::optional<std::string> model_name;
  std::optional<std::string> api_key_env_var;
  std::size_t max_concurrent_requests = 8;
  std::chrono::milliseconds request_timeout{60000};
  RetryPolicy retry_policy;
  std::optional<std::string> script_path;

  // Throws InvalidArgument when an Http config lacks endpoint or model.
  void validate() const;
};

void to_json(json& j, const BackendConfig& c);
void from_json(const json& j, BackendConfig& c);

// OpenAI-style chat completions client:
// POST <endpoint_url>/chat/completions {model, messages, temperature, max_tokens, stop, seed?}.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);
  GenerationResponse generate(const GenerationRequest& request) override;
  std::string name() const override;

  static json request_body(const std::string& model, const GenerationRequest& request);
  // Parses the first choice; MalformedResponse when the shape is wrong.
  static GenerationResponse parse_response_body(const std::string& body);

 private:
  GenerationResponse attempt(const std::string& body);

  BackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::optional<std::string> api_key_;
  ConcurrencyLimiter limiter_;
};

// Builds Mock, Scripted or Http backends. Toy backends need a policy and are
// made by the toyworld module.
BackendPtr make_backend(const BackendConfig& config);

// ---------------------------------------------------------------------------
// Step-level generation helpers
// ---------------------------------------------------------------------------

struct SamplingParams {
  double temperature = 1.0;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;
};

GenerationRequest build_request(const RolePrompt& prompt, const TemplateFields& fields,
                                const SamplingParams& params);

struct GeneratedStep {
  Step step;
  bool terminal = false;
  std::optional<std::string> final_answer;  // canonical, when terminal
  GenerationResponse response;
};

// One step of a solution: generation is stopped at the first step delimiter.
// Throws BackendError on a failed generation.
GeneratedStep generate_step(Backend& solver, const Problem& problem, const Trajectory& prefix,
                            const RolePrompt& prompt, const SamplingParams& params);

// Completes a partial solution in a single call and returns the full
// trajectory (prefix + continuation). If the prefix is already terminal it is
// returned unchanged. Throws BackendError on a failed generation.
Trajectory complete_solution(Backend& solver, const Problem& problem, const Trajectory& prefix,
                             const RolePrompt& prompt, const SamplingParams& params);

}  // namespace spc
