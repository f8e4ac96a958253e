#include "spc/backend.hpp"

#include <cstdlib>
#include <thread>

#include "httplib.h"

namespace spc {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;  // without trailing slash
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw SpcError(ErrorCode::InvalidArgument, "endpoint_url needs a scheme: " + url);
  auto scheme = to_lower(url.substr(0, scheme_end));
  if (scheme != "http" && scheme != "https")
    throw SpcError(ErrorCode::InvalidArgument, "unsupported scheme in endpoint_url: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpBackend::HttpBackend(BackendConfig config)
    : config_(std::move(config)), limiter_(config_.max_concurrent_requests) {
  config_.kind = BackendKind::Http;
  config_.validate();
  auto parsed = parse_url(*config_.endpoint_url);
  scheme_host_port_ = parsed.scheme_host_port;
  path_prefix_ = parsed.path;
  if (config_.api_key_env_var) {
    if (const char* v = std::getenv(config_.api_key_env_var->c_str()); v && *v) api_key_ = v;
  }
}

std::string HttpBackend::name() const { return "http:" + *config_.model_name; }

json HttpBackend::request_body(const std::string& model, const GenerationRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages)
    messages.push_back({{"role", m.role}, {"content", m.content}});
  json body = {{"model", model},
               {"messages", messages},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens},
               {"stop", request.stop}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

GenerationResponse HttpBackend::parse_response_body(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    return GenerationResponse::failure(BackendErrorKind::MalformedResponse,
                                       std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() ||
      j["choices"].empty())
    return GenerationResponse::failure(BackendErrorKind::MalformedResponse,
                                       "response has no choices");
  const auto& choice = j["choices"][0];
  if (!choice.contains("message") || !choice["message"].contains("content") ||
      !choice["message"]["content"].is_string())
    return GenerationResponse::failure(BackendErrorKind::MalformedResponse,
                                       "first choice has no message content");
  GenerationResponse r;
  r.text = choice["message"]["content"].get<std::string>();
  if (choice.contains("finish_reason") && choice["finish_reason"] == "length")
    r.finish_reason = FinishReason::Length;
  if (j.contains("usage") && j["usage"].is_object()) {
    Usage u;
    u.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    u.completion_tokens = j["usage"].value("completion_tokens", 0);
    r.usage = u;
  }
  if (r.text.empty())
    return GenerationResponse::failure(BackendErrorKind::MalformedResponse,
                                       "first choice has empty content");
  return r;
}

GenerationResponse HttpBackend::attempt(const std::string& body) {
  httplib::Client client(scheme_host_port_);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.request_timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.request_timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);

  auto started = std::chrono::steady_clock::now();
  auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
  if (!res) {
    auto err = res.error();
    auto elapsed = std::chrono::steady_clock::now() - started;
    bool timed_out = err == httplib::Error::ConnectionTimeout ||
                     (err == httplib::Error::Read && elapsed >= config_.request_timeout);
    return GenerationResponse::failure(
        timed_out ? BackendErrorKind::Timeout : BackendErrorKind::Transport,
        httplib::to_string(err));
  }
  if (res->status != 200) {
    auto r = GenerationResponse::failure(BackendErrorKind::Transport,
                                         "HTTP " + std::to_string(res->status));
    if (!retryable_status(res->status)) r.error_detail += " (not retried)";
    return r;
  }
  return parse_response_body(res->body);
}

GenerationResponse HttpBackend::generate(const GenerationRequest& request) {
  ConcurrencyLimiter::Permit permit(limiter_);
  auto body = request_body(*config_.model_name, request).dump();
  auto backoff = config_.retry_policy.backoff;
  GenerationResponse last;
  for (int i = 0; i <= config_.retry_policy.max_retries; ++i) {
    last = attempt(body);
    if (last.ok()) return last;
    bool retry = last.error == BackendErrorKind::Timeout ||
                 (last.error == BackendErrorKind::Transport &&
                  last.error_detail.find("not retried") == std::string::npos);
    if (!retry || i == config_.retry_policy.max_retries) break;
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
  return last;
}

}  // namespace spc
