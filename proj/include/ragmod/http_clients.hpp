#pragma once

#include "ragmod/embedding.hpp"

#include <functional>
#include <memory>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

namespace ragmod::policy {

struct RetryPolicy {
    int max_attempts = 3;
    int backoff_base_ms = 500;  // delay before attempt n+1 is base * 2^(n-1)
};

struct EndpointConfig {
    std::string base_url = "https://api.openai.com";  // scheme://host[:port][/prefix]
    std::string path;
    std::string api_key;
    double timeout_s = 60.0;
    RetryPolicy retry;
    int max_in_flight = 4;
    /// Receives request/response bodies with the credential redacted.
    std::function<void(const std::string&)> log;
};

enum class ExchangeOutcome { ok, transport_error, http_error, timeout, malformed_response, dimension_mismatch };
std::string_view to_string(ExchangeOutcome o);

struct ChatRequest {
    std::string model = "gpt-4o";
    std::string system;
    std::string user;
    double temperature = 0.0;
    int max_tokens = 50;
};

struct ChatExchange {
    ChatRequest request;
    std::string response_text;  // verbatim
    int prompt_tokens = 0;
    int completion_tokens = 0;
    double latency_s = 0.0;
    ExchangeOutcome outcome = ExchangeOutcome::ok;
    int http_status = 0;
    int attempts = 0;
    std::string error;

    bool ok() const { return outcome == ExchangeOutcome::ok; }
};

struct ClientError : std::runtime_error {
    ClientError(ExchangeOutcome outcome, int status, const std::string& what)
        : std::runtime_error(what), outcome(outcome), http_status(status) {}
    ExchangeOutcome outcome;
    int http_status;
};

/// Raw POST with the shared retry contract: retries transport errors,
/// timeouts and 5xx; never retries 4xx.
struct HttpResult {
    ExchangeOutcome outcome = ExchangeOutcome::ok;
    int status = 0;
    std::string body;
    int attempts = 0;
    double latency_s = 0.0;
    std::string error;
};

class HttpPoster {
public:
    explicit HttpPoster(EndpointConfig cfg);
    HttpResult post_json(const std::string& body) const;
    const EndpointConfig& config() const { return cfg_; }

private:
    EndpointConfig cfg_;
    std::string origin_;
    std::string full_path_;
    std::shared_ptr<std::counting_semaphore<1024>> slots_;
};

/// Chat-completions style client: POST {model, messages, temperature, max_tokens}.
class ChatClient {
public:
    explicit ChatClient(EndpointConfig cfg);
    ChatExchange send(const ChatRequest& request) const;

private:
    HttpPoster http_;
};

/// Embeddings client: POST {model, input: [...]}, vectors L2-normalised on receipt.
class EmbeddingClient {
public:
    EmbeddingClient(EndpointConfig cfg, std::string model, int expected_dimension = 3072);
    std::vector<memory::Embedding> embed_batch(const std::vector<std::string>& texts) const;
    const std::string& model() const { return model_; }
    int dimension() const { return dimension_; }

private:
    HttpPoster http_;
    std::string model_;
    int dimension_;
};

class RemoteEmbedder final : public memory::Embedder {
public:
    explicit RemoteEmbedder(EmbeddingClient client) : client_(std::move(client)) {}
    std::string tag() const override;
    memory::Embedding embed(std::string_view text) const override;
    std::vector<memory::Embedding> embed_batch(const std::vector<std::string>& texts) const override;

private:
    EmbeddingClient client_;
};

}  // namespace ragmod::policy
