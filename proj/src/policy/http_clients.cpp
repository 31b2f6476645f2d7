#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "ragmod/http_clients.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <thread>

namespace ragmod::policy {

std::string_view to_string(ExchangeOutcome o) {
    switch (o) {
        case ExchangeOutcome::ok: return "ok";
        case ExchangeOutcome::transport_error: return "transport_error";
        case ExchangeOutcome::http_error: return "http_error";
        case ExchangeOutcome::timeout: return "timeout";
        case ExchangeOutcome::malformed_response: return "malformed_response";
        case ExchangeOutcome::dimension_mismatch: return "dimension_mismatch";
    }
    return "?";
}

namespace {

struct SlotGuard {
    std::counting_semaphore<1024>& sem;
    explicit SlotGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
    ~SlotGuard() { sem.release(); }
};

}  // namespace

HttpPoster::HttpPoster(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.base_url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("base URL needs a scheme: " + cfg_.base_url);
    const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
    origin_ = cfg_.base_url.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? std::string() : cfg_.base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    std::string path = cfg_.path;
    if (!path.empty() && path.front() != '/') path.insert(path.begin(), '/');
    full_path_ = prefix + path;
    if (cfg_.max_in_flight < 1) cfg_.max_in_flight = 1;
    slots_ = std::make_shared<std::counting_semaphore<1024>>(std::min(cfg_.max_in_flight, 1024));
}

HttpResult HttpPoster::post_json(const std::string& body) const {
    SlotGuard slot(*slots_);
    httplib::Client client(origin_);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    if (cfg_.log) cfg_.log("POST " + origin_ + full_path_ + " (Authorization: Bearer ***)\n" + body);

    HttpResult result;
    const int attempts = std::max(1, cfg_.retry.max_attempts);
    const auto started = std::chrono::steady_clock::now();
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempt > 1 && cfg_.retry.backoff_base_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.retry.backoff_base_ms << (attempt - 2)));
        result.attempts = attempt;
        const auto t0 = std::chrono::steady_clock::now();
        auto res = client.Post(full_path_, headers, body, "application/json");
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!res) {
            const auto err = res.error();
            const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                                   (err == httplib::Error::Read && elapsed >= 0.9 * cfg_.timeout_s);
            result.outcome = timed_out ? ExchangeOutcome::timeout : ExchangeOutcome::transport_error;
            result.status = 0;
            result.error = httplib::to_string(err);
            continue;
        }
        result.status = res->status;
        result.body = res->body;
        if (cfg_.log) cfg_.log("HTTP " + std::to_string(res->status) + "\n" + res->body);
        if (res->status >= 200 && res->status < 300) {
            result.outcome = ExchangeOutcome::ok;
            result.error.clear();
            break;
        }
        result.outcome = ExchangeOutcome::http_error;
        result.error = "HTTP status " + std::to_string(res->status);
        if (res->status < 500) break;
    }
    result.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

ChatClient::ChatClient(EndpointConfig cfg) : http_([&] {
    if (cfg.path.empty()) cfg.path = "/v1/chat/completions";
    return HttpPoster(std::move(cfg));
}()) {}

ChatExchange ChatClient::send(const ChatRequest& request) const {
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
    messages.push_back({{"role", "user"}, {"content", request.user}});
    const nlohmann::json body = {{"model", request.model},
                                 {"messages", messages},
                                 {"temperature", request.temperature},
                                 {"max_tokens", request.max_tokens}};

    ChatExchange ex;
    ex.request = request;
    const auto res = http_.post_json(body.dump());
    ex.outcome = res.outcome;
    ex.http_status = res.status;
    ex.attempts = res.attempts;
    ex.latency_s = res.latency_s;
    ex.error = res.error;
    if (res.outcome != ExchangeOutcome::ok) return ex;
    try {
        const auto j = nlohmann::json::parse(res.body);
        ex.response_text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage")) {
            ex.prompt_tokens = j["usage"].value("prompt_tokens", 0);
            ex.completion_tokens = j["usage"].value("completion_tokens", 0);
        }
    } catch (const nlohmann::json::exception& e) {
        ex.outcome = ExchangeOutcome::malformed_response;
        ex.error = std::string("malformed chat response: ") + e.what();
    }
    return ex;
}

EmbeddingClient::EmbeddingClient(EndpointConfig cfg, std::string model, int expected_dimension)
    : http_([&] {
          if (cfg.path.empty()) cfg.path = "/v1/embeddings";
          return HttpPoster(std::move(cfg));
      }()),
      model_(std::move(model)),
      dimension_(expected_dimension) {}

std::vector<memory::Embedding> EmbeddingClient::embed_batch(const std::vector<std::string>& texts) const {
    if (texts.empty()) return {};
    const nlohmann::json body = {{"model", model_}, {"input", texts}};
    const auto res = http_.post_json(body.dump());
    if (res.outcome != ExchangeOutcome::ok) throw ClientError(res.outcome, res.status, "embedding request failed: " + res.error);

    std::vector<memory::Embedding> out(texts.size());
    try {
        const auto j = nlohmann::json::parse(res.body);
        const auto& data = j.at("data");
        if (data.size() != texts.size()) {
            throw ClientError(ExchangeOutcome::malformed_response, res.status,
                              "embedding response has " + std::to_string(data.size()) + " vectors for " +
                                  std::to_string(texts.size()) + " inputs");
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            const std::size_t slot = data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
            if (slot >= out.size()) throw ClientError(ExchangeOutcome::malformed_response, res.status, "embedding index out of range");
            const auto values = data[i].at("embedding").get<std::vector<double>>();
            if (dimension_ > 0 && static_cast<int>(values.size()) != dimension_) {
                throw ClientError(ExchangeOutcome::dimension_mismatch, res.status,
                                  "expected " + std::to_string(dimension_) + "-dimensional embeddings, got " +
                                      std::to_string(values.size()));
            }
            memory::Embedding v = Eigen::Map<const memory::Embedding>(values.data(), static_cast<Eigen::Index>(values.size()));
            memory::normalize_or_zero(v);
            out[slot] = std::move(v);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ClientError(ExchangeOutcome::malformed_response, res.status, std::string("malformed embedding response: ") + e.what());
    }
    return out;
}

std::string RemoteEmbedder::tag() const {
    return "remote:" + client_.model() + ":" + std::to_string(client_.dimension());
}

memory::Embedding RemoteEmbedder::embed(std::string_view text) const {
    if (text.empty()) return memory::Embedding::Zero(client_.dimension());
    return client_.embed_batch({std::string(text)}).at(0);
}

std::vector<memory::Embedding> RemoteEmbedder::embed_batch(const std::vector<std::string>& texts) const {
    return client_.embed_batch(texts);
}

}  // namespace ragmod::policy
