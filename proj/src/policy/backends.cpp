#include "ragmod/policy.hpp"

#include "ragmod/actions.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <regex>

namespace ragmod::policy {

std::string_view to_string(BackendKind k) {
    switch (k) {
        case BackendKind::remote_chat: return "remote_chat";
        case BackendKind::scripted: return "scripted";
        case BackendKind::expert: return "expert";
        case BackendKind::retrieval_follower: return "retrieval_follower";
        case BackendKind::random: return "random";
    }
    return "?";
}

std::optional<BackendKind> parse_backend_kind(std::string_view s) {
    for (auto k : {BackendKind::remote_chat, BackendKind::scripted, BackendKind::expert,
                   BackendKind::retrieval_follower, BackendKind::random})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

void PolicyConfig::validate() const {
    if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
    if (temperature < 0.0) throw std::invalid_argument("temperature must be non-negative");
    if (timeout_s <= 0.0) throw std::invalid_argument("timeout must be positive");
    if (retry.max_attempts < 1) throw std::invalid_argument("retry.max_attempts must be at least 1");
    if (retry.backoff_base_ms < 0) throw std::invalid_argument("retry.backoff_base_ms must be non-negative");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

std::string extract_action(std::string_view response) {
    static const std::regex cue(R"(\baction\s*=)");
    std::string text(response);
    std::smatch m;
    if (std::regex_search(text, m, cue)) text = m.suffix().str();

    std::string out;
    std::string_view rest = text;
    while (!rest.empty()) {
        const auto nl = rest.find('\n');
        const auto line = trim(rest.substr(0, nl));
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        if (line.empty() || line.rfind("```", 0) == 0) continue;
        out = std::string(line);
        break;
    }

    while (true) {
        const std::string before = out;
        while (!out.empty() && (out.back() == ';' || std::isspace(static_cast<unsigned char>(out.back()))))
            out.pop_back();
        while (!out.empty() && std::isspace(static_cast<unsigned char>(out.front()))) out.erase(out.begin());
        if (out.size() >= 2) {
            const char f = out.front();
            if ((f == '"' || f == '\'' || f == '`') && out.back() == f) out = out.substr(1, out.size() - 2);
        }
        if (out == before) break;
    }
    return out;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> queue) : queue_(queue.begin(), queue.end()) {}

std::string ScriptedBackend::predict_action(const DecisionRequest&) {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) throw BackendError("scripted queue exhausted");
    std::string next = std::move(queue_.front());
    queue_.pop_front();
    return next;
}

std::size_t ScriptedBackend::remaining() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
}

std::string ExpertBackend::predict_action(const DecisionRequest& request) {
    if (!request.state || !request.goal) throw BackendError("expert backend needs the harness state side channel");
    try {
        return actions::render(actions::expert_next_action(*request.state, *request.goal));
    } catch (const std::logic_error& e) {
        throw BackendError(std::string("expert: ") + e.what());
    }
}

std::string RetrievalFollowerBackend::predict_action(const DecisionRequest& request) {
    if (request.retrieved && !request.retrieved->empty()) {
        const auto& top = request.retrieved->front();
        if (top.similarity >= threshold_) return top.entry.chosen_action;
    }
    return fallback_;
}

std::string RandomBackend::predict_action(const DecisionRequest& request) {
    std::mt19937_64 rng(request.rng_seed);
    auto below = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    actions::HighLevelAction a;
    a.function = actions::kAllFunctions[below(std::size(actions::kAllFunctions))];
    for (int i = 0; i < actions::arity(a.function); ++i)
        a.arguments.push_back({world::kAllKinds[below(world::kAllKinds.size())],
                               world::kAllColors[below(world::kAllColors.size())]});
    return actions::render(a);
}

std::string RemoteChatBackend::predict_action(const DecisionRequest& request) {
    ChatRequest chat;
    chat.model = cfg_.model;
    chat.temperature = cfg_.temperature;
    chat.max_tokens = cfg_.max_tokens;
    std::string_view prompt = request.prompt;
    if (!request.system_prefix.empty() && prompt.substr(0, request.system_prefix.size()) == request.system_prefix) {
        chat.system = std::string(request.system_prefix);
        prompt.remove_prefix(request.system_prefix.size());
    }
    chat.user = std::string(trim(prompt));
    const auto ex = client_.send(chat);
    if (!ex.ok()) {
        throw BackendError("chat backend " + std::string(to_string(ex.outcome)) +
                           (ex.error.empty() ? std::string() : ": " + ex.error));
    }
    return extract_action(ex.response_text);
}

}  // namespace ragmod::policy
