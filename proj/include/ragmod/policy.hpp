#pragma once

#include "ragmod/http_clients.hpp"
#include "ragmod/memory.hpp"
#include "ragmod/world.hpp"

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ragmod::policy {

enum class BackendKind { remote_chat, scripted, expert, retrieval_follower, random };
std::string_view to_string(BackendKind k);
std::optional<BackendKind> parse_backend_kind(std::string_view s);

struct PolicyConfig {
    BackendKind backend = BackendKind::expert;
    int max_tokens = 50;
    double temperature = 0.0;  // greedy
    std::string model = "gpt-4o";
    double timeout_s = 60.0;
    RetryPolicy retry;
    double follow_threshold = 0.8;
    std::string fallback_action = "Drop()";

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
};

/// Everything a backend may look at for one decision. The state and goal are
/// a harness side channel meant for the expert only.
struct DecisionRequest {
    std::string_view prompt;
    std::string_view system_prefix;  // the p_env portion at the start of prompt
    const std::vector<memory::ScoredEntry>* retrieved = nullptr;
    const world::GridState* state = nullptr;
    const world::GoalSpec* goal = nullptr;
    std::uint64_t rng_seed = 0;
};

/// Infrastructure failure inside a backend; the runner books the step as infeasible.
struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class DecisionBackend {
public:
    virtual ~DecisionBackend() = default;
    virtual std::string predict_action(const DecisionRequest& request) = 0;
};

/// Frozen post-processing of model text: take what follows an `action =` cue
/// (or the first non-fence line), keep the first line, strip quotes,
/// backticks, trailing semicolons and whitespace.
std::string extract_action(std::string_view response);

class ScriptedBackend final : public DecisionBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> queue);
    std::string predict_action(const DecisionRequest& request) override;
    std::size_t remaining() const;

private:
    mutable std::mutex mutex_;
    std::deque<std::string> queue_;
};

class ExpertBackend final : public DecisionBackend {
public:
    std::string predict_action(const DecisionRequest& request) override;
};

/// Copies the chosen action of the top retrieved example when its similarity
/// reaches the threshold; otherwise emits the fallback. Offline test double
/// for the memory-to-decision path, not a planner.
class RetrievalFollowerBackend final : public DecisionBackend {
public:
    RetrievalFollowerBackend(double threshold, std::string fallback)
        : threshold_(threshold), fallback_(std::move(fallback)) {}
    std::string predict_action(const DecisionRequest& request) override;

private:
    double threshold_;
    std::string fallback_;
};

/// Uniformly random well-formed action, a pure function of the request seed.
class RandomBackend final : public DecisionBackend {
public:
    std::string predict_action(const DecisionRequest& request) override;
};

class RemoteChatBackend final : public DecisionBackend {
public:
    RemoteChatBackend(ChatClient client, PolicyConfig cfg) : client_(std::move(client)), cfg_(std::move(cfg)) {}
    std::string predict_action(const DecisionRequest& request) override;

private:
    ChatClient client_;
    PolicyConfig cfg_;
};

}  // namespace ragmod::policy
