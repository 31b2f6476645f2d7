#pragma once

#include "ragmod/runner.hpp"

#include <httplib.h>

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace ragmod::testing {

/// Emits `stumble` on the first step of every episode, then follows the expert.
class StumbleThenExpert final : public policy::DecisionBackend {
public:
    explicit StumbleThenExpert(std::string stumble = "Drop()") : stumble_(std::move(stumble)) {}
    std::string predict_action(const policy::DecisionRequest& request) override;

private:
    std::string stumble_;
    policy::ExpertBackend expert_;
};

/// Expert that replaces a fraction of its outputs with infeasible ones,
/// chosen from a corpus spanning all three critics.
class NoisyExpert final : public policy::DecisionBackend {
public:
    explicit NoisyExpert(double invalid_rate) : rate_(invalid_rate) {}
    std::string predict_action(const policy::DecisionRequest& request) override;

private:
    double rate_;
    policy::ExpertBackend expert_;
};

/// Memory built by StumbleThenExpert on exactly the evaluation tasks, so each
/// task's post-failure query has a stored rectification.
struct RectificationFixture {
    runner::ExperimentConfig cfg;  // retrieval_follower, fallback "Drop()", no extra prior
    memory::MemoryStore memory;
};

RectificationFixture make_rectification_fixture(int num_tasks, world::Level level = world::Level::synth,
                                                std::uint64_t seed = 0);

std::shared_ptr<const memory::Embedder> local_embedder();

/// An input that violates more than one critic. `repaired` is the well-formed
/// text for syntax cases and equals `raw` otherwise.
struct CriticCase {
    world::GridState state;
    std::string raw;
    std::string repaired;
    critics::CriticKind expected;
};

/// 25 syntax-and-semantics failures followed by 25 semantics-and-low-level failures.
std::vector<CriticCase> critic_ordering_corpus();

/// Two rooms: an open blue door at (7,2), a closed red one at (7,5), and a green
/// key in the right room reachable only through the closed door.
world::GridState walled_key_world();

/// Reference retrieval: score every committed entry, stable-sort descending.
std::vector<std::pair<std::size_t, double>> brute_force_topk(const std::vector<memory::MemoryEntry>& committed,
                                                             const memory::Embedding& query, int k);

/// Interaction drawn from a deliberately small vocabulary so exact ties occur.
memory::Interaction random_interaction(std::mt19937_64& rng);
std::string random_action_text(std::mt19937_64& rng);

/// Context matching golden/prompt_rectification_tail.txt: a plain example, a
/// rectification example, and one failed history step.
prompt::PromptContext golden_rectification_context();
/// Same goal and observation with no examples and no history.
prompt::PromptContext golden_minimal_context();

std::string read_file(const std::string& path);

/// Minimal HTTP server on an ephemeral localhost port, stopped on destruction.
class StubServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    StubServer(const std::string& path, Handler handler);
    ~StubServer();
    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace ragmod::testing
