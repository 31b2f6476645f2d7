#pragma once

#include "ragmod/critics.hpp"
#include "ragmod/memory.hpp"
#include "ragmod/policy.hpp"
#include "ragmod/prompt.hpp"
#include "ragmod/world.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ragmod::runner {

enum class RetrievalMode { interaction, trajectory };
std::string_view to_string(RetrievalMode m);
std::optional<RetrievalMode> parse_retrieval_mode(std::string_view s);

inline constexpr std::uint64_t kTrainingSeedBase = 0;
inline constexpr std::uint64_t kEvaluationSeedBase = 1'000'000;
inline constexpr std::uint64_t kSeedRange = 1'000'000;

/// Training tasks draw from [0, 1e6), evaluation tasks from [1e6, 2e6).
std::uint64_t training_seed(std::uint64_t base, std::size_t index);
std::uint64_t evaluation_seed(std::uint64_t base, std::size_t index);

struct ExperimentConfig {
    world::Level level = world::Level::synth;
    int num_tasks = 100;
    std::optional<int> k;        // level default when unset
    std::optional<int> horizon;  // level default when unset
    bool memory_enabled = true;
    RetrievalMode retrieval_mode = RetrievalMode::interaction;
    bool prior_experience = true;
    int train_tasks = 100;
    std::uint64_t seed = 0;
    std::uint64_t train_seed = 0;
    int parallelism = 1;
    std::optional<int> history_limit;
    bool record_prompts = false;
    int bootstrap_trials = 10'000;
    policy::PolicyConfig backend;

    int effective_k() const;
    int effective_horizon() const;
    void validate() const;
};

/// Flat JSON echo with every default resolved; round-trips through config_from_json.
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Rejects unknown keys, naming the offending one.
ExperimentConfig config_from_json(const nlohmann::json& j);
/// First 8 hex digits of the echo's hash, used in output file names.
std::string config_hash(const ExperimentConfig& cfg);

struct ExampleRef {
    std::string episode_id;
    int step_index = 0;
    double similarity = 0.0;
};

struct StepRecord {
    int t = 0;
    std::string observation;
    std::string prompt_hash;
    std::string prompt;  // only when record_prompts is set
    std::size_t example_blocks = 0;
    std::vector<ExampleRef> examples;
    std::string raw_output;
    std::optional<std::string> backend_error;
    std::optional<std::string> parsed_action;
    critics::Feedback feedback;
    std::string state_digest;  // after the step
    bool staged = false;
};

struct EpisodeResult {
    std::uint64_t task_seed = 0;
    std::string episode_id;
    std::string goal;
    bool success = false;
    int total_steps = 0;
    int inexec_steps = 0;
    std::size_t committed = 0;
    std::vector<StepRecord> trace;
    std::optional<std::string> error;
};

struct EpisodeOptions {
    std::string episode_id;  // defaults to "<level>-<seed>"
    memory::EntrySource source = memory::EntrySource::agent;
    bool commit = true;
};

/// One pass of the retrieve -> prompt -> predict -> critique -> stage loop,
/// followed by commit_episode unless opts.commit is false.
EpisodeResult run_episode(const world::TaskInstance& task, const ExperimentConfig& cfg, memory::MemoryStore& store,
                          policy::DecisionBackend& backend, const EpisodeOptions& opts = {});

/// Expert demonstrations on training seeds, critics active. Returns entries committed.
std::size_t seed_memory(memory::MemoryStore& store, world::Level level, int n_tasks, std::uint64_t train_seed = 0);

/// Seeded with expert demonstrations iff cfg.prior_experience.
memory::MemoryStore prepare_memory(const ExperimentConfig& cfg, std::shared_ptr<const memory::Embedder> embedder);

struct ConfidenceInterval {
    double low = 0.0;
    double high = 0.0;
};

/// Percentile bootstrap of the mean.
ConfidenceInterval bootstrap_ci(std::span<const double> samples, int trials = 10'000, double level = 0.95,
                                std::uint64_t seed = 0);

struct MetricSummary {
    double mean = 0.0;
    ConfidenceInterval ci;
    std::size_t n = 0;
};

struct EpisodeRow {
    std::uint64_t task_seed = 0;
    std::string episode_id;
    bool success = false;
    int total_steps = 0;
    int inexec_steps = 0;
    std::optional<std::string> error;
};

struct MetricsReport {
    nlohmann::json config;
    int num_tasks = 0;
    int successes = 0;
    MetricSummary sr;
    MetricSummary inexec;
    MetricSummary len;
    MetricSummary inexec_success;  // successful episodes only
    MetricSummary len_success;
    MetricSummary inexec_failure;  // failed episodes only
    MetricSummary len_failure;
    std::size_t memory_start = 0;
    std::size_t memory_end = 0;
    std::vector<EpisodeRow> episodes;
    std::vector<std::string> errors;
};

MetricsReport summarize(const ExperimentConfig& cfg, const std::vector<EpisodeResult>& episodes,
                        std::size_t memory_start, std::size_t memory_end);

nlohmann::json to_json(const MetricsReport& r);
std::string render_table(const MetricsReport& r);
/// Same table from a report already serialized with to_json.
std::string render_table(const nlohmann::json& report);

struct ExperimentOutput {
    MetricsReport report;
    std::vector<EpisodeResult> episodes;
};

/// Evaluates cfg.num_tasks tasks with the given store (already seeded or not).
/// With parallelism > 1 episodes run in batches against the memory as of the
/// batch start; commits are applied in task order after each batch.
ExperimentOutput run_experiment(const ExperimentConfig& cfg, memory::MemoryStore& store,
                                policy::DecisionBackend& backend);

/// run_experiment per K, each on a fresh copy of `seeded` and the same tasks.
std::vector<std::pair<int, ExperimentOutput>> k_sweep(const ExperimentConfig& cfg, const std::vector<int>& k_values,
                                                      const memory::MemoryStore& seeded,
                                                      policy::DecisionBackend& backend);

nlohmann::json to_json(const StepRecord& s, const EpisodeResult& e);
void write_trace(const std::filesystem::path& path, const std::vector<EpisodeResult>& episodes);
void write_report(const std::filesystem::path& json_path, const MetricsReport& r);

/// Number of in-context example blocks in a built prompt.
std::size_t count_example_blocks(std::string_view prompt);

}  // namespace ragmod::runner
