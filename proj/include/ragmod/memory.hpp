#pragma once

#include "ragmod/critics.hpp"
#include "ragmod/embedding.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace ragmod::memory {

/// I = (goal, previous action, previous feedback, observation).
struct Interaction {
    std::string goal;
    std::optional<std::string> prev_action;    // canonical render, or the raw output if it did not parse
    std::optional<std::string> prev_feedback;  // render_feedback() text
    std::string observation;                   // render_observation() text

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Four key=value lines in fixed order: goal, prev_action, prev_feedback, observation.
std::string serialize_interaction(const Interaction& i);

enum class EntrySource { expert, agent };
std::string_view to_string(EntrySource s);

struct MemoryEntry {
    Interaction interaction;
    std::string chosen_action;
    Embedding embedding;
    std::string episode_id;
    int step_index = 0;
    EntrySource source = EntrySource::agent;

    friend bool operator==(const MemoryEntry& a, const MemoryEntry& b) {
        return a.interaction == b.interaction && a.chosen_action == b.chosen_action &&
               a.embedding.size() == b.embedding.size() && a.embedding == b.embedding &&
               a.episode_id == b.episode_id && a.step_index == b.step_index && a.source == b.source;
    }
};

struct ScoredEntry {
    MemoryEntry entry;
    double similarity = 0.0;
    std::size_t commit_index = 0;
};

struct MemoryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaMismatch : MemoryError {
    using MemoryError::MemoryError;
};
struct EmbedderMismatch : MemoryError {
    using MemoryError::MemoryError;
};

/// Interaction memory. Committed entries are retrievable; staged entries live
/// in per-episode buffers until commit_episode. Readers proceed concurrently;
/// a commit is atomic with respect to retrieval.
class MemoryStore {
public:
    explicit MemoryStore(std::shared_ptr<const Embedder> embedder);
    MemoryStore(const MemoryStore& other);
    MemoryStore& operator=(const MemoryStore& other);

    const std::string& embedder_tag() const { return tag_; }
    const Embedder& embedder() const { return *embedder_; }
    std::shared_ptr<const Embedder> embedder_ptr() const { return embedder_; }

    std::size_t size() const;
    std::size_t staged_count(const std::string& episode_id) const;
    std::vector<MemoryEntry> committed() const;

    /// Embeds the serialized interaction with this store's embedder.
    MemoryEntry make_entry(Interaction interaction, std::string chosen_action, std::string episode_id,
                           int step_index, EntrySource source) const;

    /// Stages the entry iff feedback is SUCCESS. Returns whether it was staged.
    bool stage(MemoryEntry entry, const critics::Feedback& feedback);

    /// Moves the episode's staged entries into committed memory on success
    /// (exact duplicates skipped), discards them otherwise. Returns entries added.
    std::size_t commit_episode(const std::string& episode_id, bool episode_succeeded);

    /// Exact top-k by cosine, descending, ties by commit order.
    std::vector<ScoredEntry> retrieve_topk(const Interaction& query, int k) const;
    std::vector<ScoredEntry> retrieve_topk(const Embedding& query, int k) const;

    /// Picks the committed episode whose goal is most similar to the query's
    /// goal, then ranks only that episode's entries against the interaction.
    std::vector<ScoredEntry> retrieve_trajectory(const Interaction& query, int k) const;
    std::vector<ScoredEntry> retrieve_trajectory(const Interaction& query, const Embedding& query_embedding,
                                                 int k) const;

    void persist(const std::filesystem::path& path) const;
    static MemoryStore load(const std::filesystem::path& path, std::shared_ptr<const Embedder> embedder);

    friend bool operator==(const MemoryStore& a, const MemoryStore& b);

private:
    static std::string dedup_key(const MemoryEntry& e);
    const Embedding& goal_embedding(const std::string& goal) const;
    std::vector<ScoredEntry> rank(const Embedding& query, int k, const std::string* only_episode) const;

    std::shared_ptr<const Embedder> embedder_;
    std::string tag_;
    mutable std::shared_mutex mutex_;
    std::vector<MemoryEntry> committed_;
    std::unordered_set<std::string> keys_;
    std::map<std::string, std::vector<MemoryEntry>> staging_;
    mutable std::mutex goal_cache_mutex_;
    mutable std::map<std::string, Embedding> goal_cache_;
};

inline constexpr int kMemorySchemaVersion = 1;

}  // namespace ragmod::memory
