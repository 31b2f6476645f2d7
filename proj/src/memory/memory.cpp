#include "ragmod/memory.hpp"

#include "ragmod/actions.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>

namespace ragmod::memory {

namespace {

std::string one_line(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '\n')
            out += "\\n";
        else if (c == '\r')
            out += "\\r";
        else
            out += c;
    }
    return out;
}

}  // namespace

std::string serialize_interaction(const Interaction& i) {
    std::string out;
    out += "goal=" + one_line(i.goal) + "\n";
    out += "prev_action=" + (i.prev_action ? one_line(*i.prev_action) : std::string("none")) + "\n";
    out += "prev_feedback=" + (i.prev_feedback ? one_line(*i.prev_feedback) : std::string("none")) + "\n";
    out += "observation=" + one_line(i.observation) + "\n";
    return out;
}

std::string_view to_string(EntrySource s) {
    return s == EntrySource::expert ? "expert" : "agent";
}

MemoryStore::MemoryStore(std::shared_ptr<const Embedder> embedder)
    : embedder_(std::move(embedder)), tag_(embedder_ ? embedder_->tag() : std::string()) {
    if (!embedder_) throw std::invalid_argument("memory store needs an embedder");
}

MemoryStore::MemoryStore(const MemoryStore& other) : embedder_(other.embedder_), tag_(other.tag_) {
    std::shared_lock lock(other.mutex_);
    committed_ = other.committed_;
    keys_ = other.keys_;
    staging_ = other.staging_;
}

MemoryStore& MemoryStore::operator=(const MemoryStore& other) {
    if (this == &other) return *this;
    MemoryStore copy(other);
    std::unique_lock lock(mutex_);
    embedder_ = std::move(copy.embedder_);
    tag_ = std::move(copy.tag_);
    committed_ = std::move(copy.committed_);
    keys_ = std::move(copy.keys_);
    staging_ = std::move(copy.staging_);
    std::lock_guard cache_lock(goal_cache_mutex_);
    goal_cache_.clear();
    return *this;
}

std::size_t MemoryStore::size() const {
    std::shared_lock lock(mutex_);
    return committed_.size();
}

std::size_t MemoryStore::staged_count(const std::string& episode_id) const {
    std::shared_lock lock(mutex_);
    auto it = staging_.find(episode_id);
    return it == staging_.end() ? 0 : it->second.size();
}

std::vector<MemoryEntry> MemoryStore::committed() const {
    std::shared_lock lock(mutex_);
    return committed_;
}

MemoryEntry MemoryStore::make_entry(Interaction interaction, std::string chosen_action, std::string episode_id,
                                    int step_index, EntrySource source) const {
    MemoryEntry e;
    e.embedding = embedder_->embed(serialize_interaction(interaction));
    e.interaction = std::move(interaction);
    e.chosen_action = std::move(chosen_action);
    e.episode_id = std::move(episode_id);
    e.step_index = step_index;
    e.source = source;
    return e;
}

bool MemoryStore::stage(MemoryEntry entry, const critics::Feedback& feedback) {
    if (!feedback.ok()) return false;
    if (!actions::parse_action(entry.chosen_action))
        throw std::invalid_argument("staged action does not parse: " + entry.chosen_action);
    std::unique_lock lock(mutex_);
    staging_[entry.episode_id].push_back(std::move(entry));
    return true;
}

std::string MemoryStore::dedup_key(const MemoryEntry& e) {
    return serialize_interaction(e.interaction) + '\x1f' + e.chosen_action;
}

std::size_t MemoryStore::commit_episode(const std::string& episode_id, bool episode_succeeded) {
    std::unique_lock lock(mutex_);
    auto node = staging_.extract(episode_id);
    if (node.empty() || !episode_succeeded) return 0;
    std::size_t added = 0;
    for (auto& e : node.mapped()) {
        if (!keys_.insert(dedup_key(e)).second) continue;
        committed_.push_back(std::move(e));
        ++added;
    }
    return added;
}

std::vector<ScoredEntry> MemoryStore::rank(const Embedding& query, int k, const std::string* only_episode) const {
    std::vector<ScoredEntry> scored;
    if (k <= 0) return scored;
    std::shared_lock lock(mutex_);
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(committed_.size());
    for (std::size_t i = 0; i < committed_.size(); ++i) {
        if (only_episode && committed_[i].episode_id != *only_episode) continue;
        order.emplace_back(cosine(query, committed_[i].embedding), i);
    }
    const auto take = std::min(order.size(), static_cast<std::size_t>(k));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    scored.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        scored.push_back({committed_[order[i].second], order[i].first, order[i].second});
    return scored;
}

std::vector<ScoredEntry> MemoryStore::retrieve_topk(const Embedding& query, int k) const {
    return rank(query, k, nullptr);
}

std::vector<ScoredEntry> MemoryStore::retrieve_topk(const Interaction& query, int k) const {
    if (k <= 0) return {};
    return rank(embedder_->embed(serialize_interaction(query)), k, nullptr);
}

const Embedding& MemoryStore::goal_embedding(const std::string& goal) const {
    std::lock_guard lock(goal_cache_mutex_);
    auto it = goal_cache_.find(goal);
    if (it == goal_cache_.end()) it = goal_cache_.emplace(goal, embedder_->embed(goal)).first;
    return it->second;
}

std::vector<ScoredEntry> MemoryStore::retrieve_trajectory(const Interaction& query, int k) const {
    if (k <= 0) return {};
    return retrieve_trajectory(query, embedder_->embed(serialize_interaction(query)), k);
}

std::vector<ScoredEntry> MemoryStore::retrieve_trajectory(const Interaction& query,
                                                          const Embedding& query_embedding, int k) const {
    if (k <= 0) return {};
    std::vector<std::pair<std::string, std::string>> episodes;  // (episode_id, goal), commit order
    {
        std::shared_lock lock(mutex_);
        for (const auto& e : committed_) {
            const bool seen = std::any_of(episodes.begin(), episodes.end(),
                                          [&](const auto& ep) { return ep.first == e.episode_id; });
            if (!seen) episodes.emplace_back(e.episode_id, e.interaction.goal);
        }
    }
    if (episodes.empty()) return {};
    const Embedding& q = goal_embedding(query.goal);
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        const double sim = cosine(q, goal_embedding(episodes[i].second));
        if (sim > best_sim) {
            best_sim = sim;
            best = i;
        }
    }
    return rank(query_embedding, k, &episodes[best].first);
}

// --- persistence -----------------------------------------------------------

namespace {

nlohmann::json optional_json(const std::optional<std::string>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<std::string> optional_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<std::string>();
}

}  // namespace

void MemoryStore::persist(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw MemoryError("cannot write memory file " + tmp);
        const auto dim = committed_.empty() ? 0 : committed_.front().embedding.size();
        out << nlohmann::json{{"format", "ragmod-memory"},
                              {"version", kMemorySchemaVersion},
                              {"embedder", tag_},
                              {"dimension", dim},
                              {"entries", committed_.size()}}
                   .dump()
            << '\n';
        for (const auto& e : committed_) {
            std::vector<double> values(e.embedding.data(), e.embedding.data() + e.embedding.size());
            out << nlohmann::json{{"goal", e.interaction.goal},
                                  {"prev_action", optional_json(e.interaction.prev_action)},
                                  {"prev_feedback", optional_json(e.interaction.prev_feedback)},
                                  {"observation", e.interaction.observation},
                                  {"chosen_action", e.chosen_action},
                                  {"embedding", values},
                                  {"episode_id", e.episode_id},
                                  {"step_index", e.step_index},
                                  {"source", to_string(e.source)},
                                  {"embedder", tag_}}
                       .dump()
                << '\n';
        }
        if (!out) throw MemoryError("error while writing memory file " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw MemoryError("cannot move memory file into place: " + ec.message());
}

MemoryStore MemoryStore::load(const std::filesystem::path& path, std::shared_ptr<const Embedder> embedder) {
    std::ifstream in(path);
    if (!in) throw MemoryError("cannot open memory file " + path.string());
    MemoryStore store(std::move(embedder));
    std::string line;
    if (!std::getline(in, line)) throw SchemaMismatch("memory file is empty: " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaMismatch("memory file header is not valid: " + std::string(e.what()));
    }
    if (header.value("format", "") != "ragmod-memory") throw SchemaMismatch("not a memory file: " + path.string());
    if (header.value("version", -1) != kMemorySchemaVersion) {
        throw SchemaMismatch("memory schema version " + std::to_string(header.value("version", -1)) +
                             " does not match supported version " + std::to_string(kMemorySchemaVersion));
    }
    const auto file_tag = header.value("embedder", "");
    if (file_tag != store.tag_) {
        throw EmbedderMismatch("memory was embedded with '" + file_tag + "' but the configured embedder is '" +
                               store.tag_ + "'");
    }
    std::size_t line_no = 1;
    try {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            if (j.value("embedder", file_tag) != store.tag_)
                throw EmbedderMismatch("entry on line " + std::to_string(line_no) + " has a different embedder tag");
            MemoryEntry e;
            e.interaction.goal = j.at("goal").get<std::string>();
            e.interaction.prev_action = optional_from(j.at("prev_action"));
            e.interaction.prev_feedback = optional_from(j.at("prev_feedback"));
            e.interaction.observation = j.at("observation").get<std::string>();
            e.chosen_action = j.at("chosen_action").get<std::string>();
            const auto values = j.at("embedding").get<std::vector<double>>();
            e.embedding = Eigen::Map<const Embedding>(values.data(), static_cast<Eigen::Index>(values.size()));
            e.episode_id = j.at("episode_id").get<std::string>();
            e.step_index = j.at("step_index").get<int>();
            const auto source = j.at("source").get<std::string>();
            if (source != "expert" && source != "agent") throw SchemaMismatch("unknown entry source '" + source + "'");
            e.source = source == "expert" ? EntrySource::expert : EntrySource::agent;
            store.keys_.insert(dedup_key(e));
            store.committed_.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaMismatch("malformed memory record on line " + std::to_string(line_no) + ": " + e.what());
    }
    return store;
}

bool operator==(const MemoryStore& a, const MemoryStore& b) {
    if (&a == &b) return true;
    std::shared_lock la(a.mutex_);
    std::shared_lock lb(b.mutex_);
    return a.tag_ == b.tag_ && a.committed_ == b.committed_;
}

}  // namespace ragmod::memory
