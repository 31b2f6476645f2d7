#include "ragmod/runner.hpp"

#include "ragmod/hash.hpp"
#include "ragmod/task_generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace ragmod::runner {

using nlohmann::json;

std::string_view to_string(RetrievalMode m) {
    return m == RetrievalMode::trajectory ? "trajectory" : "interaction";
}

std::optional<RetrievalMode> parse_retrieval_mode(std::string_view s) {
    if (s == "interaction") return RetrievalMode::interaction;
    if (s == "trajectory") return RetrievalMode::trajectory;
    return std::nullopt;
}

std::uint64_t training_seed(std::uint64_t base, std::size_t index) {
    return kTrainingSeedBase + (base + index) % kSeedRange;
}

std::uint64_t evaluation_seed(std::uint64_t base, std::size_t index) {
    return kEvaluationSeedBase + (base + index) % kSeedRange;
}

int ExperimentConfig::effective_k() const { return k.value_or(world::default_k(level)); }
int ExperimentConfig::effective_horizon() const { return horizon.value_or(world::default_horizon(level)); }

void ExperimentConfig::validate() const {
    if (num_tasks < 0) throw std::invalid_argument("num_tasks must be non-negative");
    if (effective_k() < 0) throw std::invalid_argument("K must be non-negative");
    if (effective_horizon() <= 0) throw std::invalid_argument("horizon must be positive");
    if (train_tasks < 0) throw std::invalid_argument("train_tasks must be non-negative");
    if (parallelism < 1) throw std::invalid_argument("parallelism must be at least 1");
    if (history_limit && *history_limit < 0) throw std::invalid_argument("history_limit must be non-negative");
    if (bootstrap_trials < 1) throw std::invalid_argument("bootstrap_trials must be positive");
    backend.validate();
}

json to_json(const ExperimentConfig& c) {
    json backend = {{"kind", policy::to_string(c.backend.backend)},
                    {"model", c.backend.model},
                    {"max_tokens", c.backend.max_tokens},
                    {"temperature", c.backend.temperature},
                    {"timeout_s", c.backend.timeout_s},
                    {"max_attempts", c.backend.retry.max_attempts},
                    {"backoff_base_ms", c.backend.retry.backoff_base_ms},
                    {"follow_threshold", c.backend.follow_threshold},
                    {"fallback_action", c.backend.fallback_action}};
    return {{"level", world::to_string(c.level)},
            {"num_tasks", c.num_tasks},
            {"k", c.effective_k()},
            {"horizon", c.effective_horizon()},
            {"memory_enabled", c.memory_enabled},
            {"retrieval_mode", to_string(c.retrieval_mode)},
            {"prior_experience", c.prior_experience},
            {"train_tasks", c.train_tasks},
            {"seed", c.seed},
            {"train_seed", c.train_seed},
            {"parallelism", c.parallelism},
            {"history_limit", c.history_limit ? json(*c.history_limit) : json(nullptr)},
            {"record_prompts", c.record_prompts},
            {"bootstrap_trials", c.bootstrap_trials},
            {"backend", backend}};
}

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) throw std::invalid_argument(std::string(where) + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw std::invalid_argument("unknown config key '" + key + "' in " + std::string(where));
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(std::string("config key '") + key + "' has the wrong type");
    }
}

template <class T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null()) {
        out.reset();
        return;
    }
    T v{};
    read(j, key, v);
    out = v;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    reject_unknown(j,
                   {"level", "num_tasks", "k", "horizon", "memory_enabled", "retrieval_mode", "prior_experience",
                    "train_tasks", "seed", "train_seed", "parallelism", "history_limit", "record_prompts",
                    "bootstrap_trials", "backend"},
                   "experiment config");
    ExperimentConfig c;
    if (j.contains("level")) {
        std::string s;
        read(j, "level", s);
        const auto l = world::parse_level(s);
        if (!l) throw std::invalid_argument("unknown level '" + s + "'");
        c.level = *l;
    }
    read(j, "num_tasks", c.num_tasks);
    read_optional(j, "k", c.k);
    read_optional(j, "horizon", c.horizon);
    read(j, "memory_enabled", c.memory_enabled);
    if (j.contains("retrieval_mode")) {
        std::string s;
        read(j, "retrieval_mode", s);
        const auto m = parse_retrieval_mode(s);
        if (!m) throw std::invalid_argument("unknown retrieval_mode '" + s + "'");
        c.retrieval_mode = *m;
    }
    read(j, "prior_experience", c.prior_experience);
    read(j, "train_tasks", c.train_tasks);
    read(j, "seed", c.seed);
    read(j, "train_seed", c.train_seed);
    read(j, "parallelism", c.parallelism);
    read_optional(j, "history_limit", c.history_limit);
    read(j, "record_prompts", c.record_prompts);
    read(j, "bootstrap_trials", c.bootstrap_trials);
    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        reject_unknown(b,
                       {"kind", "model", "max_tokens", "temperature", "timeout_s", "max_attempts", "backoff_base_ms",
                        "follow_threshold", "fallback_action"},
                       "backend config");
        if (b.contains("kind")) {
            std::string s;
            read(b, "kind", s);
            const auto k = policy::parse_backend_kind(s);
            if (!k) throw std::invalid_argument("unknown backend kind '" + s + "'");
            c.backend.backend = *k;
        }
        read(b, "model", c.backend.model);
        read(b, "max_tokens", c.backend.max_tokens);
        read(b, "temperature", c.backend.temperature);
        read(b, "timeout_s", c.backend.timeout_s);
        read(b, "max_attempts", c.backend.retry.max_attempts);
        read(b, "backoff_base_ms", c.backend.retry.backoff_base_ms);
        read(b, "follow_threshold", c.backend.follow_threshold);
        read(b, "fallback_action", c.backend.fallback_action);
    }
    c.validate();
    return c;
}

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(to_json(cfg).dump())).substr(0, 8); }

std::size_t count_example_blocks(std::string_view prompt) {
    std::size_t n = 0;
    const std::string header = std::string("\n") + prompt::kExampleHeader;
    for (auto pos = prompt.find(header); pos != std::string_view::npos; pos = prompt.find(header, pos + 1)) ++n;
    return n;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t step_seed(std::uint64_t run_seed, std::uint64_t task_seed, int t) {
    return splitmix64(splitmix64(splitmix64(run_seed) ^ task_seed) ^ static_cast<std::uint64_t>(t));
}

std::string default_episode_id(const world::TaskInstance& task) {
    return std::string(world::to_string(task.level)) + "-" + std::to_string(task.seed);
}

}  // namespace

EpisodeResult run_episode(const world::TaskInstance& task, const ExperimentConfig& cfg, memory::MemoryStore& store,
                          policy::DecisionBackend& backend, const EpisodeOptions& opts) {
    static const prompt::EnvDescriptor env = prompt::gridworld_descriptor();

    EpisodeResult result;
    result.task_seed = task.seed;
    result.goal = task.goal;
    result.episode_id = opts.episode_id.empty() ? default_episode_id(task) : opts.episode_id;

    const int horizon = cfg.horizon.value_or(task.horizon);
    const int k = cfg.effective_k();
    const bool retrieve = cfg.memory_enabled && k > 0;
    const auto budget = actions::default_macro_budget(task.initial_state);

    world::GridState state = task.initial_state;
    std::vector<prompt::HistoryStep> history;
    std::optional<std::string> prev_action;
    std::optional<std::string> prev_feedback;

    for (int t = 0; t < horizon && !world::goal_satisfied(state, task.goal_spec); ++t) {
        StepRecord rec;
        rec.t = t;
        const auto obs = world::observe(state);
        rec.observation = world::render_observation(obs);

        memory::Interaction query{task.goal, prev_action, prev_feedback, rec.observation};
        memory::Embedding query_embedding = store.embedder().embed(memory::serialize_interaction(query));

        std::vector<memory::ScoredEntry> retrieved;
        if (retrieve) {
            retrieved = cfg.retrieval_mode == RetrievalMode::trajectory
                            ? store.retrieve_trajectory(query, query_embedding, k)
                            : store.retrieve_topk(query_embedding, k);
        }
        for (const auto& r : retrieved) rec.examples.push_back({r.entry.episode_id, r.entry.step_index, r.similarity});

        prompt::PromptContext ctx{prompt::to_examples(retrieved), task.goal, history, rec.observation};
        if (cfg.history_limit) ctx = prompt::truncate_history(std::move(ctx), static_cast<std::size_t>(*cfg.history_limit));
        const std::string text = prompt::build_prompt(env, ctx);
        rec.prompt_hash = hex64(fnv1a64(text));
        rec.example_blocks = count_example_blocks(text);
        if (rec.example_blocks != retrieved.size())
            throw std::logic_error("prompt carries " + std::to_string(rec.example_blocks) + " example blocks for " +
                                   std::to_string(retrieved.size()) + " retrieved entries");
        if (cfg.record_prompts) rec.prompt = text;

        policy::DecisionRequest request;
        request.prompt = text;
        request.system_prefix = env.text;
        request.retrieved = &retrieved;
        request.state = &state;
        request.goal = &task.goal_spec;
        request.rng_seed = step_seed(cfg.seed, task.seed, t);

        critics::FeasibilityResult fr;
        try {
            rec.raw_output = backend.predict_action(request);
            fr = critics::check_feasibility(state, obs, rec.raw_output, budget);
        } catch (const policy::BackendError& e) {
            rec.backend_error = e.what();
            fr.state = state;
            fr.feedback = critics::Feedback::failure(critics::CriticKind::syntax, "backend error");
        }

        const std::string action_text = fr.action ? actions::render(*fr.action) : rec.raw_output;
        if (fr.action) rec.parsed_action = action_text;
        rec.feedback = fr.feedback;

        if (fr.feedback.ok()) {
            memory::MemoryEntry entry{query, action_text, std::move(query_embedding), result.episode_id, t,
                                      opts.source};
            rec.staged = store.stage(std::move(entry), fr.feedback);
        } else {
            ++result.inexec_steps;
        }

        state = std::move(fr.state);
        rec.state_digest = world::state_digest(state);
        const std::string feedback_text = critics::render_feedback(fr.feedback);
        history.push_back({rec.observation, action_text, feedback_text});
        prev_action = action_text;
        prev_feedback = feedback_text;
        ++result.total_steps;
        result.trace.push_back(std::move(rec));
    }

    result.success = world::goal_satisfied(state, task.goal_spec);
    if (opts.commit) result.committed = store.commit_episode(result.episode_id, result.success);
    return result;
}

std::size_t seed_memory(memory::MemoryStore& store, world::Level level, int n_tasks, std::uint64_t train_seed) {
    ExperimentConfig cfg;
    cfg.level = level;
    cfg.memory_enabled = false;
    policy::ExpertBackend expert;
    std::size_t committed = 0;
    for (int i = 0; i < n_tasks; ++i) {
        const auto task = world::generate_task(training_seed(train_seed, static_cast<std::size_t>(i)), level);
        EpisodeOptions opts;
        opts.episode_id = "train-" + default_episode_id(task);
        opts.source = memory::EntrySource::expert;
        committed += run_episode(task, cfg, store, expert, opts).committed;
    }
    return committed;
}

memory::MemoryStore prepare_memory(const ExperimentConfig& cfg, std::shared_ptr<const memory::Embedder> embedder) {
    memory::MemoryStore store(std::move(embedder));
    if (cfg.prior_experience) seed_memory(store, cfg.level, cfg.train_tasks, cfg.train_seed);
    return store;
}

ConfidenceInterval bootstrap_ci(std::span<const double> samples, int trials, double level, std::uint64_t seed) {
    if (samples.empty()) throw std::invalid_argument("bootstrap_ci needs at least one sample");
    if (trials < 1) throw std::invalid_argument("bootstrap_ci needs at least one trial");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci level must lie in (0, 1)");

    const std::size_t n = samples.size();
    double total = 0.0;
    for (double v : samples) total += v;
    const double point = total / static_cast<double>(n);

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> means(static_cast<std::size_t>(trials));
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += samples[pick(rng)];
        m = s / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());

    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, means.size() - 1);
        return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    const double alpha = (1.0 - level) / 2.0;
    return {std::min(quantile(alpha), point), std::max(quantile(1.0 - alpha), point)};
}

namespace {

MetricSummary summarize_metric(const std::vector<double>& xs, int trials, std::uint64_t seed) {
    MetricSummary m;
    m.n = xs.size();
    if (xs.empty()) {
        m.mean = m.ci.low = m.ci.high = std::nan("");
        return m;
    }
    double total = 0.0;
    for (double v : xs) total += v;
    m.mean = total / static_cast<double>(xs.size());
    m.ci = bootstrap_ci(xs, trials, 0.95, seed);
    return m;
}

json to_json(const MetricSummary& m) {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    return {{"mean", num(m.mean)}, {"ci_low", num(m.ci.low)}, {"ci_high", num(m.ci.high)}, {"n", m.n}};
}

}  // namespace

MetricsReport summarize(const ExperimentConfig& cfg, const std::vector<EpisodeResult>& episodes,
                        std::size_t memory_start, std::size_t memory_end) {
    MetricsReport r;
    r.config = to_json(cfg);
    r.num_tasks = static_cast<int>(episodes.size());
    r.memory_start = memory_start;
    r.memory_end = memory_end;

    std::vector<double> sr, inexec, len, inexec_s, len_s, inexec_f, len_f;
    for (const auto& e : episodes) {
        if (e.inexec_steps > e.total_steps) throw std::logic_error("episode " + e.episode_id + " has inexec > len");
        r.episodes.push_back({e.task_seed, e.episode_id, e.success, e.total_steps, e.inexec_steps, e.error});
        if (e.error) r.errors.push_back(e.episode_id + ": " + *e.error);
        r.successes += e.success ? 1 : 0;
        sr.push_back(e.success ? 1.0 : 0.0);
        inexec.push_back(e.inexec_steps);
        len.push_back(e.total_steps);
        (e.success ? inexec_s : inexec_f).push_back(e.inexec_steps);
        (e.success ? len_s : len_f).push_back(e.total_steps);
    }
    const int trials = cfg.bootstrap_trials;
    const std::uint64_t s = splitmix64(cfg.seed ^ 0xB0075EEDULL);
    r.sr = summarize_metric(sr, trials, s + 1);
    r.inexec = summarize_metric(inexec, trials, s + 2);
    r.len = summarize_metric(len, trials, s + 3);
    r.inexec_success = summarize_metric(inexec_s, trials, s + 4);
    r.len_success = summarize_metric(len_s, trials, s + 5);
    r.inexec_failure = summarize_metric(inexec_f, trials, s + 6);
    r.len_failure = summarize_metric(len_f, trials, s + 7);
    return r;
}

json to_json(const MetricsReport& r) {
    json rows = json::array();
    for (const auto& e : r.episodes) {
        rows.push_back({{"task_seed", e.task_seed},
                        {"episode_id", e.episode_id},
                        {"success", e.success},
                        {"total_steps", e.total_steps},
                        {"inexec_steps", e.inexec_steps},
                        {"error", e.error ? json(*e.error) : json(nullptr)}});
    }
    return {{"config", r.config},
            {"num_tasks", r.num_tasks},
            {"successes", r.successes},
            {"sr", to_json(r.sr)},
            {"inexec", to_json(r.inexec)},
            {"len", to_json(r.len)},
            {"inexec_success_only", to_json(r.inexec_success)},
            {"len_success_only", to_json(r.len_success)},
            {"inexec_failure_only", to_json(r.inexec_failure)},
            {"len_failure_only", to_json(r.len_failure)},
            {"memory_entries_start", r.memory_start},
            {"memory_entries_end", r.memory_end},
            {"errors", r.errors},
            {"episodes", rows}};
}

std::string render_table(const MetricsReport& r) { return render_table(to_json(r)); }

std::string render_table(const json& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    auto row = [&](const char* name, const char* key) {
        os << std::left << std::setw(18) << name;
        const auto& m = r.at(key);
        if (m.value("n", 0) == 0 || m.at("mean").is_null()) {
            os << "n/a\n";
            return;
        }
        os << m.at("mean").get<double>() << "  [" << m.at("ci_low").get<double>() << ", "
           << m.at("ci_high").get<double>() << "]  n=" << m.at("n").get<std::size_t>() << '\n';
    };
    const json& cfg = r.at("config");
    os << "level=" << cfg.value("level", "?") << " backend=" << cfg.value("backend", json::object()).value("kind", "?")
       << " K=" << cfg.value("k", 0) << " h=" << cfg.value("horizon", 0)
       << " memory=" << (cfg.value("memory_enabled", false) ? "on" : "off")
       << " retrieval=" << cfg.value("retrieval_mode", "?")
       << " prior=" << (cfg.value("prior_experience", false) ? "yes" : "no") << '\n';
    if (cfg.value("k", 0) == 0 || !cfg.value("memory_enabled", true)) os << "prompts carry 0 in-context examples\n";
    os << "tasks=" << r.value("num_tasks", 0) << " successes=" << r.value("successes", 0) << " memory "
       << r.value("memory_entries_start", 0) << " -> " << r.value("memory_entries_end", 0) << '\n';
    row("SR", "sr");
    row("InExec", "inexec");
    row("Len", "len");
    row("InExec (success)", "inexec_success_only");
    row("Len (success)", "len_success_only");
    for (const auto& e : r.value("errors", json::array())) os << "error: " << e.get<std::string>() << '\n';
    return os.str();
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg, memory::MemoryStore& store,
                                policy::DecisionBackend& backend) {
    cfg.validate();
    ExperimentOutput out;
    const std::size_t memory_start = store.size();
    const auto n = static_cast<std::size_t>(cfg.num_tasks);
    out.episodes.resize(n);

    auto run_one = [&](std::size_t i, bool commit) {
        const std::uint64_t seed = evaluation_seed(cfg.seed, i);
        EpisodeResult& slot = out.episodes[i];
        try {
            const auto task = world::generate_task(seed, cfg.level);
            EpisodeOptions opts;
            opts.commit = commit;
            slot = run_episode(task, cfg, store, backend, opts);
        } catch (const std::exception& e) {
            slot = EpisodeResult{};
            slot.task_seed = seed;
            slot.episode_id = std::string(world::to_string(cfg.level)) + "-" + std::to_string(seed);
            slot.error = e.what();
        }
    };

    const auto width = static_cast<std::size_t>(cfg.parallelism);
    for (std::size_t begin = 0; begin < n; begin += width) {
        const std::size_t end = std::min(n, begin + width);
        if (width == 1) {
            run_one(begin, true);
            continue;
        }
        {
            std::vector<std::jthread> workers;
            for (std::size_t i = begin; i < end; ++i) workers.emplace_back([&, i] { run_one(i, false); });
        }
        for (std::size_t i = begin; i < end; ++i) {
            auto& e = out.episodes[i];
            e.committed = store.commit_episode(e.episode_id, e.success && !e.error);
        }
    }

    out.report = summarize(cfg, out.episodes, memory_start, store.size());
    return out;
}

std::vector<std::pair<int, ExperimentOutput>> k_sweep(const ExperimentConfig& cfg, const std::vector<int>& k_values,
                                                      const memory::MemoryStore& seeded,
                                                      policy::DecisionBackend& backend) {
    if (k_values.empty()) throw std::invalid_argument("k_sweep needs at least one K");
    std::set<int> seen;
    for (int k : k_values) {
        if (k < 0) throw std::invalid_argument("K must be non-negative");
        if (!seen.insert(k).second) throw std::invalid_argument("duplicate K value " + std::to_string(k));
    }
    std::vector<std::pair<int, ExperimentOutput>> out;
    for (int k : k_values) {
        ExperimentConfig c = cfg;
        c.k = k;
        memory::MemoryStore store = seeded;
        out.emplace_back(k, run_experiment(c, store, backend));
    }
    return out;
}

json to_json(const StepRecord& s, const EpisodeResult& e) {
    json examples = json::array();
    for (const auto& x : s.examples)
        examples.push_back({{"episode_id", x.episode_id}, {"step_index", x.step_index}, {"similarity", x.similarity}});
    json j = {{"record", "step"},
              {"episode_id", e.episode_id},
              {"task_seed", e.task_seed},
              {"t", s.t},
              {"observation", s.observation},
              {"prompt_hash", s.prompt_hash},
              {"example_blocks", s.example_blocks},
              {"examples", examples},
              {"raw_output", s.raw_output},
              {"parsed_action", s.parsed_action ? json(*s.parsed_action) : json(nullptr)},
              {"feedback", critics::render_feedback(s.feedback)},
              {"critic", critics::to_string(s.feedback.critic)},
              {"state_digest", s.state_digest},
              {"staged", s.staged}};
    if (s.backend_error) j["backend_error"] = *s.backend_error;
    if (!s.prompt.empty()) j["prompt"] = s.prompt;
    return j;
}

void write_trace(const std::filesystem::path& path, const std::vector<EpisodeResult>& episodes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write trace file " + path.string());
    for (const auto& e : episodes) {
        for (const auto& s : e.trace) os << to_json(s, e).dump() << '\n';
        json summary = {{"record", "episode"},
                        {"episode_id", e.episode_id},
                        {"task_seed", e.task_seed},
                        {"goal", e.goal},
                        {"success", e.success},
                        {"total_steps", e.total_steps},
                        {"inexec_steps", e.inexec_steps},
                        {"committed", e.committed},
                        {"error", e.error ? json(*e.error) : json(nullptr)}};
        os << summary.dump() << '\n';
    }
    if (!os) throw std::runtime_error("failed writing trace file " + path.string());
}

void write_report(const std::filesystem::path& json_path, const MetricsReport& r) {
    if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
    std::ofstream os(json_path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write report " + json_path.string());
    os << to_json(r).dump(2) << '\n';
    if (!os) throw std::runtime_error("failed writing report " + json_path.string());
}

}  // namespace ragmod::runner
