#include "ragmod/cli.hpp"

#include "ragmod/hash.hpp"
#include "ragmod/http_clients.hpp"
#include "ragmod/task_generator.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace ragmod::cli {

using nlohmann::json;

namespace {

// Infrastructure failure: exit code 2.
struct InfraError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class T>
void take(json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
    j.erase(key);
}

}  // namespace

json to_json(const CliConfig& c) {
    json j = runner::to_json(c.experiment);
    j["memory_db"] = c.memory_db.string();
    j["trace_dir"] = c.trace_dir.string();
    j["fixtures"] = c.fixtures.string();
    j["embedder"] = c.embedder;
    j["embedding_model"] = c.embedding_model;
    j["embedding_dimension"] = c.embedding_dimension;
    j["base_url"] = c.base_url;
    j["max_in_flight"] = c.max_in_flight;
    j["log_http"] = c.log_http;
    j["k_values"] = c.k_values;
    return j;
}

CliConfig cli_config_from_json(const json& input) {
    if (!input.is_object()) throw ConfigError("config must be a JSON object");
    json j = input;
    CliConfig c;
    std::string path;
    if (j.contains("memory_db")) take(j, "memory_db", path), c.memory_db = path;
    if (j.contains("trace_dir")) take(j, "trace_dir", path), c.trace_dir = path;
    if (j.contains("fixtures")) take(j, "fixtures", path), c.fixtures = path;
    take(j, "embedder", c.embedder);
    take(j, "embedding_model", c.embedding_model);
    take(j, "embedding_dimension", c.embedding_dimension);
    take(j, "base_url", c.base_url);
    take(j, "max_in_flight", c.max_in_flight);
    take(j, "log_http", c.log_http);
    take(j, "k_values", c.k_values);
    if (c.embedder != "local" && c.embedder != "remote")
        throw ConfigError("embedder must be 'local' or 'remote', got '" + c.embedder + "'");
    if (c.embedding_dimension <= 0) throw ConfigError("embedding_dimension must be positive");
    if (c.max_in_flight < 1) throw ConfigError("max_in_flight must be at least 1");
    try {
        c.experiment = runner::config_from_json(j);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v || !*v) return std::nullopt;
        return std::string(v);
    };
}

std::string output_stem(const CliConfig& c) {
    return hex64(fnv1a64(to_json(c).dump())).substr(0, 8) + "-s" + std::to_string(c.experiment.seed);
}

namespace {

struct Context {
    std::ostream& out;
    std::ostream& err;
    const EnvLookup& env;
};

/// Flag values layered over the config file, kept as JSON so precedence is one merge.
struct Overrides {
    std::string config_path;
    json values = json::object();

    void set(const std::string& key, json v) { values[key] = std::move(v); }
    void set_backend(const std::string& key, json v) { values["backend"][key] = std::move(v); }
};

void add_experiment_flags(CLI::App* sub, Overrides& ov) {
    sub->add_option("--config", ov.config_path, "JSON config file");
    sub->add_option_function<std::string>("--level", [&ov](const std::string& v) { ov.set("level", v); },
                                          "synth or bosslevel");
    sub->add_option_function<int>("--num-tasks", [&ov](const int& v) { ov.set("num_tasks", v); });
    sub->add_option_function<int>("--k", [&ov](const int& v) { ov.set("k", v); }, "retrieved examples");
    sub->add_option_function<int>("--horizon", [&ov](const int& v) { ov.set("horizon", v); });
    sub->add_option_function<bool>("--memory-enabled", [&ov](const bool& v) { ov.set("memory_enabled", v); });
    sub->add_option_function<std::string>("--retrieval-mode",
                                          [&ov](const std::string& v) { ov.set("retrieval_mode", v); });
    sub->add_option_function<bool>("--prior-experience", [&ov](const bool& v) { ov.set("prior_experience", v); });
    sub->add_option_function<int>("--train-tasks", [&ov](const int& v) { ov.set("train_tasks", v); });
    sub->add_option_function<std::uint64_t>("--seed", [&ov](const std::uint64_t& v) { ov.set("seed", v); });
    sub->add_option_function<std::uint64_t>("--train-seed",
                                            [&ov](const std::uint64_t& v) { ov.set("train_seed", v); });
    sub->add_option_function<int>("--parallelism", [&ov](const int& v) { ov.set("parallelism", v); });
    sub->add_option_function<int>("--history-limit", [&ov](const int& v) { ov.set("history_limit", v); });
    sub->add_option_function<bool>("--record-prompts", [&ov](const bool& v) { ov.set("record_prompts", v); });
    sub->add_option_function<int>("--bootstrap-trials", [&ov](const int& v) { ov.set("bootstrap_trials", v); });
    sub->add_option_function<std::string>("--backend", [&ov](const std::string& v) { ov.set_backend("kind", v); },
                                          "remote_chat, scripted, expert, retrieval_follower, random");
    sub->add_option_function<std::string>("--model", [&ov](const std::string& v) { ov.set_backend("model", v); });
    sub->add_option_function<double>("--follow-threshold",
                                     [&ov](const double& v) { ov.set_backend("follow_threshold", v); });
    sub->add_option_function<std::string>("--memory-db", [&ov](const std::string& v) { ov.set("memory_db", v); });
    sub->add_option_function<std::string>("--trace-dir", [&ov](const std::string& v) { ov.set("trace_dir", v); });
    sub->add_option_function<std::string>("--fixtures", [&ov](const std::string& v) { ov.set("fixtures", v); });
    sub->add_option_function<std::string>("--embedder", [&ov](const std::string& v) { ov.set("embedder", v); });
    sub->add_option_function<std::string>("--base-url", [&ov](const std::string& v) { ov.set("base_url", v); });
    sub->add_option_function<std::vector<int>>("--k-values", [&ov](const std::vector<int>& v) { ov.set("k_values", v); })
        ->delimiter(',');
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
}

CliConfig resolve(const Overrides& ov) {
    json j = json::object();
    if (!ov.config_path.empty()) j = read_json_file(ov.config_path);
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    j.merge_patch(ov.values);
    return cli_config_from_json(j);
}

std::string api_key(const EnvLookup& env) {
    for (const char* name : {"RAGMOD_API_KEY", "OPENAI_API_KEY"})
        if (auto v = env(name)) return *v;
    return {};
}

std::string base_url(const CliConfig& c, const EnvLookup& env) {
    if (!c.base_url.empty()) return c.base_url;
    for (const char* name : {"RAGMOD_BASE_URL", "OPENAI_BASE_URL"})
        if (auto v = env(name)) return *v;
    return "https://api.openai.com";
}

bool needs_remote(const CliConfig& c) {
    return c.embedder == "remote" || c.experiment.backend.backend == policy::BackendKind::remote_chat;
}

policy::EndpointConfig endpoint(const CliConfig& c, const Context& ctx) {
    policy::EndpointConfig e;
    e.base_url = base_url(c, ctx.env);
    e.api_key = api_key(ctx.env);
    e.timeout_s = c.experiment.backend.timeout_s;
    e.retry = c.experiment.backend.retry;
    e.max_in_flight = c.max_in_flight;
    if (c.log_http) e.log = [&err = ctx.err](const std::string& s) { err << s << '\n'; };
    return e;
}

void check_credentials(const CliConfig& c, const Context& ctx) {
    if (needs_remote(c) && api_key(ctx.env).empty())
        throw ConfigError("remote endpoints configured but no credential found; set RAGMOD_API_KEY or OPENAI_API_KEY");
}

std::shared_ptr<const memory::Embedder> make_embedder(const CliConfig& c, const Context& ctx) {
    if (c.embedder == "local") return std::make_shared<memory::HashedBagEmbedder>();
    return std::make_shared<policy::RemoteEmbedder>(
        policy::EmbeddingClient(endpoint(c, ctx), c.embedding_model, c.embedding_dimension));
}

std::vector<std::string> read_fixtures(const std::filesystem::path& path) {
    if (path.empty()) throw ConfigError("the scripted backend needs a fixtures file");
    const json j = read_json_file(path);
    if (!j.is_array()) throw ConfigError("fixtures file must hold a JSON array of strings");
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) throw ConfigError("fixtures file must hold a JSON array of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::unique_ptr<policy::DecisionBackend> make_backend(const CliConfig& c, const Context& ctx) {
    const auto& p = c.experiment.backend;
    switch (p.backend) {
        case policy::BackendKind::expert: return std::make_unique<policy::ExpertBackend>();
        case policy::BackendKind::random: return std::make_unique<policy::RandomBackend>();
        case policy::BackendKind::retrieval_follower:
            return std::make_unique<policy::RetrievalFollowerBackend>(p.follow_threshold, p.fallback_action);
        case policy::BackendKind::scripted: return std::make_unique<policy::ScriptedBackend>(read_fixtures(c.fixtures));
        case policy::BackendKind::remote_chat: {
            auto e = endpoint(c, ctx);
            return std::make_unique<policy::RemoteChatBackend>(policy::ChatClient(std::move(e)), p);
        }
    }
    throw ConfigError("unsupported backend");
}

memory::MemoryStore load_or_seed(const CliConfig& c, std::shared_ptr<const memory::Embedder> embedder,
                                 const Context& ctx) {
    if (!c.experiment.prior_experience) return memory::MemoryStore(std::move(embedder));
    if (!c.memory_db.empty() && std::filesystem::exists(c.memory_db)) {
        auto store = memory::MemoryStore::load(c.memory_db, std::move(embedder));
        ctx.out << "loaded " << store.size() << " entries from " << c.memory_db.string() << '\n';
        return store;
    }
    return runner::prepare_memory(c.experiment, std::move(embedder));
}

/// Per-prompt provenance summary used to audit ablations.
json prompt_stats(const std::vector<runner::EpisodeResult>& episodes) {
    std::size_t prompts = 0, min_blocks = 0, max_blocks = 0, max_episodes = 0;
    for (const auto& e : episodes) {
        for (const auto& s : e.trace) {
            std::set<std::string> ids;
            for (const auto& x : s.examples) ids.insert(x.episode_id);
            min_blocks = prompts == 0 ? s.example_blocks : std::min(min_blocks, s.example_blocks);
            max_blocks = std::max(max_blocks, s.example_blocks);
            max_episodes = std::max(max_episodes, ids.size());
            ++prompts;
        }
    }
    return {{"prompts", prompts},
            {"example_blocks_min", min_blocks},
            {"example_blocks_max", max_blocks},
            {"max_episode_ids_per_prompt", max_episodes}};
}

std::size_t backend_error_steps(const std::vector<runner::EpisodeResult>& episodes, std::size_t& total) {
    std::size_t n = 0;
    total = 0;
    for (const auto& e : episodes) {
        for (const auto& s : e.trace) {
            ++total;
            n += s.backend_error ? 1 : 0;
        }
    }
    return n;
}

/// Runs one experiment, writes trace and report files, returns the report JSON.
json execute(const CliConfig& c, memory::MemoryStore& store, policy::DecisionBackend& backend,
             const std::string& label, std::vector<runner::EpisodeResult>* episodes_out = nullptr) {
    auto result = runner::run_experiment(c.experiment, store, backend);
    result.report.config = to_json(c);
    const std::string stem = label + output_stem(c);
    runner::write_trace(c.trace_dir / ("trace-" + stem + ".jsonl"), result.episodes);
    runner::write_report(c.trace_dir / ("report-" + stem + ".json"), result.report);
    {
        std::ofstream txt(c.trace_dir / ("report-" + stem + ".txt"), std::ios::binary | std::ios::trunc);
        txt << runner::render_table(result.report);
    }

    std::size_t total = 0;
    const std::size_t failed = backend_error_steps(result.episodes, total);
    if (total > 0 && failed == total)
        throw InfraError("every prediction failed with a backend error; first: " +
                         result.episodes.front().trace.front().backend_error.value_or(""));
    if (!result.report.errors.empty()) throw InfraError("episode errors: " + result.report.errors.front());

    json j = runner::to_json(result.report);
    j["prompt_stats"] = prompt_stats(result.episodes);
    if (episodes_out) *episodes_out = std::move(result.episodes);
    return j;
}

int cmd_generate_tasks(const CliConfig& c, int count, const std::string& split, const std::string& out_path,
                       const Context& ctx) {
    if (count < 0) throw ConfigError("count must be non-negative");
    if (split != "eval" && split != "train") throw ConfigError("split must be 'eval' or 'train'");
    std::filesystem::path path(out_path);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InfraError("cannot write " + out_path);
    for (int i = 0; i < count; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto seed = split == "eval" ? runner::evaluation_seed(c.experiment.seed, idx)
                                          : runner::training_seed(c.experiment.train_seed, idx);
        os << world::to_json(world::generate_task(seed, c.experiment.level)).dump() << '\n';
    }
    if (!os) throw InfraError("failed writing " + out_path);
    ctx.out << "wrote " << count << " " << world::to_string(c.experiment.level) << " tasks to " << out_path << '\n';
    return 0;
}

int cmd_seed_memory(const CliConfig& c, const Context& ctx) {
    if (c.memory_db.empty()) throw ConfigError("seed-memory needs memory_db (--memory-db or config key)");
    check_credentials(c, ctx);
    auto embedder = make_embedder(c, ctx);
    memory::MemoryStore store = std::filesystem::exists(c.memory_db) ? memory::MemoryStore::load(c.memory_db, embedder)
                                                                     : memory::MemoryStore(embedder);
    const std::size_t before = store.size();
    const std::size_t added =
        runner::seed_memory(store, c.experiment.level, c.experiment.train_tasks, c.experiment.train_seed);
    store.persist(c.memory_db);
    ctx.out << "committed " << added << " new entries (" << before << " -> " << store.size() << ") to "
            << c.memory_db.string() << '\n';
    return 0;
}

int cmd_run(const CliConfig& c, const Context& ctx) {
    check_credentials(c, ctx);
    auto embedder = make_embedder(c, ctx);
    auto backend = make_backend(c, ctx);
    auto store = load_or_seed(c, embedder, ctx);
    const json report = execute(c, store, *backend, "");
    ctx.out << runner::render_table(report);
    ctx.out << "outputs in " << c.trace_dir.string() << " (stem " << output_stem(c) << ")\n";
    return 0;
}

void print_comparison(std::ostream& os, const std::string& base_name, const json& base, const std::string& var_name,
                      const json& var) {
    os << std::fixed << std::setprecision(3);
    os << std::left << std::setw(10) << "metric" << std::right << std::setw(12) << base_name << std::setw(16)
       << var_name << std::setw(10) << "delta" << '\n';
    for (const auto& [name, key] : std::vector<std::pair<std::string, std::string>>{
             {"SR", "sr"}, {"InExec", "inexec"}, {"Len", "len"}}) {
        const double b = base.at(key).at("mean").get<double>();
        const double v = var.at(key).at("mean").get<double>();
        os << std::left << std::setw(10) << name << std::right << std::setw(12) << b << std::setw(16) << v
           << std::setw(10) << (v - b) << '\n';
    }
    os << std::left << std::setw(10) << "examples" << std::right << std::setw(12)
       << base["prompt_stats"]["example_blocks_max"].get<std::size_t>() << std::setw(16)
       << var["prompt_stats"]["example_blocks_max"].get<std::size_t>() << "   (max blocks per prompt)\n";
    os << std::left << std::setw(10) << "memory" << std::right << std::setw(12)
       << (std::to_string(base.at("memory_entries_start").get<std::size_t>()) + "->" +
           std::to_string(base.at("memory_entries_end").get<std::size_t>()))
       << std::setw(16)
       << (std::to_string(var.at("memory_entries_start").get<std::size_t>()) + "->" +
           std::to_string(var.at("memory_entries_end").get<std::size_t>()))
       << '\n';
}

int cmd_ablate(const CliConfig& c, const std::string& which, const Context& ctx) {
    static const std::set<std::string> kinds = {"no_memory", "trajectory_retrieval", "no_prior", "k_sweep"};
    if (!kinds.count(which)) throw ConfigError("unknown ablation '" + which + "'");
    check_credentials(c, ctx);
    auto embedder = make_embedder(c, ctx);
    auto backend_ptr = make_backend(c, ctx);
    auto& backend = *backend_ptr;
    const auto seeded = load_or_seed(c, embedder, ctx);

    json result = {{"ablation", which}};
    if (which == "k_sweep") {
        std::set<int> seen;
        for (int k : c.k_values)
            if (!seen.insert(k).second) throw ConfigError("duplicate K value " + std::to_string(k));
        json rows = json::array();
        ctx.out << std::fixed << std::setprecision(3) << std::setw(4) << "K" << std::setw(10) << "SR" << std::setw(10)
                << "InExec" << std::setw(10) << "Len" << '\n';
        for (int k : c.k_values) {
            CliConfig v = c;
            v.experiment.k = k;
            memory::MemoryStore store = seeded;
            json r = execute(v, store, backend, "k" + std::to_string(k) + "-");
            ctx.out << std::setw(4) << k << std::setw(10) << r["sr"]["mean"].get<double>() << std::setw(10)
                    << r["inexec"]["mean"].get<double>() << std::setw(10) << r["len"]["mean"].get<double>() << '\n';
            rows.push_back({{"k", k}, {"report", r}});
        }
        result["sweep"] = rows;
    } else {
        CliConfig variant = c;
        memory::MemoryStore variant_store = seeded;
        if (which == "no_memory") variant.experiment.memory_enabled = false;
        if (which == "trajectory_retrieval") variant.experiment.retrieval_mode = runner::RetrievalMode::trajectory;
        if (which == "no_prior") {
            variant.experiment.prior_experience = false;
            variant_store = memory::MemoryStore(embedder);
        }
        memory::MemoryStore base_store = seeded;
        const json base = execute(c, base_store, backend, "base-");
        const json var = execute(variant, variant_store, backend, which + "-");
        print_comparison(ctx.out, "base", base, which, var);
        result["base"] = base;
        result["variant"] = var;
        json deltas;
        for (const char* key : {"sr", "inexec", "len"})
            deltas[key] = var[key]["mean"].get<double>() - base[key]["mean"].get<double>();
        result["deltas"] = deltas;
    }
    const auto path = c.trace_dir / ("ablation-" + which + "-" + output_stem(c) + ".json");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InfraError("cannot write " + path.string());
    os << result.dump(2) << '\n';
    ctx.out << "wrote " << path.string() << '\n';
    return 0;
}

int cmd_inspect_memory(const CliConfig& c, std::string query, const std::string& query_file, int k,
                       const Context& ctx) {
    if (c.memory_db.empty()) throw ConfigError("inspect-memory needs memory_db (--memory-db or config key)");
    if (k < 0) throw ConfigError("k must be non-negative");
    if (!query_file.empty()) {
        std::ifstream in(query_file, std::ios::binary);
        if (!in) throw InfraError("cannot read " + query_file);
        query.assign(std::istreambuf_iterator<char>(in), {});
    }
    check_credentials(c, ctx);
    auto store = memory::MemoryStore::load(c.memory_db, make_embedder(c, ctx));
    ctx.out << store.size() << " entries, embedder " << store.embedder_tag() << '\n';
    const auto hits = store.retrieve_topk(store.embedder().embed(query), k);
    ctx.out << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto& h = hits[i];
        ctx.out << i + 1 << "  sim=" << h.similarity << "  " << h.entry.episode_id << "#" << h.entry.step_index
                << "  " << memory::to_string(h.entry.source) << "  goal=" << h.entry.interaction.goal
                << "  action = " << h.entry.chosen_action << '\n';
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const Context& ctx) {
    if (inputs.empty()) throw ConfigError("report needs at least one --input");
    for (const auto& p : inputs) {
        json j;
        {
            std::ifstream in(p);
            if (!in) throw InfraError("cannot read " + p);
            try {
                j = json::parse(in);
            } catch (const json::parse_error& e) {
                throw InfraError(p + " is not a valid report: " + e.what());
            }
        }
        ctx.out << "== " << p << '\n';
        if (j.contains("ablation")) {
            if (j.contains("sweep")) {
                for (const auto& row : j["sweep"]) ctx.out << "K=" << row["k"] << '\n' << runner::render_table(row["report"]);
            } else {
                print_comparison(ctx.out, "base", j["base"], j["ablation"].get<std::string>(), j["variant"]);
            }
        } else {
            ctx.out << runner::render_table(j);
        }
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    Context ctx{out, err, env};
    CLI::App app{"retrieval-augmented gridworld agent: experiment driver", "ragmod"};
    app.require_subcommand(1);

    Overrides ov;
    int count = 100;
    std::string split = "eval", out_path, which, query, query_file;
    int inspect_k = 5;
    std::vector<std::string> inputs;

    auto* gen = app.add_subcommand("generate-tasks", "write task descriptors as JSON lines");
    add_experiment_flags(gen, ov);
    gen->add_option("--count", count);
    gen->add_option("--split", split, "eval or train");
    gen->add_option("--out", out_path)->required();

    auto* seed = app.add_subcommand("seed-memory", "commit expert demonstrations to a memory file");
    add_experiment_flags(seed, ov);

    auto* run = app.add_subcommand("run", "evaluate a task set");
    add_experiment_flags(run, ov);

    auto* ablate = app.add_subcommand("ablate", "compare the base config with an ablated variant");
    add_experiment_flags(ablate, ov);
    ablate->add_option("--which", which, "no_memory, trajectory_retrieval, no_prior, k_sweep")->required();

    auto* inspect = app.add_subcommand("inspect-memory", "print the top-K entries for a query");
    add_experiment_flags(inspect, ov);
    inspect->add_option("--query", query);
    inspect->add_option("--query-file", query_file);
    inspect->add_option("--top", inspect_k, "number of entries");

    auto* report = app.add_subcommand("report", "render saved reports");
    report->add_option("--config", ov.config_path);
    report->add_option("--input", inputs)->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (report->parsed()) return cmd_report(inputs, ctx);
        const CliConfig cfg = resolve(ov);
        if (gen->parsed()) return cmd_generate_tasks(cfg, count, split, out_path, ctx);
        if (seed->parsed()) return cmd_seed_memory(cfg, ctx);
        if (run->parsed()) return cmd_run(cfg, ctx);
        if (ablate->parsed()) return cmd_ablate(cfg, which, ctx);
        if (inspect->parsed()) return cmd_inspect_memory(cfg, query, query_file, inspect_k, ctx);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace ragmod::cli
