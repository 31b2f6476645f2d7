#include "fixtures.hpp"

#include "ragmod/cli.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace ragmod;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

Result invoke(const std::vector<std::string>& args, const std::map<std::string, std::string>& env = {}) {
    std::ostringstream out, err;
    Result r;
    r.code = cli::run_cli(args, out, err, [env](const std::string& k) -> std::optional<std::string> {
        const auto it = env.find(k);
        if (it == env.end()) return std::nullopt;
        return it->second;
    });
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "ragmod_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::vector<fs::path> files_with_prefix(const fs::path& dir, const std::string& prefix) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename().string().rfind(prefix, 0) == 0) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(invoke({}).code == 1);
    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"run", "--num-tasks", "many"}).code == 1);
    CHECK(invoke({"--help"}).code == 0);
    const auto dir = fresh_dir("usage");
    write_json(dir / "bad.json", {{"levle", "synth"}});
    const auto r = invoke({"run", "--config", (dir / "bad.json").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("'levle'") != std::string::npos);
    CHECK(invoke({"run", "--config", (dir / "absent.json").string()}).code == 1);
    CHECK(invoke({"run", "--level", "castle"}).code == 1);
    CHECK(invoke({"ablate", "--which", "everything", "--trace-dir", dir.string()}).code == 1);
}

TEST_CASE("flags override the file which overrides defaults") {
    const auto dir = fresh_dir("precedence");
    write_json(dir / "cfg.json", {{"num_tasks", 2},
                                  {"k", 2},
                                  {"seed", 5},
                                  {"train_tasks", 3},
                                  {"bootstrap_trials", 50},
                                  {"backend", {{"kind", "expert"}, {"follow_threshold", 0.5}}}});
    const auto r = invoke({"run", "--config", (dir / "cfg.json").string(), "--k", "4", "--follow-threshold", "0.7",
                           "--trace-dir", (dir / "out").string()});
    REQUIRE(r.code == 0);
    const auto reports = files_with_prefix(dir / "out", "report-");
    REQUIRE(reports.size() == 2);
    const auto cfg = read_json(reports[0])["config"];
    CHECK(cfg["k"] == 4);                                 // flag over file
    CHECK(cfg["num_tasks"] == 2);                         // file over default
    CHECK(cfg["seed"] == 5);
    CHECK(cfg["horizon"] == world::default_horizon(world::Level::synth));  // default
    CHECK(cfg["backend"]["kind"] == "expert");            // file keys in a nested object survive a flag
    CHECK(cfg["backend"]["follow_threshold"] == 0.7);
    CHECK(cfg["trace_dir"] == (dir / "out").string());
    CHECK(reports[0].filename().string().find("-s5") != std::string::npos);
}

TEST_CASE("config echo round trips") {
    cli::CliConfig c;
    c.experiment.k = 1;
    c.memory_db = "m.jsonl";
    c.k_values = {0, 2};
    c.embedder = "remote";
    const auto j = cli::to_json(c);
    CHECK(j["memory_db"] == "m.jsonl");
    CHECK(j["k"] == 1);
    const auto back = cli::cli_config_from_json(j);
    CHECK(cli::to_json(back) == j);
    CHECK(cli::output_stem(back) == cli::output_stem(c));
    CHECK(cli::output_stem(c).find("-s0") == 8);
    CHECK_THROWS(cli::cli_config_from_json(json{{"embedder", "cloud"}}));
}

TEST_CASE("generate-tasks") {
    const auto dir = fresh_dir("generate");
    REQUIRE(invoke({"generate-tasks", "--count", "0", "--out", (dir / "empty.jsonl").string()}).code == 0);
    CHECK(testing::read_file((dir / "empty.jsonl").string()).empty());

    for (const auto* name : {"a.jsonl", "b.jsonl"})
        REQUIRE(invoke({"generate-tasks", "--level", "bosslevel", "--out", (dir / name).string()}).code == 0);
    const auto a = testing::read_file((dir / "a.jsonl").string());
    CHECK(a == testing::read_file((dir / "b.jsonl").string()));
    std::istringstream lines(a);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        const auto t = world::task_from_json(json::parse(line));
        CHECK(t.level == world::Level::bosslevel);
        CHECK(t.seed >= runner::kEvaluationSeedBase);
        ++n;
    }
    CHECK(n == 100);

    REQUIRE(invoke({"generate-tasks", "--split", "train", "--count", "3", "--out", (dir / "train.jsonl").string()}).code ==
            0);
    std::ifstream in(dir / "train.jsonl");
    std::getline(in, line);
    CHECK(json::parse(line)["seed"].get<std::uint64_t>() < runner::kSeedRange);
    CHECK(invoke({"generate-tasks", "--count", "-1", "--out", (dir / "x").string()}).code == 1);
    CHECK(invoke({"generate-tasks", "--split", "test", "--out", (dir / "x").string()}).code == 1);
}

TEST_CASE("seed-memory") {
    const auto dir = fresh_dir("seed");
    const auto db = (dir / "mem.jsonl").string();
    CHECK(invoke({"seed-memory"}).code == 1);

    auto r = invoke({"seed-memory", "--memory-db", db, "--train-tasks", "20"});
    REQUIRE(r.code == 0);
    const auto first = testing::read_file(db);
    const auto store = memory::MemoryStore::load(db, testing::local_embedder());
    CHECK(store.size() >= 20);
    CHECK(r.out.find("(0 -> " + std::to_string(store.size()) + ")") != std::string::npos);

    r = invoke({"seed-memory", "--memory-db", db, "--train-tasks", "20"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("committed 0 new entries") != std::string::npos);
    CHECK(testing::read_file(db) == first);

    r = invoke({"seed-memory", "--memory-db", db, "--embedder", "remote"}, {{"RAGMOD_API_KEY", "k"}});
    CHECK(r.code == 2);
    CHECK(testing::read_file(db) == first);
}

TEST_CASE("remote configuration without a credential fails before any work") {
    const auto dir = fresh_dir("cred");
    auto r = invoke({"run", "--backend", "remote_chat", "--trace-dir", dir.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("RAGMOD_API_KEY") != std::string::npos);
    CHECK(fs::is_empty(dir));
    r = invoke({"seed-memory", "--embedder", "remote", "--memory-db", (dir / "m.jsonl").string()});
    CHECK(r.code == 1);
    CHECK_FALSE(fs::exists(dir / "m.jsonl"));
}

TEST_CASE("unreachable backends are infrastructure failures") {
    const auto dir = fresh_dir("infra");
    const int port = 1;  // nothing listens on tcpmux
    write_json(dir / "cfg.json", {{"num_tasks", 2},
                                  {"horizon", 2},
                                  {"prior_experience", false},
                                  {"trace_dir", dir.string()},
                                  {"base_url", "http://127.0.0.1:" + std::to_string(port)},
                                  {"backend", {{"kind", "remote_chat"}, {"max_attempts", 1}, {"timeout_s", 1.0}}}});
    const auto r = invoke({"run", "--config", (dir / "cfg.json").string()}, {{"OPENAI_API_KEY", "sk"}});
    CHECK(r.code == 2);
    CHECK(r.err.find("backend error") != std::string::npos);
}

TEST_CASE("run against a stub chat endpoint") {
    const auto dir = fresh_dir("stub_run");
    std::string auth;
    testing::StubServer server("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        res.set_content(
            R"j({"choices":[{"message":{"role":"assistant","content":"action = GoTo(type.key, color.red)"}}]})j",
            "application/json");
    });
    const auto r = invoke({"run", "--backend", "remote_chat", "--num-tasks", "2", "--horizon", "2", "--prior-experience",
                        "false", "--trace-dir", dir.string(), "--base-url", server.base_url(),
                        "--bootstrap-trials", "100"},
                       {{"RAGMOD_API_KEY", "sk-primary"}, {"OPENAI_API_KEY", "sk-secondary"}});
    CHECK(r.code == 0);
    CHECK(auth == "Bearer sk-primary");
    CHECK(files_with_prefix(dir, "trace-").size() == 1);
    CHECK(files_with_prefix(dir, "report-").size() == 2);
}

TEST_CASE("scripted runs are reproducible and the echo reproduces the report") {
    const auto dir = fresh_dir("scripted");
    write_json(dir / "fixtures.json", json::array({"Drop()", "GoTo(type.key, color.red)", "bad(", "Drop()"}));
    const std::vector<std::string> args = {"run",          "--backend",        "scripted",
                                           "--fixtures",   (dir / "fixtures.json").string(),
                                           "--num-tasks",  "2",
                                           "--horizon",    "2",
                                           "--train-tasks", "10",
                                           "--bootstrap-trials", "200",
                                           "--trace-dir",  (dir / "out").string()};
    REQUIRE(invoke(args).code == 0);
    const auto traces = files_with_prefix(dir / "out", "trace-");
    const auto reports = files_with_prefix(dir / "out", "report-");
    REQUIRE(traces.size() == 1);
    REQUIRE(reports.size() == 2);
    const auto trace1 = testing::read_file(traces[0].string());
    const auto report1 = testing::read_file(reports[0].string());

    REQUIRE(invoke(args).code == 0);
    CHECK(testing::read_file(traces[0].string()) == trace1);
    CHECK(testing::read_file(reports[0].string()) == report1);

    const auto echo = read_json(reports[0])["config"];
    write_json(dir / "echo.json", echo);
    fs::remove_all(dir / "out");
    REQUIRE(invoke({"run", "--config", (dir / "echo.json").string()}).code == 0);
    CHECK(testing::read_file(reports[0].string()) == report1);
    CHECK(testing::read_file(traces[0].string()) == trace1);

    const auto rep = invoke({"report", "--input", reports[0].string()});
    CHECK(rep.code == 0);
    CHECK(rep.out.find("SR") != std::string::npos);
    CHECK(invoke({"report", "--input", (dir / "missing.json").string()}).code == 2);
    CHECK(invoke({"run", "--backend", "scripted", "--trace-dir", (dir / "o2").string()}).code == 1);
}

TEST_CASE("inspect-memory") {
    const auto dir = fresh_dir("inspect");
    const auto db = (dir / "mem.jsonl").string();
    REQUIRE(invoke({"seed-memory", "--memory-db", db, "--train-tasks", "10"}).code == 0);
    const auto store = memory::MemoryStore::load(db, testing::local_embedder());
    const auto target = store.committed()[3];
    {
        std::ofstream(dir / "q.txt") << memory::serialize_interaction(target.interaction);
    }
    auto r = invoke({"inspect-memory", "--memory-db", db, "--query-file", (dir / "q.txt").string(), "--top", "3"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("1  sim=1.000000") != std::string::npos);
    CHECK(r.out.find("action = " + target.chosen_action) != std::string::npos);

    r = invoke({"inspect-memory", "--memory-db", db, "--query", "anything", "--top", "0"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("sim=") == std::string::npos);
    CHECK(invoke({"inspect-memory", "--query", "x"}).code == 1);
    CHECK(invoke({"inspect-memory", "--memory-db", (dir / "none.jsonl").string(), "--query", "x"}).code == 2);
}

TEST_CASE("ablations write comparison files") {
    const auto dir = fresh_dir("ablate");
    const std::vector<std::string> common = {"--backend", "expert", "--num-tasks", "3", "--train-tasks", "5",
                                             "--bootstrap-trials", "100", "--trace-dir", dir.string()};
    auto with = [&](std::vector<std::string> head) {
        head.insert(head.end(), common.begin(), common.end());
        return head;
    };
    REQUIRE(invoke(with({"ablate", "--which", "no_memory"})).code == 0);
    const auto files = files_with_prefix(dir, "ablation-no_memory-");
    REQUIRE(files.size() == 1);
    const auto j = read_json(files[0]);
    CHECK(j["variant"]["prompt_stats"]["example_blocks_max"] == 0);
    CHECK(j["base"]["prompt_stats"]["example_blocks_min"].get<int>() > 0);
    CHECK(j["deltas"].contains("sr"));

    REQUIRE(invoke(with({"ablate", "--which", "k_sweep", "--k-values", "0,2"})).code == 0);
    const auto sweep = read_json(files_with_prefix(dir, "ablation-k_sweep-").at(0));
    REQUIRE(sweep["sweep"].size() == 2);
    CHECK(sweep["sweep"][0]["report"]["prompt_stats"]["example_blocks_max"] == 0);
    CHECK(sweep["sweep"][1]["report"]["prompt_stats"]["example_blocks_max"] == 2);
    CHECK(invoke(with({"ablate", "--which", "k_sweep", "--k-values", "1,1"})).code == 1);

    REQUIRE(invoke(with({"ablate", "--which", "no_prior"})).code == 0);
    const auto np = read_json(files_with_prefix(dir, "ablation-no_prior-").at(0));
    CHECK(np["variant"]["memory_entries_start"] == 0);
    CHECK(np["base"]["memory_entries_start"].get<int>() > 0);

    REQUIRE(invoke(with({"ablate", "--which", "trajectory_retrieval"})).code == 0);
    const auto tr = read_json(files_with_prefix(dir, "ablation-trajectory_retrieval-").at(0));
    CHECK(tr["variant"]["prompt_stats"]["max_episode_ids_per_prompt"] == 1);

    CHECK(invoke({"report", "--input", files[0].string()}).code == 0);
}
