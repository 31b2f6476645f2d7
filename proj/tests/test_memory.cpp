#include "fixtures.hpp"

#include "ragmod/hash.hpp"
#include "ragmod/memory.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

using namespace ragmod;
using memory::Interaction;
using memory::MemoryStore;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "ragmod_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

// Commits one entry per call under its own episode id.
void add(MemoryStore& store, const Interaction& i, const std::string& action, const std::string& episode, int step = 0) {
    store.stage(store.make_entry(i, action, episode, step, memory::EntrySource::agent), critics::Feedback::success());
    store.commit_episode(episode, true);
}

}  // namespace

TEST_CASE("fnv1a matches published vectors") {
    CHECK(fnv1a32("") == 0x811c9dc5u);
    CHECK(fnv1a32("a") == 0xe40c292cu);
    CHECK(fnv1a32("foobar") == 0xbf9cf968u);
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(hex64(0xabcull) == "0000000000000abc");
}

TEST_CASE("tokenizer") {
    CHECK(memory::tokenize("Open(type.door, color.RED)") ==
          std::vector<std::string>{"open", "type", "door", "color", "red"});
    CHECK(memory::tokenize("  ,,  ").empty());
}

TEST_CASE("hashed bag embedder against a hand-computed cosine") {
    const memory::HashedBagEmbedder e;
    CHECK(e.tag() == "local-fnv1a-bag-256");
    // Three tokens in distinct buckets: cos("a b", "a b c") = 2 / (sqrt 2 * sqrt 3).
    const std::vector<std::string> toks = {"door", "red", "key"};
    REQUIRE(e.bucket(toks[0]) != e.bucket(toks[1]));
    REQUIRE(e.bucket(toks[0]) != e.bucket(toks[2]));
    REQUIRE(e.bucket(toks[1]) != e.bucket(toks[2]));
    const double sim = memory::cosine(e.embed("door red"), e.embed("door red key"));
    CHECK(sim == doctest::Approx(2.0 / (std::sqrt(2.0) * std::sqrt(3.0))).epsilon(1e-12));
    CHECK(memory::cosine(e.embed("door red"), e.embed("RED, door!")) == doctest::Approx(1.0));
    CHECK(e.embed("").norm() == 0.0);
    CHECK(memory::cosine(e.embed(""), e.embed("door")) == 0.0);
    CHECK(e.embed("door door red").norm() == doctest::Approx(1.0));
}

TEST_CASE("interaction serialization") {
    Interaction i{"go to the red key", std::nullopt, std::nullopt, "obs"};
    CHECK(memory::serialize_interaction(i) ==
          "goal=go to the red key\nprev_action=none\nprev_feedback=none\nobservation=obs\n");
    i.prev_action = "Drop()";
    i.prev_feedback = "FAILURE(semantics): nothing to drop";
    i.observation = "line1\nline2";
    CHECK(memory::serialize_interaction(i) ==
          "goal=go to the red key\nprev_action=Drop()\nprev_feedback=FAILURE(semantics): nothing to drop\n"
          "observation=line1\\nline2\n");
}

TEST_CASE("staging and commit rules") {
    MemoryStore store(testing::local_embedder());
    const Interaction i{"open the blue door", std::nullopt, std::nullopt, "o"};
    auto entry = [&](const std::string& ep, int step) {
        return store.make_entry(i, "Open(type.door, color.blue)", ep, step, memory::EntrySource::agent);
    };

    CHECK_FALSE(store.stage(entry("e1", 0), critics::Feedback::failure(critics::CriticKind::syntax, "x")));
    CHECK(store.staged_count("e1") == 0);
    CHECK(store.stage(entry("e1", 0), critics::Feedback::success()));
    CHECK(store.staged_count("e1") == 1);
    CHECK(store.size() == 0);
    CHECK_THROWS_AS(store.stage(store.make_entry(i, "Fly()", "e1", 1, memory::EntrySource::agent),
                                critics::Feedback::success()),
                    std::invalid_argument);

    SUBCASE("failed episode discards") {
        CHECK(store.commit_episode("e1", false) == 0);
        CHECK(store.size() == 0);
        CHECK(store.staged_count("e1") == 0);
    }
    SUBCASE("successful episode commits and duplicates are suppressed") {
        CHECK(store.commit_episode("e1", true) == 1);
        CHECK(store.size() == 1);
        store.stage(entry("e2", 0), critics::Feedback::success());
        CHECK(store.commit_episode("e2", true) == 0);
        CHECK(store.size() == 1);
        CHECK(store.commit_episode("missing", true) == 0);
    }
    SUBCASE("episodes stage independently") {
        store.stage(store.make_entry({"other", std::nullopt, std::nullopt, "o"}, "Drop()", "e2", 0,
                                     memory::EntrySource::agent),
                    critics::Feedback::success());
        CHECK(store.commit_episode("e2", true) == 1);
        CHECK(store.staged_count("e1") == 1);
    }
}

TEST_CASE("retrieve_topk equals brute force on randomized stores") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        MemoryStore store(testing::local_embedder());
        const int n = static_cast<int>(rng() % 40);
        for (int j = 0; j < n; ++j)
            add(store, testing::random_interaction(rng), testing::random_action_text(rng), "ep" + std::to_string(j));
        const auto query = testing::random_interaction(rng);
        const int k = static_cast<int>(rng() % 15);
        const auto got = store.retrieve_topk(query, k);
        const auto committed = store.committed();
        const auto q = store.embedder().embed(memory::serialize_interaction(query));
        const auto want = testing::brute_force_topk(committed, q, k);
        REQUIRE(got.size() == want.size());
        for (std::size_t r = 0; r < got.size(); ++r) {
            CHECK(got[r].commit_index == want[r].first);
            CHECK(got[r].entry == committed[want[r].first]);
            CHECK(got[r].similarity == want[r].second);
        }
    }
}

TEST_CASE("retrieval edge cases") {
    MemoryStore store(testing::local_embedder());
    const Interaction i{"go to the red key", std::nullopt, std::nullopt, "o"};
    CHECK(store.retrieve_topk(i, 5).empty());
    add(store, i, "GoTo(type.key, color.red)", "a");
    add(store, i, "Drop()", "b");  // same interaction, different action: an exact tie
    CHECK(store.retrieve_topk(i, 0).empty());
    const auto hits = store.retrieve_topk(i, 10);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].similarity == doctest::Approx(1.0));
    CHECK(hits[0].entry.episode_id == "a");
    CHECK(hits[1].entry.episode_id == "b");
}

TEST_CASE("trajectory retrieval stays inside the most goal-similar episode") {
    std::mt19937_64 rng(3);
    MemoryStore store(testing::local_embedder());
    const std::vector<std::string> goals = {"go to the red key", "open the blue door", "pick up the green ball"};
    for (int ep = 0; ep < 6; ++ep) {
        const std::string id = "ep" + std::to_string(ep);
        for (int step = 0; step < 4; ++step) {
            auto i = testing::random_interaction(rng);
            i.goal = goals[static_cast<std::size_t>(ep) % goals.size()];
            store.stage(store.make_entry(i, testing::random_action_text(rng), id, step, memory::EntrySource::expert),
                        critics::Feedback::success());
        }
        store.commit_episode(id, true);
    }
    for (int trial = 0; trial < 50; ++trial) {
        auto q = testing::random_interaction(rng);
        q.goal = goals[rng() % goals.size()];
        const auto hits = store.retrieve_trajectory(q, 10);
        REQUIRE_FALSE(hits.empty());
        for (const auto& h : hits) {
            CHECK(h.entry.episode_id == hits.front().entry.episode_id);
            CHECK(h.entry.interaction.goal == q.goal);
        }
        for (std::size_t r = 1; r < hits.size(); ++r) CHECK(hits[r - 1].similarity >= hits[r].similarity);
    }
    CHECK(MemoryStore(testing::local_embedder()).retrieve_trajectory({"g", {}, {}, "o"}, 3).empty());
}

TEST_CASE("persistence round trip and refusal paths") {
    std::mt19937_64 rng(8);
    MemoryStore store(testing::local_embedder());
    for (int j = 0; j < 30; ++j)
        add(store, testing::random_interaction(rng), testing::random_action_text(rng), "ep" + std::to_string(j), j);
    const auto path = temp_file("roundtrip.jsonl");
    store.persist(path);
    const auto back = MemoryStore::load(path, testing::local_embedder());
    CHECK(back == store);
    CHECK(back.committed() == store.committed());

    // Duplicate suppression survives a reload.
    auto reloaded = back;
    const auto first = store.committed().front();
    reloaded.stage(first, critics::Feedback::success());
    CHECK(reloaded.commit_episode(first.episode_id, true) == 0);

    CHECK_THROWS_AS(MemoryStore::load(path, std::make_shared<memory::HashedBagEmbedder>(128)),
                    memory::EmbedderMismatch);

    const auto bad = temp_file("bad_version.jsonl");
    {
        std::ofstream os(bad);
        os << R"({"format":"ragmod-memory","version":99,"embedder":"local-fnv1a-bag-256","dimension":256,"entries":0})"
           << '\n';
    }
    CHECK_THROWS_AS(MemoryStore::load(bad, testing::local_embedder()), memory::SchemaMismatch);
    {
        std::ofstream os(bad);
        os << "not json\n";
    }
    CHECK_THROWS_AS(MemoryStore::load(bad, testing::local_embedder()), memory::SchemaMismatch);
    CHECK_THROWS_AS(MemoryStore::load(temp_file("absent.jsonl"), testing::local_embedder()), memory::MemoryError);

    MemoryStore empty(testing::local_embedder());
    const auto empty_path = temp_file("empty.jsonl");
    empty.persist(empty_path);
    CHECK(MemoryStore::load(empty_path, testing::local_embedder()).size() == 0);
}

TEST_CASE("copies are independent") {
    MemoryStore a(testing::local_embedder());
    add(a, {"g", std::nullopt, std::nullopt, "o"}, "Drop()", "x");
    MemoryStore b = a;
    add(b, {"g2", std::nullopt, std::nullopt, "o"}, "Drop()", "y");
    CHECK(a.size() == 1);
    CHECK(b.size() == 2);
}

TEST_CASE("commits are atomic with respect to concurrent readers") {
    MemoryStore store(testing::local_embedder());
    constexpr int kBatch = 5;
    std::atomic<bool> done{false};
    std::atomic<int> torn{0};
    std::thread reader([&] {
        while (!done) {
            const auto n = store.retrieve_topk(Interaction{"g", std::nullopt, std::nullopt, "o"}, 1000).size();
            if (n % kBatch != 0) ++torn;
        }
    });
    for (int ep = 0; ep < 60; ++ep) {
        const std::string id = "ep" + std::to_string(ep);
        for (int s = 0; s < kBatch; ++s)
            store.stage(store.make_entry({"g", std::nullopt, std::nullopt, id + "/" + std::to_string(s)}, "Drop()", id,
                                         s, memory::EntrySource::agent),
                        critics::Feedback::success());
        store.commit_episode(id, true);
    }
    done = true;
    reader.join();
    CHECK(torn == 0);
    CHECK(store.size() == 60 * kBatch);
}
