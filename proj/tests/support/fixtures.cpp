#include "fixtures.hpp"

#include "ragmod/task_generator.hpp"

#include <array>
#include <fstream>
#include <functional>
#include <random>

namespace ragmod::testing {

std::string StumbleThenExpert::predict_action(const policy::DecisionRequest& request) {
    const bool first_step = request.prompt.find("\n# history\n") == std::string_view::npos;
    return first_step ? stumble_ : expert_.predict_action(request);
}

std::string NoisyExpert::predict_action(const policy::DecisionRequest& request) {
    static constexpr std::array<const char*, 10> kInvalid = {
        "",
        "Jump()",
        "GoTo(type.key)",
        "PickUp(type.door, color.red",
        "Open(type.lamp, color.red)",
        "PickUp(type.ball, color.grey)",
        "Open(type.key, color.green)",
        "PutNextTo(type.box, color.blue, type.box, color.blue)",
        "PickUp(type.door, color.blue)",
        "GoTo(type.box, color.purple) extra",
    };
    std::mt19937_64 rng(request.rng_seed ^ 0x5EEDF00DULL);
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < rate_)
        return kInvalid[rng() % kInvalid.size()];
    return expert_.predict_action(request);
}

std::shared_ptr<const memory::Embedder> local_embedder() {
    static const auto e = std::make_shared<memory::HashedBagEmbedder>();
    return e;
}

world::GridState walled_key_world() {
    using world::Color;
    using world::DoorState;
    using world::ObjectKind;
    world::GridState s = world::make_empty_grid(2, 1, 8);
    s.set_cell_type({7, 2}, world::CellType::doorway);
    s.set_cell_type({7, 5}, world::CellType::doorway);
    s.objects.push_back({ObjectKind::door, Color::blue, {7, 2}, DoorState::open});
    s.objects.push_back({ObjectKind::door, Color::red, {7, 5}, DoorState::closed});
    s.objects.push_back({ObjectKind::key, Color::green, {8, 5}, DoorState::closed});
    s.objects.push_back({ObjectKind::box, Color::blue, {9, 5}, DoorState::closed});
    s.objects.push_back({ObjectKind::box, Color::grey, {8, 4}, DoorState::closed});
    s.objects.push_back({ObjectKind::ball, Color::purple, {8, 6}, DoorState::closed});
    s.agent_pos = {3, 3};
    return s;
}

std::vector<CriticCase> critic_ordering_corpus() {
    const std::vector<std::string> semantic_failures = {
        "GoTo(type.ball, color.red)",    "Open(type.door, color.yellow)", "PickUp(type.door, color.red)",
        "Open(type.key, color.green)",   "PutNextTo(type.key, color.green, type.key, color.green)",
    };
    auto drop_paren = [](std::string s) { return s.substr(0, s.size() - 1); };
    auto bad_name = [](std::string s) { return "X" + s; };
    auto bad_prefix = [](std::string s) { return s.replace(s.find("type."), 5, "typ."); };
    auto trailing = [](std::string s) { return s + " please"; };
    auto no_color = [](std::string s) {
        const auto comma = s.find(',');
        return s.substr(0, comma) + ")";
    };
    const std::vector<std::function<std::string(std::string)>> malformations = {drop_paren, bad_name, bad_prefix,
                                                                                 trailing, no_color};
    std::vector<CriticCase> out;
    const auto base = walled_key_world();
    for (const auto& good : semantic_failures)
        for (const auto& broken : malformations)
            out.push_back({base, broken(good), good, critics::CriticKind::syntax});

    const std::vector<std::string> blocked_anyway = {
        "GoTo(type.ball, color.red)", "Open(type.door, color.yellow)", "Drop()", "Open(type.key, color.green)",
        "PickUp(type.door, color.red)",
    };
    for (world::Cell pos : {world::Cell{3, 3}, world::Cell{2, 2}, world::Cell{5, 4}, world::Cell{1, 6},
                            world::Cell{4, 1}}) {
        auto s = base;
        s.agent_pos = pos;
        s.agent_dir = static_cast<world::Direction>((pos.col + pos.row) % 4);
        for (const auto& text : blocked_anyway) out.push_back({s, text, text, critics::CriticKind::semantics});
    }
    return out;
}

RectificationFixture make_rectification_fixture(int num_tasks, world::Level level, std::uint64_t seed) {
    RectificationFixture f{runner::ExperimentConfig{}, memory::MemoryStore(local_embedder())};
    f.cfg.level = level;
    f.cfg.num_tasks = num_tasks;
    f.cfg.seed = seed;
    f.cfg.prior_experience = false;
    f.cfg.bootstrap_trials = 1000;
    f.cfg.backend.backend = policy::BackendKind::retrieval_follower;
    f.cfg.backend.fallback_action = "Drop()";

    StumbleThenExpert teacher("Drop()");
    runner::ExperimentConfig seeding = f.cfg;
    seeding.memory_enabled = false;
    for (int i = 0; i < num_tasks; ++i) {
        const auto task = world::generate_task(runner::evaluation_seed(seed, static_cast<std::size_t>(i)), level);
        runner::EpisodeOptions opts;
        opts.episode_id = "fixture-" + std::to_string(task.seed);
        opts.source = memory::EntrySource::expert;
        runner::run_episode(task, seeding, f.memory, teacher, opts);
    }
    return f;
}

std::vector<std::pair<std::size_t, double>> brute_force_topk(const std::vector<memory::MemoryEntry>& committed,
                                                             const memory::Embedding& query, int k) {
    std::vector<std::pair<std::size_t, double>> all;
    for (std::size_t i = 0; i < committed.size(); ++i) {
        const double sim = memory::cosine(query, committed[i].embedding);
        all.emplace_back(i, sim);
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (k < 0) k = 0;
    if (all.size() > static_cast<std::size_t>(k)) all.resize(static_cast<std::size_t>(k));
    return all;
}

memory::Interaction random_interaction(std::mt19937_64& rng) {
    static const std::vector<std::string> goals = {"go to the red key", "open the blue door", "pick up the green ball",
                                                   "put the grey box next to the red key"};
    static const std::vector<std::string> observations = {
        "visible_objects=[(type.key, color.red, at=(+1,0))]; inventory=None; facing=red key; direction=E",
        "visible_objects=[]; inventory=None; facing=wall; direction=N",
        "visible_objects=[(type.door, color.blue, state.closed, at=(0,-3))]; inventory=None; facing=empty; "
        "direction=S",
    };
    memory::Interaction i;
    i.goal = goals[rng() % goals.size()];
    i.observation = observations[rng() % observations.size()];
    if (rng() % 2) {
        i.prev_action = random_action_text(rng);
        i.prev_feedback = rng() % 2 ? "SUCCESS" : "FAILURE(semantics): nothing to drop";
    }
    return i;
}

std::string random_action_text(std::mt19937_64& rng) {
    static const std::vector<std::string> actions = {"GoTo(type.key, color.red)", "Drop()",
                                                     "Open(type.door, color.blue)", "PickUp(type.ball, color.green)"};
    return actions[rng() % actions.size()];
}

namespace {

const char* kObsDoor =
    "visible_objects=[(type.door, color.blue, state.closed, at=(+2,-1))]; inventory=None; facing=empty; direction=E";
const char* kObsKeyBelow =
    "visible_objects=[(type.key, color.red, at=(0,+2))]; inventory=(type.ball, color.green); facing=empty; "
    "direction=S";
const char* kObsCurrent =
    "visible_objects=[(type.key, color.red, at=(-1,+3))]; inventory=(type.ball, color.green); facing=wall; "
    "direction=W";
const char* kOccupied = "FAILURE(semantics): inventory occupied by the green ball; drop it first";

}  // namespace

prompt::PromptContext golden_rectification_context() {
    prompt::PromptContext ctx;
    ctx.examples.push_back(
        {{"open the blue door", std::nullopt, std::nullopt, kObsDoor}, "Open(type.door, color.blue)"});
    ctx.examples.push_back({{"pick up the red key", "PickUp(type.key, color.red)", kOccupied, kObsKeyBelow}, "Drop()"});
    ctx.goal = "pick up the red key";
    ctx.history.push_back({kObsCurrent, "PickUp(type.key, color.red)", kOccupied});
    ctx.current_observation = kObsCurrent;
    return ctx;
}

prompt::PromptContext golden_minimal_context() {
    prompt::PromptContext ctx;
    ctx.goal = "pick up the red key";
    ctx.current_observation = kObsCurrent;
    return ctx;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

StubServer::StubServer(const std::string& path, Handler handler) {
    server_.Post(path, std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
}

StubServer::~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace ragmod::testing
