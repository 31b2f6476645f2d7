#include "ragmod/task_generator.hpp"

#include "ragmod/actions.hpp"
#include "ragmod/critics.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace ragmod::world {

namespace {

// Bounded draw that does not depend on the standard library's distribution code.
struct Draw {
    std::mt19937_64 engine;

    explicit Draw(std::uint64_t seed) : engine(seed) {}

    int below(int n) { return static_cast<int>(engine() % static_cast<std::uint64_t>(n)); }
    bool chance(int percent) { return below(100) < percent; }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(below(static_cast<int>(v.size())))];
    }
};

constexpr ObjectKind kMovableKinds[] = {ObjectKind::key, ObjectKind::ball, ObjectKind::box};

bool adjacent_to_doorway(const GridState& s, Cell c) {
    for (auto d : {Direction::N, Direction::E, Direction::S, Direction::W})
        if (s.cell_type(neighbor(c, d)) == CellType::doorway) return true;
    return false;
}

std::vector<Cell> free_floor(const GridState& s, bool keep_doorways_clear) {
    std::vector<Cell> out;
    for (int r = 0; r < s.height; ++r)
        for (int c = 0; c < s.width; ++c) {
            const Cell cell{c, r};
            if (s.cell_type(cell) != CellType::floor || s.object_at(cell) >= 0 || cell == s.agent_pos) continue;
            if (keep_doorways_clear && adjacent_to_doorway(s, cell)) continue;
            out.push_back(cell);
        }
    return out;
}

std::vector<Cell> room_floor(const GridState& s, RoomId room) {
    std::vector<Cell> out;
    for (const Cell& c : free_floor(s, true))
        if (is_interior(s, room, c)) out.push_back(c);
    return out;
}

void place_door(GridState& s, Cell at, Color color, DoorState state) {
    s.set_cell_type(at, CellType::doorway);
    WorldObject door;
    door.kind = ObjectKind::door;
    door.color = color;
    door.position = at;
    door.door_state = state;
    s.objects.push_back(door);
}

bool place_object(GridState& s, Draw& rng, ObjectDesc d, const std::vector<Cell>& candidates) {
    if (candidates.empty()) return false;
    WorldObject o;
    o.kind = d.kind;
    o.color = d.color;
    o.position = rng.pick(candidates);
    s.objects.push_back(o);
    return true;
}

bool in_use(const GridState& s, const ObjectDesc& d) {
    return std::any_of(s.objects.begin(), s.objects.end(), [&](const WorldObject& o) { return o.matches(d); });
}

ObjectDesc fresh_movable(const GridState& s, Draw& rng) {
    while (true) {
        ObjectDesc d{kMovableKinds[rng.below(3)], kAllColors[static_cast<std::size_t>(rng.below(6))]};
        if (!in_use(s, d)) return d;
    }
}

std::vector<Color> shuffled_colors(Draw& rng) {
    std::vector<Color> colors(kAllColors.begin(), kAllColors.end());
    for (std::size_t i = colors.size() - 1; i > 0; --i)
        std::swap(colors[i], colors[static_cast<std::size_t>(rng.below(static_cast<int>(i) + 1))]);
    return colors;
}

void place_agent(GridState& s, Draw& rng) {
    s.agent_pos = rng.pick(free_floor(s, false));
    s.agent_dir = static_cast<Direction>(rng.below(4));
}

std::vector<ObjectDesc> movables(const GridState& s) {
    std::vector<ObjectDesc> out;
    for (const auto& o : s.objects)
        if (o.kind != ObjectKind::door) out.push_back(o.desc());
    return out;
}

std::vector<ObjectDesc> closed_doors(const GridState& s) {
    std::vector<ObjectDesc> out;
    for (const auto& o : s.objects)
        if (o.kind == ObjectKind::door && o.door_state != DoorState::open) out.push_back(o.desc());
    return out;
}

const WorldObject& find(const GridState& s, const ObjectDesc& d) {
    for (const auto& o : s.objects)
        if (o.matches(d)) return o;
    throw std::logic_error("object vanished during generation");
}

std::string clause_text(const GoalPredicate& p) {
    switch (p.kind) {
        case PredicateKind::go_to: return "go to " + describe(p.target);
        case PredicateKind::pick_up: return "pick up " + describe(p.target);
        case PredicateKind::open: return "open " + describe(p.target);
        case PredicateKind::put_next: return "put " + describe(p.target) + " next to " + describe(*p.other);
    }
    return {};
}

// --- synth: one room, single instruction -----------------------------------

enum class SynthTemplate { pick_up, open, put_next, go_to };

std::optional<TaskInstance> draw_synth(std::uint64_t seed, Draw& rng, const GeneratorOptions& opts) {
    GridState s = make_empty_grid(opts.synth_rooms, opts.synth_rooms, opts.room_size);
    const auto colors = shuffled_colors(rng);

    // Doors on the outer wall, away from corners.
    const int n_doors = 1 + rng.below(2);
    std::optional<Color> locked;
    for (int i = 0; i < n_doors; ++i) {
        Cell at;
        const int along = 1 + rng.below(s.width - 2);
        switch (rng.below(4)) {
            case 0: at = {along, 0}; break;
            case 1: at = {along, s.height - 1}; break;
            case 2: at = {0, along}; break;
            default: at = {s.width - 1, along}; break;
        }
        if (at.col % (s.room_size - 1) == 0 && at.row % (s.room_size - 1) == 0) continue;
        if (s.cell_type(at) == CellType::doorway) continue;
        DoorState st = DoorState::closed;
        const int roll = rng.below(4);
        if (roll == 0) st = DoorState::open;
        if (roll == 1 && !locked) {
            st = DoorState::locked;
            locked = colors[static_cast<std::size_t>(i)];
        }
        place_door(s, at, colors[static_cast<std::size_t>(i)], st);
    }

    if (locked) place_object(s, rng, {ObjectKind::key, *locked}, free_floor(s, true));
    const int n_objects = 2 + rng.below(3);
    while (static_cast<int>(movables(s).size()) < n_objects)
        if (!place_object(s, rng, fresh_movable(s, rng), free_floor(s, true))) return std::nullopt;
    place_agent(s, rng);

    const auto tmpl = static_cast<SynthTemplate>(seed % 4);
    GoalPredicate p;
    const auto objs = movables(s);
    switch (tmpl) {
        case SynthTemplate::go_to: {
            std::vector<ObjectDesc> all = objs;
            for (const auto& o : s.objects)
                if (o.kind == ObjectKind::door) all.push_back(o.desc());
            p = {PredicateKind::go_to, rng.pick(all), std::nullopt};
            break;
        }
        case SynthTemplate::pick_up: p = {PredicateKind::pick_up, rng.pick(objs), std::nullopt}; break;
        case SynthTemplate::open: {
            const auto doors = closed_doors(s);
            if (doors.empty()) return std::nullopt;
            p = {PredicateKind::open, rng.pick(doors), std::nullopt};
            break;
        }
        case SynthTemplate::put_next: {
            const ObjectDesc a = rng.pick(objs);
            ObjectDesc b = rng.pick(objs);
            if (a == b) return std::nullopt;
            p = {PredicateKind::put_next, a, b};
            break;
        }
    }

    TaskInstance task;
    task.seed = seed;
    task.level = Level::synth;
    task.goal = clause_text(p);
    task.goal_spec = {p};
    task.horizon = default_horizon(Level::synth);
    task.initial_state = std::move(s);
    return task;
}

// --- bosslevel: 2x2 rooms, chained instructions ----------------------------

std::optional<TaskInstance> draw_bosslevel(std::uint64_t seed, Draw& rng, const GeneratorOptions& opts) {
    const int n = opts.bosslevel_rooms;
    GridState s = make_empty_grid(n, n, opts.room_size);
    const int stride = opts.room_size - 1;
    const auto colors = shuffled_colors(rng);
    std::size_t next_color = 0;
    std::optional<Color> locked;

    auto add_door = [&](Cell at) {
        const Color c = colors[next_color++ % colors.size()];
        DoorState st = DoorState::closed;
        const int roll = rng.below(10);
        if (roll < 4) st = DoorState::open;
        if (roll >= 8 && !locked) {
            st = DoorState::locked;
            locked = c;
        }
        place_door(s, at, c, st);
    };
    // One door in every wall segment shared by two rooms.
    for (int ry = 0; ry < n; ++ry)
        for (int rx = 0; rx + 1 < n; ++rx) add_door({(rx + 1) * stride, ry * stride + 1 + rng.below(stride - 1)});
    for (int rx = 0; rx < n; ++rx)
        for (int ry = 0; ry + 1 < n; ++ry) add_door({rx * stride + 1 + rng.below(stride - 1), (ry + 1) * stride});

    if (locked) {
        const RoomId room{rng.below(n), rng.below(n)};
        if (!place_object(s, rng, {ObjectKind::key, *locked}, room_floor(s, room))) return std::nullopt;
    }
    for (int ry = 0; ry < n; ++ry)
        for (int rx = 0; rx < n; ++rx) {
            const int count = 1 + rng.below(3);
            for (int i = 0; i < count; ++i)
                place_object(s, rng, fresh_movable(s, rng), room_floor(s, {rx, ry}));
        }
    place_agent(s, rng);

    const int clauses = 2 + rng.below(2);
    const int final_roll = rng.below(3);  // 0 none, 1 go_to, 2 pick_up
    const int stable = clauses - (final_roll == 0 ? 0 : 1);

    std::vector<ObjectDesc> used;
    std::vector<ObjectDesc> opened;
    auto unused = [&](const std::vector<ObjectDesc>& pool) {
        std::vector<ObjectDesc> out;
        for (const auto& d : pool)
            if (std::find(used.begin(), used.end(), d) == used.end()) out.push_back(d);
        return out;
    };

    GoalSpec spec;
    for (int i = 0; i < stable; ++i) {
        std::vector<ObjectDesc> doors;
        for (const auto& d : closed_doors(s))
            if (std::find(opened.begin(), opened.end(), d) == opened.end()) doors.push_back(d);
        const auto free_objs = unused(movables(s));
        const bool can_put = free_objs.size() >= 2;
        const bool want_open = !doors.empty() && (!can_put || rng.chance(50));
        if (want_open) {
            const ObjectDesc d = rng.pick(doors);
            opened.push_back(d);
            spec.push_back({PredicateKind::open, d, std::nullopt});
        } else if (can_put) {
            const ObjectDesc a = rng.pick(free_objs);
            const ObjectDesc b = rng.pick(free_objs);
            if (a == b) return std::nullopt;
            if (next_to(find(s, a).position, find(s, b).position)) return std::nullopt;
            used.push_back(a);
            used.push_back(b);
            spec.push_back({PredicateKind::put_next, a, b});
        } else {
            return std::nullopt;
        }
    }
    if (final_roll == 1) {
        std::vector<ObjectDesc> all = movables(s);
        for (const auto& o : s.objects)
            if (o.kind == ObjectKind::door) all.push_back(o.desc());
        spec.push_back({PredicateKind::go_to, rng.pick(all), std::nullopt});
    } else if (final_roll == 2) {
        const auto free_objs = unused(movables(s));
        if (free_objs.empty()) return std::nullopt;
        spec.push_back({PredicateKind::pick_up, rng.pick(free_objs), std::nullopt});
    }

    std::vector<std::string> parts;
    for (const auto& p : spec) parts.push_back(clause_text(p));
    std::string text;
    const bool after_form = rng.chance(50);
    if (parts.size() == 2) {
        text = after_form ? parts[1] + " after you " + parts[0] : parts[0] + ", then " + parts[1];
    } else {
        text = after_form ? parts[0] + ", then " + parts[2] + " after you " + parts[1]
                          : parts[0] + ", then " + parts[1] + ", then " + parts[2];
    }

    TaskInstance task;
    task.seed = seed;
    task.level = Level::bosslevel;
    task.goal = std::move(text);
    task.goal_spec = std::move(spec);
    task.horizon = default_horizon(Level::bosslevel);
    task.initial_state = std::move(s);
    return task;
}

}  // namespace

bool expert_solves(const TaskInstance& task) {
    GridState state = task.initial_state;
    for (int t = 0; t < task.horizon; ++t) {
        if (goal_satisfied(state, task.goal_spec)) return true;
        actions::HighLevelAction a;
        try {
            a = actions::expert_next_action(state, task.goal_spec);
        } catch (const actions::ExpertStuck&) {
            return false;
        }
        const auto obs = observe(state);
        auto result = critics::check_feasibility(state, obs, actions::render(a), actions::default_macro_budget(state));
        if (!result.feedback.ok()) return false;
        state = std::move(result.state);
    }
    return goal_satisfied(state, task.goal_spec);
}

TaskInstance generate_task(std::uint64_t seed, Level level, const GeneratorOptions& opts) {
    const std::uint64_t salt = level == Level::synth ? 0x5eedull : 0xb055ull;
    Draw rng(seed * 0x9e3779b97f4a7c15ull + salt);
    for (int draw = 0; draw < opts.max_draws; ++draw) {
        auto task = level == Level::synth ? draw_synth(seed, rng, opts) : draw_bosslevel(seed, rng, opts);
        if (!task) continue;
        if (goal_satisfied(task->initial_state, task->goal_spec)) continue;
        if (!expert_solves(*task)) continue;
        return *task;
    }
    throw std::runtime_error("task generator found no solvable draw for seed " + std::to_string(seed) +
                             " after " + std::to_string(opts.max_draws) + " attempts");
}

}  // namespace ragmod::world
