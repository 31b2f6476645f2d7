#include "ragmod/actions.hpp"

#include <algorithm>
#include <deque>
#include <limits>

namespace ragmod::actions {

using world::Cell;
using world::CellType;
using world::Direction;
using world::DoorState;
using world::ObjectKind;
using world::PrimitiveAction;

int default_macro_budget(const GridState& s) {
    return 4 * s.width * s.height;
}

namespace {

constexpr int kUnreached = std::numeric_limits<int>::max();

// Shortest primitive sequences over (cell, heading) from the agent's pose.
struct PoseSearch {
    int width = 0;
    std::vector<int> dist;
    std::vector<int> parent;
    std::vector<PrimitiveAction> via;

    static int index(int width, Cell c, Direction d) { return (c.row * width + c.col) * 4 + static_cast<int>(d); }

    // Cheapest pose whose front cell is `target`, or -1.
    int best_facing(Cell target) const {
        int best = -1;
        for (auto d : {Direction::N, Direction::E, Direction::S, Direction::W}) {
            // The pose facing `target` with heading d stands on the opposite neighbour.
            const Cell stand = world::neighbor(target, static_cast<Direction>((static_cast<int>(d) + 2) % 4));
            if (stand.col < 0 || stand.row < 0 || stand.col >= width) continue;
            const int i = index(width, stand, d);
            if (i < 0 || i >= static_cast<int>(dist.size()) || dist[static_cast<std::size_t>(i)] == kUnreached) continue;
            if (best < 0 || dist[static_cast<std::size_t>(i)] < dist[static_cast<std::size_t>(best)]) best = i;
        }
        return best;
    }

    std::vector<PrimitiveAction> path_to(int pose) const {
        std::vector<PrimitiveAction> out;
        while (parent[static_cast<std::size_t>(pose)] >= 0) {
            out.push_back(via[static_cast<std::size_t>(pose)]);
            pose = parent[static_cast<std::size_t>(pose)];
        }
        std::reverse(out.begin(), out.end());
        return out;
    }
};

// `through_doors` treats every door as passable; used only to explain blockage.
PoseSearch search_poses(const GridState& s, bool through_doors) {
    PoseSearch ps;
    ps.width = s.width;
    const auto n = static_cast<std::size_t>(s.width * s.height * 4);
    ps.dist.assign(n, kUnreached);
    ps.parent.assign(n, -1);
    ps.via.assign(n, PrimitiveAction::forward);

    auto passable = [&](Cell c) {
        if (s.passable(c)) return true;
        return through_doors && s.in_bounds(c) && s.cell_type(c) == CellType::doorway;
    };

    std::deque<std::pair<Cell, Direction>> queue;
    const int start = PoseSearch::index(s.width, s.agent_pos, s.agent_dir);
    ps.dist[static_cast<std::size_t>(start)] = 0;
    queue.emplace_back(s.agent_pos, s.agent_dir);
    while (!queue.empty()) {
        auto [cell, dir] = queue.front();
        queue.pop_front();
        const int here = PoseSearch::index(s.width, cell, dir);
        const int d = ps.dist[static_cast<std::size_t>(here)];
        auto relax = [&](Cell c, Direction nd, PrimitiveAction a) {
            const int i = PoseSearch::index(s.width, c, nd);
            if (ps.dist[static_cast<std::size_t>(i)] != kUnreached) return;
            ps.dist[static_cast<std::size_t>(i)] = d + 1;
            ps.parent[static_cast<std::size_t>(i)] = here;
            ps.via[static_cast<std::size_t>(i)] = a;
            queue.emplace_back(c, nd);
        };
        const Cell front = world::neighbor(cell, dir);
        if (passable(front)) relax(front, dir, PrimitiveAction::forward);
        relax(cell, world::turn_left(dir), PrimitiveAction::turn_left);
        relax(cell, world::turn_right(dir), PrimitiveAction::turn_right);
    }
    return ps;
}

// Mutable execution context shared by a macro and its sub-steps.
struct Runner {
    GridState state;
    int budget;
    ExecutionOutcome outcome;

    bool exhausted() const { return static_cast<int>(outcome.primitive_trace.size()) >= budget; }

    // Applies primitives in order; false once the budget is spent.
    bool apply(const std::vector<PrimitiveAction>& prims) {
        for (auto p : prims) {
            if (exhausted()) {
                outcome.status = ExecutionStatus::budget_exhausted;
                outcome.reason = "primitive budget of " + std::to_string(budget) + " steps exhausted";
                return false;
            }
            state = world::step_primitive(std::move(state), p);
            outcome.primitive_trace.push_back(p);
        }
        return true;
    }

    bool block(std::string reason) {
        outcome.status = ExecutionStatus::blocked;
        outcome.reason = std::move(reason);
        return false;
    }
};

std::vector<Cell> visible_instances(const GridState& s, const ObjectDesc& d) {
    const auto mask = world::visibility_mask(s);
    std::vector<Cell> out;
    for (const auto& o : s.objects)
        if (o.matches(d) && mask[static_cast<std::size_t>(o.position.row * s.width + o.position.col)])
            out.push_back(o.position);
    std::sort(out.begin(), out.end());
    return out;
}

// Moves the agent to face the nearest of `targets` (ties: lowest (col,row)).
bool approach(Runner& r, const std::vector<Cell>& targets, const std::string& what) {
    const auto ps = search_poses(r.state, false);
    int best_pose = -1;
    for (const Cell& t : targets) {  // targets are sorted, so the first minimum wins ties
        const int pose = ps.best_facing(t);
        if (pose < 0) continue;
        if (best_pose < 0 || ps.dist[static_cast<std::size_t>(pose)] < ps.dist[static_cast<std::size_t>(best_pose)])
            best_pose = pose;
    }
    if (best_pose < 0) {
        const auto relaxed = search_poses(r.state, true);
        const bool door_blocked =
            std::any_of(targets.begin(), targets.end(), [&](Cell t) { return relaxed.best_facing(t) >= 0; });
        return r.block(door_blocked ? "path blocked by closed door" : "no path to " + what);
    }
    return r.apply(ps.path_to(best_pose));
}

bool approach_object(Runner& r, const ObjectDesc& d) {
    const auto targets = visible_instances(r.state, d);
    if (targets.empty()) return r.block(world::describe(d) + " is not visible");
    if (world::facing_object(r.state, d)) return true;
    return approach(r, targets, world::describe(d));
}

bool run_pick_up(Runner& r, const ObjectDesc& d) {
    if (r.state.inventory) return r.block("inventory occupied");
    if (!approach_object(r, d)) return false;
    if (!r.apply({PrimitiveAction::pickup})) return false;
    if (!(r.state.inventory && r.state.inventory->matches(d))) return r.block("could not pick up " + world::describe(d));
    return true;
}

bool droppable(const GridState& s, Cell c) {
    return s.in_bounds(c) && s.cell_type(c) == CellType::floor && s.object_at(c) < 0;
}

bool run_drop(Runner& r) {
    if (!r.state.inventory) return r.block("nothing to drop");
    const Direction dir = r.state.agent_dir;
    const std::vector<std::pair<Direction, std::vector<PrimitiveAction>>> options = {
        {dir, {}},
        {world::turn_right(dir), {PrimitiveAction::turn_right}},
        {world::turn_left(dir), {PrimitiveAction::turn_left}},
        {world::turn_right(world::turn_right(dir)), {PrimitiveAction::turn_right, PrimitiveAction::turn_right}},
    };
    for (const auto& [heading, turns] : options) {
        if (!droppable(r.state, world::neighbor(r.state.agent_pos, heading))) continue;
        auto prims = turns;
        prims.push_back(PrimitiveAction::drop);
        return r.apply(prims);
    }
    return r.block("no free adjacent cell");
}

bool run_open(Runner& r, const ObjectDesc& d) {
    if (!approach_object(r, d)) return false;
    const auto* door = r.state.find_object_at(world::neighbor(r.state.agent_pos, r.state.agent_dir));
    if (door->door_state == DoorState::open) return true;
    if (!r.apply({PrimitiveAction::toggle})) return false;
    if (door = r.state.find_object_at(world::neighbor(r.state.agent_pos, r.state.agent_dir));
        door->door_state != DoorState::open)
        return r.block(world::describe(d) + " is locked");
    return true;
}

bool run_put_next_to(Runner& r, const ObjectDesc& moved, const ObjectDesc& anchor) {
    if (!(r.state.inventory && r.state.inventory->matches(moved))) {
        if (!run_pick_up(r, moved)) return false;
    }
    const auto anchors = visible_instances(r.state, anchor);
    if (anchors.empty()) return r.block(world::describe(anchor) + " is not visible");
    std::vector<Cell> spots;
    for (const Cell& a : anchors)
        for (auto d : {Direction::N, Direction::E, Direction::S, Direction::W})
            if (Cell c = world::neighbor(a, d); droppable(r.state, c)) spots.push_back(c);
    std::sort(spots.begin(), spots.end());
    spots.erase(std::unique(spots.begin(), spots.end()), spots.end());
    if (spots.empty()) return r.block("no free cell next to " + world::describe(anchor));
    const Cell front = world::neighbor(r.state.agent_pos, r.state.agent_dir);
    if (std::find(spots.begin(), spots.end(), front) == spots.end()) {
        if (!approach(r, spots, "a free cell next to " + world::describe(anchor))) return false;
    }
    return r.apply({PrimitiveAction::drop});
}

}  // namespace

std::pair<GridState, ExecutionOutcome> execute_macro(GridState state, const HighLevelAction& a, int budget) {
    Runner r{std::move(state), budget, {}};
    if (budget <= 0) {
        r.outcome.status = ExecutionStatus::budget_exhausted;
        r.outcome.reason = "primitive budget of " + std::to_string(budget) + " steps exhausted";
        return {std::move(r.state), std::move(r.outcome)};
    }
    bool ok = false;
    switch (a.function) {
        case ActionFunction::GoTo: ok = approach_object(r, a.arguments.at(0)); break;
        case ActionFunction::PickUp: ok = run_pick_up(r, a.arguments.at(0)); break;
        case ActionFunction::Drop: ok = run_drop(r); break;
        case ActionFunction::Open: ok = run_open(r, a.arguments.at(0)); break;
        case ActionFunction::PutNextTo: ok = run_put_next_to(r, a.arguments.at(0), a.arguments.at(1)); break;
    }
    if (ok) {
        r.outcome.status = ExecutionStatus::completed;
        r.outcome.reason.clear();
    }
    return {std::move(r.state), std::move(r.outcome)};
}

}  // namespace ragmod::actions
