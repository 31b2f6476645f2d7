#include "ragmod/actions.hpp"

#include <algorithm>
#include <deque>
#include <map>

namespace ragmod::actions {

using world::DoorState;
using world::GoalPredicate;
using world::ObjectKind;
using world::PredicateKind;
using world::RoomId;

namespace {

class Expert {
public:
    explicit Expert(const GridState& s) : s_(s), obs_(world::observe(s)) {}

    HighLevelAction plan(const GoalPredicate& p) {
        if (auto unlock = unlock_prerequisite(p)) return *unlock;
        switch (p.kind) {
            case PredicateKind::go_to: return reach(p.target).value_or(go_to(p.target));
            case PredicateKind::pick_up:
                if (holding_other(p.target)) return drop();
                return reach(p.target).value_or(pick_up(p.target));
            case PredicateKind::open: return plan_open(door_index(p.target));
            case PredicateKind::put_next: {
                const ObjectDesc& anchor = p.other.value();
                if (holding(p.target)) return reach(anchor).value_or(put_next_to(p.target, anchor));
                if (s_.inventory) return drop();
                if (obs_.sees(p.target) && obs_.sees(anchor)) return put_next_to(p.target, anchor);
                return reach(p.target).value_or(pick_up(p.target));
            }
        }
        throw ExpertStuck("unsupported goal predicate");
    }

private:
    const GridState& s_;
    Observation obs_;

    bool holding(const ObjectDesc& d) const { return s_.inventory && s_.inventory->matches(d); }
    bool holding_other(const ObjectDesc& d) const { return s_.inventory && !s_.inventory->matches(d); }

    bool holding_key_for(const world::WorldObject& door) const {
        return s_.inventory && s_.inventory->kind == ObjectKind::key && s_.inventory->color == door.color;
    }

    const world::WorldObject& object(int i) const { return s_.objects[static_cast<std::size_t>(i)]; }

    int find_grid_object(const ObjectDesc& d) const {
        int best = -1;
        for (std::size_t i = 0; i < s_.objects.size(); ++i) {
            if (!s_.objects[i].matches(d)) continue;
            if (best < 0 || s_.objects[i].position < object(best).position) best = static_cast<int>(i);
        }
        return best;
    }

    int door_index(const ObjectDesc& d) const {
        const int i = find_grid_object(d);
        if (i < 0 || object(i).kind != ObjectKind::door) throw ExpertStuck("no door matches " + world::describe(d));
        return i;
    }

    // Door indices along a shortest room-to-room route; nullopt if unreachable.
    std::optional<std::vector<int>> room_route(world::Cell target, bool through_locked) const {
        const auto starts = world::rooms_of(s_, s_.agent_pos);
        const auto goals = world::rooms_of(s_, target);
        std::map<RoomId, std::pair<RoomId, int>> came_from;
        std::deque<RoomId> queue;
        for (const auto& r : starts) {
            came_from[r] = {r, -1};
            queue.push_back(r);
        }
        std::optional<RoomId> reached;
        while (!queue.empty()) {
            const RoomId r = queue.front();
            queue.pop_front();
            if (std::find(goals.begin(), goals.end(), r) != goals.end()) {
                reached = r;
                break;
            }
            for (int di : world::doors_of_room(s_, r)) {
                const auto& door = object(di);
                if (door.door_state == DoorState::locked && !through_locked && !holding_key_for(door)) continue;
                for (const auto& next : world::rooms_of(s_, door.position)) {
                    if (came_from.count(next)) continue;
                    came_from[next] = {r, di};
                    queue.push_back(next);
                }
            }
        }
        if (!reached) return std::nullopt;
        std::vector<int> doors;
        for (RoomId r = *reached; came_from[r].second >= 0; r = came_from[r].first) doors.push_back(came_from[r].second);
        std::reverse(doors.begin(), doors.end());
        return doors;
    }

    // A locked door that must be opened before any object in p can be reached.
    std::optional<HighLevelAction> unlock_prerequisite(const GoalPredicate& p) {
        std::vector<ObjectDesc> involved{p.target};
        if (p.other) involved.push_back(*p.other);
        for (const auto& d : involved) {
            if (holding(d)) continue;
            const int i = find_grid_object(d);
            if (i < 0) throw ExpertStuck(world::describe(d) + " does not exist");
            if (room_route(object(i).position, false)) continue;
            const auto route = room_route(object(i).position, true);
            if (!route) throw ExpertStuck("no route to " + world::describe(d));
            for (int di : *route)
                if (object(di).door_state == DoorState::locked) return plan_open(di);
        }
        return std::nullopt;
    }

    HighLevelAction plan_open(int door) {
        const auto& d = object(door);
        if (d.door_state == DoorState::locked && !holding_key_for(d)) {
            const ObjectDesc key{ObjectKind::key, d.color};
            if (s_.inventory) return drop();
            const int k = find_grid_object(key);
            if (k < 0 || !room_route(object(k).position, false))
                throw ExpertStuck("the key for " + world::describe(d.desc()) + " is unreachable");
            return reach(key).value_or(pick_up(key));
        }
        return reach(d.desc()).value_or(open(d.desc()));
    }

    // Navigation step toward a hidden object, or nullopt when it is already visible.
    std::optional<HighLevelAction> reach(const ObjectDesc& d) {
        if (obs_.sees(d)) return std::nullopt;
        const int i = find_grid_object(d);
        if (i < 0) throw ExpertStuck(world::describe(d) + " does not exist");
        const auto route = room_route(object(i).position, false);
        if (!route || route->empty()) throw ExpertStuck("no route to " + world::describe(d));
        for (std::size_t k = 0; k < route->size(); ++k) {
            const auto& door = object((*route)[k]);
            if (door.door_state == DoorState::open) continue;
            if (obs_.sees(door.desc())) return open(door.desc());
            if (k == 0) throw ExpertStuck("first door on route is hidden");
            return go_to(object((*route)[k - 1]).desc());
        }
        for (auto it = route->rbegin(); it != route->rend(); ++it) {
            const auto& door = object(*it);
            if (!obs_.sees(door.desc())) continue;
            if (world::facing_object(s_, door.desc())) throw ExpertStuck("target still hidden behind open door");
            return go_to(door.desc());
        }
        throw ExpertStuck("no visible door toward " + world::describe(d));
    }
};

}  // namespace

HighLevelAction expert_next_action(const GridState& state, const world::GoalSpec& goal) {
    Expert expert(state);
    for (const auto& p : goal)
        if (!world::predicate_holds(state, p)) return expert.plan(p);
    throw std::logic_error("expert_next_action called on a satisfied goal");
}

}  // namespace ragmod::actions
