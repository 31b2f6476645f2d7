#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ragmod::world {

enum class ObjectKind { key, ball, box, door };
enum class Color { red, green, blue, purple, yellow, grey };
enum class DoorState { open, closed, locked };
enum class Direction { N, E, S, W };
enum class CellType { floor, wall, doorway };
enum class PrimitiveAction { forward, turn_left, turn_right, pickup, drop, toggle };
enum class Level { synth, bosslevel };

inline constexpr std::array kAllKinds{ObjectKind::key, ObjectKind::ball, ObjectKind::box,
                                      ObjectKind::door};
inline constexpr std::array kAllColors{Color::red,    Color::green,  Color::blue,
                                       Color::purple, Color::yellow, Color::grey};
inline constexpr std::array kAllPrimitives{PrimitiveAction::forward,    PrimitiveAction::turn_left,
                                           PrimitiveAction::turn_right, PrimitiveAction::pickup,
                                           PrimitiveAction::drop,       PrimitiveAction::toggle};

std::string_view to_string(ObjectKind k);
std::string_view to_string(Color c);
std::string_view to_string(DoorState s);
std::string_view to_string(Direction d);
std::string_view to_string(PrimitiveAction a);
std::string_view to_string(Level l);

std::optional<ObjectKind> parse_kind(std::string_view s);
std::optional<Color> parse_color(std::string_view s);
std::optional<Level> parse_level(std::string_view s);

struct Cell {
    int col = 0;
    int row = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

Cell neighbor(Cell c, Direction d);
Direction turn_left(Direction d);
Direction turn_right(Direction d);

/// An object reference by its observable attributes.
struct ObjectDesc {
    ObjectKind kind = ObjectKind::key;
    Color color = Color::red;
    friend bool operator==(const ObjectDesc&, const ObjectDesc&) = default;
};

/// "the red key"
std::string describe(const ObjectDesc& d);

struct WorldObject {
    ObjectKind kind = ObjectKind::key;
    Color color = Color::red;
    Cell position;                         // meaningless while carried
    DoorState door_state = DoorState::closed;  // doors only

    ObjectDesc desc() const { return {kind, color}; }
    bool matches(const ObjectDesc& d) const { return kind == d.kind && color == d.color; }
    friend bool operator==(const WorldObject&, const WorldObject&) = default;
};

/// Rectangular rooms sharing walls, BabyAI style. Room (rx, ry) spans cells
/// [rx*(room_size-1), rx*(room_size-1)+room_size-1] on each axis.
struct GridState {
    int width = 0;
    int height = 0;
    int room_size = 8;
    int rooms_x = 1;
    int rooms_y = 1;
    std::vector<CellType> cells;       // row-major
    std::vector<WorldObject> objects;  // everything on the grid, doors included
    Cell agent_pos;
    Direction agent_dir = Direction::E;
    std::optional<WorldObject> inventory;
    int step_count = 0;

    bool in_bounds(Cell c) const { return c.col >= 0 && c.row >= 0 && c.col < width && c.row < height; }
    CellType cell_type(Cell c) const;
    void set_cell_type(Cell c, CellType t);

    /// Index into objects of whatever occupies `c`, or -1.
    int object_at(Cell c) const;
    const WorldObject* find_object_at(Cell c) const;

    /// Agent may stand here: empty floor, or a doorway holding an open door.
    bool passable(Cell c) const;

    friend bool operator==(const GridState&, const GridState&) = default;
};

struct RoomId {
    int rx = 0;
    int ry = 0;
    friend bool operator==(const RoomId&, const RoomId&) = default;
    friend auto operator<=>(const RoomId&, const RoomId&) = default;
};

/// Empty grid of rooms_x by rooms_y rooms with walls only (no doors, no objects).
GridState make_empty_grid(int rooms_x, int rooms_y, int room_size);

/// Rooms that contain `c`: one for interior cells, up to two for doorways, none for walls.
std::vector<RoomId> rooms_of(const GridState& s, Cell c);
bool is_interior(const GridState& s, RoomId r, Cell c);
/// Indices of door objects on the boundary of room r.
std::vector<int> doors_of_room(const GridState& s, RoomId r);

/// Cells the agent can currently see under the room-scoped visibility rule.
std::vector<bool> visibility_mask(const GridState& s);

struct VisibleObject {
    ObjectKind kind = ObjectKind::key;
    Color color = Color::red;
    std::optional<DoorState> door_state;
    int dx = 0;  // relative to the agent, grid frame
    int dy = 0;

    ObjectDesc desc() const { return {kind, color}; }
    friend bool operator==(const VisibleObject&, const VisibleObject&) = default;
};

struct Observation {
    std::vector<VisibleObject> visible_objects;  // grid order (row, then col)
    std::optional<ObjectDesc> inventory;
    RoomId room;
    Direction agent_dir = Direction::E;
    std::string facing;  // "wall", "empty", "open door", or an object description

    bool sees(const ObjectDesc& d) const;
    const VisibleObject* find(const ObjectDesc& d) const;
    friend bool operator==(const Observation&, const Observation&) = default;
};

Observation observe(const GridState& s);

/// Single-line canonical rendering used in prompts and memory records.
std::string render_observation(const Observation& o);

/// Illegal moves are no-ops that still consume a step.
GridState step_primitive(GridState s, PrimitiveAction a);

enum class PredicateKind { go_to, pick_up, open, put_next };

struct GoalPredicate {
    PredicateKind kind = PredicateKind::go_to;
    ObjectDesc target;
    std::optional<ObjectDesc> other;  // put_next only
    friend bool operator==(const GoalPredicate&, const GoalPredicate&) = default;
};

using GoalSpec = std::vector<GoalPredicate>;

bool predicate_holds(const GridState& s, const GoalPredicate& p);
bool goal_satisfied(const GridState& s, const GoalSpec& goal);

/// Agent is adjacent to and facing an object matching d.
bool facing_object(const GridState& s, const ObjectDesc& d);
bool next_to(Cell a, Cell b);

struct TaskInstance {
    std::uint64_t seed = 0;
    Level level = Level::synth;
    std::string goal;
    GoalSpec goal_spec;
    int horizon = 25;
    double discount = 0.99;  // carried for completeness; no algorithm reads it
    GridState initial_state;
};

int default_horizon(Level l);
int default_k(Level l);

nlohmann::json to_json(const GridState& s);
GridState state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GoalPredicate& p);
GoalPredicate predicate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskInstance& t);
TaskInstance task_from_json(const nlohmann::json& j);

/// Stable 64-bit digest of the serialized state.
std::string state_digest(const GridState& s);

}  // namespace ragmod::world
