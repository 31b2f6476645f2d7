#include "ragmod/world.hpp"

#include "ragmod/hash.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace ragmod::world {

std::string_view to_string(ObjectKind k) {
    switch (k) {
        case ObjectKind::key: return "key";
        case ObjectKind::ball: return "ball";
        case ObjectKind::box: return "box";
        case ObjectKind::door: return "door";
    }
    return "?";
}

std::string_view to_string(Color c) {
    switch (c) {
        case Color::red: return "red";
        case Color::green: return "green";
        case Color::blue: return "blue";
        case Color::purple: return "purple";
        case Color::yellow: return "yellow";
        case Color::grey: return "grey";
    }
    return "?";
}

std::string_view to_string(DoorState s) {
    switch (s) {
        case DoorState::open: return "open";
        case DoorState::closed: return "closed";
        case DoorState::locked: return "locked";
    }
    return "?";
}

std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::N: return "N";
        case Direction::E: return "E";
        case Direction::S: return "S";
        case Direction::W: return "W";
    }
    return "?";
}

std::string_view to_string(PrimitiveAction a) {
    switch (a) {
        case PrimitiveAction::forward: return "forward";
        case PrimitiveAction::turn_left: return "turn_left";
        case PrimitiveAction::turn_right: return "turn_right";
        case PrimitiveAction::pickup: return "pickup";
        case PrimitiveAction::drop: return "drop";
        case PrimitiveAction::toggle: return "toggle";
    }
    return "?";
}

std::string_view to_string(Level l) {
    return l == Level::synth ? "synth" : "bosslevel";
}

std::optional<ObjectKind> parse_kind(std::string_view s) {
    for (auto k : kAllKinds)
        if (to_string(k) == s) return k;
    return std::nullopt;
}

std::optional<Color> parse_color(std::string_view s) {
    for (auto c : kAllColors)
        if (to_string(c) == s) return c;
    return std::nullopt;
}

std::optional<Level> parse_level(std::string_view s) {
    if (s == "synth") return Level::synth;
    if (s == "bosslevel") return Level::bosslevel;
    return std::nullopt;
}

namespace {

std::optional<DoorState> parse_door_state(std::string_view s) {
    for (auto d : {DoorState::open, DoorState::closed, DoorState::locked})
        if (to_string(d) == s) return d;
    return std::nullopt;
}

std::optional<Direction> parse_direction(std::string_view s) {
    for (auto d : {Direction::N, Direction::E, Direction::S, Direction::W})
        if (to_string(d) == s) return d;
    return std::nullopt;
}

std::string signed_int(int v) {
    if (v > 0) return "+" + std::to_string(v);
    return std::to_string(v);
}

}  // namespace

Cell neighbor(Cell c, Direction d) {
    switch (d) {
        case Direction::N: return {c.col, c.row - 1};
        case Direction::E: return {c.col + 1, c.row};
        case Direction::S: return {c.col, c.row + 1};
        case Direction::W: return {c.col - 1, c.row};
    }
    return c;
}

Direction turn_left(Direction d) {
    return static_cast<Direction>((static_cast<int>(d) + 3) % 4);
}

Direction turn_right(Direction d) {
    return static_cast<Direction>((static_cast<int>(d) + 1) % 4);
}

std::string describe(const ObjectDesc& d) {
    std::string out = "the ";
    out += to_string(d.color);
    out += ' ';
    out += to_string(d.kind);
    return out;
}

CellType GridState::cell_type(Cell c) const {
    if (!in_bounds(c)) return CellType::wall;
    return cells[static_cast<std::size_t>(c.row * width + c.col)];
}

void GridState::set_cell_type(Cell c, CellType t) {
    cells.at(static_cast<std::size_t>(c.row * width + c.col)) = t;
}

int GridState::object_at(Cell c) const {
    for (std::size_t i = 0; i < objects.size(); ++i)
        if (objects[i].position == c) return static_cast<int>(i);
    return -1;
}

const WorldObject* GridState::find_object_at(Cell c) const {
    int i = object_at(c);
    return i < 0 ? nullptr : &objects[static_cast<std::size_t>(i)];
}

bool GridState::passable(Cell c) const {
    if (!in_bounds(c)) return false;
    switch (cell_type(c)) {
        case CellType::wall: return false;
        case CellType::floor: return object_at(c) < 0;
        case CellType::doorway: {
            const auto* door = find_object_at(c);
            return door != nullptr && door->door_state == DoorState::open;
        }
    }
    return false;
}

GridState make_empty_grid(int rooms_x, int rooms_y, int room_size) {
    if (rooms_x < 1 || rooms_y < 1 || room_size < 3)
        throw std::invalid_argument("grid needs at least one room of size >= 3");
    GridState s;
    s.room_size = room_size;
    s.rooms_x = rooms_x;
    s.rooms_y = rooms_y;
    const int stride = room_size - 1;
    s.width = rooms_x * stride + 1;
    s.height = rooms_y * stride + 1;
    s.cells.assign(static_cast<std::size_t>(s.width * s.height), CellType::floor);
    for (int r = 0; r < s.height; ++r)
        for (int c = 0; c < s.width; ++c)
            if (c % stride == 0 || r % stride == 0) s.set_cell_type({c, r}, CellType::wall);
    s.agent_pos = {1, 1};
    return s;
}

bool is_interior(const GridState& s, RoomId r, Cell c) {
    const int stride = s.room_size - 1;
    const int x0 = r.rx * stride;
    const int y0 = r.ry * stride;
    return c.col > x0 && c.col < x0 + stride && c.row > y0 && c.row < y0 + stride;
}

std::vector<RoomId> rooms_of(const GridState& s, Cell c) {
    const int stride = s.room_size - 1;
    std::vector<RoomId> out;
    switch (s.cell_type(c)) {
        case CellType::wall: break;
        case CellType::floor: out.push_back({c.col / stride, c.row / stride}); break;
        case CellType::doorway:
            for (auto d : {Direction::N, Direction::E, Direction::S, Direction::W}) {
                Cell n = neighbor(c, d);
                if (s.in_bounds(n) && s.cell_type(n) == CellType::floor)
                    out.push_back({n.col / stride, n.row / stride});
            }
            std::sort(out.begin(), out.end());
            out.erase(std::unique(out.begin(), out.end()), out.end());
            break;
    }
    return out;
}

std::vector<int> doors_of_room(const GridState& s, RoomId r) {
    const int stride = s.room_size - 1;
    const int x0 = r.rx * stride, x1 = x0 + stride;
    const int y0 = r.ry * stride, y1 = y0 + stride;
    std::vector<int> out;
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
        const auto& o = s.objects[i];
        if (o.kind != ObjectKind::door) continue;
        const Cell p = o.position;
        const bool inside = p.col >= x0 && p.col <= x1 && p.row >= y0 && p.row <= y1;
        const bool boundary = p.col == x0 || p.col == x1 || p.row == y0 || p.row == y1;
        if (inside && boundary) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<bool> visibility_mask(const GridState& s) {
    std::vector<bool> mask(static_cast<std::size_t>(s.width * s.height), false);
    auto mark = [&](Cell c) { mask[static_cast<std::size_t>(c.row * s.width + c.col)] = true; };

    const auto base = rooms_of(s, s.agent_pos);
    std::vector<RoomId> rooms = base;
    for (const auto& r : base) {
        for (int di : doors_of_room(s, r)) {
            const auto& door = s.objects[static_cast<std::size_t>(di)];
            if (door.door_state != DoorState::open) continue;
            for (const auto& r2 : rooms_of(s, door.position)) rooms.push_back(r2);
        }
    }
    std::sort(rooms.begin(), rooms.end());
    rooms.erase(std::unique(rooms.begin(), rooms.end()), rooms.end());

    const int stride = s.room_size - 1;
    for (const auto& r : rooms) {
        for (int row = r.ry * stride + 1; row < (r.ry + 1) * stride; ++row)
            for (int col = r.rx * stride + 1; col < (r.rx + 1) * stride; ++col) mark({col, row});
        for (int di : doors_of_room(s, r)) mark(s.objects[static_cast<std::size_t>(di)].position);
    }
    if (s.in_bounds(s.agent_pos)) mark(s.agent_pos);
    return mask;
}

bool Observation::sees(const ObjectDesc& d) const {
    return find(d) != nullptr;
}

const VisibleObject* Observation::find(const ObjectDesc& d) const {
    for (const auto& v : visible_objects)
        if (v.kind == d.kind && v.color == d.color) return &v;
    return nullptr;
}

Observation observe(const GridState& s) {
    Observation o;
    const auto mask = visibility_mask(s);
    for (const auto& obj : s.objects) {
        if (!s.in_bounds(obj.position)) continue;
        if (!mask[static_cast<std::size_t>(obj.position.row * s.width + obj.position.col)]) continue;
        VisibleObject v;
        v.kind = obj.kind;
        v.color = obj.color;
        if (obj.kind == ObjectKind::door) v.door_state = obj.door_state;
        v.dx = obj.position.col - s.agent_pos.col;
        v.dy = obj.position.row - s.agent_pos.row;
        o.visible_objects.push_back(v);
    }
    std::sort(o.visible_objects.begin(), o.visible_objects.end(), [](const auto& a, const auto& b) {
        return std::tie(a.dy, a.dx) < std::tie(b.dy, b.dx);
    });
    if (s.inventory) o.inventory = s.inventory->desc();
    const auto rooms = rooms_of(s, s.agent_pos);
    if (!rooms.empty()) o.room = rooms.front();
    o.agent_dir = s.agent_dir;

    const Cell front = neighbor(s.agent_pos, s.agent_dir);
    if (const auto* obj = s.in_bounds(front) ? s.find_object_at(front) : nullptr) {
        std::string f{to_string(obj->color)};
        f += ' ';
        f += to_string(obj->kind);
        if (obj->kind == ObjectKind::door) {
            f += ' ';
            f += to_string(obj->door_state);
        }
        o.facing = f;
    } else if (s.cell_type(front) == CellType::floor) {
        o.facing = "empty";
    } else {
        o.facing = "wall";
    }
    return o;
}

std::string render_observation(const Observation& o) {
    std::ostringstream out;
    out << "visible_objects=[";
    for (std::size_t i = 0; i < o.visible_objects.size(); ++i) {
        const auto& v = o.visible_objects[i];
        if (i) out << ", ";
        out << "(type." << to_string(v.kind) << ", color." << to_string(v.color);
        if (v.door_state) out << ", state." << to_string(*v.door_state);
        out << ", at=(" << signed_int(v.dx) << "," << signed_int(v.dy) << "))";
    }
    out << "]; inventory=";
    if (o.inventory)
        out << "(type." << to_string(o.inventory->kind) << ", color." << to_string(o.inventory->color) << ")";
    else
        out << "None";
    out << "; facing=" << o.facing << "; direction=" << to_string(o.agent_dir);
    return out.str();
}

GridState step_primitive(GridState s, PrimitiveAction a) {
    const Cell front = neighbor(s.agent_pos, s.agent_dir);
    switch (a) {
        case PrimitiveAction::forward:
            if (s.passable(front)) s.agent_pos = front;
            break;
        case PrimitiveAction::turn_left: s.agent_dir = turn_left(s.agent_dir); break;
        case PrimitiveAction::turn_right: s.agent_dir = turn_right(s.agent_dir); break;
        case PrimitiveAction::pickup: {
            const int idx = s.in_bounds(front) ? s.object_at(front) : -1;
            if (idx >= 0 && !s.inventory && s.objects[static_cast<std::size_t>(idx)].kind != ObjectKind::door) {
                WorldObject obj = s.objects[static_cast<std::size_t>(idx)];
                obj.position = {-1, -1};
                s.inventory = obj;
                s.objects.erase(s.objects.begin() + idx);
            }
            break;
        }
        case PrimitiveAction::drop:
            if (s.inventory && s.in_bounds(front) && s.cell_type(front) == CellType::floor &&
                s.object_at(front) < 0) {
                WorldObject obj = *s.inventory;
                obj.position = front;
                s.objects.push_back(obj);
                s.inventory.reset();
            }
            break;
        case PrimitiveAction::toggle: {
            const int idx = s.in_bounds(front) ? s.object_at(front) : -1;
            if (idx < 0) break;
            auto& door = s.objects[static_cast<std::size_t>(idx)];
            if (door.kind != ObjectKind::door) break;
            switch (door.door_state) {
                case DoorState::open: door.door_state = DoorState::closed; break;
                case DoorState::closed: door.door_state = DoorState::open; break;
                case DoorState::locked:
                    if (s.inventory && s.inventory->kind == ObjectKind::key && s.inventory->color == door.color)
                        door.door_state = DoorState::open;
                    break;
            }
            break;
        }
    }
    ++s.step_count;
    return s;
}

bool next_to(Cell a, Cell b) {
    return std::abs(a.col - b.col) + std::abs(a.row - b.row) == 1;
}

bool facing_object(const GridState& s, const ObjectDesc& d) {
    const auto* obj = s.find_object_at(neighbor(s.agent_pos, s.agent_dir));
    return obj != nullptr && obj->matches(d);
}

bool predicate_holds(const GridState& s, const GoalPredicate& p) {
    switch (p.kind) {
        case PredicateKind::go_to: return facing_object(s, p.target);
        case PredicateKind::pick_up: return s.inventory && s.inventory->matches(p.target);
        case PredicateKind::open:
            return std::any_of(s.objects.begin(), s.objects.end(), [&](const WorldObject& o) {
                return o.kind == ObjectKind::door && o.matches(p.target) && o.door_state == DoorState::open;
            });
        case PredicateKind::put_next: {
            if (!p.other) return false;
            for (std::size_t i = 0; i < s.objects.size(); ++i) {
                if (!s.objects[i].matches(p.target)) continue;
                for (std::size_t j = 0; j < s.objects.size(); ++j)
                    if (i != j && s.objects[j].matches(*p.other) &&
                        next_to(s.objects[i].position, s.objects[j].position))
                        return true;
            }
            return false;
        }
    }
    return false;
}

bool goal_satisfied(const GridState& s, const GoalSpec& goal) {
    return std::all_of(goal.begin(), goal.end(), [&](const auto& p) { return predicate_holds(s, p); });
}

int default_horizon(Level l) {
    return l == Level::synth ? 25 : 20;
}

int default_k(Level l) {
    return l == Level::synth ? 10 : 5;
}

// --- serialization -------------------------------------------------------

namespace {

nlohmann::json desc_json(const ObjectDesc& d) {
    return {{"kind", to_string(d.kind)}, {"color", to_string(d.color)}};
}

ObjectDesc desc_from_json(const nlohmann::json& j) {
    auto k = parse_kind(j.at("kind").get<std::string>());
    auto c = parse_color(j.at("color").get<std::string>());
    if (!k || !c) throw std::runtime_error("bad object descriptor in record");
    return {*k, *c};
}

nlohmann::json object_json(const WorldObject& o, bool with_position) {
    nlohmann::json j = desc_json(o.desc());
    if (with_position) {
        j["col"] = o.position.col;
        j["row"] = o.position.row;
    }
    if (o.kind == ObjectKind::door) j["door_state"] = to_string(o.door_state);
    return j;
}

WorldObject object_from_json(const nlohmann::json& j, bool with_position) {
    WorldObject o;
    const auto d = desc_from_json(j);
    o.kind = d.kind;
    o.color = d.color;
    o.position = with_position ? Cell{j.at("col").get<int>(), j.at("row").get<int>()} : Cell{-1, -1};
    if (o.kind == ObjectKind::door) {
        auto st = parse_door_state(j.at("door_state").get<std::string>());
        if (!st) throw std::runtime_error("bad door state in record");
        o.door_state = *st;
    }
    return o;
}

const char* predicate_name(PredicateKind k) {
    switch (k) {
        case PredicateKind::go_to: return "go_to";
        case PredicateKind::pick_up: return "pick_up";
        case PredicateKind::open: return "open";
        case PredicateKind::put_next: return "put_next";
    }
    return "?";
}

}  // namespace

nlohmann::json to_json(const GridState& s) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < s.height; ++r) {
        std::string line;
        for (int c = 0; c < s.width; ++c) {
            switch (s.cell_type({c, r})) {
                case CellType::floor: line += '.'; break;
                case CellType::wall: line += '#'; break;
                case CellType::doorway: line += 'D'; break;
            }
        }
        rows.push_back(line);
    }
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& o : s.objects) objects.push_back(object_json(o, true));
    return {
        {"width", s.width},
        {"height", s.height},
        {"room_size", s.room_size},
        {"rooms_x", s.rooms_x},
        {"rooms_y", s.rooms_y},
        {"cells", rows},
        {"objects", objects},
        {"agent", {{"col", s.agent_pos.col}, {"row", s.agent_pos.row}, {"dir", to_string(s.agent_dir)}}},
        {"inventory", s.inventory ? object_json(*s.inventory, false) : nlohmann::json(nullptr)},
        {"step_count", s.step_count},
    };
}

GridState state_from_json(const nlohmann::json& j) {
    GridState s;
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.room_size = j.at("room_size").get<int>();
    s.rooms_x = j.at("rooms_x").get<int>();
    s.rooms_y = j.at("rooms_y").get<int>();
    const auto& rows = j.at("cells");
    if (static_cast<int>(rows.size()) != s.height) throw std::runtime_error("cell rows do not match height");
    for (const auto& row : rows) {
        const auto line = row.get<std::string>();
        if (static_cast<int>(line.size()) != s.width) throw std::runtime_error("cell row does not match width");
        for (char ch : line) {
            switch (ch) {
                case '.': s.cells.push_back(CellType::floor); break;
                case '#': s.cells.push_back(CellType::wall); break;
                case 'D': s.cells.push_back(CellType::doorway); break;
                default: throw std::runtime_error("bad cell character in record");
            }
        }
    }
    for (const auto& o : j.at("objects")) s.objects.push_back(object_from_json(o, true));
    const auto& agent = j.at("agent");
    s.agent_pos = {agent.at("col").get<int>(), agent.at("row").get<int>()};
    auto dir = parse_direction(agent.at("dir").get<std::string>());
    if (!dir) throw std::runtime_error("bad agent direction in record");
    s.agent_dir = *dir;
    if (!j.at("inventory").is_null()) s.inventory = object_from_json(j.at("inventory"), false);
    s.step_count = j.at("step_count").get<int>();
    return s;
}

nlohmann::json to_json(const GoalPredicate& p) {
    nlohmann::json j = {{"predicate", predicate_name(p.kind)}, {"target", desc_json(p.target)}};
    if (p.other) j["other"] = desc_json(*p.other);
    return j;
}

GoalPredicate predicate_from_json(const nlohmann::json& j) {
    GoalPredicate p;
    const auto name = j.at("predicate").get<std::string>();
    bool found = false;
    for (auto k : {PredicateKind::go_to, PredicateKind::pick_up, PredicateKind::open, PredicateKind::put_next}) {
        if (name == predicate_name(k)) {
            p.kind = k;
            found = true;
        }
    }
    if (!found) throw std::runtime_error("unknown goal predicate '" + name + "'");
    p.target = desc_from_json(j.at("target"));
    if (j.contains("other")) p.other = desc_from_json(j.at("other"));
    return p;
}

nlohmann::json to_json(const TaskInstance& t) {
    nlohmann::json spec = nlohmann::json::array();
    for (const auto& p : t.goal_spec) spec.push_back(to_json(p));
    return {
        {"seed", t.seed},
        {"level", to_string(t.level)},
        {"goal", t.goal},
        {"goal_spec", spec},
        {"horizon", t.horizon},
        {"discount", t.discount},
        {"initial_state", to_json(t.initial_state)},
    };
}

TaskInstance task_from_json(const nlohmann::json& j) {
    TaskInstance t;
    t.seed = j.at("seed").get<std::uint64_t>();
    auto lvl = parse_level(j.at("level").get<std::string>());
    if (!lvl) throw std::runtime_error("bad level in task record");
    t.level = *lvl;
    t.goal = j.at("goal").get<std::string>();
    for (const auto& p : j.at("goal_spec")) t.goal_spec.push_back(predicate_from_json(p));
    t.horizon = j.at("horizon").get<int>();
    t.discount = j.at("discount").get<double>();
    t.initial_state = state_from_json(j.at("initial_state"));
    return t;
}

std::string state_digest(const GridState& s) {
    return hex64(fnv1a64(to_json(s).dump()));
}

}  // namespace ragmod::world
