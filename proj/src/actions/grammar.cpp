#include "ragmod/actions.hpp"

#include <algorithm>
#include <cctype>

namespace ragmod::actions {

std::string_view to_string(ActionFunction f) {
    switch (f) {
        case ActionFunction::GoTo: return "GoTo";
        case ActionFunction::PickUp: return "PickUp";
        case ActionFunction::Drop: return "Drop";
        case ActionFunction::Open: return "Open";
        case ActionFunction::PutNextTo: return "PutNextTo";
    }
    return "?";
}

int arity(ActionFunction f) {
    switch (f) {
        case ActionFunction::Drop: return 0;
        case ActionFunction::PutNextTo: return 2;
        default: return 1;
    }
}

HighLevelAction go_to(ObjectDesc d) {
    return {ActionFunction::GoTo, {d}};
}
HighLevelAction pick_up(ObjectDesc d) {
    return {ActionFunction::PickUp, {d}};
}
HighLevelAction drop() {
    return {ActionFunction::Drop, {}};
}
HighLevelAction open(ObjectDesc d) {
    return {ActionFunction::Open, {d}};
}
HighLevelAction put_next_to(ObjectDesc moved, ObjectDesc anchor) {
    return {ActionFunction::PutNextTo, {moved, anchor}};
}

std::string render(const HighLevelAction& a) {
    std::string out{to_string(a.function)};
    out += '(';
    for (std::size_t i = 0; i < a.arguments.size(); ++i) {
        if (i) out += ", ";
        out += "type.";
        out += world::to_string(a.arguments[i].kind);
        out += ", color.";
        out += world::to_string(a.arguments[i].color);
    }
    out += ')';
    return out;
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Printable excerpt of untrusted input for error messages.
std::string excerpt(std::string_view s) {
    std::string out;
    for (unsigned char c : s.substr(0, 40)) out += std::isprint(c) ? static_cast<char>(c) : '?';
    if (s.size() > 40) out += "...";
    return out;
}

ParseResult fail(std::string reason) {
    return {std::nullopt, std::move(reason)};
}

}  // namespace

ParseResult parse_action(std::string_view text) {
    std::string compact;
    compact.reserve(text.size());
    for (unsigned char c : text)
        if (!std::isspace(c)) compact += static_cast<char>(c);
    if (compact.empty()) return fail("empty action");

    const auto open_paren = compact.find('(');
    const std::string name = compact.substr(0, open_paren);
    if (name.empty()) return fail("missing function name");

    std::optional<ActionFunction> function;
    const std::string lname = lower(name);
    for (auto f : kAllFunctions)
        if (lower(to_string(f)) == lname) function = f;
    if (!function) return fail("unknown function " + excerpt(name));

    const std::string fname{to_string(*function)};
    if (open_paren == std::string::npos) return fail("missing '(' after " + fname);
    const auto close_paren = compact.rfind(')');
    if (close_paren == std::string::npos || close_paren < open_paren) return fail("missing ')' in " + fname + " call");
    if (close_paren + 1 != compact.size())
        return fail("unexpected text after ')': " + excerpt(compact.substr(close_paren + 1)));

    const std::string inner = compact.substr(open_paren + 1, close_paren - open_paren - 1);
    if (inner.find_first_of("()") != std::string::npos) return fail("unbalanced parentheses in " + fname + " call");

    std::vector<std::string> items;
    if (!inner.empty()) {
        std::size_t start = 0;
        while (true) {
            const auto comma = inner.find(',', start);
            items.push_back(inner.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }

    const int expected = arity(*function);
    if (items.size() != static_cast<std::size_t>(2 * expected)) {
        return fail("bad arity: " + fname + " expects " + std::to_string(expected) +
                    " object argument(s) as type.<kind>, color.<color>; got " + std::to_string(items.size()) +
                    " argument(s)");
    }

    HighLevelAction action{*function, {}};
    for (std::size_t i = 0; i < items.size(); i += 2) {
        ObjectDesc desc;
        for (std::size_t j = 0; j < 2; ++j) {
            const std::string& item = items[i + j];
            const auto dot = item.find('.');
            if (item.empty()) return fail("malformed argument: empty argument");
            if (dot == std::string::npos) return fail("malformed argument '" + excerpt(item) + "'");
            const std::string prefix = lower(item.substr(0, dot));
            const std::string value = lower(item.substr(dot + 1));
            const std::string_view wanted = j == 0 ? "type" : "color";
            if (prefix != wanted) {
                return fail("malformed argument '" + excerpt(item) + "': expected " + std::string(wanted) +
                            ".<" + (j == 0 ? "kind" : "color") + ">");
            }
            if (j == 0) {
                auto kind = world::parse_kind(value);
                if (!kind) return fail("unknown kind " + excerpt(item.substr(dot + 1)));
                desc.kind = *kind;
            } else {
                auto color = world::parse_color(value);
                if (!color) return fail("unknown color " + excerpt(item.substr(dot + 1)));
                desc.color = *color;
            }
        }
        action.arguments.push_back(desc);
    }
    return {action, {}};
}

namespace {

std::string named(const ObjectDesc& d) {
    return world::describe(d);
}

}  // namespace

std::optional<std::string> check_preconditions(const HighLevelAction& a, const Observation& obs) {
    using world::DoorState;
    using world::ObjectKind;

    auto not_visible = [](const ObjectDesc& d) { return named(d) + " is not visible"; };

    switch (a.function) {
        case ActionFunction::GoTo: {
            const auto& d = a.arguments.at(0);
            if (!obs.sees(d)) return not_visible(d);
            return std::nullopt;
        }
        case ActionFunction::PickUp: {
            const auto& d = a.arguments.at(0);
            if (d.kind == ObjectKind::door) return "cannot pick up a door";
            if (obs.inventory) return "inventory occupied by " + named(*obs.inventory) + "; drop it first";
            if (!obs.sees(d)) return not_visible(d);
            return std::nullopt;
        }
        case ActionFunction::Drop:
            if (!obs.inventory) return "nothing to drop";
            return std::nullopt;
        case ActionFunction::Open: {
            const auto& d = a.arguments.at(0);
            if (d.kind != ObjectKind::door) return "only doors can be opened";
            const auto* door = obs.find(d);
            if (door == nullptr) return not_visible(d);
            if (door->door_state == DoorState::open) return named(d) + " is already open";
            if (door->door_state == DoorState::locked &&
                !(obs.inventory && obs.inventory->kind == ObjectKind::key && obs.inventory->color == d.color)) {
                return named(d) + " is locked; carry the " + std::string(world::to_string(d.color)) + " key";
            }
            return std::nullopt;
        }
        case ActionFunction::PutNextTo: {
            const auto& moved = a.arguments.at(0);
            const auto& anchor = a.arguments.at(1);
            if (moved.kind == ObjectKind::door) return "cannot move a door";
            if (moved == anchor) return "cannot put an object next to itself";
            const bool holding = obs.inventory && *obs.inventory == moved;
            if (!holding) {
                if (obs.inventory) return "inventory occupied by " + named(*obs.inventory) + "; drop it first";
                if (!obs.sees(moved)) return not_visible(moved);
            }
            if (!obs.sees(anchor)) return not_visible(anchor);
            return std::nullopt;
        }
    }
    return "unsupported action";
}

}  // namespace ragmod::actions
