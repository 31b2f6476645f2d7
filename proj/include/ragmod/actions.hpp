#pragma once

#include "ragmod/world.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ragmod::actions {

using world::GridState;
using world::ObjectDesc;
using world::Observation;

enum class ActionFunction { GoTo, PickUp, Drop, Open, PutNextTo };

inline constexpr ActionFunction kAllFunctions[] = {ActionFunction::GoTo, ActionFunction::PickUp,
                                                   ActionFunction::Drop, ActionFunction::Open,
                                                   ActionFunction::PutNextTo};

std::string_view to_string(ActionFunction f);
/// Number of object descriptors (type + color) the function takes.
int arity(ActionFunction f);

struct HighLevelAction {
    ActionFunction function = ActionFunction::Drop;
    std::vector<ObjectDesc> arguments;

    friend bool operator==(const HighLevelAction&, const HighLevelAction&) = default;
};

HighLevelAction go_to(ObjectDesc d);
HighLevelAction pick_up(ObjectDesc d);
HighLevelAction drop();
HighLevelAction open(ObjectDesc d);
HighLevelAction put_next_to(ObjectDesc moved, ObjectDesc anchor);

/// Canonical surface form, e.g. "Open(type.door, color.red)".
std::string render(const HighLevelAction& a);

struct ParseResult {
    std::optional<HighLevelAction> action;
    std::string error;  // first violated grammar rule when action is empty

    explicit operator bool() const { return action.has_value(); }
};

/// Total over arbitrary input. Whitespace-insensitive; keywords and
/// vocabulary are case-insensitive.
ParseResult parse_action(std::string_view text);

/// Semantic check against what the agent can see. Returns the violated
/// precondition, or nullopt when the action is admissible.
std::optional<std::string> check_preconditions(const HighLevelAction& a, const Observation& obs);

// --- low-level policies ---------------------------------------------------

enum class ExecutionStatus { completed, blocked, budget_exhausted };

struct ExecutionOutcome {
    ExecutionStatus status = ExecutionStatus::completed;
    std::vector<world::PrimitiveAction> primitive_trace;
    std::string reason;
};

int default_macro_budget(const GridState& s);

/// Runs the action's low-level policy until its termination condition holds,
/// it gets blocked, or the primitive budget runs out. Partial effects persist.
std::pair<GridState, ExecutionOutcome> execute_macro(GridState state, const HighLevelAction& a, int budget);

// --- expert ---------------------------------------------------------------

struct ExpertStuck : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Demonstration policy. Reads the full state but only proposes actions that
/// are admissible under the agent's own observation. Throws std::logic_error
/// if the goal already holds and ExpertStuck if no subgoal applies.
HighLevelAction expert_next_action(const GridState& state, const world::GoalSpec& goal);

}  // namespace ragmod::actions
