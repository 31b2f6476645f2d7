#include "ragmod/critics.hpp"

namespace ragmod::critics {

std::string_view to_string(CriticKind c) {
    switch (c) {
        case CriticKind::none: return "none";
        case CriticKind::syntax: return "syntax";
        case CriticKind::semantics: return "semantics";
        case CriticKind::low_level: return "low_level";
    }
    return "?";
}

Feedback Feedback::failure(CriticKind critic, std::string reason) {
    if (reason.empty()) reason = "unspecified failure";
    for (char& c : reason)
        if (c == '\n' || c == '\r') c = ' ';
    return {FeedbackStatus::failure, critic, std::move(reason)};
}

std::string render_feedback(const Feedback& f) {
    if (f.ok()) return "SUCCESS";
    std::string out = "FAILURE(";
    out += to_string(f.critic);
    out += "): ";
    out += f.reason;
    return out;
}

FeasibilityResult check_feasibility(const world::GridState& state, const world::Observation& obs,
                                    std::string_view raw_action, int budget) {
    auto parsed = actions::parse_action(raw_action);
    if (!parsed) return {state, std::nullopt, Feedback::failure(CriticKind::syntax, parsed.error)};

    if (auto violated = actions::check_preconditions(*parsed.action, obs))
        return {state, parsed.action, Feedback::failure(CriticKind::semantics, *violated)};

    auto [next, outcome] = actions::execute_macro(state, *parsed.action, budget);
    if (outcome.status != actions::ExecutionStatus::completed)
        return {std::move(next), parsed.action, Feedback::failure(CriticKind::low_level, outcome.reason)};
    return {std::move(next), parsed.action, Feedback::success()};
}

}  // namespace ragmod::critics
