#pragma once

#include "ragmod/actions.hpp"
#include "ragmod/world.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace ragmod::critics {

enum class FeedbackStatus { success, failure };
enum class CriticKind { none, syntax, semantics, low_level };

std::string_view to_string(CriticKind c);

struct Feedback {
    FeedbackStatus status = FeedbackStatus::success;
    CriticKind critic = CriticKind::none;
    std::string reason;

    bool ok() const { return status == FeedbackStatus::success; }

    static Feedback success() { return {}; }
    /// Empty reasons are replaced so a failure always carries one.
    static Feedback failure(CriticKind critic, std::string reason);

    friend bool operator==(const Feedback&, const Feedback&) = default;
};

/// "SUCCESS" or "FAILURE(<critic>): <reason>". Single line.
std::string render_feedback(const Feedback& f);

struct FeasibilityResult {
    world::GridState state;  // post-execution; unchanged on syntax/semantics failure
    std::optional<actions::HighLevelAction> action;
    Feedback feedback;
};

/// Syntax, then semantics (against obs), then low-level execution.
FeasibilityResult check_feasibility(const world::GridState& state, const world::Observation& obs,
                                    std::string_view raw_action, int budget);

}  // namespace ragmod::critics
