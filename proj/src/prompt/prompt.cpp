#include "ragmod/prompt.hpp"

#include "ragmod/actions.hpp"

#include <sstream>

namespace ragmod::prompt {

EnvDescriptor gridworld_descriptor() {
    std::ostringstream out;
    out << "from gridworld.actions import ";
    bool first = true;
    for (auto f : actions::kAllFunctions) {
        out << (first ? "" : ", ") << actions::to_string(f);
        first = false;
    }
    out << "\n\nclass type:\n";
    for (auto k : world::kAllKinds) out << "    " << world::to_string(k) << " = \"" << world::to_string(k) << "\"\n";
    out << "\nclass color:\n";
    for (auto c : world::kAllColors) out << "    " << world::to_string(c) << " = \"" << world::to_string(c) << "\"\n";
    out << "\n"
           "def GoTo(obj: type, obj_color: color):\n"
           "    \"\"\"Walk until adjacent to and facing the object.\"\"\"\n"
           "def PickUp(obj: type, obj_color: color):\n"
           "    \"\"\"Walk to the object and pick it up. The inventory holds one object.\"\"\"\n"
           "def Drop():\n"
           "    \"\"\"Drop the carried object on a free adjacent cell.\"\"\"\n"
           "def Open(obj: type.door, obj_color: color):\n"
           "    \"\"\"Walk to the door and open it. Locked doors need the key of the same color.\"\"\"\n"
           "def PutNextTo(obj: type, obj_color: color, target: type, target_color: color):\n"
           "    \"\"\"Carry obj to a free cell next to target and drop it there.\"\"\"\n"
           "\n"
           "# Each step records the goal, the previous action with its feasibility_feedback\n"
           "# and the observation: visible_objects, inventory, the facing cell and heading.\n"
           "# at=(dx,dy) is relative to the agent; x grows east, y grows south.\n"
           "# Answer with one line assigning the next action to the variable `action`,\n"
           "# e.g. action = Open(type.door, color.red)\n";
    return {out.str()};
}

std::vector<ExampleBlock> to_examples(const std::vector<memory::ScoredEntry>& retrieved) {
    std::vector<ExampleBlock> out;
    out.reserve(retrieved.size());
    for (const auto& r : retrieved) out.push_back({r.entry.interaction, r.entry.chosen_action});
    return out;
}

std::string build_prompt(const EnvDescriptor& env, const PromptContext& ctx) {
    std::string out = env.text;
    if (!out.empty() && out.back() != '\n') out += '\n';

    if (!ctx.examples.empty()) {
        out += "\n# in-context examples\n";
        for (std::size_t k = 0; k < ctx.examples.size(); ++k) {
            out += kExampleHeader + std::to_string(k + 1) + "\n";
            out += memory::serialize_interaction(ctx.examples[k].interaction);
            out += std::string(kCue) + " " + ctx.examples[k].chosen_action + "\n";
        }
    }

    out += "\n# task\ngoal=" + ctx.goal + "\n";

    if (!ctx.history.empty()) {
        out += "\n# history\n";
        for (std::size_t t = 0; t < ctx.history.size(); ++t) {
            const auto& h = ctx.history[t];
            out += "# step " + std::to_string(t + 1) + "\n";
            out += "observation=" + h.observation + "\n";
            out += std::string(kCue) + " " + h.action + "\n";
            out += "feasibility_feedback = " + h.feedback + "\n";
        }
    }

    out += "\n# current step\nobservation=" + ctx.current_observation + "\n";
    out += kCue;
    return out;
}

PromptContext truncate_history(PromptContext ctx, std::size_t max_steps) {
    if (ctx.history.size() > max_steps)
        ctx.history.erase(ctx.history.begin(),
                          ctx.history.begin() + static_cast<std::ptrdiff_t>(ctx.history.size() - max_steps));
    return ctx;
}

}  // namespace ragmod::prompt
