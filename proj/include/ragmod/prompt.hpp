#pragma once

#include "ragmod/memory.hpp"

#include <string>
#include <vector>

namespace ragmod::prompt {

/// Fixed environment prefix: importable action signatures, the argument
/// ontology and the output contract.
struct EnvDescriptor {
    std::string text;
};

EnvDescriptor gridworld_descriptor();

struct ExampleBlock {
    memory::Interaction interaction;
    std::string chosen_action;
};

struct HistoryStep {
    std::string observation;
    std::string action;
    std::string feedback;  // rendered
};

struct PromptContext {
    std::vector<ExampleBlock> examples;
    std::string goal;
    std::vector<HistoryStep> history;  // chronological
    std::string current_observation;
};

std::vector<ExampleBlock> to_examples(const std::vector<memory::ScoredEntry>& retrieved);

/// p_env; examples; goal; history; current observation; "action =" cue.
std::string build_prompt(const EnvDescriptor& env, const PromptContext& ctx);

/// Section headers used by build_prompt, exposed for trace inspection.
inline constexpr const char* kExampleHeader = "# example ";
inline constexpr const char* kCue = "action =";

PromptContext truncate_history(PromptContext ctx, std::size_t max_steps);

}  // namespace ragmod::prompt
