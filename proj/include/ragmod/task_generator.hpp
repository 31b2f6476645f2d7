#pragma once

#include "ragmod/world.hpp"

#include <cstdint>

namespace ragmod::world {

struct GeneratorOptions {
    int room_size = 8;
    int synth_rooms = 1;      // per axis
    int bosslevel_rooms = 2;  // per axis
    int max_draws = 1000;
};

/// Deterministic per (seed, level, options). Internally resamples until the
/// expert solves the draw within the horizon without a single infeasible step.
TaskInstance generate_task(std::uint64_t seed, Level level, const GeneratorOptions& opts = {});

/// Runs the expert through the critic pipeline from the task's initial state.
bool expert_solves(const TaskInstance& task);

}  // namespace ragmod::world
