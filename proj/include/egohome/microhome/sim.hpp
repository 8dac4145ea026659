#pragma once

#include <optional>
#include <string>
#include <vector>

#include "egohome/core/config.hpp"
#include "egohome/core/rng.hpp"
#include "egohome/microhome/render.hpp"
#include "egohome/microhome/types.hpp"

namespace egohome::microhome {

struct LayoutConfig {
    int grid_w = 13;
    int grid_h = 11;
    int rooms = 2;
    int extra_objects = 4;   // placed beyond the core task set
    static LayoutConfig from_config(const Config& cfg, const std::string& prefix = "house.");
};

// Deterministic procedural house: >= 2 rooms joined by doors, core object
// set always present, every free floor cell reachable from the agent spawn.
WorldState build_house(int house_id, uint64_t seed, const LayoutConfig& config = {});

// Skills whose preconditions hold in `state`, sorted by (verb, target id).
std::vector<Skill> feasible_skills(const WorldState& state);

// Empty when feasible, otherwise the violated precondition.
std::optional<std::string> skill_violation(const WorldState& state, const Skill& skill);

struct StepResult {
    std::vector<Frame> frames;             // frames_per_skill entries
    std::vector<SceneSnapshot> snapshots;  // geometry per frame, for flow
    WorldState next_state;
};

// Executes a feasible skill as a multi-frame trajectory. Turns sweep heading
// linearly; translations and state sweeps follow a fixed decelerating
// profile. The final frame renders next_state exactly.
StepResult step_skill(const WorldState& state, const Skill& skill, int render_size = kRenderSize);

// Identical layout and semantics, different rendering style.
WorldState restyle(const WorldState& state, const StyleParams& style);

// Puts the world into a configuration where `verb` is feasible: stages the
// needed object state / held item and places the agent. Returns the staged
// state and the concrete skill, or nullopt when the house cannot support the
// verb at all.
std::optional<std::pair<WorldState, Skill>> stage_for_skill(const WorldState& base, Verb verb, Rng& rng);

// Walkability helpers shared with the planner and dataset generation.
bool cell_walkable(const WorldState& state, int cx, int cy);
// BFS over walkable cells; open doors connect their two neighbours. Returns
// per-cell step distance (-1 unreachable). Closed doors are impassable unless
// `doors_passable` treats every door as open (used for reachability audits).
Grid2D<int> bfs_distances(const WorldState& state, int fromx, int fromy, bool doors_passable = false);

// Cells from which the agent can face object `id` (adjacent, line of facing).
std::vector<std::pair<int, int>> facing_cells(const WorldState& state, int object_id);

int heading_towards(int fromx, int fromy, int tox, int toy);

// Connected-component label per floor cell, door cells acting as boundaries
// (-1 on walls/doors). Stable across object state changes.
Grid2D<int> room_labels(const WorldState& state);

}  // namespace egohome::microhome
