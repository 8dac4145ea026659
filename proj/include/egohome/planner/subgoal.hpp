#pragma once

#include <optional>
#include <string>
#include <vector>

#include "egohome/core/rng.hpp"
#include "egohome/microhome/types.hpp"

namespace egohome::planner {

// Parsed subgoal semantics; shared by the scripted and oracle matchers.
struct SubgoalSpec {
    enum class Kind {
        WalkTo,
        WalkThroughDoor,
        Open,
        Close,
        Grab,
        PlaceOn,
        PutIn,
        SwitchOn,
        SwitchOff,
        SitOn,
    };
    Kind kind;
    std::string object_a;  // primary object kind name ("bread", "door", ...)
    std::string object_b;  // destination for PlaceOn / PutIn
};

SubgoalSpec parse_subgoal(const std::string& text);  // throws on unparseable text

// Deterministic pattern expansion over the task template family. Mirrors the
// checked-in task file's expected subgoal lists.
std::vector<std::string> decompose_grammar(const std::string& instruction);

struct TaskDef {
    int id = 0;
    bool two_room = false;
    int house_id = 0;
    uint64_t seed = 0;
    std::string instruction;
    std::vector<std::string> expected_subgoals;
};

// Plain-text task file: one block per task.
std::vector<TaskDef> load_tasks(const std::string& path);
std::vector<TaskDef> builtin_tasks();  // loads resources/tasks.txt

// Builds the deterministic start state for a task: referenced objects are
// staged into the right rooms and prerequisite binary states are set.
microhome::WorldState make_task_state(const TaskDef& task);

// Per-episode variation: repositions the agent to a seeded random walkable
// cell inside its staged room with a random heading.
microhome::WorldState randomize_start(const microhome::WorldState& state, Rng& rng);

}  // namespace egohome::planner
