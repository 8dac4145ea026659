#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egohome/core/config.hpp"
#include "egohome/core/rng.hpp"
#include "egohome/flow/field.hpp"
#include "egohome/microhome/sim.hpp"

namespace egohome::dataset {

using microhome::Frame;
using microhome::Skill;
using microhome::Verb;

// --- Hierarchical sample addressing ------------------------------------------

// "/<action>/house_<h>/<agent>/<index>_<object>"; the object segment is
// omitted for object-free skills.
std::string trajectory_path(const std::string& action, int house, const std::string& agent,
                            int index, const std::string& object = "");

struct TrajectoryAddress {
    std::string action;
    int house = 0;
    std::string agent;
    int index = 0;
    std::string object;  // empty for object-free skills
};
TrajectoryAddress parse_trajectory_path(const std::string& path);

// --- Prompt phrases -----------------------------------------------------------

struct PromptRecord {
    std::string next_phrase;  // "next timestep: ..."
    std::string goal_phrase;  // "the goal state: ..."
};

// Seeded synonym tables loaded from a checked-in text resource.
class SynonymTable {
public:
    static const SynonymTable& instance();  // loads resources/verb_synonyms.txt
    static SynonymTable from_file(const std::string& path);

    const std::vector<std::string>& synonyms(Verb v) const { return table_[size_t(v)]; }
    // Maps any synonym (or canonical id) back to its verb.
    std::optional<Verb> verb_of(const std::string& phrase_verb) const;
    // Finds the verb whose synonym starts the text after an optional
    // "next timestep:" / "the goal state:" prefix.
    std::optional<Verb> verb_in_text(const std::string& text) const;

private:
    std::array<std::vector<std::string>, microhome::kNumVerbs> table_;
};

PromptRecord make_phrases(const Skill& skill, const std::optional<std::string>& object_name,
                          uint64_t template_seed, const SynonymTable& table = SynonymTable::instance());

// --- On-disk samples -----------------------------------------------------------

struct Sample {
    Frame x_t;
    std::string action_text;
    Frame x_next;
    flow::FlowField flow;
    std::string path;  // trajectory path + "/<pair index>"
};

// Sample directory layout: rgb.png, next_rgb.png, depth.raw, next_depth.raw,
// seg.raw, next_seg.raw, flow.flow, flow_color.png, prompt.json, meta.txt.
void write_sample(const std::string& root, const Sample& sample, const PromptRecord& prompt,
                  real flow_color_max_mag);
Sample load_sample(const std::string& dir);

struct DatasetManifest {
    std::string root;
    std::map<std::string, std::vector<std::string>> splits;  // split -> trajectory paths
    std::map<std::string, int> counts;                       // "<action>/house_<h>" -> samples
    real max_mag = 8.0;
    std::string config_echo;

    std::string serialize() const;
    static DatasetManifest parse(const std::string& text, const std::string& root);
    void save(const std::string& path) const;
    static DatasetManifest load(const std::string& path);

    std::vector<std::string> trajectories(const std::string& split) const;
};

// --- Generation -----------------------------------------------------------------

struct GenConfig {
    int houses = 3;                  // last house id is the validation split
    int agents = 2;
    int trajectories_per_skill = 2;  // per (house, agent, skill)
    int nav_episodes = 4;            // per (house, agent): multi-skill walks to a target
    int nav_max_skills = 10;
    int flow_episodes = 4;           // per (house, agent): random motion streams
    int flow_episode_skills = 8;
    uint64_t seed = 1;
    real max_mag = 8.0;              // flow color codec scale, recorded in the manifest
    int render_size = 64;
    bool restyled = false;           // use alt_style
    real motion_scale = 1.0;
    microhome::LayoutConfig layout;

    static GenConfig from_config(const Config& cfg);
};

// Rolls trajectories for every (skill, house, agent, index), writes samples
// and prompt JSON, and writes the manifest last. Deterministic in the seed.
// Infeasible (skill, house) pairs are logged to `skipped`, never fabricated.
DatasetManifest generate_dataset(const GenConfig& cfg, const std::string& root,
                                 const std::string& config_echo,
                                 std::vector<std::string>* skipped = nullptr);

// Sample directories of a trajectory, in pair order.
std::vector<std::string> trajectory_sample_dirs(const std::string& root, const std::string& traj_path);

}  // namespace egohome::dataset
