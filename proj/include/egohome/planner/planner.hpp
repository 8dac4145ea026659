#pragma once

#include "egohome/dynamics/model.hpp"
#include "egohome/flowpred/flowpred.hpp"
#include "egohome/planner/matcher.hpp"

namespace egohome::planner {

struct PlanInputs {
    const microhome::WorldState& true_state;  // hidden from learned models
    const nn::Tensor& x_t;                    // current observation, model res
    const flow::FlowField& prev_flow;         // at model res
};

class WorldModel {
public:
    virtual ~WorldModel() = default;
    // Imagines the next observation for one candidate skill; nullopt on a
    // per-candidate failure (the candidate is excluded and logged).
    virtual std::optional<Candidate> imagine(const PlanInputs& in, const microhome::Skill& skill,
                                             uint64_t seed) = 0;
    virtual const char* name() const = 0;
};

// The simulator itself: steps a copy of the true state and renders it.
class OracleWorldModel : public WorldModel {
public:
    explicit OracleWorldModel(int model_size) : model_size_(model_size) {}
    std::optional<Candidate> imagine(const PlanInputs& in, const microhome::Skill& skill,
                                     uint64_t seed) override;
    const char* name() const override { return "oracle"; }

private:
    int model_size_;
};

enum class FlowMode { None, Previous, Predicted };

// Flow-conditioned diffusion dynamics (optionally fed by the flow
// predictor) as the imagination backend.
class LearnedWorldModel : public WorldModel {
public:
    LearnedWorldModel(const dynamics::DenoiserModel* dyn, const flowpred::FlowPredictorModel* flow_model,
                      FlowMode mode, int sample_steps);
    std::optional<Candidate> imagine(const PlanInputs& in, const microhome::Skill& skill,
                                     uint64_t seed) override;
    const char* name() const override;

private:
    const dynamics::DenoiserModel* dyn_;
    const flowpred::FlowPredictorModel* flow_model_;
    FlowMode mode_;
    int sample_steps_;
};

struct PlanStepLog {
    std::vector<std::string> feasible;
    std::vector<real> scores;
    std::vector<std::string> excluded;  // candidate failures
    std::string chosen;
};

// Scores every feasible skill's imagined outcome against the active subgoal
// and returns the argmax (ties resolve to the canonical feasible order).
std::pair<microhome::Skill, std::vector<real>> plan_step(const PlanInputs& in, const Subgoal& subgoal,
                                                         WorldModel& wm,
                                                         const std::vector<microhome::Skill>& feasible,
                                                         GoalMatcher& matcher, uint64_t seed,
                                                         PlanStepLog* log = nullptr);

struct EpisodeConfig {
    bool image_subgoals = false;
    int max_steps = 80;
    int model_size = 64;
    int subgoal_sample_steps = 8;
    uint64_t seed = 1;
};

struct EpisodeResult {
    bool success = false;
    int steps_taken = 0;
    std::vector<int> subgoal_done_step;  // step index when each subgoal completed
    std::vector<std::string> actions;    // executed skills, in order
    std::string log_jsonl;               // one JSON object per line
};

// Decompose -> (optionally materialize image subgoals) -> loop:
// done-check, plan one step, execute, re-observe.
EpisodeResult run_episode(microhome::WorldState env, const std::string& instruction, WorldModel& wm,
                          GoalMatcher& matcher, const EpisodeConfig& cfg,
                          const dynamics::DenoiserModel* subgoal_model = nullptr);

// Fills subgoal images by sampling the subgoal diffusion model conditioned on
// the current observation. Failures are reported via the returned flags; the
// plan stays usable in text mode.
std::vector<bool> materialize_image_subgoals(std::vector<Subgoal>& subgoals,
                                             const dynamics::DenoiserModel& subgoal_model,
                                             const nn::Tensor& x_t, int sample_steps, uint64_t seed);

// Trivial no-world-model baseline: picks a feasible skill whose verb+target
// textually matches the active subgoal, otherwise a seeded random choice.
microhome::Skill greedy_baseline_step(const microhome::WorldState& state,
                                      const std::vector<microhome::Skill>& feasible,
                                      const Subgoal& subgoal, Rng& rng);

}  // namespace egohome::planner
