#pragma once

#include <optional>

#include "egohome/microhome/sim.hpp"
#include "egohome/nn/tensor.hpp"
#include "egohome/planner/subgoal.hpp"

namespace egohome::planner {

// An active subgoal plus anchors recorded when it became active; relative
// predicates (brightness, room changes) compare against these.
struct Subgoal {
    std::string text;
    std::optional<nn::Tensor> image;  // generated target view (image mode)
    int anchor_room = -1;
    real anchor_luminance = -1;
};

// One imagined outcome. The oracle world model fills `state`; learned world
// models provide the image only.
struct Candidate {
    microhome::Skill skill;
    nn::Tensor image;  // [3,S,S]
    std::optional<microhome::WorldState> state;
};

class GoalMatcher {
public:
    virtual ~GoalMatcher() = default;
    // Higher = closer to the subgoal; in [0,1]; deterministic for the
    // scripted and oracle implementations.
    virtual real score(const Candidate& cand, const Subgoal& subgoal) const = 0;
    virtual std::vector<real> score_batch(const std::vector<Candidate>& cands,
                                          const Subgoal& subgoal) const {
        std::vector<real> out;
        out.reserve(cands.size());
        for (const auto& c : cands) out.push_back(score(c, subgoal));
        return out;
    }
    virtual bool done(const Candidate& current, const Subgoal& subgoal) const {
        return score(current, subgoal) >= done_threshold;
    }

    real done_threshold = 0.8;
};

// Ground-truth matcher: scores by a shortest-path distance to subgoal
// completion over (cell, heading) states. Needs candidates with simulator
// states; used for planner-isolation runs.
class OracleMatcher : public GoalMatcher {
public:
    real score(const Candidate& cand, const Subgoal& subgoal) const override;
    // Exposed for tests: steps-to-completion (0 when satisfied).
    static real distance(const microhome::WorldState& state, const SubgoalSpec& spec, int anchor_room);
};

// Offline deterministic stand-in for the LMM judgment. Image-mode subgoals
// score by pixel distance through a fixed squashing; text mode by palette /
// brightness predicates on the candidate image.
class ScriptedMatcher : public GoalMatcher {
public:
    ScriptedMatcher(const microhome::StyleParams& style, real image_done_threshold = 0.55)
        : style_(style), image_done_threshold_(image_done_threshold) {}

    real score(const Candidate& cand, const Subgoal& subgoal) const override;
    bool done(const Candidate& current, const Subgoal& subgoal) const override {
        return score(current, subgoal) >=
               (subgoal.image.has_value() ? image_done_threshold_ : done_threshold);
    }

    // Fraction of pixels matching a palette color (chromaticity + brightness
    // window); the building block of the text-mode predicates.
    real color_fraction(const nn::Tensor& img, const std::array<real, 3>& color,
                        int y0 = 0, int y1 = -1, int x0 = 0, int x1 = -1) const;

private:
    real text_score(const nn::Tensor& img, const Subgoal& subgoal) const;
    microhome::StyleParams style_;
    real image_done_threshold_;
};

}  // namespace egohome::planner
