#include "egohome/planner/planner.hpp"

#include <json.hpp>

#include "egohome/flow/flow.hpp"
#include "egohome/nn/image_bridge.hpp"

namespace egohome::planner {

using namespace egohome::microhome;
using nlohmann::json;

std::optional<Candidate> OracleWorldModel::imagine(const PlanInputs& in, const Skill& skill,
                                                   uint64_t) {
    if (skill_violation(in.true_state, skill)) return std::nullopt;
    auto res = step_skill(in.true_state, skill, kRenderSize);
    Candidate cand;
    cand.skill = skill;
    cand.image = nn::tensor_from_image(downscale(res.frames.back().rgb, kRenderSize / model_size_));
    cand.state = std::move(res.next_state);
    return cand;
}

LearnedWorldModel::LearnedWorldModel(const dynamics::DenoiserModel* dyn,
                                     const flowpred::FlowPredictorModel* flow_model, FlowMode mode,
                                     int sample_steps)
    : dyn_(dyn), flow_model_(flow_model), mode_(mode), sample_steps_(sample_steps) {
    EGO_CHECK(dyn_, "learned world model: dynamics model required");
    EGO_CHECK((mode_ == FlowMode::None) == !dyn_->has_control,
              "learned world model: flow mode %d does not match the checkpoint's control branch",
              int(mode_));
    EGO_CHECK(mode_ != FlowMode::Predicted || flow_model_,
              "learned world model: predicted-flow mode needs the flow predictor");
}

const char* LearnedWorldModel::name() const {
    switch (mode_) {
        case FlowMode::None:
            return "dyn-noflow";
        case FlowMode::Previous:
            return "dyn-prevflow";
        default:
            return "dyn-predflow";
    }
}

std::optional<Candidate> LearnedWorldModel::imagine(const PlanInputs& in, const Skill& skill,
                                                    uint64_t seed) {
    try {
        const std::string action = std::string("next timestep: ") + verb_name(skill.verb);
        std::optional<nn::Tensor> hint;
        if (mode_ == FlowMode::Previous) {
            hint = nn::tensor_from_image(flow::flow_to_color(in.prev_flow, flow_model_
                                                                 ? flow_model_->cfg.max_mag
                                                                 : 8.0));
        } else if (mode_ == FlowMode::Predicted) {
            const auto predicted = flow_model_->predict(in.prev_flow, action);
            hint = nn::tensor_from_image(flow::flow_to_color(predicted, flow_model_->cfg.max_mag));
        }
        Candidate cand;
        cand.skill = skill;
        cand.image = dynamics::sample_next_obs_tok(*dyn_, in.x_t, int(skill.verb), hint,
                                                   sample_steps_, seed);
        return cand;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::pair<Skill, std::vector<real>> plan_step(const PlanInputs& in, const Subgoal& subgoal,
                                              WorldModel& wm, const std::vector<Skill>& feasible,
                                              GoalMatcher& matcher, uint64_t seed, PlanStepLog* log) {
    EGO_CHECK(!feasible.empty(), "plan_step: no feasible skills");
    std::vector<Candidate> cands;
    std::vector<size_t> cand_index;
    for (size_t i = 0; i < feasible.size(); ++i) {
        auto cand = wm.imagine(in, feasible[i], Rng::derive(seed, {uint64_t(i)}));
        if (!cand) {
            if (log) log->excluded.push_back(skill_to_string(feasible[i]));
            continue;
        }
        cands.push_back(std::move(*cand));
        cand_index.push_back(i);
    }
    EGO_CHECK(!cands.empty(), "plan_step: world model failed on every candidate");

    const std::vector<real> scores = matcher.score_batch(cands, subgoal);
    size_t best = 0;
    for (size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;  // strict: ties keep canonical order

    if (log) {
        for (size_t i = 0; i < cands.size(); ++i) {
            log->feasible.push_back(skill_to_string(cands[i].skill));
            log->scores.push_back(scores[i]);
        }
        log->chosen = skill_to_string(cands[best].skill);
    }
    return {cands[best].skill, scores};
}

std::vector<bool> materialize_image_subgoals(std::vector<Subgoal>& subgoals,
                                             const dynamics::DenoiserModel& subgoal_model,
                                             const nn::Tensor& x_t, int sample_steps, uint64_t seed) {
    std::vector<bool> ok(subgoals.size(), false);
    for (size_t i = 0; i < subgoals.size(); ++i) {
        try {
            const std::string goal_text = "the goal state: " + subgoals[i].text;
            subgoals[i].image = dynamics::sample_next_obs(subgoal_model, x_t, goal_text, std::nullopt,
                                                          sample_steps, Rng::derive(seed, {i, 0x906A1}));
            ok[i] = true;
        } catch (const std::exception&) {
            subgoals[i].image.reset();
        }
    }
    return ok;
}

namespace {

nn::Tensor observe(const WorldState& st, int model_size) {
    return nn::tensor_from_image(downscale(render(st).rgb, kRenderSize / model_size));
}

void activate_subgoal(Subgoal& sg, const WorldState& st, const nn::Tensor& obs,
                      const dynamics::DenoiserModel* subgoal_model, const EpisodeConfig& cfg,
                      size_t cursor, std::string* log) {
    const auto rooms = room_labels(st);
    sg.anchor_room = rooms.at(st.agent.cell_x(), st.agent.cell_y());
    real lum = 0;
    const size_t plane = obs.data.size() / 3;
    for (size_t i = 0; i < plane; ++i)
        lum += 0.299 * obs.data[i] + 0.587 * obs.data[plane + i] + 0.114 * obs.data[2 * plane + i];
    sg.anchor_luminance = lum / real(plane);
    if (cfg.image_subgoals && subgoal_model) {
        // Lazily (re)generated from the observation at activation time.
        std::vector<Subgoal> one{sg};
        const auto ok = materialize_image_subgoals(one, *subgoal_model, obs, cfg.subgoal_sample_steps,
                                                   Rng::derive(cfg.seed, {cursor, 0x5B60A1}));
        sg.image = one[0].image;
        if (!ok[0] && log) {
            json j;
            j["event"] = "subgoal_image_failure";
            j["cursor"] = cursor;
            *log += j.dump() + "\n";
        }
    }
}

}  // namespace

EpisodeResult run_episode(WorldState env, const std::string& instruction, WorldModel& wm,
                          GoalMatcher& matcher, const EpisodeConfig& cfg,
                          const dynamics::DenoiserModel* subgoal_model) {
    EpisodeResult result;
    const auto texts = decompose_grammar(instruction);
    std::vector<Subgoal> subgoals;
    for (const auto& t : texts) subgoals.push_back(Subgoal{t, std::nullopt, -1, -1});
    result.subgoal_done_step.assign(subgoals.size(), -1);

    {
        json j;
        j["event"] = "episode_start";
        j["instruction"] = instruction;
        j["subgoals"] = texts;
        j["seed"] = cfg.seed;
        j["image_subgoals"] = cfg.image_subgoals;
        result.log_jsonl += j.dump() + "\n";
    }

    nn::Tensor obs = observe(env, cfg.model_size);
    flow::FlowField prev_flow(cfg.model_size, cfg.model_size);
    size_t cursor = 0;
    activate_subgoal(subgoals[cursor], env, obs, subgoal_model, cfg, cursor, &result.log_jsonl);

    auto current_done = [&]() {
        Candidate view;
        view.image = obs;
        view.state = env;
        return matcher.done(view, subgoals[cursor]);
    };

    for (int step = 0; step <= cfg.max_steps; ++step) {
        while (cursor < subgoals.size() && current_done()) {
            result.subgoal_done_step[cursor] = result.steps_taken;
            ++cursor;
            if (cursor < subgoals.size())
                activate_subgoal(subgoals[cursor], env, obs, subgoal_model, cfg, cursor,
                                 &result.log_jsonl);
        }
        if (cursor >= subgoals.size()) {
            result.success = true;
            break;
        }
        if (step == cfg.max_steps) break;  // hard cap, no overrun

        const auto feasible = feasible_skills(env);
        if (feasible.empty()) {
            json j;
            j["event"] = "dead_end";
            j["step"] = step;
            result.log_jsonl += j.dump() + "\n";
            break;
        }

        PlanInputs in{env, obs, prev_flow};
        PlanStepLog step_log;
        const uint64_t step_seed = Rng::derive(cfg.seed, {uint64_t(step), 0x57E9});
        Skill chosen;
        try {
            chosen = plan_step(in, subgoals[cursor], wm, feasible, matcher, step_seed, &step_log).first;
        } catch (const std::exception& e) {
            json j;
            j["event"] = "plan_failure";
            j["step"] = step;
            j["error"] = e.what();
            result.log_jsonl += j.dump() + "\n";
            break;
        }

        auto res = step_skill(env, chosen, kRenderSize);
        env = res.next_state;
        obs = observe(env, cfg.model_size);
        const size_t n = res.frames.size();
        prev_flow = flow::downscale(
            ground_truth_flow(res.frames[n - 2], res.frames[n - 1], res.snapshots[n - 2],
                              res.snapshots[n - 1]),
            kRenderSize / cfg.model_size);
        ++result.steps_taken;
        result.actions.push_back(skill_to_string(chosen));

        json j;
        j["event"] = "step";
        j["step"] = step;
        j["cursor"] = cursor;
        j["feasible"] = step_log.feasible;
        j["scores"] = step_log.scores;
        j["excluded"] = step_log.excluded;
        j["chosen"] = step_log.chosen;
        j["seed"] = step_seed;
        result.log_jsonl += j.dump() + "\n";
    }

    json j;
    j["event"] = "episode_end";
    j["success"] = result.success;
    j["steps"] = result.steps_taken;
    result.log_jsonl += j.dump() + "\n";
    return result;
}

Skill greedy_baseline_step(const WorldState& state, const std::vector<Skill>& feasible,
                           const Subgoal& subgoal, Rng& rng) {
    EGO_CHECK(!feasible.empty(), "greedy baseline: no feasible skills");
    SubgoalSpec spec{SubgoalSpec::Kind::WalkTo, "", ""};
    bool parsed = true;
    try {
        spec = parse_subgoal(subgoal.text);
    } catch (...) {
        parsed = false;
    }
    if (parsed) {
        using K = SubgoalSpec::Kind;
        Verb want = Verb::WalkForward;
        bool has_verb = true;
        switch (spec.kind) {
            case K::Open: want = Verb::Open; break;
            case K::Close: want = Verb::Close; break;
            case K::Grab: want = Verb::Grab; break;
            case K::PlaceOn: want = Verb::PutBack; break;
            case K::PutIn: want = Verb::PutIn; break;
            case K::SwitchOn: want = Verb::SwitchOn; break;
            case K::SwitchOff: want = Verb::SwitchOff; break;
            case K::SitOn: want = Verb::Sit; break;
            case K::WalkThroughDoor: want = Verb::WalkThrough; break;
            default: has_verb = false; break;
        }
        if (has_verb) {
            const auto kind = kind_from_name(spec.object_a);
            for (const auto& s : feasible) {
                if (s.verb != want) continue;
                if (!s.target || !kind) return s;
                const ObjectInstance* obj = state.find_object(*s.target);
                if (obj && obj->kind == *kind) return s;
            }
        }
    }
    return feasible[size_t(rng.uniform_int(int(feasible.size())))];
}

}  // namespace egohome::planner
