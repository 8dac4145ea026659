#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <thread>

#include "egohome/nn/image_bridge.hpp"
#include "egohome/planner/lmm.hpp"
#include "egohome/planner/planner.hpp"

using namespace egohome;
using namespace egohome::planner;
using namespace egohome::microhome;

namespace {

// Stub world model with pre-baked candidate images keyed by verb.
class StubWorldModel : public WorldModel {
public:
    int size;
    explicit StubWorldModel(int s) : size(s) {}
    std::optional<Candidate> imagine(const PlanInputs&, const Skill& skill, uint64_t) override {
        Candidate c;
        c.skill = skill;
        c.image = nn::Tensor({3, size, size}, real(int(skill.verb)) / kNumVerbs);
        return c;
    }
    const char* name() const override { return "stub"; }
};

// Matcher scoring by a fixed verb->score table.
class StubMatcher : public GoalMatcher {
public:
    std::map<Verb, real> table;
    real score(const Candidate& cand, const Subgoal&) const override {
        auto it = table.find(cand.skill.verb);
        return it == table.end() ? 0.0 : it->second;
    }
};

}  // namespace

TEST_SUITE("planner") {

TEST_CASE("decompose: compound instruction expands to ordered subgoals") {
    const auto subgoals =
        decompose_grammar("take the bread from the bench and place it on the plate");
    REQUIRE(subgoals.size() == 4);
    CHECK(subgoals[0] == "walk to the bench");
    CHECK(subgoals[1] == "grab the bread");
    CHECK(subgoals[2] == "walk to the plate");
    CHECK(subgoals[3] == "place the bread on the plate");

    // Single-skill instruction: one subgoal, itself.
    const auto single = decompose_grammar("switch off the light");
    REQUIRE(single.size() == 1);
    CHECK(single[0] == "switch off the light");

    // Deterministic.
    CHECK(decompose_grammar("switch off the light") == single);

    CHECK_THROWS(decompose_grammar("perform interpretive dance"));
}

TEST_CASE("task file: every expected subgoal list matches the grammar") {
    const auto tasks = builtin_tasks();
    REQUIRE(tasks.size() == 12);
    int single_room = 0;
    for (const auto& t : tasks) {
        CHECK(decompose_grammar(t.instruction) == t.expected_subgoals);
        if (!t.two_room) ++single_room;
        for (const auto& sg : t.expected_subgoals) CHECK_NOTHROW(parse_subgoal(sg));
    }
    CHECK(single_room == 6);
}

TEST_CASE("make_task_state stages rooms and prerequisite states") {
    for (const auto& task : builtin_tasks()) {
        const WorldState st = make_task_state(task);
        const auto rooms = room_labels(st);
        const int agent_room = rooms.at(st.agent.cell_x(), st.agent.cell_y());
        // The final destination object exists (object_b for place/put).
        const auto last = parse_subgoal(task.expected_subgoals.back());
        const std::string dest = last.object_b.empty() ? last.object_a : last.object_b;
        const auto kind = kind_from_name(dest.empty() ? "door" : dest);
        REQUIRE(kind.has_value());
        const ObjectInstance* target = nullptr;
        for (const auto& o : st.objects)
            if (o.kind == *kind) target = &o;
        REQUIRE(target != nullptr);
        if (task.two_room) {
            CHECK(rooms.at(target->cx, target->cy) != agent_room);
            for (const auto& o : st.objects)
                if (o.kind == ObjectKind::Door) CHECK(!o.state_flag);  // starts shut
        } else {
            CHECK(rooms.at(target->cx, target->cy) == agent_room);
        }
        // Prerequisites: switch-off targets start on; close targets start open.
        for (const auto& sg : task.expected_subgoals) {
            const auto spec = parse_subgoal(sg);
            if (spec.kind == SubgoalSpec::Kind::SwitchOff || spec.kind == SubgoalSpec::Kind::Close) {
                const auto k2 = kind_from_name(spec.object_a);
                for (const auto& o : st.objects)
                    if (o.kind == *k2) {
                        CHECK(o.state_flag);
                        break;
                    }
            }
        }
    }
}

TEST_CASE("plan_step: argmax with canonical tie-break") {
    WorldState st = build_house(0, 3);
    StubWorldModel wm(16);
    StubMatcher matcher;
    matcher.table[Verb::WalkForward] = 0.2;
    matcher.table[Verb::TurnLeft] = 0.9;
    matcher.table[Verb::TurnRight] = 0.4;

    nn::Tensor obs({3, 16, 16});
    flow::FlowField prev(16, 16);
    PlanInputs in{st, obs, prev};
    const std::vector<Skill> feasible = {{Verb::WalkForward, std::nullopt},
                                         {Verb::TurnLeft, std::nullopt},
                                         {Verb::TurnRight, std::nullopt}};
    Subgoal sg{"walk to the fridge", std::nullopt, -1, -1};
    auto [skill, scores] = plan_step(in, sg, wm, feasible, matcher, 1);
    CHECK(skill.verb == Verb::TurnLeft);

    matcher.table[Verb::TurnRight] = 0.9;  // tie with turn_left
    auto [skill2, scores2] = plan_step(in, sg, wm, feasible, matcher, 1);
    CHECK(skill2.verb == Verb::TurnLeft);  // canonical order wins

    // Positive scaling leaves the argmax unchanged.
    for (auto& [k, v] : matcher.table) v *= 0.37;
    auto [skill3, scores3] = plan_step(in, sg, wm, feasible, matcher, 1);
    CHECK(skill3.verb == skill2.verb);
}

TEST_CASE("oracle one-step choice equals the exhaustive distance argmin") {
    const auto task = builtin_tasks()[0];
    WorldState st = make_task_state(task);
    OracleWorldModel wm(32);
    OracleMatcher matcher;
    Subgoal sg{task.expected_subgoals[0], std::nullopt, -1, -1};
    const auto rooms = room_labels(st);
    sg.anchor_room = rooms.at(st.agent.cell_x(), st.agent.cell_y());

    nn::Tensor obs({3, 32, 32});
    flow::FlowField prev(32, 32);
    for (int trial = 0; trial < 5; ++trial) {
        const auto feasible = feasible_skills(st);
        REQUIRE(!feasible.empty());
        PlanInputs in{st, obs, prev};
        const auto [skill, scores] = plan_step(in, sg, wm, feasible, matcher, 7);

        // Exhaustive one-step oracle.
        const auto spec = parse_subgoal(sg.text);
        real best_d = 1e18;
        for (const auto& s : feasible) {
            auto res = step_skill(st, s, 8);
            best_d = std::min(best_d, OracleMatcher::distance(res.next_state, spec, sg.anchor_room));
        }
        auto chosen_res = step_skill(st, skill, 8);
        CHECK(OracleMatcher::distance(chosen_res.next_state, spec, sg.anchor_room) ==
              doctest::Approx(best_d));
        st = step_skill(st, skill, 8).next_state;
    }
}

TEST_CASE("run_episode: oracle stack solves a task; replay is identical") {
    const auto task = builtin_tasks()[0];
    const WorldState st = make_task_state(task);
    OracleWorldModel wm(32);
    OracleMatcher matcher;
    EpisodeConfig cfg;
    cfg.model_size = 32;
    cfg.max_steps = 80;
    cfg.seed = 5;
    const auto a = run_episode(st, task.instruction, wm, matcher, cfg);
    CHECK(a.success);
    CHECK(a.steps_taken <= 80);
    const auto b = run_episode(st, task.instruction, wm, matcher, cfg);
    CHECK(a.log_jsonl == b.log_jsonl);
    CHECK(a.actions == b.actions);
}

TEST_CASE("run_episode: already-satisfied subgoal succeeds in zero steps") {
    TaskDef task = builtin_tasks()[2];  // switch off the light
    WorldState st = make_task_state(task);
    for (auto& o : st.objects)
        if (o.kind == ObjectKind::Light) o.state_flag = false;  // already off
    OracleWorldModel wm(32);
    OracleMatcher matcher;
    EpisodeConfig cfg;
    cfg.model_size = 32;
    cfg.seed = 2;
    const auto res = run_episode(st, task.instruction, wm, matcher, cfg);
    CHECK(res.success);
    CHECK(res.steps_taken == 0);
}

TEST_CASE("run_episode: unreachable goal fails at exactly max_steps") {
    WorldState st = build_house(0, 9);
    // No pillow in the default core set at extra_objects=4 unless stacked.
    bool has_pillow = false;
    for (const auto& o : st.objects) has_pillow |= o.kind == ObjectKind::Pillow;
    REQUIRE(!has_pillow);
    OracleWorldModel wm(32);
    OracleMatcher matcher;
    EpisodeConfig cfg;
    cfg.model_size = 32;
    cfg.max_steps = 12;
    cfg.seed = 3;
    const auto res = run_episode(st, "grab the pillow", wm, matcher, cfg);
    CHECK(!res.success);
    CHECK(res.steps_taken == 12);
}

TEST_CASE("scripted matcher: image mode separates light-on from light-off by a margin") {
    WorldState st = build_house(0, 13);
    ObjectInstance* light = nullptr;
    for (auto& o : st.objects)
        if (o.kind == ObjectKind::Light) light = &o;
    REQUIRE(light);
    light->state_flag = true;
    const auto on_img = nn::tensor_from_image(downscale(render(st).rgb, 2));
    light->state_flag = false;
    const auto off_img = nn::tensor_from_image(downscale(render(st).rgb, 2));

    ScriptedMatcher matcher(st.style);
    Subgoal sg{"switch off the light", off_img, -1, -1};  // image-mode subgoal
    Candidate cand_on{Skill{Verb::TurnLeft, std::nullopt}, on_img, std::nullopt};
    Candidate cand_off{Skill{Verb::SwitchOff, light->id}, off_img, std::nullopt};
    CHECK(matcher.score(cand_off, sg) - matcher.score(cand_on, sg) > 0.05);
}

TEST_CASE("greedy baseline prefers the matching skill, else seeded random") {
    WorldState st = build_house(0, 3);
    Rng rng(4);
    auto staged = stage_for_skill(st, Verb::Open, rng);
    REQUIRE(staged);
    const auto feasible = feasible_skills(staged->first);
    Subgoal sg;
    const ObjectInstance* target = staged->first.find_object(*staged->second.target);
    sg.text = std::string("open the ") + kind_name(target->kind);
    Rng grng(1);
    const Skill chosen = greedy_baseline_step(staged->first, feasible, sg, grng);
    CHECK(chosen.verb == Verb::Open);

    Subgoal vague{"walk to the pillow", std::nullopt, -1, -1};
    Rng grng2(1);
    const Skill random_pick = greedy_baseline_step(staged->first, feasible, vague, grng2);
    bool in_feasible = false;
    for (const auto& s : feasible) in_feasible |= s == random_pick;
    CHECK(in_feasible);
}

TEST_CASE("lmm client: mock endpoint ranking, parse failure fallback, refusal without endpoint") {
    CHECK_THROWS_AS(LmmClient(LmmConfig{}), ConfigError);

    httplib::Server server;
    std::string mode = "ok";
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json reply;
        if (mode == "ok") {
            const auto body = nlohmann::json::parse(req.body);
            const size_t images = body["messages"][0]["content"].size() - 1;
            std::string scores = "[";
            for (size_t i = 0; i < images; ++i)
                scores += (i + 1 == images ? "0.9" : "0.1,");  // last candidate wins
            scores += "]";
            reply["choices"] = {{{"message", {{"content", "{\"scores\": " + scores + "}"}}}}};
        } else {
            reply["choices"] = {{{"message", {{"content", "gibberish without json"}}}}};
        }
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    LmmConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    cfg.retries = 0;
    LmmClient client(cfg);

    ScriptedMatcher fallback(default_style());
    LmmMatcher matcher(&client, &fallback);

    std::vector<Candidate> cands;
    for (int i = 0; i < 3; ++i)
        cands.push_back(Candidate{Skill{Verb(i), std::nullopt}, nn::Tensor({3, 8, 8}, 0.2 * i),
                                  std::nullopt});
    Subgoal sg{"walk to the fridge", std::nullopt, -1, -1};
    const auto scores = matcher.score_batch(cands, sg);
    REQUIRE(scores.size() == 3);
    CHECK(scores[2] == doctest::Approx(0.9));
    CHECK(matcher.fallback_count == 0);

    mode = "parse_error";
    const auto fallback_scores = matcher.score_batch(cands, sg);
    CHECK(matcher.fallback_count == 1);
    CHECK(fallback_scores.size() == 3);

    server.stop();
    server_thread.join();
}

}  // TEST_SUITE
