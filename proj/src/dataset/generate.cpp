#include <filesystem>
#include <queue>

#include "egohome/dataset/dataset.hpp"
#include "egohome/microhome/render.hpp"

namespace fs = std::filesystem;

namespace egohome::dataset {

using namespace egohome::microhome;

namespace {

const char* kAgentNames[] = {"Female4", "Male2", "Female1", "Male3"};

GenConfig gen_defaults() { return GenConfig{}; }

struct NavMove {
    int tox, toy;
    bool through_door;
};

std::optional<std::vector<NavMove>> nav_path(const WorldState& st, int fx, int fy, int tx, int ty) {
    struct Cell {
        int px = -1, py = -1;
        bool via_door = false;
        int dist = -1;
    };
    Grid2D<Cell> info(st.grid.w, st.grid.h);
    std::queue<std::pair<int, int>> q;
    info.at(fx, fy).dist = 0;
    q.push({fx, fy});
    const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
    while (!q.empty()) {
        auto [x, y] = q.front();
        q.pop();
        if (x == tx && y == ty) break;
        for (int d = 0; d < 4; ++d) {
            const int nx = x + dx[d], ny = y + dy[d];
            if (!st.grid.in_bounds(nx, ny)) continue;
            if (st.grid.at(nx, ny) == CellKind::Door) {
                bool open = false;
                for (const auto& o : st.objects)
                    if (o.kind == ObjectKind::Door && o.cx == nx && o.cy == ny && o.state_flag) open = true;
                const int bx = nx + dx[d], by = ny + dy[d];
                if (open && st.grid.in_bounds(bx, by) && cell_walkable(st, bx, by) &&
                    info.at(bx, by).dist < 0) {
                    info.at(bx, by) = {x, y, true, info.at(x, y).dist + 1};
                    q.push({bx, by});
                }
                continue;
            }
            if (!cell_walkable(st, nx, ny) || info.at(nx, ny).dist >= 0) continue;
            info.at(nx, ny) = {x, y, false, info.at(x, y).dist + 1};
            q.push({nx, ny});
        }
    }
    if (info.at(tx, ty).dist < 0) return std::nullopt;
    std::vector<NavMove> moves;
    int x = tx, y = ty;
    while (!(x == fx && y == fy)) {
        const Cell& c = info.at(x, y);
        moves.push_back({x, y, c.via_door});
        x = c.px;
        y = c.py;
    }
    std::reverse(moves.begin(), moves.end());
    return moves;
}

std::vector<Skill> turns_to(int from_deg, int to_deg) {
    std::vector<Skill> out;
    const int delta = ((to_deg - from_deg) % 360 + 360) % 360;
    if (delta == 90) out.push_back({Verb::TurnLeft, std::nullopt});
    if (delta == 270) out.push_back({Verb::TurnRight, std::nullopt});
    if (delta == 180) {
        out.push_back({Verb::TurnLeft, std::nullopt});
        out.push_back({Verb::TurnLeft, std::nullopt});
    }
    return out;
}

// Skills that drive the agent adjacent to, and facing, an object. Expects
// doors along the way to be open.
std::optional<std::vector<Skill>> skills_towards(const WorldState& st, int object_id, Rng& rng) {
    auto cells = facing_cells(st, object_id);
    if (cells.empty()) return std::nullopt;
    // Deterministic choice among reachable facing cells.
    for (size_t i = cells.size(); i > 1; --i)
        std::swap(cells[i - 1], cells[size_t(rng.uniform_int(int(i)))]);
    for (auto [tx, ty] : cells) {
        const auto path = nav_path(st, st.agent.cell_x(), st.agent.cell_y(), tx, ty);
        if (!path) continue;
        std::vector<Skill> skills;
        int heading = st.agent.heading_deg;
        int cx = st.agent.cell_x(), cy = st.agent.cell_y();
        for (const auto& mv : *path) {
            const int want = heading_towards(cx, cy, mv.tox, mv.toy);
            for (auto& t : turns_to(heading, want)) skills.push_back(t);
            heading = want;
            skills.push_back({mv.through_door ? Verb::WalkThrough : Verb::WalkForward, std::nullopt});
            cx = mv.tox;
            cy = mv.toy;
        }
        const ObjectInstance* obj = st.find_object(object_id);
        const int want = heading_towards(cx, cy, obj->cx, obj->cy);
        for (auto& t : turns_to(heading, want)) skills.push_back(t);
        return skills;
    }
    return std::nullopt;
}

struct Rollout {
    std::vector<Frame> frames;
    std::vector<SceneSnapshot> snapshots;
    std::vector<Skill> frame_skill;  // skill that produced each frame
    WorldState end_state;
};

std::optional<Rollout> roll_skills(const WorldState& start, const std::vector<Skill>& skills,
                                   int render_size) {
    Rollout r;
    r.end_state = start;
    for (const auto& s : skills) {
        if (skill_violation(r.end_state, s)) return std::nullopt;
        auto res = step_skill(r.end_state, s, render_size);
        for (size_t i = 0; i < res.frames.size(); ++i) {
            r.frames.push_back(std::move(res.frames[i]));
            r.snapshots.push_back(std::move(res.snapshots[i]));
            r.frame_skill.push_back(s);
        }
        r.end_state = res.next_state;
    }
    return r;
}

std::optional<std::string> object_name_of(const WorldState& st, const Skill& skill) {
    if (!skill.target) return std::nullopt;
    const ObjectInstance* o = st.find_object(*skill.target);
    EGO_CHECK(o, "skill target %d missing", *skill.target);
    return std::string(kind_name(o->kind));
}

// Writes every consecutive pair of a rollout as a sample directory.
int write_rollout(const std::string& root, const std::string& traj_path, const Rollout& roll,
                  const WorldState& state_for_names, const std::string& goal_phrase, uint64_t phrase_seed,
                  real max_mag) {
    int written = 0;
    for (size_t i = 0; i + 1 < roll.frames.size(); ++i) {
        const Skill& pair_skill = roll.frame_skill[i + 1];
        const auto obj = object_name_of(state_for_names, pair_skill);
        PromptRecord prompt = make_phrases(pair_skill, obj, phrase_seed);
        if (!goal_phrase.empty()) prompt.goal_phrase = goal_phrase;
        Sample s;
        s.x_t = roll.frames[i];
        s.x_next = roll.frames[i + 1];
        s.flow = ground_truth_flow(roll.frames[i], roll.frames[i + 1], roll.snapshots[i],
                                   roll.snapshots[i + 1]);
        s.action_text = prompt.next_phrase;
        s.path = traj_path + strf("/%zu", i);
        write_sample(root, s, prompt, max_mag);
        ++written;
    }
    return written;
}

}  // namespace

GenConfig GenConfig::from_config(const Config& cfg) {
    GenConfig g = gen_defaults();
    g.houses = cfg.get_int("data.houses", g.houses);
    g.agents = cfg.get_int("data.agents", g.agents);
    g.trajectories_per_skill = cfg.get_int("data.trajectories_per_skill", g.trajectories_per_skill);
    g.nav_episodes = cfg.get_int("data.nav_episodes", g.nav_episodes);
    g.nav_max_skills = cfg.get_int("data.nav_max_skills", g.nav_max_skills);
    g.flow_episodes = cfg.get_int("data.flow_episodes", g.flow_episodes);
    g.flow_episode_skills = cfg.get_int("data.flow_episode_skills", g.flow_episode_skills);
    g.seed = uint64_t(cfg.get_i64("seed", int64_t(g.seed)));
    g.max_mag = cfg.get_real("data.max_mag", g.max_mag);
    g.render_size = cfg.get_int("data.render_size", g.render_size);
    g.restyled = cfg.get_bool("data.restyled", g.restyled);
    g.motion_scale = cfg.get_real("data.motion_scale", g.motion_scale);
    g.layout = microhome::LayoutConfig::from_config(cfg);
    EGO_CONFIG_CHECK(g.houses >= 2, "data.houses must be >= 2 (train + validation)");
    EGO_CONFIG_CHECK(g.agents >= 1 && g.agents <= 4, "data.agents must be in [1,4]");
    EGO_CONFIG_CHECK(g.trajectories_per_skill >= 1, "data.trajectories_per_skill must be >= 1");
    return g;
}

DatasetManifest generate_dataset(const GenConfig& cfg, const std::string& root,
                                 const std::string& config_echo, std::vector<std::string>* skipped) {
    std::error_code ec;
    fs::create_directories(root, ec);
    EGO_CHECK(!ec, "cannot create dataset root: %s", root.c_str());

    DatasetManifest manifest;
    manifest.root = root;
    manifest.max_mag = cfg.max_mag;
    manifest.config_echo = config_echo;

    auto log_skip = [&](const std::string& msg) {
        if (skipped) skipped->push_back(msg);
    };

    for (int house = 0; house < cfg.houses; ++house) {
        WorldState base = build_house(house, cfg.seed, cfg.layout);
        if (cfg.restyled) {
            base = restyle(base, alt_style(cfg.motion_scale));
        } else if (cfg.motion_scale != 1.0) {
            StyleParams s = base.style;
            s.motion_scale = cfg.motion_scale;
            base = restyle(base, s);
        }
        const std::string split = house == cfg.houses - 1 ? "val" : "train";

        for (int agent_i = 0; agent_i < cfg.agents; ++agent_i) {
            const std::string agent = kAgentNames[agent_i];

            for (int v = 0; v < kNumVerbs; ++v) {
                const Verb verb = Verb(v);
                for (int index = 0; index < cfg.trajectories_per_skill; ++index) {
                    Rng rng(Rng::derive(cfg.seed, {uint64_t(house), uint64_t(agent_i), uint64_t(v),
                                                   uint64_t(index), 0xA11}));
                    auto staged = stage_for_skill(base, verb, rng);
                    if (!staged) {
                        log_skip(strf("skip %s house_%d %s #%d: no feasible staging", verb_name(verb),
                                      house, agent.c_str(), index));
                        continue;
                    }
                    auto roll = roll_skills(staged->first, {staged->second}, cfg.render_size);
                    if (!roll) {
                        log_skip(strf("skip %s house_%d %s #%d: rollout infeasible", verb_name(verb),
                                      house, agent.c_str(), index));
                        continue;
                    }
                    const auto obj = object_name_of(staged->first, staged->second);
                    const std::string tpath =
                        trajectory_path(verb_name(verb), house, agent, index, obj.value_or(""));
                    const uint64_t phrase_seed =
                        Rng::derive(cfg.seed, {uint64_t(house), uint64_t(agent_i), uint64_t(v),
                                               uint64_t(index), 0xFA5E});
                    const int n = write_rollout(root, tpath, *roll, staged->first, "", phrase_seed,
                                                cfg.max_mag);
                    manifest.splits[split].push_back(tpath);
                    manifest.counts[strf("%s/house_%d", verb_name(verb), house)] += n;
                }
            }

            // Navigation episodes: drive toward a named object; these give the
            // subgoal model its walk-to supervision and the flow predictor its
            // cross-skill pairs.
            if (cfg.motion_scale == 1.0) {
                for (int e = 0; e < cfg.nav_episodes; ++e) {
                    Rng rng(Rng::derive(cfg.seed, {uint64_t(house), uint64_t(agent_i), uint64_t(e), 0x9AF}));
                    WorldState st = base;
                    for (auto& o : st.objects)
                        if (o.kind == ObjectKind::Door) o.state_flag = true;
                    // Random start pose.
                    std::vector<std::pair<int, int>> cells;
                    for (int y = 1; y < st.grid.h - 1; ++y)
                        for (int x = 1; x < st.grid.w - 1; ++x)
                            if (cell_walkable(st, x, y)) cells.push_back({x, y});
                    const auto [sx, sy] = cells[size_t(rng.uniform_int(int(cells.size())))];
                    st.agent.x = sx + 0.5;
                    st.agent.y = sy + 0.5;
                    st.agent.heading_deg = 90 * rng.uniform_int(4);
                    // Random named target object.
                    std::vector<int> ids;
                    for (const auto& o : st.objects)
                        if (!o.held() && o.kind != ObjectKind::Door) ids.push_back(o.id);
                    const int target = ids[size_t(rng.uniform_int(int(ids.size())))];
                    auto skills = skills_towards(st, target, rng);
                    if (!skills || skills->empty() || int(skills->size()) > cfg.nav_max_skills) {
                        log_skip(strf("skip walk_to house_%d %s #%d: no usable path", house,
                                      agent.c_str(), e));
                        continue;
                    }
                    auto roll = roll_skills(st, *skills, cfg.render_size);
                    if (!roll) {
                        log_skip(strf("skip walk_to house_%d %s #%d: rollout infeasible", house,
                                      agent.c_str(), e));
                        continue;
                    }
                    const std::string obj_name = kind_name(st.find_object(target)->kind);
                    const std::string tpath = trajectory_path("walk_to", house, agent, e, obj_name);
                    const std::string goal = "the goal state: walk to the " + obj_name;
                    const uint64_t phrase_seed =
                        Rng::derive(cfg.seed, {uint64_t(house), uint64_t(agent_i), uint64_t(e), 0x90A1});
                    const int n = write_rollout(root, tpath, *roll, st, goal, phrase_seed, cfg.max_mag);
                    manifest.splits[split].push_back(tpath);
                    manifest.counts[strf("walk_to/house_%d", house)] += n;
                }
            }

            // Random motion streams: consecutive flows across skill boundaries.
            for (int e = 0; e < cfg.flow_episodes; ++e) {
                Rng rng(Rng::derive(cfg.seed, {uint64_t(house), uint64_t(agent_i), uint64_t(e), 0xF10E}));
                WorldState st = base;
                for (auto& o : st.objects)
                    if (o.kind == ObjectKind::Door && rng.uniform() < 0.8) o.state_flag = true;
                std::vector<std::pair<int, int>> cells;
                for (int y = 1; y < st.grid.h - 1; ++y)
                    for (int x = 1; x < st.grid.w - 1; ++x)
                        if (cell_walkable(st, x, y)) cells.push_back({x, y});
                const auto [sx, sy] = cells[size_t(rng.uniform_int(int(cells.size())))];
                st.agent.x = sx + 0.5;
                st.agent.y = sy + 0.5;
                st.agent.heading_deg = 90 * rng.uniform_int(4);

                std::vector<Skill> seq;
                WorldState cur = st;
                for (int k = 0; k < cfg.flow_episode_skills; ++k) {
                    const auto feas = feasible_skills(cur);
                    if (feas.empty()) break;
                    std::vector<Skill> motion, other;
                    for (const auto& s : feas) {
                        const bool m = s.verb == Verb::WalkForward || s.verb == Verb::TurnLeft ||
                                       s.verb == Verb::TurnRight || s.verb == Verb::WalkThrough;
                        (m ? motion : other).push_back(s);
                    }
                    const auto& pool = (!motion.empty() && (other.empty() || rng.uniform() < 0.75)) ? motion : other;
                    const Skill s = pool[size_t(rng.uniform_int(int(pool.size())))];
                    seq.push_back(s);
                    cur = step_skill(cur, s, 8).next_state;  // cheap dry-run stepping
                }
                if (seq.size() < 2) {
                    log_skip(strf("skip episode house_%d %s #%d: too short", house, agent.c_str(), e));
                    continue;
                }
                auto roll = roll_skills(st, seq, cfg.render_size);
                if (!roll) {
                    log_skip(strf("skip episode house_%d %s #%d: rollout infeasible", house,
                                  agent.c_str(), e));
                    continue;
                }
                const std::string tpath = trajectory_path("episode", house, agent, e, "");
                const uint64_t phrase_seed =
                    Rng::derive(cfg.seed, {uint64_t(house), uint64_t(agent_i), uint64_t(e), 0xBEEF});
                const int n = write_rollout(root, tpath, *roll, st, "", phrase_seed, cfg.max_mag);
                manifest.splits[split].push_back(tpath);
                manifest.counts[strf("episode/house_%d", house)] += n;
            }
        }
    }

    manifest.save((fs::path(root) / "manifest.txt").string());
    return manifest;
}

}  // namespace egohome::dataset
