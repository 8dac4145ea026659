#include "egohome/microhome/sim.hpp"

#include <algorithm>
#include <cmath>

namespace egohome::microhome {

namespace {

constexpr real kDeg2Rad = M_PI / 180.0;

void heading_dir(int heading_deg, real& dx, real& dy) {
    const real t = heading_deg * kDeg2Rad;
    dx = std::cos(t);
    dy = std::sin(t);
}

std::pair<int, int> faced_cell(const AgentPose& agent) {
    real dx, dy;
    heading_dir(agent.heading_deg, dx, dy);
    return {int(std::floor(agent.x + dx)), int(std::floor(agent.y + dy))};
}

const ObjectInstance* container_of(const WorldState& st, int id) {
    for (const auto& o : st.objects)
        for (int c : o.contents)
            if (c == id) return &o;
    return nullptr;
}

// Checks the swept segment from the agent position over `dist` cells.
// `through_door` permits crossing exactly one open door cell.
std::optional<std::string> path_violation(const WorldState& st, real dist, bool through_door) {
    real dx, dy;
    heading_dir(st.agent.heading_deg, dx, dy);
    const int steps = std::max(2, int(std::ceil(dist * 8)));
    bool crossed_door = false;
    for (int i = 1; i <= steps; ++i) {
        const real t = dist * real(i) / steps;
        const int cx = int(std::floor(st.agent.x + dx * t));
        const int cy = int(std::floor(st.agent.y + dy * t));
        if (!st.grid.in_bounds(cx, cy)) return "path leaves the grid";
        const CellKind ck = st.grid.at(cx, cy);
        if (ck == CellKind::Wall) return "path blocked by a wall";
        if (ck == CellKind::Door) {
            if (!through_door) return "path blocked by a doorway (use walk_through)";
            const ObjectInstance* door = nullptr;
            for (const auto& o : st.objects)
                if (o.kind == ObjectKind::Door && o.cx == cx && o.cy == cy) door = &o;
            if (!door || !door->state_flag) return "door is closed";
            crossed_door = true;
            continue;
        }
        if (!cell_walkable(st, cx, cy)) return "path blocked by an object";
    }
    // Landing inside a doorway is not a resting place.
    const int lx = int(std::floor(st.agent.x + dx * dist));
    const int ly = int(std::floor(st.agent.y + dy * dist));
    if (st.grid.at(lx, ly) == CellKind::Door) return "cannot stop inside a doorway";
    if (through_door && !crossed_door) return "no doorway along the path";
    return std::nullopt;
}

// Decelerating cumulative fractions for translations and state sweeps;
// turns use the linear profile.
std::vector<real> sweep_fractions(int n, bool linear) {
    std::vector<real> out(n);
    if (linear) {
        for (int i = 0; i < n; ++i) out[i] = real(i + 1) / n;
        return out;
    }
    real total = 0;
    for (int i = 1; i <= n; ++i) total += real(n - i + 1);
    real acc = 0;
    for (int i = 1; i <= n; ++i) {
        acc += real(n - i + 1);
        out[i - 1] = acc / total;
    }
    return out;
}

}  // namespace

std::optional<std::string> skill_violation(const WorldState& st, const Skill& skill) {
    if (verb_needs_target(skill.verb) && !skill.target) return "skill requires a target object";
    if (!verb_needs_target(skill.verb) && skill.target) return "skill takes no target object";

    if (st.agent.posture == Posture::Sitting && skill.verb != Verb::StandUp)
        return "agent is sitting; only stand_up is available";

    const auto [fx, fy] = faced_cell(st.agent);
    auto faced_object = [&](int id) -> std::optional<std::string> {
        const ObjectInstance* o = st.find_object(id);
        if (!o) return "target object does not exist";
        if (o->held()) return "target object is held";
        if (o->cx != fx || o->cy != fy) return "agent is not adjacent and facing the target";
        return std::nullopt;
    };

    switch (skill.verb) {
        case Verb::WalkForward:
            return path_violation(st, st.style.motion_scale, false);
        case Verb::TurnLeft:
        case Verb::TurnRight:
            return std::nullopt;
        case Verb::WalkThrough: {
            if (!st.grid.in_bounds(fx, fy) || st.grid.at(fx, fy) != CellKind::Door)
                return "agent is not facing a doorway";
            return path_violation(st, 2 * st.style.motion_scale, true);
        }
        case Verb::Open:
        case Verb::Close: {
            if (auto v = faced_object(*skill.target)) return v;
            const ObjectInstance* o = st.find_object(*skill.target);
            if (domain_of(o->kind) != BinaryDomain::OpenClosed) return "target cannot be opened or closed";
            if (skill.verb == Verb::Open && o->state_flag) return "target is already open";
            if (skill.verb == Verb::Close && !o->state_flag) return "target is already closed";
            return std::nullopt;
        }
        case Verb::Grab: {
            if (st.agent.held) return "agent is already holding an object";
            const ObjectInstance* o = st.find_object(*skill.target);
            if (!o) return "target object does not exist";
            if (!is_grabbable(o->kind)) return "target is not grabbable";
            if (o->held()) return "target is already held";
            if (const ObjectInstance* c = container_of(st, o->id)) {
                if (c->cx != fx || c->cy != fy) return "agent is not facing the container";
                if (!c->state_flag) return "container is closed";
                return std::nullopt;
            }
            if (o->cx != fx || o->cy != fy) return "agent is not adjacent and facing the target";
            return std::nullopt;
        }
        case Verb::PutBack: {
            if (!st.agent.held || *st.agent.held != *skill.target)
                return "agent is not holding the target object";
            if (!st.grid.in_bounds(fx, fy) || st.grid.at(fx, fy) != CellKind::Floor)
                return "faced cell cannot receive an object";
            for (const auto& o : st.objects) {
                if (o.held() || o.cx != fx || o.cy != fy) continue;
                if (is_surface(o.kind)) continue;  // stack on it
                if (is_grabbable(o.kind)) continue;
                return "faced cell is blocked";
            }
            return std::nullopt;
        }
        case Verb::PutIn: {
            if (!st.agent.held || *st.agent.held != *skill.target)
                return "agent is not holding the target object";
            for (const auto& o : st.objects)
                if (!o.held() && o.cx == fx && o.cy == fy && is_container(o.kind))
                    return o.state_flag ? std::nullopt
                                        : std::optional<std::string>("container is closed");
            return "agent is not facing a container";
        }
        case Verb::SwitchOn:
        case Verb::SwitchOff: {
            if (auto v = faced_object(*skill.target)) return v;
            const ObjectInstance* o = st.find_object(*skill.target);
            if (domain_of(o->kind) != BinaryDomain::OnOff) return "target has no switch";
            if (skill.verb == Verb::SwitchOn && o->state_flag) return "target is already on";
            if (skill.verb == Verb::SwitchOff && !o->state_flag) return "target is already off";
            return std::nullopt;
        }
        case Verb::Sit: {
            if (auto v = faced_object(*skill.target)) return v;
            const ObjectInstance* o = st.find_object(*skill.target);
            if (!is_sittable(o->kind)) return "target cannot be sat on";
            return std::nullopt;
        }
        case Verb::StandUp:
            return st.agent.posture == Posture::Sitting
                       ? std::nullopt
                       : std::optional<std::string>("agent is already standing");
        default:
            return "unknown verb";
    }
}

std::vector<Skill> feasible_skills(const WorldState& st) {
    std::vector<Skill> out;
    for (int v = 0; v < kNumVerbs; ++v) {
        const Verb verb = Verb(v);
        if (!verb_needs_target(verb)) {
            Skill s{verb, std::nullopt};
            if (!skill_violation(st, s)) out.push_back(s);
            continue;
        }
        for (const auto& o : st.objects) {
            Skill s{verb, o.id};
            if (!skill_violation(st, s)) out.push_back(s);
        }
    }
    std::sort(out.begin(), out.end(), [](const Skill& a, const Skill& b) {
        if (a.verb != b.verb) return int(a.verb) < int(b.verb);
        return a.target.value_or(-1) < b.target.value_or(-1);
    });
    return out;
}

StepResult step_skill(const WorldState& state, const Skill& skill, int render_size) {
    if (auto v = skill_violation(state, skill))
        throw std::runtime_error(strf("step_skill: %s is infeasible: %s",
                                      skill_to_string(skill).c_str(), v->c_str()));

    const int n = state.style.frames_per_skill;
    EGO_CHECK(n >= 2, "frames_per_skill must be >= 2");

    WorldState next = state;
    next.anim.clear();
    next.tick = state.tick + n;

    real dx, dy;
    heading_dir(state.agent.heading_deg, dx, dy);

    // Resolve the post-state first.
    real walk_dist = 0;
    switch (skill.verb) {
        case Verb::WalkForward:
            walk_dist = state.style.motion_scale;
            next.agent.x += dx * walk_dist;
            next.agent.y += dy * walk_dist;
            break;
        case Verb::WalkThrough:
            walk_dist = 2 * state.style.motion_scale;
            next.agent.x += dx * walk_dist;
            next.agent.y += dy * walk_dist;
            break;
        case Verb::TurnLeft:
            next.agent.heading_deg = (state.agent.heading_deg + 90) % 360;
            break;
        case Verb::TurnRight:
            next.agent.heading_deg = (state.agent.heading_deg + 270) % 360;
            break;
        case Verb::Open:
        case Verb::Close:
            next.find_object(*skill.target)->state_flag = skill.verb == Verb::Open;
            break;
        case Verb::SwitchOn:
        case Verb::SwitchOff:
            next.find_object(*skill.target)->state_flag = skill.verb == Verb::SwitchOn;
            break;
        case Verb::Grab: {
            ObjectInstance* o = next.find_object(*skill.target);
            for (auto& c : next.objects)
                std::erase(c.contents, o->id);
            o->cx = o->cy = -1;
            next.agent.held = o->id;
            break;
        }
        case Verb::PutBack: {
            ObjectInstance* o = next.find_object(*skill.target);
            const auto [fx, fy] = faced_cell(state.agent);
            o->cx = fx;
            o->cy = fy;
            next.agent.held.reset();
            break;
        }
        case Verb::PutIn: {
            ObjectInstance* o = next.find_object(*skill.target);
            const auto [fx, fy] = faced_cell(state.agent);
            for (auto& c : next.objects)
                if (!c.held() && c.cx == fx && c.cy == fy && is_container(c.kind)) {
                    c.contents.push_back(o->id);
                    o->cx = fx;
                    o->cy = fy;
                    break;
                }
            next.agent.held.reset();
            break;
        }
        case Verb::Sit:
            next.agent.posture = Posture::Sitting;
            break;
        case Verb::StandUp:
            next.agent.posture = Posture::Standing;
            break;
        default:
            break;
    }

    const bool linear = skill.verb == Verb::TurnLeft || skill.verb == Verb::TurnRight;
    const auto frac = sweep_fractions(n, linear);

    StepResult res;
    res.next_state = next;
    res.frames.reserve(n);
    res.snapshots.reserve(n);

    const real z0 = state.agent.posture == Posture::Sitting ? kEyeSitting : kEyeStanding;
    const real z1 = next.agent.posture == Posture::Sitting ? kEyeSitting : kEyeStanding;

    for (int i = 1; i <= n; ++i) {
        const real t = frac[i - 1];
        if (i == n) {
            // The final frame is exactly the canonical render of next_state.
            res.snapshots.push_back(build_snapshot(next));
            res.frames.push_back(render_frame(res.snapshots.back(), camera_for(next), render_size, next.tick));
            break;
        }
        WorldState mid = state;
        mid.anim.clear();
        CameraPose cam;
        cam.x = state.agent.x + (next.agent.x - state.agent.x) * t;
        cam.y = state.agent.y + (next.agent.y - state.agent.y) * t;
        cam.z = z0 + (z1 - z0) * t;
        real dh = real(next.agent.heading_deg) - real(state.agent.heading_deg);
        if (dh > 180) dh -= 360;
        if (dh < -180) dh += 360;
        cam.heading_deg = state.agent.heading_deg + dh * t;
        switch (skill.verb) {
            case Verb::Open:
            case Verb::Close: {
                const real from = skill.verb == Verb::Open ? 0.0 : 1.0;
                mid.anim[*skill.target] = from + (1 - 2 * from) * t;
                break;
            }
            case Verb::SwitchOn:
            case Verb::SwitchOff: {
                const real from = skill.verb == Verb::SwitchOn ? 0.0 : 1.0;
                mid.anim[*skill.target] = from + (1 - 2 * from) * t;
                break;
            }
            default:
                break;  // grab/put transitions snap on the final frame
        }
        res.snapshots.push_back(build_snapshot(mid));
        res.frames.push_back(render_frame(res.snapshots.back(), cam, render_size, state.tick + i));
    }
    return res;
}

WorldState restyle(const WorldState& state, const StyleParams& style) {
    EGO_CHECK(style.motion_scale > 0, "restyle: motion_scale must be positive");
    EGO_CHECK(style.frames_per_skill >= 2, "restyle: frames_per_skill must be >= 2");
    WorldState out = state;
    out.style = style;
    return out;
}

std::optional<std::pair<WorldState, Skill>> stage_for_skill(const WorldState& base, Verb verb, Rng& rng) {
    // A few attempts with different placements; deterministic via rng.
    for (int attempt = 0; attempt < 40; ++attempt) {
        WorldState st = base;
        st.anim.clear();

        // Random independent state variety on switches and uninvolved doors.
        for (auto& o : st.objects) {
            if (domain_of(o.kind) == BinaryDomain::OnOff && rng.uniform() < 0.35)
                o.state_flag = !o.state_flag;
        }

        auto place_facing = [&](int object_id) -> bool {
            auto cells = facing_cells(st, object_id);
            if (cells.empty()) return false;
            const auto [cx, cy] = cells[size_t(rng.uniform_int(int(cells.size())))];
            const ObjectInstance* o = st.find_object(object_id);
            st.agent.x = cx + 0.5;
            st.agent.y = cy + 0.5;
            st.agent.heading_deg = heading_towards(cx, cy, o->cx, o->cy);
            st.agent.posture = Posture::Standing;
            return true;
        };
        auto place_random = [&]() -> bool {
            std::vector<std::pair<int, int>> cells;
            for (int y = 1; y < st.grid.h - 1; ++y)
                for (int x = 1; x < st.grid.w - 1; ++x)
                    if (cell_walkable(st, x, y)) cells.push_back({x, y});
            if (cells.empty()) return false;
            const auto [cx, cy] = cells[size_t(rng.uniform_int(int(cells.size())))];
            st.agent.x = cx + 0.5;
            st.agent.y = cy + 0.5;
            st.agent.heading_deg = 90 * rng.uniform_int(4);
            st.agent.posture = Posture::Standing;
            return true;
        };
        auto pick_object = [&](auto&& pred) -> std::optional<int> {
            std::vector<int> ids;
            for (const auto& o : st.objects)
                if (pred(o)) ids.push_back(o.id);
            if (ids.empty()) return std::nullopt;
            return ids[size_t(rng.uniform_int(int(ids.size())))];
        };

        std::optional<Skill> skill;
        switch (verb) {
            case Verb::WalkForward:
            case Verb::TurnLeft:
            case Verb::TurnRight:
                if (!place_random()) return std::nullopt;
                skill = Skill{verb, std::nullopt};
                break;
            case Verb::WalkThrough: {
                auto door = pick_object([](const ObjectInstance& o) { return o.kind == ObjectKind::Door; });
                if (!door) return std::nullopt;
                st.find_object(*door)->state_flag = true;
                const ObjectInstance* d = st.find_object(*door);
                // Stand one cell before the door, facing it.
                const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
                std::vector<int> order{0, 1, 2, 3};
                for (size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[size_t(rng.uniform_int(int(i)))]);
                for (int k : order) {
                    const int cx = d->cx - dirs[k][0], cy = d->cy - dirs[k][1];
                    if (!cell_walkable(st, cx, cy)) continue;
                    st.agent.x = cx + 0.5;
                    st.agent.y = cy + 0.5;
                    st.agent.heading_deg = heading_towards(cx, cy, d->cx, d->cy);
                    st.agent.posture = Posture::Standing;
                    skill = Skill{verb, std::nullopt};
                    break;
                }
                break;
            }
            case Verb::Open:
            case Verb::Close: {
                auto id = pick_object([&](const ObjectInstance& o) {
                    return domain_of(o.kind) == BinaryDomain::OpenClosed && !o.held();
                });
                if (!id) return std::nullopt;
                st.find_object(*id)->state_flag = verb == Verb::Close;
                if (place_facing(*id)) skill = Skill{verb, *id};
                break;
            }
            case Verb::Grab: {
                auto id = pick_object([&](const ObjectInstance& o) {
                    return is_grabbable(o.kind) && !o.held() && !container_of(st, o.id);
                });
                if (!id) return std::nullopt;
                st.agent.held.reset();
                if (place_facing(*id)) skill = Skill{verb, *id};
                break;
            }
            case Verb::PutBack:
            case Verb::PutIn: {
                auto id = pick_object([&](const ObjectInstance& o) {
                    return is_grabbable(o.kind) && !container_of(st, o.id);
                });
                if (!id) return std::nullopt;
                ObjectInstance* o = st.find_object(*id);
                o->cx = o->cy = -1;
                st.agent.held = *id;
                if (verb == Verb::PutIn) {
                    auto cid = pick_object([&](const ObjectInstance& c) { return is_container(c.kind); });
                    if (!cid) return std::nullopt;
                    st.find_object(*cid)->state_flag = true;
                    if (place_facing(*cid)) skill = Skill{verb, *id};
                } else {
                    if (place_random()) skill = Skill{verb, *id};
                }
                break;
            }
            case Verb::SwitchOn:
            case Verb::SwitchOff: {
                auto id = pick_object([&](const ObjectInstance& o) {
                    return domain_of(o.kind) == BinaryDomain::OnOff;
                });
                if (!id) return std::nullopt;
                st.find_object(*id)->state_flag = verb == Verb::SwitchOff;
                if (place_facing(*id)) skill = Skill{verb, *id};
                break;
            }
            case Verb::Sit: {
                auto id = pick_object([&](const ObjectInstance& o) { return is_sittable(o.kind); });
                if (!id) return std::nullopt;
                if (place_facing(*id)) skill = Skill{verb, *id};
                break;
            }
            case Verb::StandUp: {
                auto id = pick_object([&](const ObjectInstance& o) { return is_sittable(o.kind); });
                if (!id) return std::nullopt;
                if (place_facing(*id)) {
                    st.agent.posture = Posture::Sitting;
                    skill = Skill{verb, std::nullopt};
                }
                break;
            }
            default:
                return std::nullopt;
        }

        if (skill && !skill_violation(st, *skill)) return std::make_pair(st, *skill);
    }
    return std::nullopt;
}

}  // namespace egohome::microhome
