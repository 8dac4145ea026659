#include "egohome/planner/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace egohome::planner {

using namespace egohome::microhome;

namespace {

constexpr real kInf = 1e9;

// BFS over (cell, heading) with unit-cost turns, forward steps and
// open-door crossings.
struct StateDist {
    Grid2D<std::array<int, 4>> d;
    explicit StateDist(const WorldState& st) : d(st.grid.w, st.grid.h, {-1, -1, -1, -1}) {}
    int& at(int x, int y, int h) { return d.at(x, y)[size_t(h)]; }
};

int heading_index(int deg) { return ((deg % 360) + 360) % 360 / 90; }

StateDist state_bfs(const WorldState& st) {
    StateDist dist(st);
    std::queue<std::tuple<int, int, int>> q;
    const int sx = st.agent.cell_x(), sy = st.agent.cell_y();
    const int sh = heading_index(st.agent.heading_deg);
    dist.at(sx, sy, sh) = 0;
    q.push({sx, sy, sh});
    const int dx[4] = {1, 0, -1, 0}, dy[4] = {0, 1, 0, -1};  // heading 0,90,180,270
    while (!q.empty()) {
        auto [x, y, h] = q.front();
        q.pop();
        const int base = dist.at(x, y, h);
        auto visit = [&](int nx, int ny, int nh) {
            if (!st.grid.in_bounds(nx, ny)) return;
            if (dist.at(nx, ny, nh) >= 0) return;
            dist.at(nx, ny, nh) = base + 1;
            q.push({nx, ny, nh});
        };
        visit(x, y, (h + 1) % 4);
        visit(x, y, (h + 3) % 4);
        const int fx = x + dx[h], fy = y + dy[h];
        if (st.grid.in_bounds(fx, fy)) {
            if (cell_walkable(st, fx, fy)) visit(fx, fy, h);
            if (st.grid.at(fx, fy) == CellKind::Door) {
                bool open = false;
                for (const auto& o : st.objects)
                    if (o.kind == ObjectKind::Door && o.cx == fx && o.cy == fy && o.state_flag)
                        open = true;
                const int bx = fx + dx[h], by = fy + dy[h];
                if (open && st.grid.in_bounds(bx, by) && cell_walkable(st, bx, by)) visit(bx, by, h);
            }
        }
    }
    return dist;
}

const ObjectInstance* object_by_kind(const WorldState& st, const std::string& name) {
    const auto kind = kind_from_name(name);
    if (!kind) return nullptr;
    for (const auto& o : st.objects)
        if (o.kind == *kind) return &o;
    return nullptr;
}

// Steps until the agent stands adjacent to and facing `target` (0 when
// already there). The target may be inside a container, in which case the
// container anchors the goal cells.
real facing_distance(const WorldState& st, const ObjectInstance* target) {
    if (!target) return kInf;
    const ObjectInstance* anchor = target;
    if (target->held()) return kInf;
    for (const auto& o : st.objects)
        for (int c : o.contents)
            if (c == target->id) anchor = &o;
    StateDist dist = state_bfs(st);
    real best = kInf;
    const int dx[4] = {1, 0, -1, 0}, dy[4] = {0, 1, 0, -1};
    for (int h = 0; h < 4; ++h) {
        const int cx = anchor->cx - dx[h], cy = anchor->cy - dy[h];
        if (!st.grid.in_bounds(cx, cy) || !cell_walkable(st, cx, cy)) continue;
        const int d = dist.at(cx, cy, h);
        if (d >= 0) best = std::min(best, real(d));
    }
    return best;
}

// Static cell distance between two objects (for chained legs).
real object_leg(const WorldState& st, const ObjectInstance* a, const ObjectInstance* b) {
    if (!a || !b || a->held() || b->held()) return 0;
    return real(std::abs(a->cx - b->cx) + std::abs(a->cy - b->cy));
}

}  // namespace

real OracleMatcher::distance(const WorldState& st, const SubgoalSpec& spec, int anchor_room) {
    using K = SubgoalSpec::Kind;
    const ObjectInstance* a = object_by_kind(st, spec.object_a);
    const ObjectInstance* b = spec.object_b.empty() ? nullptr : object_by_kind(st, spec.object_b);

    switch (spec.kind) {
        case K::WalkTo:
            return facing_distance(st, a);
        case K::WalkThroughDoor: {
            const auto rooms = room_labels(st);
            const int cur = rooms.at(st.agent.cell_x(), st.agent.cell_y());
            if (anchor_room >= 0 && cur != anchor_room) return 0;
            // Distance to any cell in another room.
            StateDist dist = state_bfs(st);
            real best = kInf;
            for (int y = 0; y < st.grid.h; ++y)
                for (int x = 0; x < st.grid.w; ++x) {
                    if (rooms.at(x, y) < 0 || rooms.at(x, y) == cur) continue;
                    for (int h = 0; h < 4; ++h) {
                        const int d = dist.at(x, y, h);
                        if (d >= 0) best = std::min(best, real(d));
                    }
                }
            return best;
        }
        case K::Open:
            if (!a) return kInf;
            return a->state_flag ? 0 : 1 + facing_distance(st, a);
        case K::Close:
            if (!a) return kInf;
            return a->state_flag ? 1 + facing_distance(st, a) : 0;
        case K::SwitchOn:
            if (!a) return kInf;
            return a->state_flag ? 0 : 1 + facing_distance(st, a);
        case K::SwitchOff:
            if (!a) return kInf;
            return a->state_flag ? 1 + facing_distance(st, a) : 0;
        case K::Grab: {
            if (!a) return kInf;
            if (st.agent.held && *st.agent.held == a->id) return 0;
            real extra = st.agent.held ? 1 : 0;  // must put the held thing down first
            for (const auto& o : st.objects)
                for (int c : o.contents)
                    if (c == a->id && !o.state_flag) extra += 1;  // container shut
            return 1 + extra + facing_distance(st, a);
        }
        case K::PlaceOn: {
            if (!a || !b) return kInf;
            if (!a->held() && a->cx == b->cx && a->cy == b->cy) return 0;
            if (st.agent.held && *st.agent.held == a->id) return 1 + facing_distance(st, b);
            return 2 + facing_distance(st, a) + object_leg(st, a, b);
        }
        case K::PutIn: {
            if (!a || !b) return kInf;
            for (int c : b->contents)
                if (c == a->id) return 0;
            const real open_cost = b->state_flag ? 0 : 1;
            if (st.agent.held && *st.agent.held == a->id)
                return 1 + open_cost + facing_distance(st, b);
            return 2 + open_cost + facing_distance(st, a) + object_leg(st, a, b);
        }
        case K::SitOn: {
            if (!a) return kInf;
            if (st.agent.posture == Posture::Sitting) {
                real fdx, fdy;
                // facing check via the faced cell
                const real t = st.agent.heading_deg * M_PI / 180.0;
                fdx = std::cos(t);
                fdy = std::sin(t);
                const int fx = int(std::floor(st.agent.x + fdx));
                const int fy = int(std::floor(st.agent.y + fdy));
                if (fx == a->cx && fy == a->cy) return 0;
                return 2 + facing_distance(st, a);  // stand up, walk, sit again
            }
            return 1 + facing_distance(st, a);
        }
    }
    return kInf;
}

real OracleMatcher::score(const Candidate& cand, const Subgoal& subgoal) const {
    EGO_CHECK(cand.state.has_value(),
              "oracle matcher needs simulator states; pair it with the oracle world model");
    const SubgoalSpec spec = parse_subgoal(subgoal.text);
    const real d = distance(*cand.state, spec, subgoal.anchor_room);
    return 1.0 / (1.0 + d);
}

// --- scripted matcher -----------------------------------------------------------

real ScriptedMatcher::color_fraction(const nn::Tensor& img, const std::array<real, 3>& color,
                                     int y0, int y1, int x0, int x1) const {
    const int S = img.dim(1);
    if (y1 < 0) y1 = S;
    if (x1 < 0) x1 = S;
    const real pr = color[0], pg = color[1], pb = color[2];
    const real pnorm = std::max<real>(1e-6, std::sqrt(pr * pr + pg * pg + pb * pb));
    int match = 0, total = 0;
    const size_t plane = size_t(S) * S;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const size_t i = size_t(y) * S + x;
            const real r = img.data[i], g = img.data[plane + i], b = img.data[2 * plane + i];
            const real n = std::sqrt(r * r + g * g + b * b);
            ++total;
            if (n < 0.05) continue;
            const real dr = r / n - pr / pnorm;
            const real dg = g / n - pg / pnorm;
            const real db = b / n - pb / pnorm;
            if (dr * dr + dg * dg + db * db > 0.12 * 0.12) continue;
            const real ratio = n / pnorm;
            if (ratio < 0.30 || ratio > 1.15) continue;
            ++match;
        }
    return total ? real(match) / real(total) : 0.0;
}

namespace {

real luminance(const nn::Tensor& img) {
    const size_t plane = img.data.size() / 3;
    real s = 0;
    for (size_t i = 0; i < plane; ++i)
        s += 0.299 * img.data[i] + 0.587 * img.data[plane + i] + 0.114 * img.data[2 * plane + i];
    return s / real(plane);
}

real target_fraction(ObjectKind k) {
    switch (k) {
        case ObjectKind::Light:
            return 0.02;
        case ObjectKind::Plate:
        case ObjectKind::Bread:
        case ObjectKind::Juice:
        case ObjectKind::Pillow:
        case ObjectKind::Toaster:
            return 0.035;
        default:
            return 0.10;
    }
}

}  // namespace

real ScriptedMatcher::text_score(const nn::Tensor& img, const Subgoal& subgoal) const {
    using K = SubgoalSpec::Kind;
    const SubgoalSpec spec = parse_subgoal(subgoal.text);
    const auto kind_a = kind_from_name(spec.object_a);

    auto body_color = [&](ObjectKind k) { return style_.object_colors[int(k)]; };
    auto open_color = [&](ObjectKind k) {
        // Mirrors the renderer's open/on blend.
        const auto& b = style_.object_colors[int(k)];
        const auto& i = style_.interior_colors[int(k)];
        const real t = domain_of(k) == BinaryDomain::OpenClosed ? 0.85 : 0.6;
        return std::array<real, 3>{b[0] + (i[0] - b[0]) * t, b[1] + (i[1] - b[1]) * t,
                                   b[2] + (i[2] - b[2]) * t};
    };
    const int S = img.dim(1);
    // Held-object overlay region used by the renderer.
    const int hr0 = int(S * 0.78), hr1 = std::min(S, int(S * 0.95));
    const int hc0 = S / 2 - std::max(2, S / 9), hc1 = S / 2 + std::max(2, S / 9);

    switch (spec.kind) {
        case K::WalkTo: {
            if (!kind_a && spec.object_a != "door") return 0;
            const auto color = spec.object_a == "door" ? style_.object_colors[int(ObjectKind::Door)]
                                                       : body_color(*kind_a);
            const real frac = color_fraction(img, color);
            const real target = kind_a ? target_fraction(*kind_a) : 0.08;
            return std::min<real>(1.0, frac / target);
        }
        case K::WalkThroughDoor: {
            // Relative cue only: the view after crossing differs strongly
            // from the view recorded when the subgoal became active (the
            // agent was facing the doorway then).
            const real door_frac =
                color_fraction(img, style_.object_colors[int(ObjectKind::Door)]);
            return std::clamp<real>(1.0 - door_frac / 0.05, 0.0, 1.0);
        }
        case K::Open: {
            if (!kind_a) return 0;
            const real frac = color_fraction(img, open_color(*kind_a));
            return std::min<real>(1.0, frac / (0.4 * target_fraction(*kind_a)));
        }
        case K::Close: {
            if (!kind_a) return 0;
            const real closed = color_fraction(img, body_color(*kind_a));
            const real open = color_fraction(img, open_color(*kind_a));
            return std::min<real>(1.0, closed / (0.4 * target_fraction(*kind_a))) *
                   std::clamp<real>(1.0 - open / (0.2 * target_fraction(*kind_a)), 0.0, 1.0);
        }
        case K::SwitchOn:
        case K::SwitchOff: {
            if (!kind_a) return 0;
            if (*kind_a == ObjectKind::Light) {
                if (subgoal.anchor_luminance <= 0) return 0;
                const real lum = luminance(img);
                const real rel = (lum - subgoal.anchor_luminance) / (0.22 * subgoal.anchor_luminance);
                return std::clamp<real>(spec.kind == K::SwitchOn ? rel : -rel, 0.0, 1.0);
            }
            const real on = color_fraction(img, open_color(*kind_a));
            const real t = 0.3 * target_fraction(*kind_a);
            return spec.kind == K::SwitchOn
                       ? std::min<real>(1.0, on / t)
                       : std::clamp<real>(1.0 - on / t, 0.0, 1.0) *
                             std::min<real>(1.0, color_fraction(img, body_color(*kind_a)) /
                                                     target_fraction(*kind_a));
        }
        case K::Grab: {
            if (!kind_a) return 0;
            const real held = color_fraction(img, body_color(*kind_a), hr0, hr1, hc0, hc1);
            const real near = color_fraction(img, body_color(*kind_a));
            return std::max<real>(std::min<real>(1.0, held / 0.4),
                                  0.45 * std::min<real>(1.0, near / target_fraction(*kind_a)));
        }
        case K::PlaceOn: {
            const auto kind_b = kind_from_name(spec.object_b);
            if (!kind_a || !kind_b) return 0;
            const real held = color_fraction(img, body_color(*kind_a), hr0, hr1, hc0, hc1);
            const real frac_a = color_fraction(img, body_color(*kind_a));
            const real frac_b = color_fraction(img, body_color(*kind_b));
            const real placed = (held < 0.1 && frac_a > 0.3 * target_fraction(*kind_a)) ? 1.0 : 0.0;
            return 0.45 * std::min<real>(1.0, frac_b / target_fraction(*kind_b)) + 0.55 * placed;
        }
        case K::PutIn: {
            const auto kind_b = kind_from_name(spec.object_b);
            if (!kind_a || !kind_b) return 0;
            const real open_b = std::min<real>(
                1.0, color_fraction(img, open_color(*kind_b)) / (0.4 * target_fraction(*kind_b)));
            const real held = color_fraction(img, body_color(*kind_a), hr0, hr1, hc0, hc1);
            const real anywhere = color_fraction(img, body_color(*kind_a));
            const real gone = (held < 0.1 && anywhere < 0.015) ? 1.0 : 0.0;
            return 0.5 * open_b + 0.5 * gone;
        }
        case K::SitOn: {
            if (!kind_a) return 0;
            const real frac = color_fraction(img, body_color(*kind_a));
            return std::min<real>(1.0, frac / 0.30);
        }
    }
    return 0;
}

real ScriptedMatcher::score(const Candidate& cand, const Subgoal& subgoal) const {
    if (subgoal.image) {
        real d = 0;
        const auto& a = cand.image.data;
        const auto& b = subgoal.image->data;
        EGO_CHECK(a.size() == b.size(), "scripted matcher: image size mismatch");
        for (size_t i = 0; i < a.size(); ++i) d += std::fabs(a[i] - b[i]);
        d /= real(a.size());
        return 1.0 / (1.0 + d / 0.08);
    }
    return std::clamp<real>(text_score(cand.image, subgoal), 0.0, 1.0);
}

}  // namespace egohome::planner
