#include "egohome/microhome/render.hpp"

#include <algorithm>
#include <cmath>

#include "egohome/core/rng.hpp"

namespace egohome::microhome {

namespace {

constexpr real kDeg2Rad = M_PI / 180.0;
constexpr real kMaxRange = 48.0;
constexpr real kHeldDepth = 0.45;

struct KindShape {
    real half, z0, z1;
    bool stacks;  // grabbables stack on surfaces sharing the cell
};

KindShape shape_of(ObjectKind k) {
    switch (k) {
        case ObjectKind::Fridge:    return {0.42, 0.0, 1.90, false};
        case ObjectKind::Microwave: return {0.34, 0.0, 1.20, false};
        case ObjectKind::Cabinet:   return {0.42, 0.0, 1.45, false};
        case ObjectKind::Light:     return {0.18, 1.75, 1.98, false};
        case ObjectKind::Stove:     return {0.42, 0.0, 1.00, false};
        case ObjectKind::Toaster:   return {0.24, 0.0, 0.80, false};
        case ObjectKind::Pc:        return {0.36, 0.0, 1.10, false};
        case ObjectKind::Plate:     return {0.30, 0.0, 0.10, true};
        case ObjectKind::Bread:     return {0.18, 0.0, 0.16, true};
        case ObjectKind::Pillow:    return {0.26, 0.0, 0.20, true};
        case ObjectKind::Juice:     return {0.14, 0.0, 0.35, true};
        case ObjectKind::Bench:     return {0.45, 0.0, 0.55, false};
        case ObjectKind::Sofa:      return {0.47, 0.0, 0.75, false};
        default:                    return {0.40, 0.0, 1.00, false};
    }
}

real open_fraction(const WorldState& state, const ObjectInstance& o) {
    auto it = state.anim.find(o.id);
    if (it != state.anim.end()) return it->second;
    return o.state_flag ? 1.0 : 0.0;
}

// Deterministic surface texture hash in [0,1).
real hash01(uint64_t salt, int64_t a, int64_t b) {
    uint64_t x = salt ^ (uint64_t(a) * 0x9e3779b97f4a7c15ull) ^ (uint64_t(b) * 0xc2b2ae3d27d4eb4full);
    return real(Rng::splitmix64(x) >> 11) * 0x1.0p-53;
}

struct Rgb {
    real r, g, b;
    Rgb operator*(real s) const { return {r * s, g * s, b * s}; }
};

Rgb mix(const Rgb& a, const Rgb& b, real t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

Rgb from_arr(const std::array<real, 3>& a) { return {a[0], a[1], a[2]}; }

// One vertical surface crossed by the column's ray.
struct VCand {
    real s;            // horizontal distance to the hit
    real z0, z1;
    int32_t seg;
    Rgb base;
    real along;        // surface coordinate for texturing
    uint64_t salt;
};

// A horizontal cap (object top/bottom) covered over an s interval.
struct HCand {
    real z;
    real s_in, s_out;
    int32_t seg;
    Rgb base;
    uint64_t salt;
    real px_off, py_off;  // ray origin for texture coords
};

Rgb object_base_color(const SceneSnapshot& scene, const SceneBox& box) {
    const auto& st = scene.style;
    Rgb body = from_arr(st.object_colors[int(box.kind)]);
    const BinaryDomain dom = domain_of(box.kind);
    if (dom == BinaryDomain::OpenClosed) {
        Rgb interior = from_arr(st.interior_colors[int(box.kind)]);
        if (box.has_contents) interior = mix(interior, Rgb{1, 1, 1}, 0.25);
        body = mix(body, interior, 0.85 * box.open_frac);
    } else if (dom == BinaryDomain::OnOff) {
        if (box.kind == ObjectKind::Light)
            body = body * (0.40 + 0.60 * box.open_frac);
        else
            body = mix(body, from_arr(st.interior_colors[int(box.kind)]), 0.6 * box.open_frac);
    }
    return body;
}

real face_shade(int face) {
    static const real shades[4] = {0.97, 0.84, 0.91, 1.00};
    return shades[face & 3];
}

}  // namespace

SceneSnapshot build_snapshot(const WorldState& state) {
    SceneSnapshot scene;
    scene.grid = state.grid;
    scene.style = state.style;

    std::set<int> contained;
    for (const auto& o : state.objects)
        for (int id : o.contents) contained.insert(id);

    // Stack small items that share a cell: blockers/surfaces at the bottom,
    // then plates, then the rest by id.
    std::map<std::pair<int, int>, std::vector<const ObjectInstance*>> by_cell;

    int lights = 0;
    real light_on = 0;
    for (const auto& o : state.objects) {
        if (o.kind == ObjectKind::Light) {
            ++lights;
            light_on += open_fraction(state, o);
        }
        if (o.kind == ObjectKind::Door) {
            // Door orientation from the neighbouring wall run.
            const bool x_plane = state.grid.in_bounds(o.cx, o.cy - 1) &&
                                 state.grid.at(o.cx, o.cy - 1) == CellKind::Wall;
            scene.doors.push_back({o.id, o.cx, o.cy, x_plane, open_fraction(state, o)});
            continue;
        }
        if (o.held()) continue;
        if (contained.count(o.id)) continue;
        by_cell[{o.cx, o.cy}].push_back(&o);
    }
    scene.ambient = 0.60 + 0.32 * (lights > 0 ? light_on / lights : 0.5);

    for (auto& [cell, objs] : by_cell) {
        std::stable_sort(objs.begin(), objs.end(), [](const ObjectInstance* a, const ObjectInstance* b) {
            auto rank = [](const ObjectInstance* o) {
                if (!shape_of(o->kind).stacks) return 0;
                return o->kind == ObjectKind::Plate ? 1 : 2;
            };
            if (rank(a) != rank(b)) return rank(a) < rank(b);
            return a->id < b->id;
        });
        real base_z = 0;
        for (const ObjectInstance* o : objs) {
            const KindShape sh = shape_of(o->kind);
            SceneBox box;
            box.id = o->id;
            box.kind = o->kind;
            box.cx = o->cx + 0.5;
            box.cy = o->cy + 0.5;
            box.half = sh.half;
            if (sh.stacks) {
                box.z0 = base_z;
                box.z1 = base_z + (sh.z1 - sh.z0);
                base_z = box.z1;
            } else {
                box.z0 = sh.z0;
                box.z1 = sh.z1;
                if (sh.z0 == 0.0) base_z = sh.z1;  // items stack on top of grounded furniture
            }
            box.open_frac = open_fraction(state, *o);
            box.has_contents = !o->contents.empty();
            scene.boxes.push_back(box);
        }
    }

    if (state.agent.held) {
        const ObjectInstance* held = state.find_object(*state.agent.held);
        EGO_CHECK(held, "held object %d not found", *state.agent.held);
        scene.held_id = held->id;
        scene.held_kind = held->kind;
    }
    return scene;
}

CameraPose camera_for(const WorldState& state) {
    CameraPose cam;
    cam.x = state.agent.x;
    cam.y = state.agent.y;
    cam.z = state.agent.posture == Posture::Sitting ? kEyeSitting : kEyeStanding;
    cam.heading_deg = real(state.agent.heading_deg);
    return cam;
}

CameraBasis camera_basis(const CameraPose& cam, int size) {
    CameraBasis cb;
    const real th = cam.heading_deg * kDeg2Rad;
    cb.fx = std::cos(th);
    cb.fy = std::sin(th);
    cb.rx = std::sin(th);
    cb.ry = -std::cos(th);
    cb.focal = (size / 2.0) / std::tan(0.5 * kFovDeg * kDeg2Rad);
    cb.x = cam.x;
    cb.y = cam.y;
    cb.z = cam.z;
    return cb;
}

bool project_point(const CameraBasis& cb, int size, real wx, real wy, real wz,
                   real& col, real& row, real& ray_len) {
    const real vx = wx - cb.x, vy = wy - cb.y, vz = wz - cb.z;
    const real vf = vx * cb.fx + vy * cb.fy;
    if (vf < 1e-9) return false;
    const real vr = vx * cb.rx + vy * cb.ry;
    const real px = vr / vf;
    const real py = -vz / vf;
    col = px * cb.focal + (size - 1) * 0.5;
    row = py * cb.focal + (size - 1) * 0.5;
    ray_len = std::sqrt(vx * vx + vy * vy + vz * vz);
    return true;
}

Frame render_frame(const SceneSnapshot& scene, const CameraPose& cam, int size, int timestep) {
    const int W = size, H = size;
    Frame fr;
    fr.rgb = Image(H, W, 3);
    fr.depth = Grid2D<real>(W, H, 0.0);
    fr.seg = Grid2D<int32_t>(W, H, kSegWall);
    fr.pose = cam;
    fr.timestep = timestep;

    const CameraBasis cb = camera_basis(cam, size);
    const auto& st = scene.style;
    const real tn = st.texture_noise;

    const Rgb wall_base = from_arr(st.wall_color);
    const Rgb floor_base = from_arr(st.floor_color);
    const Rgb ceil_base = from_arr(st.ceiling_color);

    std::vector<VCand> vc;
    std::vector<HCand> hc;

    for (int i = 0; i < W; ++i) {
        const real px = (i + 0.5 - W / 2.0) / cb.focal;
        real dx = cb.fx + px * cb.rx;
        real dy = cb.fy + px * cb.ry;
        const real n_h = std::sqrt(dx * dx + dy * dy);
        dx /= n_h;
        dy /= n_h;

        vc.clear();
        hc.clear();

        auto add_box_cands = [&](const SceneBox& box) {
            // 2D slab intersection with the box footprint.
            real t0 = 0, t1 = kMaxRange;
            int face = 0;
            for (int ax = 0; ax < 2; ++ax) {
                const real o = ax == 0 ? cb.x : cb.y;
                const real d = ax == 0 ? dx : dy;
                const real c = ax == 0 ? box.cx : box.cy;
                const real lo = c - box.half, hi = c + box.half;
                if (std::fabs(d) < 1e-12) {
                    if (o < lo || o > hi) return;
                    continue;
                }
                real ta = (lo - o) / d, tb = (hi - o) / d;
                int f = d > 0 ? (ax == 0 ? 0 : 2) : (ax == 0 ? 1 : 3);
                if (ta > tb) std::swap(ta, tb);
                if (ta > t0) {
                    t0 = ta;
                    face = f;
                }
                t1 = std::min(t1, tb);
            }
            if (t0 > t1 || t0 <= 1e-9) return;
            const Rgb base = object_base_color(scene, box) * face_shade(face);
            const real hx = cb.x + dx * t0, hy = cb.y + dy * t0;
            const real along = (face < 2) ? hy : hx;
            const uint64_t salt = uint64_t(box.id) * 1315423911ull + face;
            vc.push_back({t0, box.z0, box.z1, box.id, base, along, salt});
            // Caps: top visible from above, bottom from below.
            const Rgb cap = object_base_color(scene, box) * 1.04;
            if (box.z1 < cb.z) hc.push_back({box.z1, t0, t1, box.id, cap, salt ^ 0xABCD, 0, 0});
            if (box.z0 > cb.z) hc.push_back({box.z0, t0, t1, box.id, cap * 0.8, salt ^ 0xDCBA, 0, 0});
        };

        // Voxel traversal collecting candidates until a wall or covered door.
        int cx = int(std::floor(cb.x)), cy = int(std::floor(cb.y));
        const int stepx = dx > 0 ? 1 : -1, stepy = dy > 0 ? 1 : -1;
        const real tdx = std::fabs(dx) > 1e-12 ? 1.0 / std::fabs(dx) : 1e30;
        const real tdy = std::fabs(dy) > 1e-12 ? 1.0 / std::fabs(dy) : 1e30;
        real tmx = std::fabs(dx) > 1e-12 ? (dx > 0 ? (cx + 1 - cb.x) : (cb.x - cx)) * tdx : 1e30;
        real tmy = std::fabs(dy) > 1e-12 ? (dy > 0 ? (cy + 1 - cb.y) : (cb.y - cy)) * tdy : 1e30;

        auto process_cell_objects = [&](int ccx, int ccy) {
            for (const auto& box : scene.boxes)
                if (int(std::floor(box.cx)) == ccx && int(std::floor(box.cy)) == ccy) add_box_cands(box);
        };
        process_cell_objects(cx, cy);

        real s_enter = 0;
        real terminal_s = kMaxRange;
        while (s_enter < kMaxRange) {
            int face;
            real s_exit;
            if (tmx < tmy) {
                s_exit = tmx;
                cx += stepx;
                tmx += tdx;
                face = dx > 0 ? 0 : 1;
            } else {
                s_exit = tmy;
                cy += stepy;
                tmy += tdy;
                face = dy > 0 ? 2 : 3;
            }
            if (!scene.grid.in_bounds(cx, cy)) {
                terminal_s = s_exit;
                break;
            }
            const CellKind ck = scene.grid.at(cx, cy);
            if (ck == CellKind::Wall) {
                const real hx = cb.x + dx * s_exit, hy = cb.y + dy * s_exit;
                const real along = (face < 2) ? hy : hx;
                vc.push_back({s_exit, 0.0, kWallHeight, kSegWall, wall_base * face_shade(face), along,
                              0x5151ull + face});
                terminal_s = s_exit;
                break;
            }
            if (ck == CellKind::Door) {
                const SceneSnapshot::DoorPlane* door = nullptr;
                for (const auto& d : scene.doors)
                    if (d.cellx == cx && d.celly == cy) door = &d;
                if (door) {
                    const real plane = door->x_plane ? cx + 0.5 : cy + 0.5;
                    const real o = door->x_plane ? cb.x : cb.y;
                    const real d = door->x_plane ? dx : dy;
                    if (std::fabs(d) > 1e-12) {
                        const real s_pl = (plane - o) / d;
                        if (s_pl > s_exit - 1e-9 && s_pl < std::min(tmx, tmy) + 1e-9 && s_pl > 0) {
                            const real cross = door->x_plane ? cb.y + dy * s_pl : cb.x + dx * s_pl;
                            const real base_coord = door->x_plane ? door->celly : door->cellx;
                            if (cross - base_coord <= 1.0 - door->open_frac) {
                                const Rgb base = from_arr(st.object_colors[int(ObjectKind::Door)]);
                                vc.push_back({s_pl, 0.0, 2.0, door->id,
                                              base * face_shade(door->x_plane ? 0 : 2), cross,
                                              uint64_t(door->id) * 2654435761ull});
                                terminal_s = s_pl;
                                break;
                            }
                        }
                    }
                }
                continue;  // open portion: ray passes through
            }
            process_cell_objects(cx, cy);
            s_enter = s_exit;
        }

        std::sort(vc.begin(), vc.end(), [](const VCand& a, const VCand& b) { return a.s < b.s; });

        for (int j = 0; j < H; ++j) {
            const real py = (j + 0.5 - H / 2.0) / cb.focal / n_h;  // z drop per unit s
            real best_s = terminal_s + 1e9;
            const VCand* best_v = nullptr;
            const HCand* best_h = nullptr;
            real best_z = 0;

            for (const auto& cand : vc) {
                const real z = cb.z - py * cand.s;
                if (z >= cand.z0 - 1e-9 && z <= cand.z1 + 1e-9) {
                    best_s = cand.s;
                    best_v = &cand;
                    best_z = z;
                    break;  // sorted by s
                }
            }
            for (const auto& cand : hc) {
                if (std::fabs(py) < 1e-12) continue;
                const real s = (cb.z - cand.z) / py;
                if (s > 0 && s >= cand.s_in - 1e-9 && s <= cand.s_out + 1e-9 && s < best_s) {
                    best_s = s;
                    best_v = nullptr;
                    best_h = &cand;
                    best_z = cand.z;
                }
            }
            // Floor / ceiling.
            int32_t seg;
            Rgb color{0, 0, 0};
            real s_hit;
            if (py > 1e-12) {
                const real s_f = cb.z / py;
                if (s_f < best_s) {
                    s_hit = s_f;
                    const real hx = cb.x + dx * s_f, hy = cb.y + dy * s_f;
                    const int fx = int(std::floor(hx)), fy = int(std::floor(hy));
                    const real checker = ((fx + fy) & 1) ? 0.88 : 1.0;
                    const real tex = 1.0 + tn * 0.18 * (2 * hash01(0xF100ull, int64_t(std::floor(hx * 5)),
                                                                   int64_t(std::floor(hy * 5))) - 1);
                    seg = kSegFloor;
                    color = floor_base * (checker * tex);
                    goto emit;
                }
            } else if (py < -1e-12) {
                const real s_c = (cb.z - kWallHeight) / py;
                if (s_c < best_s) {
                    s_hit = s_c;
                    const real hx = cb.x + dx * s_c, hy = cb.y + dy * s_c;
                    const real tex = 1.0 + tn * 0.08 * (2 * hash01(0xCE11ull, int64_t(std::floor(hx * 5)),
                                                                   int64_t(std::floor(hy * 5))) - 1);
                    seg = kSegCeiling;
                    color = ceil_base * (0.95 * tex);
                    goto emit;
                }
            }
            if (best_v) {
                s_hit = best_s;
                seg = best_v->seg;
                const real tex = 1.0 + tn * 0.18 * (2 * hash01(best_v->salt, int64_t(std::floor(best_v->along * 5)),
                                                               int64_t(std::floor(best_z * 5))) - 1);
                color = best_v->base * tex;
            } else if (best_h) {
                s_hit = best_s;
                seg = best_h->seg;
                const real hx = cb.x + dx * s_hit, hy = cb.y + dy * s_hit;
                const real tex = 1.0 + tn * 0.18 * (2 * hash01(best_h->salt, int64_t(std::floor(hx * 5)),
                                                               int64_t(std::floor(hy * 5))) - 1);
                color = best_h->base * tex;
            } else {
                // Out-of-range fallback; border walls normally prevent this.
                s_hit = terminal_s;
                seg = kSegWall;
                color = wall_base;
            }
        emit:
            const real ray_len = s_hit * std::sqrt(1.0 + py * py);
            const real dist_fade = std::max<real>(0.88, 1.0 - 0.012 * ray_len);
            const real a = scene.ambient * dist_fade;
            fr.depth.at(i, j) = ray_len;
            fr.seg.at(i, j) = seg;
            fr.rgb.at(j, i, 0) = color.r * a;
            fr.rgb.at(j, i, 1) = color.g * a;
            fr.rgb.at(j, i, 2) = color.b * a;
        }
    }

    // Held-object overlay, fixed in screen space.
    if (scene.held_id) {
        const Rgb base = from_arr(st.object_colors[int(scene.held_kind)]) * 0.95;
        const int r0 = int(H * 0.78), r1 = int(H * 0.95);
        const int c0 = W / 2 - std::max(2, W / 9), c1 = W / 2 + std::max(2, W / 9);
        for (int j = r0; j < r1 && j < H; ++j)
            for (int i = c0; i < c1 && i < W; ++i) {
                if (i < 0 || j < 0) continue;
                const real tex = 1.0 + tn * 0.10 * (2 * hash01(uint64_t(*scene.held_id) * 77ull, i / 3, j / 3) - 1);
                fr.rgb.at(j, i, 0) = base.r * tex * scene.ambient;
                fr.rgb.at(j, i, 1) = base.g * tex * scene.ambient;
                fr.rgb.at(j, i, 2) = base.b * tex * scene.ambient;
                fr.seg.at(i, j) = *scene.held_id;
                fr.depth.at(i, j) = kHeldDepth;
            }
    }

    fr.rgb.quantize8();
    return fr;
}

Frame render(const WorldState& state, int size) {
    return render_frame(build_snapshot(state), camera_for(state), size, state.tick);
}

std::set<int> moved_ids(const SceneSnapshot& a, const SceneSnapshot& b) {
    std::set<int> moved;
    auto index_boxes = [](const SceneSnapshot& s) {
        std::map<int, const SceneBox*> m;
        for (const auto& box : s.boxes) m[box.id] = &box;
        return m;
    };
    const auto ba = index_boxes(a), bb = index_boxes(b);
    for (const auto& [id, box] : ba) {
        auto it = bb.find(id);
        if (it == bb.end()) {
            moved.insert(id);
            continue;
        }
        const SceneBox& o = *it->second;
        if (std::fabs(box->cx - o.cx) > 1e-12 || std::fabs(box->cy - o.cy) > 1e-12 ||
            std::fabs(box->z0 - o.z0) > 1e-12 || std::fabs(box->z1 - o.z1) > 1e-12 ||
            std::fabs(box->open_frac - o.open_frac) > 1e-12 || box->has_contents != o.has_contents)
            moved.insert(id);
    }
    for (const auto& [id, box] : bb)
        if (!ba.count(id)) moved.insert(id);
    for (const auto& da : a.doors)
        for (const auto& db : b.doors)
            if (da.id == db.id && std::fabs(da.open_frac - db.open_frac) > 1e-12) moved.insert(da.id);
    if (a.held_id != b.held_id) {
        if (a.held_id) moved.insert(*a.held_id);
        if (b.held_id) moved.insert(*b.held_id);
    }
    return moved;
}

namespace {

real bilinear_depth(const Grid2D<real>& depth, real row, real col) {
    const int W = depth.w, H = depth.h;
    col = std::clamp<real>(col, 0.0, W - 1.0);
    row = std::clamp<real>(row, 0.0, H - 1.0);
    const int x0 = int(std::floor(col)), y0 = int(std::floor(row));
    const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
    const real fx = col - x0, fy = row - y0;
    // depth grid is indexed (column, row)
    return (1 - fy) * ((1 - fx) * depth.at(x0, y0) + fx * depth.at(x1, y0)) +
           fy * ((1 - fx) * depth.at(x0, y1) + fx * depth.at(x1, y1));
}

}  // namespace

flow::FlowField ground_truth_flow(const Frame& a, const Frame& b,
                                  const SceneSnapshot& geo_a, const SceneSnapshot& geo_b) {
    EGO_CHECK(b.timestep - a.timestep == 1,
              "ground_truth_flow: frames not consecutive (timesteps %d, %d)", a.timestep, b.timestep);
    const int W = a.rgb.w, H = a.rgb.h;
    EGO_CHECK(b.rgb.w == W && b.rgb.h == H, "ground_truth_flow: frame shape mismatch");

    const std::set<int> moved = moved_ids(geo_a, geo_b);
    const CameraBasis ca = camera_basis(a.pose, W);
    const CameraBasis cbb = camera_basis(b.pose, W);

    flow::FlowField f(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const size_t i = f.idx(y, x);
            const int32_t seg = a.seg.at(x, y);
            if (seg >= kFirstObjectId && moved.count(seg)) {
                f.valid[i] = 0;
                continue;
            }
            if (geo_a.held_id && seg == *geo_a.held_id) {
                f.u[i] = 0;
                f.v[i] = 0;
                continue;  // overlay moves with the camera
            }
            const real L = a.depth.at(x, y);
            const real px = (x + 0.5 - W / 2.0) / ca.focal;
            const real py = (y + 0.5 - H / 2.0) / ca.focal;
            const real inv_n = 1.0 / std::sqrt(1 + px * px + py * py);
            const real dxw = (ca.fx + px * ca.rx) * inv_n;
            const real dyw = (ca.fy + px * ca.ry) * inv_n;
            const real dzw = -py * inv_n;
            const real wx = ca.x + dxw * L, wy = ca.y + dyw * L, wz = ca.z + dzw * L;

            real col, row, len_b;
            if (!project_point(cbb, W, wx, wy, wz, col, row, len_b) ||
                col < 0 || col > W - 1 || row < 0 || row > H - 1) {
                f.valid[i] = 0;
                continue;
            }
            const real db = bilinear_depth(b.depth, row, col);
            if (len_b > db + 1e-3) {
                f.valid[i] = 0;  // occluded in the next frame
                continue;
            }
            f.u[i] = col - x;
            f.v[i] = row - y;
        }
    return f;
}

real warp_photometric_error(const Frame& a, const Frame& b, const flow::FlowField& f) {
    real err = 0;
    size_t n = 0;
    for (int y = 0; y < a.rgb.h; ++y)
        for (int x = 0; x < a.rgb.w; ++x) {
            const size_t i = f.idx(y, x);
            if (!f.valid[i]) continue;
            for (int ch = 0; ch < 3; ++ch)
                err += std::fabs(a.rgb.at(y, x, ch) - bilinear(b.rgb, y + f.v[i], x + f.u[i], ch));
            n += 3;
        }
    return n ? err / real(n) : 0.0;
}

}  // namespace egohome::microhome
