#include <algorithm>
#include <queue>

#include "egohome/microhome/sim.hpp"

namespace egohome::microhome {

namespace {

struct Rect {
    int x0, y0, x1, y1;  // inclusive interior cells
    int area() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
    int w() const { return x1 - x0 + 1; }
    int h() const { return y1 - y0 + 1; }
};

}  // namespace

LayoutConfig LayoutConfig::from_config(const Config& cfg, const std::string& prefix) {
    LayoutConfig lc;
    lc.grid_w = cfg.get_int(prefix + "grid_w", lc.grid_w);
    lc.grid_h = cfg.get_int(prefix + "grid_h", lc.grid_h);
    lc.rooms = cfg.get_int(prefix + "rooms", lc.rooms);
    lc.extra_objects = cfg.get_int(prefix + "extra_objects", lc.extra_objects);
    return lc;
}

bool cell_walkable(const WorldState& state, int cx, int cy) {
    if (!state.grid.in_bounds(cx, cy)) return false;
    if (state.grid.at(cx, cy) != CellKind::Floor) return false;
    for (const auto& o : state.objects)
        if (!o.held() && o.cx == cx && o.cy == cy && blocks_walk(o.kind)) return false;
    return true;
}

Grid2D<int> bfs_distances(const WorldState& state, int fromx, int fromy, bool doors_passable) {
    Grid2D<int> dist(state.grid.w, state.grid.h, -1);
    if (!state.grid.in_bounds(fromx, fromy)) return dist;
    std::queue<std::pair<int, int>> q;
    dist.at(fromx, fromy) = 0;
    q.push({fromx, fromy});
    const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
    while (!q.empty()) {
        auto [x, y] = q.front();
        q.pop();
        for (int d = 0; d < 4; ++d) {
            const int nx = x + dx[d], ny = y + dy[d];
            if (!state.grid.in_bounds(nx, ny) || dist.at(nx, ny) >= 0) continue;
            if (state.grid.at(nx, ny) == CellKind::Door) {
                // Traverse to the far side when the door is open.
                bool open = doors_passable;
                for (const auto& o : state.objects)
                    if (o.kind == ObjectKind::Door && o.cx == nx && o.cy == ny && o.state_flag) open = true;
                if (!open) continue;
                const int bx = nx + dx[d], by = ny + dy[d];
                dist.at(nx, ny) = dist.at(x, y) + 1;
                if (state.grid.in_bounds(bx, by) && dist.at(bx, by) < 0 && cell_walkable(state, bx, by)) {
                    dist.at(bx, by) = dist.at(x, y) + 1;
                    q.push({bx, by});
                }
                continue;
            }
            if (!cell_walkable(state, nx, ny)) continue;
            dist.at(nx, ny) = dist.at(x, y) + 1;
            q.push({nx, ny});
        }
    }
    return dist;
}

int heading_towards(int fromx, int fromy, int tox, int toy) {
    if (tox > fromx) return 0;
    if (tox < fromx) return 180;
    if (toy > fromy) return 90;
    return 270;
}

std::vector<std::pair<int, int>> facing_cells(const WorldState& state, int object_id) {
    std::vector<std::pair<int, int>> out;
    const ObjectInstance* obj = state.find_object(object_id);
    if (!obj || obj->held()) return out;
    const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
    for (int d = 0; d < 4; ++d) {
        const int nx = obj->cx + dx[d], ny = obj->cy + dy[d];
        if (cell_walkable(state, nx, ny)) out.push_back({nx, ny});
    }
    return out;
}

Grid2D<int> room_labels(const WorldState& state) {
    Grid2D<int> labels(state.grid.w, state.grid.h, -1);
    int next = 0;
    for (int sy = 0; sy < state.grid.h; ++sy)
        for (int sx = 0; sx < state.grid.w; ++sx) {
            if (state.grid.at(sx, sy) != CellKind::Floor || labels.at(sx, sy) >= 0) continue;
            std::queue<std::pair<int, int>> q;
            labels.at(sx, sy) = next;
            q.push({sx, sy});
            const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
            while (!q.empty()) {
                auto [x, y] = q.front();
                q.pop();
                for (int d = 0; d < 4; ++d) {
                    const int nx = x + dx[d], ny = y + dy[d];
                    if (!state.grid.in_bounds(nx, ny) || labels.at(nx, ny) >= 0) continue;
                    if (state.grid.at(nx, ny) != CellKind::Floor) continue;
                    labels.at(nx, ny) = next;
                    q.push({nx, ny});
                }
            }
            ++next;
        }
    return labels;
}

WorldState build_house(int house_id, uint64_t seed, const LayoutConfig& config) {
    EGO_CHECK(house_id >= 0, "build_house: house_id must be >= 0");
    EGO_CONFIG_CHECK(config.rooms >= 2, "build_house: need at least 2 rooms, got %d", config.rooms);
    EGO_CONFIG_CHECK(config.grid_w >= 8 && config.grid_h >= 8,
                     "build_house: grid must be at least 8x8, got %dx%d", config.grid_w, config.grid_h);

    Rng rng(Rng::derive(seed, {uint64_t(house_id), 0x5EED}));

    WorldState st;
    st.house_id = house_id;
    st.rng_seed = seed;
    st.style = default_style();
    st.grid = Grid2D<CellKind>(config.grid_w, config.grid_h, CellKind::Floor);
    for (int x = 0; x < config.grid_w; ++x) {
        st.grid.at(x, 0) = CellKind::Wall;
        st.grid.at(x, config.grid_h - 1) = CellKind::Wall;
    }
    for (int y = 0; y < config.grid_h; ++y) {
        st.grid.at(0, y) = CellKind::Wall;
        st.grid.at(config.grid_w - 1, y) = CellKind::Wall;
    }

    // Recursive splits; each internal wall gets one door cell.
    std::vector<Rect> rooms{{1, 1, config.grid_w - 2, config.grid_h - 2}};
    std::vector<std::pair<int, int>> door_cells;
    int next_id = kFirstObjectId;
    while (int(rooms.size()) < config.rooms) {
        size_t big = 0;
        for (size_t i = 1; i < rooms.size(); ++i)
            if (rooms[i].area() > rooms[big].area()) big = i;
        Rect r = rooms[big];
        const bool vertical = r.w() > r.h() || (r.w() == r.h() && rng.uniform_int(2) == 0);
        if ((vertical && r.w() < 7) || (!vertical && r.h() < 7)) break;  // too small to split
        if (vertical) {
            const int wx = r.x0 + 3 + rng.uniform_int(r.w() - 6);
            for (int y = r.y0; y <= r.y1; ++y) st.grid.at(wx, y) = CellKind::Wall;
            const int dy = r.y0 + rng.uniform_int(r.h());
            st.grid.at(wx, dy) = CellKind::Door;
            door_cells.push_back({wx, dy});
            rooms[big] = {r.x0, r.y0, wx - 1, r.y1};
            rooms.push_back({wx + 1, r.y0, r.x1, r.y1});
        } else {
            const int wy = r.y0 + 3 + rng.uniform_int(r.h() - 6);
            for (int x = r.x0; x <= r.x1; ++x) st.grid.at(x, wy) = CellKind::Wall;
            const int dx = r.x0 + rng.uniform_int(r.w());
            st.grid.at(dx, wy) = CellKind::Door;
            door_cells.push_back({dx, wy});
            rooms[big] = {r.x0, r.y0, r.x1, wy - 1};
            rooms.push_back({r.x0, wy + 1, r.x1, r.y1});
        }
    }
    EGO_CONFIG_CHECK(int(rooms.size()) >= 2, "build_house: grid %dx%d too small for %d rooms",
                     config.grid_w, config.grid_h, config.rooms);

    for (auto [dx, dy] : door_cells) {
        ObjectInstance door;
        door.id = next_id++;
        door.kind = ObjectKind::Door;
        door.cx = dx;
        door.cy = dy;
        door.state_flag = rng.uniform() < 0.6;  // mostly open
        st.objects.push_back(door);
    }

    // Candidate cells hug walls so rooms stay walkable; keep doorways clear.
    auto near_door = [&](int x, int y) {
        for (auto [dx, dy] : door_cells)
            if (std::abs(x - dx) + std::abs(y - dy) <= 1) return true;
        return false;
    };
    std::vector<std::pair<int, int>> candidates;
    for (int y = 1; y < config.grid_h - 1; ++y)
        for (int x = 1; x < config.grid_w - 1; ++x) {
            if (st.grid.at(x, y) != CellKind::Floor || near_door(x, y)) continue;
            const bool wall_adj = st.grid.at(x - 1, y) == CellKind::Wall || st.grid.at(x + 1, y) == CellKind::Wall ||
                                  st.grid.at(x, y - 1) == CellKind::Wall || st.grid.at(x, y + 1) == CellKind::Wall;
            if (wall_adj) candidates.push_back({x, y});
        }
    // Deterministic shuffle.
    for (size_t i = candidates.size(); i > 1; --i)
        std::swap(candidates[i - 1], candidates[size_t(rng.uniform_int(int(i)))]);

    // Spawn before object placement so connectivity checks have an anchor.
    std::vector<std::pair<int, int>> floor_cells;
    for (int y = 1; y < config.grid_h - 1; ++y)
        for (int x = 1; x < config.grid_w - 1; ++x)
            if (st.grid.at(x, y) == CellKind::Floor && !near_door(x, y)) floor_cells.push_back({x, y});
    const auto spawn = floor_cells[size_t(rng.uniform_int(int(floor_cells.size())))];
    st.agent.x = spawn.first + 0.5;
    st.agent.y = spawn.second + 0.5;
    st.agent.heading_deg = 90 * rng.uniform_int(4);

    auto connectivity_ok = [&]() {
        const auto dist = bfs_distances(st, st.agent.cell_x(), st.agent.cell_y(), /*doors_passable=*/true);
        for (int y = 1; y < config.grid_h - 1; ++y)
            for (int x = 1; x < config.grid_w - 1; ++x)
                if (cell_walkable(st, x, y) && dist.at(x, y) < 0) return false;
        return true;
    };

    // Core set first (tasks and every verb need these), then extras.
    std::vector<ObjectKind> kinds = {ObjectKind::Fridge, ObjectKind::Light,  ObjectKind::Bench,
                                     ObjectKind::Plate,  ObjectKind::Juice,  ObjectKind::Sofa,
                                     ObjectKind::Toaster};
    const std::vector<ObjectKind> extras = {ObjectKind::Cabinet, ObjectKind::Stove, ObjectKind::Microwave,
                                            ObjectKind::Pc,      ObjectKind::Pillow};
    for (int i = 0; i < config.extra_objects && i < int(extras.size()); ++i) kinds.push_back(extras[i]);

    size_t cand_i = 0;
    int bench_id = -1, sofa_id = -1;
    for (ObjectKind kind : kinds) {
        bool placed = false;
        while (cand_i < candidates.size() && !placed) {
            auto [x, y] = candidates[cand_i++];
            bool occupied = false;
            for (const auto& o : st.objects)
                if (o.cx == x && o.cy == y) occupied = true;
            if (occupied) continue;
            if (spawn.first == x && spawn.second == y) continue;
            ObjectInstance obj;
            obj.id = next_id++;
            obj.kind = kind;
            obj.cx = x;
            obj.cy = y;
            obj.state_flag = false;
            st.objects.push_back(obj);
            if (blocks_walk(kind) && !connectivity_ok()) {
                st.objects.pop_back();
                --next_id;
                continue;
            }
            if (kind == ObjectKind::Bench) bench_id = obj.id;
            if (kind == ObjectKind::Sofa) sofa_id = obj.id;
            placed = true;
        }
    }

    // Bread sits on the bench, pillow on the sofa.
    auto stack_on = [&](ObjectKind kind, int base_id) {
        if (base_id < 0) return;
        const ObjectInstance* base = st.find_object(base_id);
        ObjectInstance obj;
        obj.id = next_id++;
        obj.kind = kind;
        obj.cx = base->cx;
        obj.cy = base->cy;
        st.objects.push_back(obj);
    };
    stack_on(ObjectKind::Bread, bench_id);
    if (sofa_id >= 0 && config.extra_objects >= 5) stack_on(ObjectKind::Pillow, sofa_id);

    EGO_CHECK(connectivity_ok(), "build_house: generated disconnected layout (house %d)", house_id);
    return st;
}

}  // namespace egohome::microhome
