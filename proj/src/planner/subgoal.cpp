#include "egohome/planner/subgoal.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "egohome/core/io.hpp"
#include "egohome/microhome/sim.hpp"

namespace egohome::planner {

using namespace egohome::microhome;

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Matches "<prefix> the <object>" and returns the object.
std::optional<std::string> tail_object(const std::string& text, const std::string& prefix) {
    const std::string want = prefix + " the ";
    if (text.rfind(want, 0) != 0) return std::nullopt;
    const std::string rest = trim(text.substr(want.size()));
    if (rest.empty() || rest.find(' ') != std::string::npos) return std::nullopt;
    return rest;
}

}  // namespace

SubgoalSpec parse_subgoal(const std::string& raw) {
    const std::string text = trim(raw);
    if (text == "walk through the door") return {SubgoalSpec::Kind::WalkThroughDoor, "door", ""};
    if (auto o = tail_object(text, "walk to")) return {SubgoalSpec::Kind::WalkTo, *o, ""};
    if (auto o = tail_object(text, "open")) return {SubgoalSpec::Kind::Open, *o, ""};
    if (auto o = tail_object(text, "close")) return {SubgoalSpec::Kind::Close, *o, ""};
    if (auto o = tail_object(text, "grab")) return {SubgoalSpec::Kind::Grab, *o, ""};
    if (auto o = tail_object(text, "switch on")) return {SubgoalSpec::Kind::SwitchOn, *o, ""};
    if (auto o = tail_object(text, "switch off")) return {SubgoalSpec::Kind::SwitchOff, *o, ""};
    if (auto o = tail_object(text, "sit on")) return {SubgoalSpec::Kind::SitOn, *o, ""};
    // "place the A on the B" / "put the A in the B"
    for (const auto& [verb, mid, kind] :
         {std::tuple{"place", "on", SubgoalSpec::Kind::PlaceOn}, std::tuple{"put", "in", SubgoalSpec::Kind::PutIn}}) {
        const std::string head = std::string(verb) + " the ";
        if (text.rfind(head, 0) != 0) continue;
        const std::string rest = text.substr(head.size());
        const std::string sep = std::string(" ") + mid + " the ";
        const size_t pos = rest.find(sep);
        if (pos == std::string::npos) continue;
        SubgoalSpec spec{kind, trim(rest.substr(0, pos)), trim(rest.substr(pos + sep.size()))};
        if (!spec.object_a.empty() && !spec.object_b.empty()) return spec;
    }
    throw std::runtime_error("unparseable subgoal: '" + raw + "'");
}

std::vector<std::string> decompose_grammar(const std::string& raw) {
    const std::string text = trim(raw);

    // "take the A from the B, go through the door, and put it in the C"
    {
        static const std::string kTake = "take the ", kFrom = " from the ",
                                 kDoorMid = ", go through the door, and put it in the ";
        if (text.rfind(kTake, 0) == 0) {
            const size_t from = text.find(kFrom);
            const size_t door = text.find(kDoorMid);
            if (from != std::string::npos && door != std::string::npos) {
                const std::string a = text.substr(kTake.size(), from - kTake.size());
                const std::string b = text.substr(from + kFrom.size(), door - from - kFrom.size());
                const std::string c = text.substr(door + kDoorMid.size());
                return {"walk to the " + b,    "grab the " + a,          "walk to the door",
                        "open the door",       "walk through the door",  "walk to the " + c,
                        "open the " + c,       "put the " + a + " in the " + c};
            }
        }
    }
    // "take the A from the B and place it on the C"
    {
        static const std::string kTake = "take the ", kFrom = " from the ",
                                 kPlace = " and place it on the ";
        if (text.rfind(kTake, 0) == 0) {
            const size_t from = text.find(kFrom);
            const size_t place = text.find(kPlace);
            if (from != std::string::npos && place != std::string::npos) {
                const std::string a = text.substr(kTake.size(), from - kTake.size());
                const std::string b = text.substr(from + kFrom.size(), place - from - kFrom.size());
                const std::string c = text.substr(place + kPlace.size());
                return {"walk to the " + b, "grab the " + a, "walk to the " + c,
                        "place the " + a + " on the " + c};
            }
        }
    }
    // "go through the door and <rest>": door crossing, then navigate and act.
    {
        static const std::string kDoor = "go through the door and ";
        if (text.rfind(kDoor, 0) == 0) {
            const std::string rest = trim(text.substr(kDoor.size()));
            const SubgoalSpec spec = parse_subgoal(rest);  // validates the clause
            std::vector<std::string> out{"walk to the door", "open the door", "walk through the door"};
            if (spec.kind != SubgoalSpec::Kind::WalkTo) out.push_back("walk to the " + spec.object_a);
            out.push_back(rest);
            return out;
        }
    }
    // "put the A in the B"
    {
        static const std::string kPut = "put the ", kIn = " in the ";
        if (text.rfind(kPut, 0) == 0) {
            const size_t in = text.find(kIn);
            if (in != std::string::npos) {
                const std::string a = text.substr(kPut.size(), in - kPut.size());
                const std::string b = text.substr(in + kIn.size());
                return {"walk to the " + a, "grab the " + a, "walk to the " + b, "open the " + b,
                        text};
            }
        }
    }
    // Single-skill instruction: the subgoal is the instruction itself.
    parse_subgoal(text);
    return {text};
}

std::vector<TaskDef> load_tasks(const std::string& path) {
    std::vector<TaskDef> out;
    std::istringstream lines(read_text_file(path));
    std::string line;
    TaskDef cur;
    bool open_task = false;
    auto flush = [&] {
        if (!open_task) return;
        EGO_CHECK(!cur.instruction.empty(), "task %d has no instruction", cur.id);
        EGO_CHECK(!cur.expected_subgoals.empty(), "task %d has no subgoals", cur.id);
        out.push_back(cur);
        cur = TaskDef{};
        open_task = false;
    };
    while (std::getline(lines, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::istringstream ss(t);
        std::string tag;
        ss >> tag;
        if (tag == "task") {
            flush();
            open_task = true;
            ss >> cur.id;
        } else if (tag == "rooms") {
            std::string mode;
            ss >> mode;
            cur.two_room = mode == "two";
        } else if (tag == "house") {
            ss >> cur.house_id;
        } else if (tag == "seed") {
            ss >> cur.seed;
        } else if (tag == "instruction") {
            cur.instruction = trim(t.substr(std::string("instruction").size()));
        } else if (tag == "subgoals") {
            std::string rest = trim(t.substr(std::string("subgoals").size()));
            std::istringstream parts(rest);
            std::string part;
            while (std::getline(parts, part, ';')) cur.expected_subgoals.push_back(trim(part));
        }
    }
    flush();
    EGO_CHECK(!out.empty(), "no tasks in %s", path.c_str());
    return out;
}

std::vector<TaskDef> builtin_tasks() {
    return load_tasks(std::string(EGOHOME_RESOURCE_DIR) + "/tasks.txt");
}

namespace {

ObjectInstance* first_of_kind(WorldState& st, const std::string& kind_name_str) {
    const auto kind = kind_from_name(kind_name_str);
    EGO_CHECK(kind.has_value(), "task references unknown object kind '%s'", kind_name_str.c_str());
    for (auto& o : st.objects)
        if (o.kind == *kind) return &o;
    return nullptr;
}

// Moves an object to a wall-adjacent free cell inside the given room.
bool relocate_into_room(WorldState& st, ObjectInstance* obj, int room, const Grid2D<int>& rooms,
                        Rng& rng) {
    if (rooms.at(obj->cx, obj->cy) == room) return true;
    std::vector<std::pair<int, int>> cells;
    for (int y = 1; y < st.grid.h - 1; ++y)
        for (int x = 1; x < st.grid.w - 1; ++x) {
            if (rooms.at(x, y) != room) continue;
            if (st.grid.at(x, y) != CellKind::Floor) continue;
            bool occupied = false;
            for (const auto& o : st.objects)
                if (!o.held() && o.cx == x && o.cy == y) occupied = true;
            if (occupied) continue;
            if (std::abs(x - st.agent.cell_x()) + std::abs(y - st.agent.cell_y()) < 1) continue;
            const bool wall_adj = st.grid.at(x - 1, y) == CellKind::Wall ||
                                  st.grid.at(x + 1, y) == CellKind::Wall ||
                                  st.grid.at(x, y - 1) == CellKind::Wall ||
                                  st.grid.at(x, y + 1) == CellKind::Wall;
            if (wall_adj) cells.push_back({x, y});
        }
    for (size_t i = cells.size(); i > 1; --i)
        std::swap(cells[i - 1], cells[size_t(rng.uniform_int(int(i)))]);
    const int old_x = obj->cx, old_y = obj->cy;
    for (auto [x, y] : cells) {
        obj->cx = x;
        obj->cy = y;
        if (!blocks_walk(obj->kind)) return true;
        // Keep every walkable cell reachable.
        const auto dist = bfs_distances(st, st.agent.cell_x(), st.agent.cell_y(), true);
        bool ok = true;
        for (int yy = 1; yy < st.grid.h - 1 && ok; ++yy)
            for (int xx = 1; xx < st.grid.w - 1 && ok; ++xx)
                if (cell_walkable(st, xx, yy) && dist.at(xx, yy) < 0) ok = false;
        if (ok) return true;
    }
    obj->cx = old_x;
    obj->cy = old_y;
    return false;
}

}  // namespace

WorldState make_task_state(const TaskDef& task) {
    WorldState st = build_house(task.house_id, task.seed);
    Rng rng(Rng::derive(task.seed, {uint64_t(task.id), 0x7A5C}));
    const auto rooms = room_labels(st);
    const int agent_room = rooms.at(st.agent.cell_x(), st.agent.cell_y());

    // Room assignment: everything the task references lives in the agent's
    // room except, for two-room tasks, the final target chain.
    std::vector<SubgoalSpec> specs;
    for (const auto& sg : task.expected_subgoals) specs.push_back(parse_subgoal(sg));

    std::set<std::string> far_kinds;  // two-room: objects past the door
    if (task.two_room) {
        // Anything referenced before the crossing stays near (the agent may
        // carry it through); only fresh post-crossing references go far.
        std::set<std::string> near_kinds;
        bool crossed = false;
        for (const auto& spec : specs) {
            if (spec.kind == SubgoalSpec::Kind::WalkThroughDoor) {
                crossed = true;
                continue;
            }
            auto& bucket = crossed ? far_kinds : near_kinds;
            if (spec.object_a != "door" && !spec.object_a.empty()) bucket.insert(spec.object_a);
            if (!spec.object_b.empty()) bucket.insert(spec.object_b);
        }
        for (const auto& k : near_kinds) far_kinds.erase(k);
    }

    int far_room = -1;
    if (task.two_room) {
        for (const auto& o : st.objects)
            if (o.kind == ObjectKind::Door) {
                // The single internal door joins the agent room and the far room.
                const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    const int nx = o.cx + dx[d], ny = o.cy + dy[d];
                    if (st.grid.in_bounds(nx, ny) && st.grid.at(nx, ny) == CellKind::Floor &&
                        rooms.at(nx, ny) != agent_room)
                        far_room = rooms.at(nx, ny);
                }
            }
        EGO_CHECK(far_room >= 0, "task %d: no room across the door in house %d", task.id,
                  task.house_id);
    }

    // Stage referenced objects.
    std::set<std::string> placed;
    for (const auto& spec : specs) {
        for (const std::string& name : {spec.object_a, spec.object_b}) {
            if (name.empty() || name == "door" || placed.count(name)) continue;
            placed.insert(name);
            ObjectInstance* obj = first_of_kind(st, name);
            EGO_CHECK(obj, "task %d: house %d has no %s", task.id, task.house_id, name.c_str());
            const int want_room = far_kinds.count(name) ? far_room : agent_room;
            EGO_CHECK(relocate_into_room(st, obj, want_room, rooms, rng),
                      "task %d: cannot stage %s into room %d", task.id, name.c_str(), want_room);
        }
    }
    // Keep the bread on the bench when both are referenced.
    if (placed.count("bread") && placed.count("bench")) {
        ObjectInstance* bread = first_of_kind(st, "bread");
        ObjectInstance* bench = first_of_kind(st, "bench");
        bread->cx = bench->cx;
        bread->cy = bench->cy;
    }

    // Prerequisite binary states from the subgoal list.
    for (const auto& spec : specs) {
        if (spec.kind == SubgoalSpec::Kind::SwitchOff || spec.kind == SubgoalSpec::Kind::Close) {
            if (ObjectInstance* obj = first_of_kind(st, spec.object_a)) obj->state_flag = true;
        }
        if (spec.kind == SubgoalSpec::Kind::Open || spec.kind == SubgoalSpec::Kind::SwitchOn) {
            if (ObjectInstance* obj = first_of_kind(st, spec.object_a)) obj->state_flag = false;
        }
    }
    for (auto& o : st.objects)
        if (o.kind == ObjectKind::Door) o.state_flag = !task.two_room;  // two-room: door starts shut

    st.agent.held.reset();
    st.agent.posture = Posture::Standing;
    return st;
}

WorldState randomize_start(const WorldState& state, Rng& rng) {
    WorldState st = state;
    const auto rooms = room_labels(st);
    const int room = rooms.at(st.agent.cell_x(), st.agent.cell_y());
    std::vector<std::pair<int, int>> cells;
    for (int y = 1; y < st.grid.h - 1; ++y)
        for (int x = 1; x < st.grid.w - 1; ++x)
            if (rooms.at(x, y) == room && cell_walkable(st, x, y)) cells.push_back({x, y});
    EGO_CHECK(!cells.empty(), "randomize_start: no walkable cell in the agent room");
    const auto [cx, cy] = cells[size_t(rng.uniform_int(int(cells.size())))];
    st.agent.x = cx + 0.5;
    st.agent.y = cy + 0.5;
    st.agent.heading_deg = 90 * rng.uniform_int(4);
    return st;
}

}  // namespace egohome::planner
