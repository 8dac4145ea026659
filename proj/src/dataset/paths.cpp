#include "egohome/dataset/dataset.hpp"

namespace egohome::dataset {

namespace {

bool path_safe(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

}  // namespace

std::string trajectory_path(const std::string& action, int house, const std::string& agent,
                            int index, const std::string& object) {
    EGO_CHECK(house >= 0 && index >= 0, "trajectory_path: house and index must be >= 0");
    EGO_CHECK(path_safe(action), "trajectory_path: unsafe action segment: '%s'", action.c_str());
    EGO_CHECK(path_safe(agent), "trajectory_path: unsafe agent segment: '%s'", agent.c_str());
    EGO_CHECK(object.empty() || path_safe(object), "trajectory_path: unsafe object segment: '%s'",
              object.c_str());
    std::string out = strf("/%s/house_%d/%s/%d", action.c_str(), house, agent.c_str(), index);
    if (!object.empty()) out += "_" + object;
    return out;
}

TrajectoryAddress parse_trajectory_path(const std::string& path) {
    TrajectoryAddress a;
    std::vector<std::string> parts;
    size_t pos = 0;
    EGO_CHECK(!path.empty() && path[0] == '/', "bad trajectory path: %s", path.c_str());
    while (pos < path.size()) {
        size_t next = path.find('/', pos + 1);
        if (next == std::string::npos) next = path.size();
        parts.push_back(path.substr(pos + 1, next - pos - 1));
        pos = next;
    }
    EGO_CHECK(parts.size() == 4, "bad trajectory path (want 4 segments): %s", path.c_str());
    a.action = parts[0];
    EGO_CHECK(parts[1].rfind("house_", 0) == 0, "bad house segment in: %s", path.c_str());
    a.house = std::stoi(parts[1].substr(6));
    a.agent = parts[2];
    const std::string& last = parts[3];
    const size_t us = last.find('_');
    if (us == std::string::npos) {
        a.index = std::stoi(last);
    } else {
        a.index = std::stoi(last.substr(0, us));
        a.object = last.substr(us + 1);
    }
    return a;
}

}  // namespace egohome::dataset
