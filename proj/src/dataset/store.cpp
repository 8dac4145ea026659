#include <algorithm>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "egohome/core/io.hpp"
#include "egohome/dataset/dataset.hpp"
#include "egohome/flow/flow.hpp"

namespace fs = std::filesystem;

namespace egohome::dataset {

namespace {

std::string pose_str(const microhome::CameraPose& p) {
    return fmt_real(p.x) + " " + fmt_real(p.y) + " " + fmt_real(p.z) + " " + fmt_real(p.heading_deg);
}

microhome::CameraPose parse_pose(const std::string& s) {
    microhome::CameraPose p;
    std::istringstream ss(s);
    EGO_CHECK(bool(ss >> p.x >> p.y >> p.z >> p.heading_deg), "bad pose string: %s", s.c_str());
    return p;
}

void require_file(const fs::path& p) {
    EGO_CHECK(fs::exists(p), "sample artifact missing: %s", p.string().c_str());
}

}  // namespace

void write_sample(const std::string& root, const Sample& sample, const PromptRecord& prompt,
                  real flow_color_max_mag) {
    EGO_CHECK(sample.x_next.timestep == sample.x_t.timestep + 1,
              "sample timesteps must be consecutive (%d then %d)", sample.x_t.timestep,
              sample.x_next.timestep);
    EGO_CHECK(!prompt.next_phrase.empty() && !prompt.goal_phrase.empty(),
              "prompt phrases must be non-empty");
    const fs::path dir = fs::path(root) / fs::path(sample.path).relative_path();
    std::error_code ec;
    fs::create_directories(dir, ec);
    EGO_CHECK(!ec, "cannot create sample directory: %s", dir.string().c_str());

    write_png((dir / "rgb.png").string(), sample.x_t.rgb);
    write_png((dir / "next_rgb.png").string(), sample.x_next.rgb);
    write_raw_f64((dir / "depth.raw").string(), sample.x_t.depth);
    write_raw_f64((dir / "next_depth.raw").string(), sample.x_next.depth);
    write_raw_i32((dir / "seg.raw").string(), sample.x_t.seg);
    write_raw_i32((dir / "next_seg.raw").string(), sample.x_next.seg);
    flow::write_flow_file((dir / "flow.flow").string(), sample.flow);
    write_png((dir / "flow_color.png").string(), flow::flow_to_color(sample.flow, flow_color_max_mag));

    nlohmann::json j;
    j["next"] = prompt.next_phrase;
    j["goal"] = prompt.goal_phrase;
    write_text_file((dir / "prompt.json").string(), j.dump(2) + "\n");

    std::string meta;
    meta += "action = " + sample.action_text + "\n";
    meta += strf("timestep_t = %d\n", sample.x_t.timestep);
    meta += strf("timestep_next = %d\n", sample.x_next.timestep);
    meta += "pose_t = " + pose_str(sample.x_t.pose) + "\n";
    meta += "pose_next = " + pose_str(sample.x_next.pose) + "\n";
    write_text_file((dir / "meta.txt").string(), meta);
}

Sample load_sample(const std::string& dir_in) {
    const fs::path dir(dir_in);
    for (const char* name : {"rgb.png", "next_rgb.png", "depth.raw", "next_depth.raw", "seg.raw",
                             "next_seg.raw", "flow.flow", "flow_color.png", "prompt.json", "meta.txt"})
        require_file(dir / name);

    Sample s;
    Config meta = Config::from_file((dir / "meta.txt").string());
    s.action_text = meta.get_str("action");
    s.x_t.rgb = read_png((dir / "rgb.png").string());
    s.x_next.rgb = read_png((dir / "next_rgb.png").string());
    s.x_t.depth = read_raw_f64((dir / "depth.raw").string());
    s.x_next.depth = read_raw_f64((dir / "next_depth.raw").string());
    s.x_t.seg = read_raw_i32((dir / "seg.raw").string());
    s.x_next.seg = read_raw_i32((dir / "next_seg.raw").string());
    s.flow = flow::read_flow_file((dir / "flow.flow").string());
    s.x_t.timestep = meta.get_int("timestep_t");
    s.x_next.timestep = meta.get_int("timestep_next");
    s.x_t.pose = parse_pose(meta.get_str("pose_t"));
    s.x_next.pose = parse_pose(meta.get_str("pose_next"));
    s.path = dir_in;
    EGO_CHECK(s.x_next.timestep == s.x_t.timestep + 1,
              "sample invariant violated: timesteps %d then %d in %s", s.x_t.timestep,
              s.x_next.timestep, dir_in.c_str());
    const auto j = nlohmann::json::parse(read_text_file((dir / "prompt.json").string()));
    EGO_CHECK(j.contains("next") && j.contains("goal"), "prompt.json missing keys in %s", dir_in.c_str());
    return s;
}

std::string DatasetManifest::serialize() const {
    std::string out = "# egohome dataset manifest\nversion = 1\n";
    out += "max_mag = " + fmt_real(max_mag) + "\n";
    for (const auto& [split, trajs] : splits)
        for (const auto& t : trajs) out += "trajectory " + split + " " + t + "\n";
    for (const auto& [key, n] : counts) out += strf("count %s %d\n", key.c_str(), n);
    out += "config_echo_begin\n" + config_echo + "config_echo_end\n";
    return out;
}

DatasetManifest DatasetManifest::parse(const std::string& text, const std::string& root_dir) {
    DatasetManifest m;
    m.root = root_dir;
    std::istringstream lines(text);
    std::string line;
    bool in_echo = false;
    while (std::getline(lines, line)) {
        if (line == "config_echo_begin") {
            in_echo = true;
            continue;
        }
        if (line == "config_echo_end") {
            in_echo = false;
            continue;
        }
        if (in_echo) {
            m.config_echo += line + "\n";
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "version") continue;
        if (tag == "max_mag") {
            std::string eq;
            ss >> eq >> m.max_mag;
        } else if (tag == "trajectory") {
            std::string split, path;
            ss >> split >> path;
            m.splits[split].push_back(path);
        } else if (tag == "count") {
            std::string key;
            int n;
            ss >> key >> n;
            m.counts[key] = n;
        }
    }
    return m;
}

void DatasetManifest::save(const std::string& path) const { write_text_file(path, serialize()); }

DatasetManifest DatasetManifest::load(const std::string& path) {
    EGO_CHECK(fs::exists(path), "dataset manifest not found: %s (run gen-data first)", path.c_str());
    return parse(read_text_file(path), fs::path(path).parent_path().string());
}

std::vector<std::string> DatasetManifest::trajectories(const std::string& split) const {
    auto it = splits.find(split);
    EGO_CHECK(it != splits.end(), "manifest has no '%s' split", split.c_str());
    return it->second;
}

std::vector<std::string> trajectory_sample_dirs(const std::string& root, const std::string& traj_path) {
    const fs::path dir = fs::path(root) / fs::path(traj_path).relative_path();
    std::vector<std::pair<int, std::string>> indexed;
    EGO_CHECK(fs::exists(dir), "trajectory directory missing: %s", dir.string().c_str());
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        try {
            indexed.push_back({std::stoi(entry.path().filename().string()), entry.path().string()});
        } catch (...) {
        }
    }
    std::sort(indexed.begin(), indexed.end());
    std::vector<std::string> out;
    out.reserve(indexed.size());
    for (auto& [idx, p] : indexed) out.push_back(p);
    return out;
}

}  // namespace egohome::dataset
