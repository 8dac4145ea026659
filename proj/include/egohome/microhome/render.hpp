#pragma once

#include <set>

#include "egohome/flow/field.hpp"
#include "egohome/microhome/types.hpp"

namespace egohome::microhome {

constexpr int kRenderSize = 64;       // default H = W
constexpr real kWallHeight = 2.2;
constexpr real kEyeStanding = 1.1;
constexpr real kEyeSitting = 0.65;
constexpr real kFovDeg = 66.0;

// Geometry view of a WorldState frozen for rendering: object boxes with
// openness/on fractions resolved, ambient light level, held-object overlay.
struct SceneBox {
    int id = 0;
    ObjectKind kind = ObjectKind::Plate;
    real cx = 0, cy = 0;      // box center
    real half = 0.4;          // half extent in x/y
    real z0 = 0, z1 = 1;      // vertical span
    real open_frac = 0;       // containers/doors
    bool has_contents = false;
};

struct SceneSnapshot {
    Grid2D<CellKind> grid;
    std::vector<SceneBox> boxes;      // placed objects, doors excluded
    struct DoorPlane {
        int id;
        int cellx, celly;
        bool x_plane;        // true: plane x = cellx + 0.5, else y = celly + 0.5
        real open_frac;      // 0 closed .. 1 open
    };
    std::vector<DoorPlane> doors;
    real ambient = 1.0;
    std::optional<int> held_id;       // drawn as a fixed overlay
    ObjectKind held_kind = ObjectKind::Plate;
    StyleParams style;
};

SceneSnapshot build_snapshot(const WorldState& state);

CameraPose camera_for(const WorldState& state);

Frame render_frame(const SceneSnapshot& scene, const CameraPose& cam, int size, int timestep);

// Canonical render of a state (agent camera, default resolution).
Frame render(const WorldState& state, int size = kRenderSize);

// Object ids whose render parameters differ between two snapshots; their
// pixels cannot be explained by camera motion alone.
std::set<int> moved_ids(const SceneSnapshot& a, const SceneSnapshot& b);

// Reprojection ground-truth flow between consecutive frames (timestep gap
// must be 1). Pixels that leave the frame, get occluded (depth test at
// 1e-3 m), or sit on an object that moved between the snapshots are invalid.
flow::FlowField ground_truth_flow(const Frame& a, const Frame& b,
                                  const SceneSnapshot& geo_a, const SceneSnapshot& geo_b);

// Photometric check: warp a.rgb by the flow and compare with b.rgb on valid
// pixels. Returns the mean absolute error.
real warp_photometric_error(const Frame& a, const Frame& b, const flow::FlowField& f);

// Pinhole helpers (shared by the renderer, the flow reprojection and tests).
struct CameraBasis {
    real fx, fy;  // forward
    real rx, ry;  // right
    real focal;
    real x, y, z;
};
CameraBasis camera_basis(const CameraPose& cam, int size);
// Projects a world point; returns false when behind the camera.
bool project_point(const CameraBasis& cb, int size, real wx, real wy, real wz,
                   real& col, real& row, real& ray_len);

}  // namespace egohome::microhome
