#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egohome/core/grid.hpp"
#include "egohome/core/image.hpp"

namespace egohome::microhome {

enum class CellKind : uint8_t { Floor = 0, Wall = 1, Door = 2 };

enum class ObjectKind : uint8_t {
    Fridge = 0, Microwave, Cabinet, Door, Light, Stove, Toaster, Pc,
    Plate, Bread, Pillow, Juice, Bench, Sofa,
    kCount
};
constexpr int kNumObjectKinds = int(ObjectKind::kCount);

enum class BinaryDomain : uint8_t { OpenClosed, OnOff, HeldPlaced, None };

BinaryDomain domain_of(ObjectKind k);
const char* kind_name(ObjectKind k);
std::optional<ObjectKind> kind_from_name(const std::string& name);

// Containers can hold small items; surfaces let small items share their cell.
bool is_container(ObjectKind k);
bool is_grabbable(ObjectKind k);
bool is_surface(ObjectKind k);
bool is_sittable(ObjectKind k);
bool blocks_walk(ObjectKind k);

enum class Verb : uint8_t {
    WalkForward = 0, TurnLeft, TurnRight, WalkThrough, Open, Close, Grab,
    PutBack, PutIn, SwitchOn, SwitchOff, Sit, StandUp,
    kCount
};
constexpr int kNumVerbs = int(Verb::kCount);

const char* verb_name(Verb v);                       // canonical snake_case id
std::optional<Verb> verb_from_name(const std::string& name);
bool verb_needs_target(Verb v);

struct Skill {
    Verb verb;
    std::optional<int> target;  // object id when the verb requires one

    bool operator==(const Skill&) const = default;
};
std::string skill_to_string(const Skill& s);

struct ObjectInstance {
    int id = 0;           // globally unique within a house, >= 100
    ObjectKind kind = ObjectKind::Plate;
    int cx = -1, cy = -1; // grid cell; (-1,-1) while held by the agent
    bool state_flag = false;  // open / on / held depending on the domain
    std::vector<int> contents;  // ids of contained objects

    bool held() const { return cx < 0; }
    bool operator==(const ObjectInstance&) const = default;
};

enum class Posture : uint8_t { Standing = 0, Sitting = 1 };

struct AgentPose {
    // Continuous position in cell units; motion_scale takes walks off grid
    // centers, so the cell is derived.
    real x = 0, y = 0;
    int heading_deg = 0;  // multiple of the turn increment, in [0,360)
    std::optional<int> held;
    Posture posture = Posture::Standing;

    int cell_x() const { return int(std::floor(x)); }
    int cell_y() const { return int(std::floor(y)); }
    bool operator==(const AgentPose&) const = default;
};

// Render-affecting style; the two generalization axes are palette/texture
// (visual style) and motion_scale (motion amplitude).
struct StyleParams {
    // Palette slots: structural classes first, then one color per object
    // kind, then one interior color per object kind.
    std::array<real, 3> floor_color{0.62, 0.57, 0.50};
    std::array<real, 3> ceiling_color{0.88, 0.88, 0.90};
    std::array<real, 3> wall_color{0.75, 0.73, 0.68};
    std::array<std::array<real, 3>, kNumObjectKinds> object_colors;
    std::array<std::array<real, 3>, kNumObjectKinds> interior_colors;
    real texture_noise = 0.35;   // in [0,1]
    real motion_scale = 1.0;     // > 0, multiplies translation amplitude
    int frames_per_skill = 4;    // >= 2

    bool operator==(const StyleParams&) const = default;
};

StyleParams default_style();
// A visibly different palette with the requested motion scale; the restyled
// counterpart of default_style() used by the generalization protocol.
StyleParams alt_style(real motion_scale);

struct WorldState {
    int house_id = 0;
    Grid2D<CellKind> grid;
    std::vector<ObjectInstance> objects;
    AgentPose agent;
    StyleParams style;
    uint64_t rng_seed = 0;
    int tick = 0;  // frame counter; stamps Frame.timestep

    // Transient render parameters: object id -> sweep fraction in [0,1]
    // (door/container openness, light ramp). Canonical states keep it empty.
    std::map<int, real> anim;

    const ObjectInstance* find_object(int id) const;
    ObjectInstance* find_object(int id);
    bool operator==(const WorldState&) const = default;
};

struct CameraPose {
    real x = 0, y = 0, z = 0;
    real heading_deg = 0;  // continuous during sweeps

    bool operator==(const CameraPose&) const = default;
};

struct Frame {
    Image rgb;             // H x W x 3 in [0,1], quantized to 8-bit levels
    Grid2D<real> depth;    // true ray length, meters (cells are 1 m)
    Grid2D<int32_t> seg;   // structural class ids 0..2 or object ids >= 100
    CameraPose pose;
    int timestep = 0;

    bool operator==(const Frame&) const = default;
};

// Segmentation ids for non-object surfaces.
constexpr int32_t kSegFloor = 0;
constexpr int32_t kSegWall = 1;
constexpr int32_t kSegCeiling = 2;
constexpr int kFirstObjectId = 100;

}  // namespace egohome::microhome
