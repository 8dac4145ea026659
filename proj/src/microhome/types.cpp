#include "egohome/microhome/types.hpp"

namespace egohome::microhome {

BinaryDomain domain_of(ObjectKind k) {
    switch (k) {
        case ObjectKind::Fridge:
        case ObjectKind::Microwave:
        case ObjectKind::Cabinet:
        case ObjectKind::Door:
            return BinaryDomain::OpenClosed;
        case ObjectKind::Light:
        case ObjectKind::Stove:
        case ObjectKind::Toaster:
        case ObjectKind::Pc:
            return BinaryDomain::OnOff;
        case ObjectKind::Plate:
        case ObjectKind::Bread:
        case ObjectKind::Pillow:
        case ObjectKind::Juice:
            return BinaryDomain::HeldPlaced;
        default:
            return BinaryDomain::None;
    }
}

const char* kind_name(ObjectKind k) {
    static const char* names[] = {"fridge", "microwave", "cabinet", "door", "light", "stove",
                                  "toaster", "pc", "plate", "bread", "pillow", "juice", "bench", "sofa"};
    return names[int(k)];
}

std::optional<ObjectKind> kind_from_name(const std::string& name) {
    for (int i = 0; i < kNumObjectKinds; ++i)
        if (name == kind_name(ObjectKind(i))) return ObjectKind(i);
    return std::nullopt;
}

bool is_container(ObjectKind k) {
    return k == ObjectKind::Fridge || k == ObjectKind::Microwave || k == ObjectKind::Cabinet;
}

bool is_grabbable(ObjectKind k) { return domain_of(k) == BinaryDomain::HeldPlaced; }

bool is_surface(ObjectKind k) {
    return k == ObjectKind::Bench || k == ObjectKind::Sofa || k == ObjectKind::Plate;
}

bool is_sittable(ObjectKind k) { return k == ObjectKind::Bench || k == ObjectKind::Sofa; }

bool blocks_walk(ObjectKind k) { return !is_grabbable(k) && k != ObjectKind::Door && k != ObjectKind::Light; }

const char* verb_name(Verb v) {
    static const char* names[] = {"walk_forward", "turn_left", "turn_right", "walk_through",
                                  "open",         "close",     "grab",       "put_back",
                                  "put_in",       "switch_on", "switch_off", "sit",
                                  "stand_up"};
    return names[int(v)];
}

std::optional<Verb> verb_from_name(const std::string& name) {
    for (int i = 0; i < kNumVerbs; ++i)
        if (name == verb_name(Verb(i))) return Verb(i);
    return std::nullopt;
}

bool verb_needs_target(Verb v) {
    switch (v) {
        case Verb::Open:
        case Verb::Close:
        case Verb::Grab:
        case Verb::PutBack:
        case Verb::PutIn:
        case Verb::SwitchOn:
        case Verb::SwitchOff:
        case Verb::Sit:
            return true;
        default:
            return false;
    }
}

std::string skill_to_string(const Skill& s) {
    std::string out = verb_name(s.verb);
    if (s.target) out += strf("(%d)", *s.target);
    return out;
}

const ObjectInstance* WorldState::find_object(int id) const {
    for (const auto& o : objects)
        if (o.id == id) return &o;
    return nullptr;
}

ObjectInstance* WorldState::find_object(int id) {
    for (auto& o : objects)
        if (o.id == id) return &o;
    return nullptr;
}

StyleParams default_style() {
    StyleParams s;
    auto set = [&](ObjectKind k, real r, real g, real b, real ir, real ig, real ib) {
        s.object_colors[int(k)] = {r, g, b};
        s.interior_colors[int(k)] = {ir, ig, ib};
    };
    set(ObjectKind::Fridge,    0.92, 0.94, 0.96, 0.55, 0.75, 0.85);
    set(ObjectKind::Microwave, 0.25, 0.25, 0.28, 0.85, 0.65, 0.35);
    set(ObjectKind::Cabinet,   0.55, 0.38, 0.22, 0.75, 0.62, 0.45);
    set(ObjectKind::Door,      0.48, 0.32, 0.18, 0.48, 0.32, 0.18);
    set(ObjectKind::Light,     0.98, 0.95, 0.60, 0.98, 0.95, 0.60);
    set(ObjectKind::Stove,     0.35, 0.35, 0.38, 0.90, 0.40, 0.20);
    set(ObjectKind::Toaster,   0.80, 0.20, 0.20, 0.80, 0.20, 0.20);
    set(ObjectKind::Pc,        0.15, 0.18, 0.22, 0.30, 0.60, 0.90);
    set(ObjectKind::Plate,     0.95, 0.95, 0.92, 0.95, 0.95, 0.92);
    set(ObjectKind::Bread,     0.85, 0.65, 0.35, 0.85, 0.65, 0.35);
    set(ObjectKind::Pillow,    0.70, 0.30, 0.55, 0.70, 0.30, 0.55);
    set(ObjectKind::Juice,     0.95, 0.60, 0.10, 0.95, 0.60, 0.10);
    set(ObjectKind::Bench,     0.45, 0.30, 0.18, 0.45, 0.30, 0.18);
    set(ObjectKind::Sofa,      0.30, 0.40, 0.60, 0.30, 0.40, 0.60);
    return s;
}

StyleParams alt_style(real motion_scale) {
    StyleParams s = default_style();
    s.floor_color = {0.30, 0.36, 0.32};
    s.ceiling_color = {0.70, 0.74, 0.80};
    s.wall_color = {0.50, 0.58, 0.62};
    // Shift every object hue; keep kinds distinguishable.
    for (int k = 0; k < kNumObjectKinds; ++k) {
        auto& c = s.object_colors[k];
        c = {c[2] * 0.9 + 0.05, c[0] * 0.85 + 0.05, c[1] * 0.9 + 0.05};
        auto& ic = s.interior_colors[k];
        ic = {ic[2] * 0.9 + 0.05, ic[0] * 0.85 + 0.05, ic[1] * 0.9 + 0.05};
    }
    s.texture_noise = 0.15;
    s.motion_scale = motion_scale;
    return s;
}

}  // namespace egohome::microhome
