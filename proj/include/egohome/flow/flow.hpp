#pragma once

#include <string>

#include "egohome/core/image.hpp"
#include "egohome/flow/field.hpp"

namespace egohome::flow {

// Mean Euclidean endpoint distance over jointly-valid pixels.
// Throws when no pixel is valid in both fields.
real aee(const FlowField& pred, const FlowField& gt);

struct LkParams {
    int pyramid_levels = 3;
    int window = 5;        // odd
    int iterations = 3;
    real min_eig = 2e-5;   // local-structure threshold on the normal matrix
    // Brute-force integer-shift alignment that seeds the coarsest level;
    // lets the refinement lock onto whole-view sweeps (turns) that exceed
    // the window reach.
    bool global_init = true;
    int global_range_u = 28;
    int global_range_v = 8;
};

// Dense coarse-to-fine Lucas-Kanade. Pixels whose window fails the
// local-structure test are marked invalid.
FlowField estimate_flow(const Image& a, const Image& b, const LkParams& params = {});

// Color codec: hue = direction, saturation = magnitude / max_mag (clipped),
// value = 1. Invalid and zero-flow pixels render white.
Image flow_to_color(const FlowField& f, real max_mag);
FlowField color_to_flow(const Image& img, real max_mag);

// Raw flow file: magic-free, little-endian: uint32 H, uint32 W, then
// float32 u-plane, v-plane, valid-plane.
void write_flow_file(const std::string& path, const FlowField& f);
FlowField read_flow_file(const std::string& path);

}  // namespace egohome::flow
