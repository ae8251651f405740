#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gacnet/autodiff.hpp"
#include "gacnet/geometry.hpp"

namespace gacnet {

struct BilateralConfig {
    int window_radius = 7;
    int k_nearest = 8;
    std::vector<int> mlp_widths{16};
};

// Per-frame neighbor plan: which valid sparse pixels feed each invalid pixel.
// Depends only on the sparse pattern, so it is cached across training steps.
struct BilateralPlan {
    int h = 0, w = 0;
    std::vector<int> prop_pixels;      // invalid pixels with >=1 in-window valid neighbor
    std::vector<int> neighbor_pixels;  // flattened neighbor pixel indices
    std::vector<double> neighbor_depths;
    std::vector<double> offsets;       // flattened (du, dv) per neighbor row
    std::vector<int> seg_offsets;      // exclusive-scan end per prop pixel
    std::vector<int> fallback_pixels;  // invalid pixels with empty windows
    std::vector<int> anchor_pixels;    // valid pixels
    std::vector<double> anchor_depths;
    double valid_mean = 0.0;
};

BilateralPlan plan_bilateral(const SparseDepthMap& sparse, const BilateralConfig& cfg);

// Learned softmax-weighted gather of the k nearest valid sparse depths.
// Output is anchored to S at valid pixels; empty-window pixels fall back to
// the coarse prior (when given) or to the global mean of valid depths.
// Returns an [H,W] map on the tape.
VarId bilateral_propagate(Tape& t, const BilateralPlan& plan, const SparseDepthMap& sparse,
                          VarId image_feat, std::optional<VarId> coarse_prior,
                          const BilateralConfig& cfg, ParamRegistry& reg,
                          const std::string& prefix);

}  // namespace gacnet
