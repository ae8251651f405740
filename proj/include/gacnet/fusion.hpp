#pragma once

#include <string>
#include <vector>

#include "gacnet/autodiff.hpp"

namespace gacnet {

struct FusionConfig {
    std::vector<int> unet_widths{32, 64};  // encoder widths at the two down levels
    int c_out = 32;                        // fused feature channels per scale
    int se_reduction = 4;                  // SE bottleneck ratio
};

// Channel-concatenates image and depth features and runs a small 2-down /
// 2-up encoder-decoder with skip connections. Output: [c_out, H, W].
VarId unet_fuse(Tape& t, VarId image_feat, VarId depth_feat, const FusionConfig& cfg,
                ParamRegistry& reg, const std::string& prefix);

// SE-style gate: global average pool (identity for vectors), bottleneck FC,
// sigmoid. Output: [C] in (0,1).
VarId channel_attention(Tape& t, VarId f, int reduction, ParamRegistry& reg,
                        const std::string& prefix);

// Linear 256 -> c_out projection followed by spatial tiling.
VarId broadcast_global(Tape& t, VarId f3d, int c_out, int h, int w, ParamRegistry& reg,
                       const std::string& prefix);

// F_fused = A_unet * F_unet + A_3d * broadcast(F_3d), per-channel gates.
VarId caffm(Tape& t, VarId f_unet, VarId f3d, const FusionConfig& cfg, ParamRegistry& reg,
            const std::string& prefix);

// Ablation variant: concat with the broadcast global feature, then a 1x1
// projection back to c_out channels.
VarId concat_fuse(Tape& t, VarId f_unet, VarId f3d, const FusionConfig& cfg, ParamRegistry& reg,
                  const std::string& prefix);

}  // namespace gacnet
