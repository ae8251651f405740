#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gacnet/autodiff.hpp"
#include "gacnet/data_io.hpp"
#include "gacnet/fusion.hpp"
#include "gacnet/geometry.hpp"
#include "gacnet/pointnet.hpp"
#include "gacnet/preprocess.hpp"
#include "gacnet/refine.hpp"

namespace gacnet {

enum class FusionMode { Caffm, Concat };

struct ScaleConfig {
    int index = 0;     // 0 = coarsest (1/32), 5 = finest (1/1)
    int factor = 32;   // downsampling factor at this scale
    int c_img = 8;     // image encoder channels
    int c_depth = 8;   // depth feature channels
    FusionConfig fusion;
    BilateralConfig bilateral;
};

struct NetworkConfig {
    bool enable_preprocess = true;
    bool enable_3d_branch = true;
    FusionMode fusion_mode = FusionMode::Caffm;
    double droppath_rate = 0.0;
    uint64_t seed = 0;
    PointNetConfig pointnet;
    RefineConfig refine;
    std::array<ScaleConfig, 6> scales;

    static NetworkConfig defaults();  // paper-scale widths
    static NetworkConfig toy();       // small widths for CPU experiments

    std::string to_json() const;
    static NetworkConfig from_json(const std::string& text);
};

// Median-anchored blockwise sparse downsampling: per block keep the valid
// depth nearest the block median (0 when none).
SparseDepthMap downsample_sparse(const SparseDepthMap& sparse, int factor);

// Strided conv pyramid; returns one feature map per scale, coarsest first.
std::vector<VarId> encode_image(Tape& t, const Tensor& image, const NetworkConfig& cfg,
                                ParamRegistry& reg);

// Geometry-dependent, parameter-independent per-frame state, cached across
// training steps.
struct FramePlan {
    std::array<SparseDepthMap, 6> sparse_per_scale;
    std::array<BilateralPlan, 6> bilateral;
    PointNetPlan pointnet;
    DenseDepthMap coarse_fill;  // nearest-valid fill at the coarsest scale
};

class GacNet {
public:
    GacNet(NetworkConfig cfg, uint64_t param_seed);
    GacNet(NetworkConfig cfg, ParamRegistry registry);

    FramePlan plan_frame(const Frame& frame) const;

    // Six per-scale predictions (tape vars, [H,W]), coarsest first.
    std::vector<VarId> forward(Tape& t, const Frame& frame, const FramePlan& plan,
                               bool training = false, std::mt19937_64* droppath_rng = nullptr);

    DenseDepthMap predict(const Frame& frame);

    ParamRegistry& params() { return reg_; }
    const NetworkConfig& config() const { return cfg_; }
    long pointnet_calls_last_forward() const { return pointnet_calls_; }

private:
    NetworkConfig cfg_;
    ParamRegistry reg_;
    long pointnet_calls_ = 0;
};

}  // namespace gacnet
