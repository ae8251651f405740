#pragma once

#include <random>
#include <string>
#include <vector>

#include "gacnet/autodiff.hpp"
#include "gacnet/geometry.hpp"

namespace gacnet {

struct RefineConfig {
    std::vector<int> kernel_sizes{3, 5, 7};
    int t_max = 4;
    std::vector<int> snapshot_steps{1, 2, 4};
};

// D_0 = D_pre + 1x1-projection(F_fused); during training the residual branch
// is dropped whole-sample with probability droppath_rate.
VarId residual_correct(Tape& t, VarId f_fused, VarId d_pre, ParamRegistry& reg,
                       const std::string& prefix, double droppath_rate, std::mt19937_64* rng);

// (1 - gamma) * D + gamma * S, with gamma already masked to the valid pixels.
VarId apply_sparse_constraint(Tape& t, VarId d, const SparseDepthMap& s, VarId gamma_masked);

// Full CSPN++ refinement: residual correction, per-kernel normalized
// propagation with the sparse constraint after every step, multi-kernel /
// multi-step softmax fusion, clamp to >= 0.
VarId refine(Tape& t, VarId f_fused, VarId d_pre, const SparseDepthMap& s,
             const RefineConfig& cfg, ParamRegistry& reg, const std::string& prefix,
             double droppath_rate = 0.0, std::mt19937_64* rng = nullptr);

// Neighborhood offsets for a kernel_size x kernel_size window minus center.
std::vector<std::pair<int, int>> kernel_offsets(int kernel_size);

}  // namespace gacnet
