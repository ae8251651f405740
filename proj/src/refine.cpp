#include "gacnet/refine.hpp"

#include <algorithm>
#include <stdexcept>

#include "gacnet/ops.hpp"

namespace gacnet {

std::vector<std::pair<int, int>> kernel_offsets(int kernel_size) {
    int r = kernel_size / 2;
    std::vector<std::pair<int, int>> offs;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dy != 0 || dx != 0) offs.emplace_back(dy, dx);
    return offs;
}

namespace {

VarId conv1x1(Tape& t, VarId x, int c_out, ParamRegistry& reg, const std::string& name) {
    int c_in = t.val(x).dim(0);
    VarId w = t.param(name + ".w", reg, {c_out, c_in, 1, 1}, Init::HeFanIn);
    VarId b = t.param(name + ".b", reg, {c_out}, Init::Zero);
    return ops::conv2d(t, x, w, b, 1, 0);
}

Tensor valid_mask(const SparseDepthMap& s) {
    Tensor m({s.h, s.w});
    for (size_t i = 0; i < s.values.size(); ++i) m.data[i] = s.values[i] > 0.0 ? 1.0 : 0.0;
    return m;
}

}  // namespace

VarId residual_correct(Tape& t, VarId f_fused, VarId d_pre, ParamRegistry& reg,
                       const std::string& prefix, double droppath_rate, std::mt19937_64* rng) {
    const int h = t.val(d_pre).dim(0), w = t.val(d_pre).dim(1);
    if (t.val(f_fused).dim(1) != h || t.val(f_fused).dim(2) != w)
        throw std::invalid_argument("residual_correct: spatial dims differ");
    bool drop = false;
    if (rng && droppath_rate > 0.0)
        drop = std::uniform_real_distribution<double>(0.0, 1.0)(*rng) < droppath_rate;
    // parameters are created even when the branch is dropped, keeping the
    // registry identical across samples
    VarId delta = conv1x1(t, f_fused, 1, reg, prefix + ".residual");
    if (drop) return d_pre;
    return ops::add(t, d_pre, ops::reshape(t, delta, {h, w}));
}

VarId apply_sparse_constraint(Tape& t, VarId d, const SparseDepthMap& s, VarId gamma_masked) {
    const Tensor& dv = t.val(d);
    if (dv.dim(0) != s.h || dv.dim(1) != s.w)
        throw std::invalid_argument("apply_sparse_constraint: dims differ");
    Tensor sval({s.h, s.w}, s.values);
    // (1 - g) * D + g * S  ==  D - g*D + g*S
    VarId gd = ops::mul(t, gamma_masked, d);
    VarId gs = ops::mul_const(t, gamma_masked, sval);
    return ops::add(t, ops::sub(t, d, gd), gs);
}

VarId refine(Tape& t, VarId f_fused, VarId d_pre, const SparseDepthMap& s,
             const RefineConfig& cfg, ParamRegistry& reg, const std::string& prefix,
             double droppath_rate, std::mt19937_64* rng) {
    VarId d0 = residual_correct(t, f_fused, d_pre, reg, prefix, droppath_rate, rng);
    int h = s.h, w = s.w;

    VarId gamma_raw = conv1x1(t, f_fused, 1, reg, prefix + ".gamma");
    VarId gamma = ops::sigmoid(t, ops::reshape(t, gamma_raw, {h, w}));
    VarId gamma_masked = ops::mul_const(t, gamma, valid_mask(s));

    std::vector<VarId> snapshots;
    for (int k : cfg.kernel_sizes) {
        auto offs = kernel_offsets(k);
        int j = static_cast<int>(offs.size());
        VarId raw = conv1x1(t, f_fused, j, reg, prefix + ".aff" + std::to_string(k));
        VarId nk = ops::normalize_affinity(t, raw);
        VarId d = d0;
        for (int step = 1; step <= cfg.t_max; ++step) {
            d = ops::propagate_step(t, d, nk, offs);
            d = apply_sparse_constraint(t, d, s, gamma_masked);
            if (std::find(cfg.snapshot_steps.begin(), cfg.snapshot_steps.end(), step) !=
                cfg.snapshot_steps.end())
                snapshots.push_back(d);
        }
    }

    int n_snap = static_cast<int>(snapshots.size());
    VarId tau_raw = conv1x1(t, f_fused, n_snap, reg, prefix + ".tau");
    VarId tau = ops::softmax_channels(t, tau_raw);
    VarId fused = -1;
    for (int i = 0; i < n_snap; ++i) {
        VarId ti = ops::reshape(t, ops::slice_channels(t, tau, i, i + 1), {h, w});
        VarId term = ops::mul(t, ti, snapshots[static_cast<size_t>(i)]);
        fused = fused < 0 ? term : ops::add(t, fused, term);
    }
    return ops::relu(t, fused);  // clamp final output to >= 0 m
}

}  // namespace gacnet
