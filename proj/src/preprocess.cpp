#include "gacnet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gacnet/ops.hpp"

namespace gacnet {

BilateralPlan plan_bilateral(const SparseDepthMap& sparse, const BilateralConfig& cfg) {
    BilateralPlan plan;
    plan.h = sparse.h;
    plan.w = sparse.w;
    int r = cfg.window_radius;
    double sum = 0.0;
    int nvalid = 0;
    for (int y = 0; y < sparse.h; ++y)
        for (int x = 0; x < sparse.w; ++x) {
            if (sparse.at(y, x) > 0.0) {
                plan.anchor_pixels.push_back(y * sparse.w + x);
                plan.anchor_depths.push_back(sparse.at(y, x));
                sum += sparse.at(y, x);
                ++nvalid;
                continue;
            }
            // k nearest valid pixels within the Chebyshev window
            std::vector<std::pair<double, int>> found;  // (sq dist, pixel)
            for (int dy = -r; dy <= r; ++dy) {
                int ny = y + dy;
                if (ny < 0 || ny >= sparse.h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    int nx = x + dx;
                    if (nx < 0 || nx >= sparse.w) continue;
                    if (sparse.at(ny, nx) > 0.0)
                        found.emplace_back(double(dy) * dy + double(dx) * dx, ny * sparse.w + nx);
                }
            }
            if (found.empty()) {
                plan.fallback_pixels.push_back(y * sparse.w + x);
                continue;
            }
            int keep = std::min<int>(cfg.k_nearest, static_cast<int>(found.size()));
            std::partial_sort(found.begin(), found.begin() + keep, found.end());
            plan.prop_pixels.push_back(y * sparse.w + x);
            for (int i = 0; i < keep; ++i) {
                int q = found[static_cast<size_t>(i)].second;
                plan.neighbor_pixels.push_back(q);
                plan.neighbor_depths.push_back(sparse.values[static_cast<size_t>(q)]);
                plan.offsets.push_back(static_cast<double>(q % sparse.w - x));
                plan.offsets.push_back(static_cast<double>(q / sparse.w - y));
            }
            plan.seg_offsets.push_back(static_cast<int>(plan.neighbor_pixels.size()));
        }
    plan.valid_mean = nvalid > 0 ? sum / nvalid : 0.0;
    return plan;
}

VarId bilateral_propagate(Tape& t, const BilateralPlan& plan, const SparseDepthMap& sparse,
                          VarId image_feat, std::optional<VarId> coarse_prior,
                          const BilateralConfig& cfg, ParamRegistry& reg,
                          const std::string& prefix) {
    if (t.val(image_feat).dim(1) != plan.h || t.val(image_feat).dim(2) != plan.w)
        throw std::invalid_argument("bilateral_propagate: feature/depth dims differ");
    if (plan.anchor_pixels.empty() && !coarse_prior)
        throw std::invalid_argument(
            "bilateral_propagate: no valid sparse pixels and no coarse prior");

    std::vector<VarId> pieces;

    if (!plan.prop_pixels.empty()) {
        int n = static_cast<int>(plan.neighbor_pixels.size());
        // per-neighbor rows: [du, dv, feat(p) - feat(q)]
        std::vector<int> p_rows;
        p_rows.reserve(static_cast<size_t>(n));
        int lo = 0;
        for (size_t g = 0; g < plan.prop_pixels.size(); ++g) {
            for (int i = lo; i < plan.seg_offsets[g]; ++i) p_rows.push_back(plan.prop_pixels[g]);
            lo = plan.seg_offsets[g];
        }
        VarId feat_p = ops::gather_spatial(t, image_feat, p_rows);
        VarId feat_q = ops::gather_spatial(t, image_feat, plan.neighbor_pixels);
        VarId fdiff = ops::sub(t, feat_p, feat_q);
        VarId offs = t.constant(Tensor({n, 2}, plan.offsets));
        VarId rows = ops::concat_cols(t, offs, fdiff);

        VarId h = rows;
        int in = t.val(rows).dim(1);
        for (size_t l = 0; l < cfg.mlp_widths.size(); ++l) {
            std::string name = prefix + ".l" + std::to_string(l);
            VarId w = t.param(name + ".w", reg, {in, cfg.mlp_widths[l]}, Init::HeFanIn);
            VarId b = t.param(name + ".b", reg, {cfg.mlp_widths[l]}, Init::Zero);
            h = ops::relu(t, ops::linear_rows(t, h, w, b));
            in = cfg.mlp_widths[l];
        }
        VarId wlast = t.param(prefix + ".out.w", reg, {in, 1}, Init::HeFanIn);
        VarId blast = t.param(prefix + ".out.b", reg, {1}, Init::Zero);
        VarId logits = ops::reshape(t, ops::linear_rows(t, h, wlast, blast), {n});
        VarId weights = ops::segment_softmax(t, logits, plan.seg_offsets);
        VarId contrib = ops::mul_const(t, weights, Tensor({n}, plan.neighbor_depths));
        VarId per_pixel = ops::segment_sum(t, contrib, plan.seg_offsets);
        pieces.push_back(ops::scatter_to_map(t, per_pixel, plan.prop_pixels, plan.h, plan.w));
    }

    if (!plan.fallback_pixels.empty() && coarse_prior) {
        VarId prior_vals = ops::gather_pixels(t, *coarse_prior, plan.fallback_pixels);
        pieces.push_back(ops::scatter_to_map(t, prior_vals, plan.fallback_pixels, plan.h, plan.w));
    }

    Tensor base = Tensor::zeros({plan.h, plan.w});
    for (size_t i = 0; i < plan.anchor_pixels.size(); ++i)
        base.data[static_cast<size_t>(plan.anchor_pixels[i])] = plan.anchor_depths[i];
    if (!coarse_prior)
        for (int p : plan.fallback_pixels) base.data[static_cast<size_t>(p)] = plan.valid_mean;

    VarId out = t.constant(std::move(base));
    for (VarId piece : pieces) out = ops::add(t, out, piece);
    (void)sparse;
    return out;
}

}  // namespace gacnet
