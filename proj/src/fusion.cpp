#include "gacnet/fusion.hpp"

#include <algorithm>
#include <stdexcept>

#include "gacnet/ops.hpp"

namespace gacnet {

namespace {

VarId conv_block(Tape& t, VarId x, int c_out, int k, int stride, ParamRegistry& reg,
                 const std::string& name, bool activate = true) {
    int c_in = t.val(x).dim(0);
    VarId w = t.param(name + ".w", reg, {c_out, c_in, k, k}, Init::HeFanIn);
    VarId b = t.param(name + ".b", reg, {c_out}, Init::Zero);
    VarId y = ops::conv2d(t, x, w, b, stride, k / 2);
    return activate ? ops::relu(t, y) : y;
}

}  // namespace

VarId unet_fuse(Tape& t, VarId image_feat, VarId depth_feat, const FusionConfig& cfg,
                ParamRegistry& reg, const std::string& prefix) {
    const Tensor& iv = t.val(image_feat);
    const Tensor& dv = t.val(depth_feat);
    if (iv.dim(1) != dv.dim(1) || iv.dim(2) != dv.dim(2))
        throw std::invalid_argument("unet_fuse: spatial dims differ");
    int w0 = cfg.unet_widths[0], w1 = cfg.unet_widths[1];

    VarId x = ops::concat_channels(t, {image_feat, depth_feat});
    VarId e0 = conv_block(t, x, w0, 3, 1, reg, prefix + ".enc0");
    VarId e1 = conv_block(t, e0, w1, 3, 2, reg, prefix + ".enc1");
    VarId e2 = conv_block(t, e1, w1, 3, 2, reg, prefix + ".enc2");

    VarId u1 = ops::bilinear_resize(t, e2, t.val(e1).dim(1), t.val(e1).dim(2));
    VarId d1 = conv_block(t, ops::concat_channels(t, {u1, e1}), w1, 3, 1, reg, prefix + ".dec1");
    VarId u0 = ops::bilinear_resize(t, d1, t.val(e0).dim(1), t.val(e0).dim(2));
    VarId d0 = conv_block(t, ops::concat_channels(t, {u0, e0}), w0, 3, 1, reg, prefix + ".dec0");
    return conv_block(t, d0, cfg.c_out, 3, 1, reg, prefix + ".out", /*activate=*/false);
}

VarId channel_attention(Tape& t, VarId f, int reduction, ParamRegistry& reg,
                        const std::string& prefix) {
    VarId pooled = t.val(f).rank() == 3 ? ops::global_avg_pool(t, f) : f;
    int c = t.val(pooled).dim(0);
    int hidden = std::max(1, c / reduction);
    VarId row = ops::reshape(t, pooled, {1, c});
    VarId w1 = t.param(prefix + ".fc1.w", reg, {c, hidden}, Init::HeFanIn);
    VarId b1 = t.param(prefix + ".fc1.b", reg, {hidden}, Init::Zero);
    VarId h = ops::relu(t, ops::linear_rows(t, row, w1, b1));
    VarId w2 = t.param(prefix + ".fc2.w", reg, {hidden, c}, Init::HeFanIn);
    VarId b2 = t.param(prefix + ".fc2.b", reg, {c}, Init::Zero);
    VarId logits = ops::linear_rows(t, h, w2, b2);
    return ops::reshape(t, ops::sigmoid(t, logits), {c});
}

VarId broadcast_global(Tape& t, VarId f3d, int c_out, int h, int w, ParamRegistry& reg,
                       const std::string& prefix) {
    int c_in = t.val(f3d).dim(0);
    VarId row = ops::reshape(t, f3d, {1, c_in});
    VarId pw = t.param(prefix + ".proj.w", reg, {c_in, c_out}, Init::HeFanIn);
    VarId pb = t.param(prefix + ".proj.b", reg, {c_out}, Init::Zero);
    VarId proj = ops::reshape(t, ops::linear_rows(t, row, pw, pb), {c_out});
    return ops::tile_vector(t, proj, h, w);
}

VarId caffm(Tape& t, VarId f_unet, VarId f3d, const FusionConfig& cfg, ParamRegistry& reg,
            const std::string& prefix) {
    const Tensor& fv = t.val(f_unet);
    if (fv.dim(0) != cfg.c_out) throw std::invalid_argument("caffm: channel count mismatch");
    VarId b = broadcast_global(t, f3d, cfg.c_out, fv.dim(1), fv.dim(2), reg, prefix + ".bcast");
    VarId a_unet = channel_attention(t, f_unet, cfg.se_reduction, reg, prefix + ".att2d");
    VarId a_3d = channel_attention(t, b, cfg.se_reduction, reg, prefix + ".att3d");
    return ops::add(t, ops::scale_channels(t, f_unet, a_unet), ops::scale_channels(t, b, a_3d));
}

VarId concat_fuse(Tape& t, VarId f_unet, VarId f3d, const FusionConfig& cfg, ParamRegistry& reg,
                  const std::string& prefix) {
    const Tensor& fv = t.val(f_unet);
    if (fv.dim(0) != cfg.c_out) throw std::invalid_argument("concat_fuse: channel count mismatch");
    VarId b = broadcast_global(t, f3d, cfg.c_out, fv.dim(1), fv.dim(2), reg, prefix + ".bcast");
    VarId cat = ops::concat_channels(t, {f_unet, b});
    return conv_block(t, cat, cfg.c_out, 1, 1, reg, prefix + ".proj", /*activate=*/false);
}

}  // namespace gacnet
