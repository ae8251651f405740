#pragma once

#include <utility>
#include <vector>

#include "gacnet/autodiff.hpp"

namespace gacnet::ops {

// elementwise
VarId add(Tape& t, VarId a, VarId b);
VarId sub(Tape& t, VarId a, VarId b);
VarId mul(Tape& t, VarId a, VarId b);
VarId scale(Tape& t, VarId a, double c);
VarId add_scalar(Tape& t, VarId a, double c);
VarId relu(Tape& t, VarId a);
VarId sigmoid(Tape& t, VarId a);
VarId mul_const(Tape& t, VarId a, const Tensor& m);
VarId add_const(Tape& t, VarId a, const Tensor& m);

// reductions
VarId sum(Tape& t, VarId a);
VarId dot_const(Tape& t, VarId a, const Tensor& w);

VarId reshape(Tape& t, VarId a, std::vector<int> shape);

// dense linear algebra
VarId matmul(Tape& t, VarId a, VarId b);                     // [m,k]x[k,n]
VarId linear_rows(Tape& t, VarId x, VarId w, VarId b);       // x[m,k]*w[k,n]+b[n]
VarId softmax_rows(Tape& t, VarId x);                        // [m,n], per row

// spatial (CHW)
VarId conv2d(Tape& t, VarId x, VarId w, VarId b, int stride, int pad);
VarId bilinear_resize(Tape& t, VarId x, int th, int tw);     // [H,W] or [C,H,W]
VarId concat_channels(Tape& t, const std::vector<VarId>& xs);
VarId slice_channels(Tape& t, VarId x, int c0, int c1);
VarId global_avg_pool(Tape& t, VarId x);                     // [C,H,W] -> [C]
VarId scale_channels(Tape& t, VarId x, VarId s);             // s[C] broadcast over HW
VarId tile_vector(Tape& t, VarId v, int h, int w);           // [C] -> [C,H,W]
VarId softmax_channels(Tape& t, VarId x);                    // per-pixel over C

// gather / segment ops (indices are graph constants)
VarId concat_cols(Tape& t, VarId a, VarId b);                            // [n,c1]+[n,c2]
VarId gather_rows(Tape& t, VarId x, std::vector<int> idx);               // [m,c]->[n,c]
VarId gather_spatial(Tape& t, VarId x, std::vector<int> pix);            // [C,H,W]->[n,C]
VarId gather_pixels(Tape& t, VarId x, std::vector<int> pix);             // [H,W]->[n]
VarId scatter_to_map(Tape& t, VarId vals, std::vector<int> pix, int h, int w);
VarId segment_softmax(Tape& t, VarId x, std::vector<int> offsets);       // [n]
VarId segment_sum(Tape& t, VarId x, std::vector<int> offsets);           // [n]->[G]
VarId group_maxpool(Tape& t, VarId x, std::vector<int> offsets);         // [n,c]->[G,c]

// propagation-specific
// raw [J,H,W] -> [J+1,H,W]; channels 0..J-1 are k_ij, channel J is k_i.
VarId normalize_affinity(Tape& t, VarId raw);
// One synchronous propagation update with replicate border padding.
// nk is [J+1,H,W] as produced by normalize_affinity; offsets[j] = (dy,dx).
VarId propagate_step(Tape& t, VarId d, VarId nk, std::vector<std::pair<int, int>> offsets);

}  // namespace gacnet::ops
