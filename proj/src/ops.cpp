#include "gacnet/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gacnet::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Creates a node and wires a backward closure that receives the output id.
template <class F>
VarId node(Tape& t, Tensor out, bool req, F f) {
    VarId v = t.push(std::move(out), req, nullptr);
    if (req) t.set_back(v, [v, f](Tape& tp) { f(tp, v); });
    return v;
}

bool any_grad(Tape& t, std::initializer_list<VarId> vs) {
    for (VarId v : vs)
        if (t.requires_grad(v)) return true;
    return false;
}

}  // namespace

VarId add(Tape& t, VarId a, VarId b) {
    check(t.val(a).same_shape(t.val(b)), "add: shape mismatch");
    Tensor out = t.val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += t.val(b).data[i];
    return node(t, std::move(out), any_grad(t, {a, b}), [a, b](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        for (VarId p : {a, b}) {
            if (!tp.requires_grad(p)) continue;
            Tensor& pg = tp.grad(p);
            for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] += g.data[i];
        }
    });
}

VarId sub(Tape& t, VarId a, VarId b) {
    check(t.val(a).same_shape(t.val(b)), "sub: shape mismatch");
    Tensor out = t.val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= t.val(b).data[i];
    return node(t, std::move(out), any_grad(t, {a, b}), [a, b](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        if (tp.requires_grad(a)) {
            Tensor& pg = tp.grad(a);
            for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] += g.data[i];
        }
        if (tp.requires_grad(b)) {
            Tensor& pg = tp.grad(b);
            for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] -= g.data[i];
        }
    });
}

VarId mul(Tape& t, VarId a, VarId b) {
    check(t.val(a).same_shape(t.val(b)), "mul: shape mismatch");
    Tensor out = t.val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= t.val(b).data[i];
    return node(t, std::move(out), any_grad(t, {a, b}), [a, b](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        if (tp.requires_grad(a)) {
            Tensor& pg = tp.grad(a);
            const Tensor& bv = tp.val(b);
            for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] += g.data[i] * bv.data[i];
        }
        if (tp.requires_grad(b)) {
            Tensor& pg = tp.grad(b);
            const Tensor& av = tp.val(a);
            for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] += g.data[i] * av.data[i];
        }
    });
}

VarId scale(Tape& t, VarId a, double c) {
    Tensor out = t.val(a);
    for (auto& v : out.data) v *= c;
    return node(t, std::move(out), t.requires_grad(a), [a, c](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] += c * g.data[i];
    });
}

VarId add_scalar(Tape& t, VarId a, double c) {
    Tensor out = t.val(a);
    for (auto& v : out.data) v += c;
    return node(t, std::move(out), t.requires_grad(a), [a](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] += g.data[i];
    });
}

VarId relu(Tape& t, VarId a) {
    Tensor out = t.val(a);
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return node(t, std::move(out), t.requires_grad(a), [a](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        const Tensor& av = tp.val(a);
        Tensor& pg = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i)
            if (av.data[i] > 0.0) pg.data[i] += g.data[i];
    });
}

VarId sigmoid(Tape& t, VarId a) {
    Tensor out = t.val(a);
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return node(t, std::move(out), t.requires_grad(a), [a](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        const Tensor& ov = tp.val(v);
        Tensor& pg = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i)
            pg.data[i] += g.data[i] * ov.data[i] * (1.0 - ov.data[i]);
    });
}

VarId mul_const(Tape& t, VarId a, const Tensor& m) {
    check(t.val(a).same_shape(m), "mul_const: shape mismatch");
    Tensor out = t.val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= m.data[i];
    return node(t, std::move(out), t.requires_grad(a), [a, m](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] += g.data[i] * m.data[i];
    });
}

VarId add_const(Tape& t, VarId a, const Tensor& m) {
    check(t.val(a).same_shape(m), "add_const: shape mismatch");
    Tensor out = t.val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += m.data[i];
    return node(t, std::move(out), t.requires_grad(a), [a](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] += g.data[i];
    });
}

VarId sum(Tape& t, VarId a) {
    double s = 0.0;
    for (double v : t.val(a).data) s += v;
    return node(t, Tensor::scalar(s), t.requires_grad(a), [a](Tape& tp, VarId v) {
        double g = tp.grad(v)[0];
        Tensor& pg = tp.grad(a);
        for (auto& x : pg.data) x += g;
    });
}

VarId dot_const(Tape& t, VarId a, const Tensor& w) {
    check(t.val(a).same_shape(w), "dot_const: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < w.data.size(); ++i) s += t.val(a).data[i] * w.data[i];
    return node(t, Tensor::scalar(s), t.requires_grad(a), [a, w](Tape& tp, VarId v) {
        double g = tp.grad(v)[0];
        Tensor& pg = tp.grad(a);
        for (size_t i = 0; i < w.data.size(); ++i) pg.data[i] += g * w.data[i];
    });
}

VarId reshape(Tape& t, VarId a, std::vector<int> shape) {
    check(Tensor::numel_of(shape) == t.val(a).numel(), "reshape: numel mismatch");
    Tensor out(std::move(shape), t.val(a).data);
    return node(t, std::move(out), t.requires_grad(a), [a](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) pg.data[i] += g.data[i];
    });
}

VarId matmul(Tape& t, VarId a, VarId b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    check(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0), "matmul: bad shapes");
    int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    MapMat(out.data.data(), m, n).noalias() =
        CMapMat(av.data.data(), m, k) * CMapMat(bv.data.data(), k, n);
    return node(t, std::move(out), any_grad(t, {a, b}), [a, b, m, k, n](Tape& tp, VarId v) {
        CMapMat g(tp.grad(v).data.data(), m, n);
        if (tp.requires_grad(a)) {
            MapMat(tp.grad(a).data.data(), m, k).noalias() +=
                g * CMapMat(tp.val(b).data.data(), k, n).transpose();
        }
        if (tp.requires_grad(b)) {
            MapMat(tp.grad(b).data.data(), k, n).noalias() +=
                CMapMat(tp.val(a).data.data(), m, k).transpose() * g;
        }
    });
}

VarId linear_rows(Tape& t, VarId x, VarId w, VarId b) {
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    const Tensor& bv = t.val(b);
    check(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(0) && bv.dim(0) == wv.dim(1),
          "linear_rows: bad shapes");
    int m = xv.dim(0), k = xv.dim(1), n = wv.dim(1);
    Tensor out({m, n});
    MapMat o(out.data.data(), m, n);
    o.noalias() = CMapMat(xv.data.data(), m, k) * CMapMat(wv.data.data(), k, n);
    o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data.data(), n);
    return node(t, std::move(out), any_grad(t, {x, w, b}), [x, w, b, m, k, n](Tape& tp, VarId v) {
        CMapMat g(tp.grad(v).data.data(), m, n);
        if (tp.requires_grad(x))
            MapMat(tp.grad(x).data.data(), m, k).noalias() +=
                g * CMapMat(tp.val(w).data.data(), k, n).transpose();
        if (tp.requires_grad(w))
            MapMat(tp.grad(w).data.data(), k, n).noalias() +=
                CMapMat(tp.val(x).data.data(), m, k).transpose() * g;
        if (tp.requires_grad(b))
            Eigen::Map<Eigen::RowVectorXd>(tp.grad(b).data.data(), n) += g.colwise().sum();
    });
}

VarId softmax_rows(Tape& t, VarId x) {
    const Tensor& xv = t.val(x);
    check(xv.rank() == 2, "softmax_rows: expect [m,n]");
    int m = xv.dim(0), n = xv.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        double mx = -1e300;
        for (int j = 0; j < n; ++j) mx = std::max(mx, xv.at(i, j));
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::exp(xv.at(i, j) - mx);
        for (int j = 0; j < n; ++j) out.at(i, j) = std::exp(xv.at(i, j) - mx) / s;
    }
    return node(t, std::move(out), t.requires_grad(x), [x, m, n](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        const Tensor& y = tp.val(v);
        Tensor& pg = tp.grad(x);
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
            for (int j = 0; j < n; ++j) pg.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

namespace {

// im2col for CHW input; columns indexed by output pixel.
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int oh, int ow, Tensor& col) {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int patch = c * kh * kw;
    for (int ci = 0; ci < c; ++ci)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                int row = (ci * kh + ki) * kw + kj;
                double* dst = &col.data[static_cast<size_t>(row) * oh * ow];
                for (int oi = 0; oi < oh; ++oi) {
                    int ii = oi * stride + ki - pad;
                    for (int oj = 0; oj < ow; ++oj) {
                        int jj = oj * stride + kj - pad;
                        dst[oi * ow + oj] = (ii >= 0 && ii < h && jj >= 0 && jj < w)
                                                ? x.at(ci, ii, jj)
                                                : 0.0;
                    }
                }
                (void)patch;
            }
}

void col2im_add(const Tensor& col, int c, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, Tensor& gx) {
    for (int ci = 0; ci < c; ++ci)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                int row = (ci * kh + ki) * kw + kj;
                const double* src = &col.data[static_cast<size_t>(row) * oh * ow];
                for (int oi = 0; oi < oh; ++oi) {
                    int ii = oi * stride + ki - pad;
                    if (ii < 0 || ii >= h) continue;
                    for (int oj = 0; oj < ow; ++oj) {
                        int jj = oj * stride + kj - pad;
                        if (jj < 0 || jj >= w) continue;
                        gx.at(ci, ii, jj) += src[oi * ow + oj];
                    }
                }
            }
}

}  // namespace

VarId conv2d(Tape& t, VarId x, VarId w, VarId b, int stride, int pad) {
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    check(xv.rank() == 3 && wv.rank() == 4 && xv.dim(0) == wv.dim(1), "conv2d: bad shapes");
    int c = xv.dim(0), h = xv.dim(1), ww = xv.dim(2);
    int o = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    int oh = (h + 2 * pad - kh) / stride + 1;
    int ow = (ww + 2 * pad - kw) / stride + 1;
    check(oh >= 1 && ow >= 1, "conv2d: output collapsed");
    int patch = c * kh * kw;
    Tensor col({patch, oh * ow});
    im2col(xv, kh, kw, stride, pad, oh, ow, col);
    Tensor out({o, oh, ow});
    MapMat om(out.data.data(), o, oh * ow);
    om.noalias() = CMapMat(wv.data.data(), o, patch) * CMapMat(col.data.data(), patch, oh * ow);
    const Tensor& bv = t.val(b);
    for (int oc = 0; oc < o; ++oc) om.row(oc).array() += bv[oc];
    return node(t, std::move(out), any_grad(t, {x, w, b}),
                [x, w, b, stride, pad, c, h, ww, o, kh, kw, oh, ow, patch](Tape& tp, VarId v) {
                    CMapMat g(tp.grad(v).data.data(), o, oh * ow);
                    if (tp.requires_grad(b))
                        for (int oc = 0; oc < o; ++oc) tp.grad(b)[oc] += g.row(oc).sum();
                    Tensor col({patch, oh * ow});
                    im2col(tp.val(x), kh, kw, stride, pad, oh, ow, col);
                    if (tp.requires_grad(w))
                        MapMat(tp.grad(w).data.data(), o, patch).noalias() +=
                            g * CMapMat(col.data.data(), patch, oh * ow).transpose();
                    if (tp.requires_grad(x)) {
                        Tensor gcol({patch, oh * ow});
                        MapMat(gcol.data.data(), patch, oh * ow).noalias() =
                            CMapMat(tp.val(w).data.data(), o, patch).transpose() * g;
                        col2im_add(gcol, c, h, ww, kh, kw, stride, pad, oh, ow, tp.grad(x));
                    }
                });
}

namespace {

struct LerpTap {
    int i0, i1;
    double w0, w1;
};

std::vector<LerpTap> bilinear_taps(int src, int dst) {
    std::vector<LerpTap> taps(static_cast<size_t>(dst));
    double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        double sc = (i + 0.5) * scale - 0.5;
        double fl = std::floor(sc);
        double fr = sc - fl;
        int i0 = static_cast<int>(fl);
        int i1 = i0 + 1;
        i0 = std::clamp(i0, 0, src - 1);
        i1 = std::clamp(i1, 0, src - 1);
        taps[static_cast<size_t>(i)] = {i0, i1, 1.0 - fr, fr};
    }
    return taps;
}

}  // namespace

VarId bilinear_resize(Tape& t, VarId x, int th, int tw) {
    const Tensor& xv = t.val(x);
    check(xv.rank() == 2 || xv.rank() == 3, "bilinear_resize: expect [H,W] or [C,H,W]");
    int c = xv.rank() == 3 ? xv.dim(0) : 1;
    int h = xv.dim(xv.rank() - 2), w = xv.dim(xv.rank() - 1);
    auto ty = bilinear_taps(h, th);
    auto tx = bilinear_taps(w, tw);
    std::vector<int> oshape = xv.rank() == 3 ? std::vector<int>{c, th, tw}
                                             : std::vector<int>{th, tw};
    Tensor out(oshape);
    for (int ci = 0; ci < c; ++ci) {
        const double* src = &xv.data[static_cast<size_t>(ci) * h * w];
        double* dst = &out.data[static_cast<size_t>(ci) * th * tw];
        for (int i = 0; i < th; ++i)
            for (int j = 0; j < tw; ++j) {
                const auto& a = ty[static_cast<size_t>(i)];
                const auto& bq = tx[static_cast<size_t>(j)];
                dst[i * tw + j] = a.w0 * (bq.w0 * src[a.i0 * w + bq.i0] +
                                          bq.w1 * src[a.i0 * w + bq.i1]) +
                                  a.w1 * (bq.w0 * src[a.i1 * w + bq.i0] +
                                          bq.w1 * src[a.i1 * w + bq.i1]);
            }
    }
    return node(t, std::move(out), t.requires_grad(x),
                [x, c, h, w, th, tw, ty, tx](Tape& tp, VarId v) {
                    const Tensor& g = tp.grad(v);
                    Tensor& pg = tp.grad(x);
                    for (int ci = 0; ci < c; ++ci) {
                        const double* gs = &g.data[static_cast<size_t>(ci) * th * tw];
                        double* gd = &pg.data[static_cast<size_t>(ci) * h * w];
                        for (int i = 0; i < th; ++i)
                            for (int j = 0; j < tw; ++j) {
                                const auto& a = ty[static_cast<size_t>(i)];
                                const auto& bq = tx[static_cast<size_t>(j)];
                                double gv = gs[i * tw + j];
                                gd[a.i0 * w + bq.i0] += a.w0 * bq.w0 * gv;
                                gd[a.i0 * w + bq.i1] += a.w0 * bq.w1 * gv;
                                gd[a.i1 * w + bq.i0] += a.w1 * bq.w0 * gv;
                                gd[a.i1 * w + bq.i1] += a.w1 * bq.w1 * gv;
                            }
                    }
                });
}

VarId concat_channels(Tape& t, const std::vector<VarId>& xs) {
    check(!xs.empty(), "concat_channels: empty list");
    int h = t.val(xs[0]).dim(1), w = t.val(xs[0]).dim(2);
    int ctot = 0;
    bool req = false;
    for (VarId x : xs) {
        const Tensor& xv = t.val(x);
        check(xv.rank() == 3 && xv.dim(1) == h && xv.dim(2) == w, "concat_channels: bad shapes");
        ctot += xv.dim(0);
        req = req || t.requires_grad(x);
    }
    Tensor out({ctot, h, w});
    size_t off = 0;
    for (VarId x : xs) {
        const Tensor& xv = t.val(x);
        std::copy(xv.data.begin(), xv.data.end(), out.data.begin() + static_cast<long>(off));
        off += xv.data.size();
    }
    std::vector<VarId> parents = xs;
    return node(t, std::move(out), req, [parents](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        size_t off = 0;
        for (VarId x : parents) {
            size_t n = tp.val(x).data.size();
            if (tp.requires_grad(x)) {
                Tensor& pg = tp.grad(x);
                for (size_t i = 0; i < n; ++i) pg.data[i] += g.data[off + i];
            }
            off += n;
        }
    });
}

VarId slice_channels(Tape& t, VarId x, int c0, int c1) {
    const Tensor& xv = t.val(x);
    check(xv.rank() == 3 && 0 <= c0 && c0 < c1 && c1 <= xv.dim(0), "slice_channels: bad range");
    int h = xv.dim(1), w = xv.dim(2);
    size_t plane = static_cast<size_t>(h) * w;
    Tensor out({c1 - c0, h, w});
    std::copy(xv.data.begin() + static_cast<long>(c0 * plane),
              xv.data.begin() + static_cast<long>(c1 * plane), out.data.begin());
    return node(t, std::move(out), t.requires_grad(x), [x, c0, plane](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(x);
        for (size_t i = 0; i < g.data.size(); ++i) pg.data[c0 * plane + i] += g.data[i];
    });
}

VarId global_avg_pool(Tape& t, VarId x) {
    const Tensor& xv = t.val(x);
    check(xv.rank() == 3, "global_avg_pool: expect [C,H,W]");
    int c = xv.dim(0);
    size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({c});
    for (int ci = 0; ci < c; ++ci) {
        double s = 0.0;
        for (size_t i = 0; i < plane; ++i) s += xv.data[ci * plane + i];
        out[ci] = s / static_cast<double>(plane);
    }
    return node(t, std::move(out), t.requires_grad(x), [x, c, plane](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(x);
        for (int ci = 0; ci < c; ++ci) {
            double gv = g[ci] / static_cast<double>(plane);
            for (size_t i = 0; i < plane; ++i) pg.data[ci * plane + i] += gv;
        }
    });
}

VarId scale_channels(Tape& t, VarId x, VarId s) {
    const Tensor& xv = t.val(x);
    const Tensor& sv = t.val(s);
    check(xv.rank() == 3 && sv.rank() == 1 && sv.dim(0) == xv.dim(0),
          "scale_channels: bad shapes");
    int c = xv.dim(0);
    size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out = xv;
    for (int ci = 0; ci < c; ++ci)
        for (size_t i = 0; i < plane; ++i) out.data[ci * plane + i] *= sv[ci];
    return node(t, std::move(out), any_grad(t, {x, s}), [x, s, c, plane](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        if (tp.requires_grad(x)) {
            Tensor& pg = tp.grad(x);
            const Tensor& sv = tp.val(s);
            for (int ci = 0; ci < c; ++ci)
                for (size_t i = 0; i < plane; ++i)
                    pg.data[ci * plane + i] += g.data[ci * plane + i] * sv[ci];
        }
        if (tp.requires_grad(s)) {
            Tensor& pg = tp.grad(s);
            const Tensor& xvb = tp.val(x);
            for (int ci = 0; ci < c; ++ci) {
                double acc = 0.0;
                for (size_t i = 0; i < plane; ++i)
                    acc += g.data[ci * plane + i] * xvb.data[ci * plane + i];
                pg[ci] += acc;
            }
        }
    });
}

VarId tile_vector(Tape& t, VarId v, int h, int w) {
    const Tensor& vv = t.val(v);
    check(vv.rank() == 1, "tile_vector: expect [C]");
    int c = vv.dim(0);
    size_t plane = static_cast<size_t>(h) * w;
    Tensor out({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        std::fill_n(out.data.begin() + static_cast<long>(ci * plane), plane, vv[ci]);
    return node(t, std::move(out), t.requires_grad(v), [v, c, plane](Tape& tp, VarId ov) {
        const Tensor& g = tp.grad(ov);
        Tensor& pg = tp.grad(v);
        for (int ci = 0; ci < c; ++ci) {
            double acc = 0.0;
            for (size_t i = 0; i < plane; ++i) acc += g.data[ci * plane + i];
            pg[ci] += acc;
        }
    });
}

VarId softmax_channels(Tape& t, VarId x) {
    const Tensor& xv = t.val(x);
    check(xv.rank() == 3, "softmax_channels: expect [C,H,W]");
    int c = xv.dim(0);
    size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out = xv;
    for (size_t p = 0; p < plane; ++p) {
        double mx = -1e300;
        for (int ci = 0; ci < c; ++ci) mx = std::max(mx, xv.data[ci * plane + p]);
        double s = 0.0;
        for (int ci = 0; ci < c; ++ci) s += std::exp(xv.data[ci * plane + p] - mx);
        for (int ci = 0; ci < c; ++ci)
            out.data[ci * plane + p] = std::exp(xv.data[ci * plane + p] - mx) / s;
    }
    return node(t, std::move(out), t.requires_grad(x), [x, c, plane](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        const Tensor& y = tp.val(v);
        Tensor& pg = tp.grad(x);
        for (size_t p = 0; p < plane; ++p) {
            double dot = 0.0;
            for (int ci = 0; ci < c; ++ci) dot += g.data[ci * plane + p] * y.data[ci * plane + p];
            for (int ci = 0; ci < c; ++ci)
                pg.data[ci * plane + p] += y.data[ci * plane + p] * (g.data[ci * plane + p] - dot);
        }
    });
}

VarId concat_cols(Tape& t, VarId a, VarId b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    check(av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0), "concat_cols: bad shapes");
    int n = av.dim(0), c1 = av.dim(1), c2 = bv.dim(1);
    Tensor out({n, c1 + c2});
    for (int i = 0; i < n; ++i) {
        std::copy_n(&av.data[static_cast<size_t>(i) * c1], c1,
                    &out.data[static_cast<size_t>(i) * (c1 + c2)]);
        std::copy_n(&bv.data[static_cast<size_t>(i) * c2], c2,
                    &out.data[static_cast<size_t>(i) * (c1 + c2) + c1]);
    }
    return node(t, std::move(out), any_grad(t, {a, b}), [a, b, n, c1, c2](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        if (tp.requires_grad(a)) {
            Tensor& pg = tp.grad(a);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c1; ++j)
                    pg.at(i, j) += g.data[static_cast<size_t>(i) * (c1 + c2) + j];
        }
        if (tp.requires_grad(b)) {
            Tensor& pg = tp.grad(b);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c2; ++j)
                    pg.at(i, j) += g.data[static_cast<size_t>(i) * (c1 + c2) + c1 + j];
        }
    });
}

VarId gather_rows(Tape& t, VarId x, std::vector<int> idx) {
    const Tensor& xv = t.val(x);
    check(xv.rank() == 2, "gather_rows: expect [m,c]");
    int c = xv.dim(1);
    Tensor out({static_cast<int>(idx.size()), c});
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy_n(&xv.data[static_cast<size_t>(idx[i]) * c], c, &out.data[i * c]);
    return node(t, std::move(out), t.requires_grad(x), [x, idx, c](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(x);
        for (size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < c; ++j)
                pg.data[static_cast<size_t>(idx[i]) * c + j] += g.data[i * c + j];
    });
}

VarId gather_spatial(Tape& t, VarId x, std::vector<int> pix) {
    const Tensor& xv = t.val(x);
    check(xv.rank() == 3, "gather_spatial: expect [C,H,W]");
    int c = xv.dim(0);
    size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({static_cast<int>(pix.size()), c});
    for (size_t i = 0; i < pix.size(); ++i)
        for (int ci = 0; ci < c; ++ci)
            out.data[i * c + ci] = xv.data[ci * plane + static_cast<size_t>(pix[i])];
    return node(t, std::move(out), t.requires_grad(x), [x, pix, c, plane](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(x);
        for (size_t i = 0; i < pix.size(); ++i)
            for (int ci = 0; ci < c; ++ci)
                pg.data[ci * plane + static_cast<size_t>(pix[i])] += g.data[i * c + ci];
    });
}

VarId gather_pixels(Tape& t, VarId x, std::vector<int> pix) {
    const Tensor& xv = t.val(x);
    check(xv.rank() == 2, "gather_pixels: expect [H,W]");
    Tensor out({static_cast<int>(pix.size())});
    for (size_t i = 0; i < pix.size(); ++i) out[static_cast<long long>(i)] =
        xv.data[static_cast<size_t>(pix[i])];
    return node(t, std::move(out), t.requires_grad(x), [x, pix](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(x);
        for (size_t i = 0; i < pix.size(); ++i) pg.data[static_cast<size_t>(pix[i])] += g.data[i];
    });
}

VarId scatter_to_map(Tape& t, VarId vals, std::vector<int> pix, int h, int w) {
    const Tensor& vv = t.val(vals);
    check(vv.numel() == static_cast<long long>(pix.size()), "scatter_to_map: size mismatch");
    Tensor out({h, w});
    for (size_t i = 0; i < pix.size(); ++i) out.data[static_cast<size_t>(pix[i])] += vv.data[i];
    return node(t, std::move(out), t.requires_grad(vals), [vals, pix](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(vals);
        for (size_t i = 0; i < pix.size(); ++i) pg.data[i] += g.data[static_cast<size_t>(pix[i])];
    });
}

VarId segment_softmax(Tape& t, VarId x, std::vector<int> offsets) {
    const Tensor& xv = t.val(x);
    int n = static_cast<int>(xv.numel());
    check(!offsets.empty() && offsets.back() == n, "segment_softmax: bad offsets");
    Tensor out({n});
    int lo0 = 0;
    for (int hi : offsets) {
        int lo = lo0;
        lo0 = hi;
        if (lo == hi) continue;
        double mx = -1e300;
        for (int i = lo; i < hi; ++i) mx = std::max(mx, xv.data[static_cast<size_t>(i)]);
        double s = 0.0;
        for (int i = lo; i < hi; ++i) s += std::exp(xv.data[static_cast<size_t>(i)] - mx);
        for (int i = lo; i < hi; ++i)
            out.data[static_cast<size_t>(i)] = std::exp(xv.data[static_cast<size_t>(i)] - mx) / s;
    }
    return node(t, std::move(out), t.requires_grad(x), [x, offsets](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        const Tensor& y = tp.val(v);
        Tensor& pg = tp.grad(x);
        int lo = 0;
        for (int off : offsets) {
            double dot = 0.0;
            for (int i = lo; i < off; ++i) dot += g.data[static_cast<size_t>(i)] *
                                                  y.data[static_cast<size_t>(i)];
            for (int i = lo; i < off; ++i)
                pg.data[static_cast<size_t>(i)] +=
                    y.data[static_cast<size_t>(i)] * (g.data[static_cast<size_t>(i)] - dot);
            lo = off;
        }
    });
}

VarId segment_sum(Tape& t, VarId x, std::vector<int> offsets) {
    const Tensor& xv = t.val(x);
    check(!offsets.empty() && offsets.back() == static_cast<int>(xv.numel()),
          "segment_sum: bad offsets");
    Tensor out({static_cast<int>(offsets.size())});
    int lo = 0;
    for (size_t g = 0; g < offsets.size(); ++g) {
        double s = 0.0;
        for (int i = lo; i < offsets[g]; ++i) s += xv.data[static_cast<size_t>(i)];
        out[static_cast<long long>(g)] = s;
        lo = offsets[g];
    }
    return node(t, std::move(out), t.requires_grad(x), [x, offsets](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(x);
        int lo = 0;
        for (size_t gi = 0; gi < offsets.size(); ++gi) {
            for (int i = lo; i < offsets[gi]; ++i) pg.data[static_cast<size_t>(i)] += g.data[gi];
            lo = offsets[gi];
        }
    });
}

VarId group_maxpool(Tape& t, VarId x, std::vector<int> offsets) {
    const Tensor& xv = t.val(x);
    check(xv.rank() == 2, "group_maxpool: expect [n,c]");
    int c = xv.dim(1);
    int ngroups = static_cast<int>(offsets.size());
    Tensor out({ngroups, c});
    std::vector<int> argmax(static_cast<size_t>(ngroups) * c);
    int lo = 0;
    for (int g = 0; g < ngroups; ++g) {
        int hi = offsets[static_cast<size_t>(g)];
        check(hi > lo, "group_maxpool: empty group");
        for (int j = 0; j < c; ++j) {
            double best = xv.at(lo, j);
            int bi = lo;
            for (int i = lo + 1; i < hi; ++i)
                if (xv.at(i, j) > best) {
                    best = xv.at(i, j);
                    bi = i;
                }
            out.at(g, j) = best;
            argmax[static_cast<size_t>(g) * c + j] = bi;
        }
        lo = hi;
    }
    return node(t, std::move(out), t.requires_grad(x), [x, c, ngroups, argmax](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        Tensor& pg = tp.grad(x);
        for (int gi = 0; gi < ngroups; ++gi)
            for (int j = 0; j < c; ++j)
                pg.at(argmax[static_cast<size_t>(gi) * c + j], j) += g.at(gi, j);
    });
}

VarId normalize_affinity(Tape& t, VarId raw) {
    const Tensor& rv = t.val(raw);
    check(rv.rank() == 3, "normalize_affinity: expect [J,H,W]");
    int j = rv.dim(0), h = rv.dim(1), w = rv.dim(2);
    size_t plane = static_cast<size_t>(h) * w;
    Tensor out({j + 1, h, w});
    for (size_t p = 0; p < plane; ++p) {
        double s = 0.0;
        for (int ji = 0; ji < j; ++ji) s += std::abs(rv.data[ji * plane + p]);
        double ksum = 0.0;
        for (int ji = 0; ji < j; ++ji) {
            double k = s > 0.0 ? rv.data[ji * plane + p] / s : 0.0;
            out.data[ji * plane + p] = k;
            ksum += k;
        }
        out.data[static_cast<size_t>(j) * plane + p] = 1.0 - ksum;
    }
    return node(t, std::move(out), t.requires_grad(raw), [raw, j, plane](Tape& tp, VarId v) {
        const Tensor& g = tp.grad(v);
        const Tensor& rvb = tp.val(raw);
        Tensor& pg = tp.grad(raw);
        for (size_t p = 0; p < plane; ++p) {
            double s = 0.0, b = 0.0;
            for (int ji = 0; ji < j; ++ji) {
                s += std::abs(rvb.data[ji * plane + p]);
                b += rvb.data[ji * plane + p];
            }
            if (s <= 0.0) continue;  // flat region; subgradient 0 by convention
            double a = 0.0;
            for (int ji = 0; ji < j; ++ji) a += g.data[ji * plane + p] * rvb.data[ji * plane + p];
            double gki = g.data[static_cast<size_t>(j) * plane + p];
            for (int ji = 0; ji < j; ++ji) {
                double x = rvb.data[ji * plane + p];
                double sgn = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                pg.data[ji * plane + p] += g.data[ji * plane + p] / s - sgn * a / (s * s) +
                                           gki * (-1.0 / s + b * sgn / (s * s));
            }
        }
    });
}

VarId propagate_step(Tape& t, VarId d, VarId nk, std::vector<std::pair<int, int>> offsets) {
    const Tensor& dv = t.val(d);
    const Tensor& kv = t.val(nk);
    check(dv.rank() == 2 && kv.rank() == 3, "propagate_step: bad shapes");
    int h = dv.dim(0), w = dv.dim(1);
    int j = static_cast<int>(offsets.size());
    check(kv.dim(0) == j + 1 && kv.dim(1) == h && kv.dim(2) == w, "propagate_step: kernel dims");
    size_t plane = static_cast<size_t>(h) * w;
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t p = static_cast<size_t>(y) * w + x;
            // residual form: constant maps are bitwise fixed points because every
            // neighbour difference is exactly zero
            double acc = dv.data[p];
            for (int ji = 0; ji < j; ++ji) {
                int ny = std::clamp(y + offsets[static_cast<size_t>(ji)].first, 0, h - 1);
                int nx = std::clamp(x + offsets[static_cast<size_t>(ji)].second, 0, w - 1);
                acc += kv.data[ji * plane + p] *
                       (dv.data[static_cast<size_t>(ny) * w + nx] - dv.data[p]);
            }
            out.data[p] = acc;
        }
    return node(t, std::move(out), any_grad(t, {d, nk}),
                [d, nk, offsets, h, w, j, plane](Tape& tp, VarId v) {
                    const Tensor& g = tp.grad(v);
                    const Tensor& dv = tp.val(d);
                    const Tensor& kv = tp.val(nk);
                    bool gd = tp.requires_grad(d), gk = tp.requires_grad(nk);
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x) {
                            size_t p = static_cast<size_t>(y) * w + x;
                            double gv = g.data[p];
                            if (gv == 0.0) continue;
                            double ksum = 0.0;
                            for (int ji = 0; ji < j; ++ji) {
                                int ny = std::clamp(y + offsets[static_cast<size_t>(ji)].first, 0,
                                                    h - 1);
                                int nx = std::clamp(x + offsets[static_cast<size_t>(ji)].second, 0,
                                                    w - 1);
                                size_t q = static_cast<size_t>(ny) * w + nx;
                                double kj = kv.data[ji * plane + p];
                                ksum += kj;
                                if (gd) tp.grad(d).data[q] += gv * kj;
                                if (gk)
                                    tp.grad(nk).data[ji * plane + p] +=
                                        gv * (dv.data[q] - dv.data[p]);
                            }
                            if (gd) tp.grad(d).data[p] += gv * (1.0 - ksum);
                        }
                });
}

}  // namespace gacnet::ops
