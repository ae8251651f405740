#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "gacnet/autodiff.hpp"

namespace gacnet::testutil {

// Central finite differences against the tape gradient of a scalar-valued
// function of one leaf tensor. Returns the max relative error over entries
// (relative to max(|analytic|, |numeric|, floor)).
inline double gradcheck_leaf(const Tensor& x0,
                             const std::function<VarId(Tape&, VarId)>& fn, double eps = 1e-6,
                             double floor_ = 1e-8) {
    Tape t;
    VarId x = t.leaf(x0, true);
    VarId y = fn(t, x);
    t.backward(y);
    const Tensor analytic = t.grad(x);

    double worst = 0.0;
    for (size_t i = 0; i < x0.data.size(); ++i) {
        Tensor xp = x0, xm = x0;
        xp.data[i] += eps;
        xm.data[i] -= eps;
        Tape tp, tm;
        double fp = tp.val(fn(tp, tp.leaf(xp, false)))[0];
        double fm = tm.val(fn(tm, tm.leaf(xm, false)))[0];
        double numeric = (fp - fm) / (2.0 * eps);
        double denom = std::max({std::abs(numeric), std::abs(analytic.data[i]), floor_});
        worst = std::max(worst, std::abs(numeric - analytic.data[i]) / denom);
    }
    return worst;
}

// Same, but for the gradient w.r.t. a named parameter of a model closure.
// fn builds the scalar loss on the tape using the registry.
inline double gradcheck_param(ParamRegistry& reg, const std::string& name,
                              const std::function<VarId(Tape&, ParamRegistry&)>& fn,
                              double eps = 1e-6, double floor_ = 1e-8) {
    reg.zero_grads();
    Tape t;
    VarId y = fn(t, reg);
    t.backward(y);
    t.accumulate_param_grads(reg);
    Tensor analytic = reg.grad(name);

    Tensor& p = reg.value(name);
    double worst = 0.0;
    for (size_t i = 0; i < p.data.size(); ++i) {
        double saved = p.data[i];
        p.data[i] = saved + eps;
        Tape tp;
        double fp = tp.val(fn(tp, reg))[0];
        p.data[i] = saved - eps;
        Tape tm;
        double fm = tm.val(fn(tm, reg))[0];
        p.data[i] = saved;
        double numeric = (fp - fm) / (2.0 * eps);
        double denom = std::max({std::abs(numeric), std::abs(analytic.data[i]), floor_});
        worst = std::max(worst, std::abs(numeric - analytic.data[i]) / denom);
    }
    return worst;
}

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.data) v = u(rng);
    return t;
}

}  // namespace gacnet::testutil
