#include "gacnet/loss_metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gacnet/ops.hpp"

namespace gacnet {

std::vector<double> loss_weights() {
    std::vector<double> w(6);
    double v = 1.0;
    for (int x = 0; x < 6; ++x) {
        w[static_cast<size_t>(x)] = v;
        v /= 4.0;
    }
    return w;
}

VarId multiscale_loss(Tape& t, const std::vector<VarId>& preds, const SparseDepthMap& gt) {
    if (preds.size() != 6) throw std::invalid_argument("multiscale_loss: expect 6 predictions");
    long long n_valid = gt.count_valid();
    if (n_valid == 0) throw std::invalid_argument("multiscale_loss: gt has no valid pixels");
    Tensor mask({gt.h, gt.w});
    Tensor gtv({gt.h, gt.w}, gt.values);
    for (size_t i = 0; i < gt.values.size(); ++i) mask.data[i] = gt.values[i] > 0.0 ? 1.0 : 0.0;
    auto weights = loss_weights();

    VarId total = -1;
    for (size_t x = 0; x < preds.size(); ++x) {
        VarId up = preds[x];
        const Tensor& pv = t.val(up);
        if (pv.dim(0) != gt.h || pv.dim(1) != gt.w) up = ops::bilinear_resize(t, up, gt.h, gt.w);
        VarId err = ops::mul_const(t, ops::add_const(t, ops::scale(t, up, -1.0), gtv), mask);
        VarId sq = ops::mul(t, err, err);
        VarId term = ops::scale(t, ops::sum(t, sq), weights[x] / static_cast<double>(n_valid));
        total = total < 0 ? term : ops::add(t, total, term);
    }
    return total;
}

DenseDepthMap upsample_bilinear(const DenseDepthMap& d, int target_h, int target_w) {
    if (target_h < d.h || target_w < d.w)
        throw std::invalid_argument("upsample_bilinear: target smaller than source");
    DenseDepthMap out(target_h, target_w);
    double sy = static_cast<double>(d.h) / target_h;
    double sx = static_cast<double>(d.w) / target_w;
    for (int i = 0; i < target_h; ++i) {
        double yc = (i + 0.5) * sy - 0.5;
        int yf = static_cast<int>(std::floor(yc));
        double fy = yc - std::floor(yc);
        int y0 = std::clamp(yf, 0, d.h - 1);
        int y1 = std::clamp(yf + 1, 0, d.h - 1);
        for (int j = 0; j < target_w; ++j) {
            double xc = (j + 0.5) * sx - 0.5;
            int xf = static_cast<int>(std::floor(xc));
            double fx = xc - std::floor(xc);
            int x0 = std::clamp(xf, 0, d.w - 1);
            int x1 = std::clamp(xf + 1, 0, d.w - 1);
            out.at(i, j) = (1 - fy) * ((1 - fx) * d.at(y0, x0) + fx * d.at(y0, x1)) +
                           fy * ((1 - fx) * d.at(y1, x0) + fx * d.at(y1, x1));
        }
    }
    return out;
}

MetricReport compute_metrics(const DenseDepthMap& pred, const SparseDepthMap& gt) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw std::invalid_argument("compute_metrics: dims differ");
    MetricReport r;
    double se = 0.0, ae = 0.0, ise = 0.0, iae = 0.0;
    for (size_t i = 0; i < gt.values.size(); ++i) {
        double g = gt.values[i];
        if (g <= 0.0) continue;
        double p = pred.values[i];
        double e = p - g;
        se += e * e;
        ae += std::abs(e);
        ++r.n_valid;
        if (p <= 0.0) {
            r.inverse_defined = false;
        } else if (r.inverse_defined) {
            double ie = 1.0 / p - 1.0 / g;
            ise += ie * ie;
            iae += std::abs(ie);
        }
    }
    if (r.n_valid == 0) throw std::invalid_argument("compute_metrics: gt has no valid pixels");
    double n = static_cast<double>(r.n_valid);
    r.rmse_mm = std::sqrt(se / n) * 1000.0;
    r.mae_mm = ae / n * 1000.0;
    if (r.inverse_defined) {
        r.irmse_per_km = std::sqrt(ise / n) * 1000.0;
        r.imae_per_km = iae / n * 1000.0;
    }
    return r;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["rmse_mm"] = rmse_mm;
    j["mae_mm"] = mae_mm;
    j["n_valid"] = n_valid;
    j["inverse_defined"] = inverse_defined;
    if (inverse_defined) {
        j["irmse_per_km"] = irmse_per_km;
        j["imae_per_km"] = imae_per_km;
    }
    return j.dump();
}

std::string MetricReport::table_header() {
    return "label                RMSE(mm)    MAE(mm)  iRMSE(1/km)  iMAE(1/km)";
}

std::string MetricReport::table_row(const std::string& label) const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os.width(0);
    char buf[160];
    if (inverse_defined)
        std::snprintf(buf, sizeof buf, "%-18s %10.3f %10.3f %12.3f %11.3f", label.c_str(), rmse_mm,
                      mae_mm, irmse_per_km, imae_per_km);
    else
        std::snprintf(buf, sizeof buf, "%-18s %10.3f %10.3f %12s %11s", label.c_str(), rmse_mm,
                      mae_mm, "undef", "undef");
    return buf;
}

}  // namespace gacnet
