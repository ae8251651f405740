#include "gacnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gacnet {

void CameraIntrinsics::validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("intrinsics: focal lengths must be > 0");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
        throw std::invalid_argument("intrinsics: principal point outside image");
}

int SparseDepthMap::count_valid() const {
    int n = 0;
    for (double v : values)
        if (v > 0.0) ++n;
    return n;
}

ValidityMask ValidityMask::from_sparse(const SparseDepthMap& s) {
    ValidityMask m;
    m.h = s.h;
    m.w = s.w;
    m.mask.resize(s.values.size());
    for (size_t i = 0; i < s.values.size(); ++i) m.mask[i] = s.values[i] > 0.0 ? 1 : 0;
    return m;
}

PointCloud back_project(const SparseDepthMap& sparse, const CameraIntrinsics& intr) {
    intr.validate();
    if (sparse.w != intr.width || sparse.h != intr.height)
        throw std::invalid_argument("back_project: depth map does not match intrinsics size");
    PointCloud pc;
    pc.points.reserve(static_cast<size_t>(sparse.count_valid()));
    for (int v = 0; v < sparse.h; ++v)
        for (int u = 0; u < sparse.w; ++u) {
            double d = sparse.at(v, u);
            if (d <= 0.0) continue;
            pc.points.push_back({(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d});
        }
    return pc;
}

PointCloud sample_point_cloud(const PointCloud& pc, int n_max, uint64_t seed) {
    if (n_max <= 0) throw std::invalid_argument("sample_point_cloud: n_max must be > 0");
    if (static_cast<int>(pc.size()) <= n_max) return pc;
    std::vector<size_t> idx(pc.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    // partial Fisher-Yates: first n_max slots are a uniform sample w/o replacement
    for (int i = 0; i < n_max; ++i) {
        std::uniform_int_distribution<size_t> pick(static_cast<size_t>(i), idx.size() - 1);
        std::swap(idx[static_cast<size_t>(i)], idx[pick(rng)]);
    }
    PointCloud out;
    out.points.reserve(static_cast<size_t>(n_max));
    for (int i = 0; i < n_max; ++i) out.points.push_back(pc.points[idx[static_cast<size_t>(i)]]);
    return out;
}

NormalizedCloud normalize_point_cloud(const PointCloud& pc) {
    if (pc.empty()) throw std::invalid_argument("normalize_point_cloud: empty cloud");
    NormalizedCloud out;
    for (const auto& p : pc.points)
        for (int k = 0; k < 3; ++k) out.centroid[static_cast<size_t>(k)] += p[static_cast<size_t>(k)];
    for (auto& c : out.centroid) c /= static_cast<double>(pc.size());
    double maxd = 0.0;
    for (const auto& p : pc.points) {
        double d = 0.0;
        for (int k = 0; k < 3; ++k) {
            double dx = p[static_cast<size_t>(k)] - out.centroid[static_cast<size_t>(k)];
            d += dx * dx;
        }
        maxd = std::max(maxd, std::sqrt(d));
    }
    out.scale = maxd > 0.0 ? maxd : 1.0;
    out.cloud.points.reserve(pc.size());
    for (const auto& p : pc.points)
        out.cloud.points.push_back({(p[0] - out.centroid[0]) / out.scale,
                                    (p[1] - out.centroid[1]) / out.scale,
                                    (p[2] - out.centroid[2]) / out.scale});
    return out;
}

}  // namespace gacnet
