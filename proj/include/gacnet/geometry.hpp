#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gacnet/tensor.hpp"

namespace gacnet {

struct CameraIntrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const;
};

// Depth in meters; 0 means "no measurement".
struct SparseDepthMap {
    int h = 0, w = 0;
    std::vector<double> values;

    SparseDepthMap() = default;
    SparseDepthMap(int h_, int w_) : h(h_), w(w_), values(static_cast<size_t>(h_) * w_, 0.0) {}
    double& at(int y, int x) { return values[static_cast<size_t>(y) * w + x]; }
    double at(int y, int x) const { return values[static_cast<size_t>(y) * w + x]; }
    bool valid_at(int y, int x) const { return at(y, x) > 0.0; }
    int count_valid() const;
};

struct DenseDepthMap {
    int h = 0, w = 0;
    std::vector<double> values;

    DenseDepthMap() = default;
    DenseDepthMap(int h_, int w_) : h(h_), w(w_), values(static_cast<size_t>(h_) * w_, 0.0) {}
    double& at(int y, int x) { return values[static_cast<size_t>(y) * w + x]; }
    double at(int y, int x) const { return values[static_cast<size_t>(y) * w + x]; }
};

struct ValidityMask {
    int h = 0, w = 0;
    std::vector<uint8_t> mask;

    static ValidityMask from_sparse(const SparseDepthMap& s);
    bool at(int y, int x) const { return mask[static_cast<size_t>(y) * w + x] != 0; }
};

struct PointCloud {
    std::vector<std::array<double, 3>> points;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// Pinhole back-projection of every valid pixel, row-major scan order.
PointCloud back_project(const SparseDepthMap& sparse, const CameraIntrinsics& intr);

// Seeded uniform subsample without replacement; identity when N <= n_max.
PointCloud sample_point_cloud(const PointCloud& pc, int n_max, uint64_t seed);

struct NormalizedCloud {
    PointCloud cloud;
    std::array<double, 3> centroid{};
    double scale = 1.0;
};

// Centers at the centroid and scales by the max centroid distance (1 if zero).
NormalizedCloud normalize_point_cloud(const PointCloud& pc);

}  // namespace gacnet
