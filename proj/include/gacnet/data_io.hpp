#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gacnet/geometry.hpp"
#include "gacnet/tensor.hpp"

namespace gacnet {

struct Frame {
    Tensor image;  // [3,H,W], values in [0,1]
    SparseDepthMap sparse;
    SparseDepthMap gt;  // semi-dense ground truth (dense for synthetic scenes)
    CameraIntrinsics intr;
    std::string id;
};

// KITTI devkit depth PNG convention: 16-bit grayscale, depth_m = value/256,
// stored 0 means invalid.
SparseDepthMap load_depth_png(const std::string& path);
void save_depth_png(const SparseDepthMap& map, const std::string& path);
void save_depth_png(const DenseDepthMap& map, const std::string& path);

// 8-bit RGB output for visualizations; rgb is [3,H,W] in [0,1].
void save_color_png(const Tensor& rgb, const std::string& path);
Tensor load_color_png(const std::string& path);  // -> [3,H,W] in [0,1]

// Removes the 96 sky rows: 1216x352 -> 1216x256, cy shifted by -96.
Frame kitti_crop(const Frame& frame);

struct SceneSpec {
    uint64_t seed = 0;
    int h = 64, w = 64;
    int n_objects = 4;
    double depth_min = 2.0, depth_max = 10.0;
    double texture_freq = 2.0;
};

// Deterministic ray-cast scene: a slanted backdrop plane plus spheres,
// textured procedurally. gt is fully dense.
Frame generate_scene(const SceneSpec& spec);

// Keeps `lines` evenly spaced scanrows and drops kept pixels i.i.d. with
// probability `dropout`.
SparseDepthMap lidar_subsample(const DenseDepthMap& dense, int lines, double dropout,
                               uint64_t seed);

// KITTI directory layout: image/<id>.png, velodyne_raw/<id>.png,
// groundtruth/<id>.png, intrinsics/<id>.txt ("fx fy cx cy").
Frame load_kitti_frame(const std::string& dir, const std::string& id);

// Synthetic dataset manifest (JSON list of SceneSpec records).
std::vector<SceneSpec> load_scene_manifest(const std::string& path);
void save_scene_manifest(const std::vector<SceneSpec>& specs, const std::string& path);

struct SparsifyParams {
    int lines = 8;
    double dropout = 0.3;
};

// Renders each spec and sparsifies its gt into the frame's sparse input.
std::vector<Frame> make_synthetic_dataset(const std::vector<SceneSpec>& specs,
                                          const SparsifyParams& sp);

DenseDepthMap nearest_valid_fill(const SparseDepthMap& sparse);

}  // namespace gacnet
