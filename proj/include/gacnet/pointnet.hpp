#pragma once

#include <cstdint>
#include <vector>

#include "gacnet/autodiff.hpp"
#include "gacnet/geometry.hpp"
#include "gacnet/ops.hpp"

namespace gacnet {

struct SetAbstractionConfig {
    int n_centroids = 128;
    double radius = 0.2;
    int k_neighbors = 16;
    std::vector<int> mlp_widths{32, 64};
};

struct PointNetConfig {
    int n_max = 2048;
    SetAbstractionConfig sa1{512, 0.1, 32, {32, 64}};
    SetAbstractionConfig sa2{128, 0.25, 32, {64, 128}};
    std::vector<int> global_mlp{128, 256};
    int out_dim = 256;

    static PointNetConfig toy();
};

// Greedy min-distance maximization. First pick is a seeded uniform draw,
// ties broken by lowest index.
std::vector<int> farthest_point_sample(const PointCloud& pc, int m, uint64_t seed);

struct GroupedNeighborhoods {
    std::vector<int> center_indices;   // into the source cloud
    std::vector<int> member_indices;   // flattened, k per center (padded)
    Tensor local_coords;               // [n_centers * k, 3], point - center
    int k = 0;
};

GroupedNeighborhoods ball_group(const PointCloud& pc, const std::vector<int>& centers,
                                const SetAbstractionConfig& cfg);

// Shared pointwise MLP over (local coords (+) inherited features), then a
// channel-wise max per group. `features` may be -1 for the first level.
VarId set_abstraction(Tape& t, const GroupedNeighborhoods& groups, VarId features,
                      const SetAbstractionConfig& cfg, ParamRegistry& reg,
                      const std::string& prefix);

// Cacheable per-frame sampling/grouping structure (the MLP weights change
// during training, the geometry does not).
struct PointNetPlan {
    bool empty = false;
    std::vector<int> order;  // canonical (sorted) order of the input points
    PointCloud sorted;
    std::vector<int> fps1;
    GroupedNeighborhoods g1;
    PointCloud centers1;
    std::vector<int> fps2;
    GroupedNeighborhoods g2;
};

PointNetPlan plan_point_encoder(const PointCloud& normalized, const PointNetConfig& cfg);

// Full encoder: two set-abstraction levels + global MLP/max + projection to
// out_dim. Empty clouds yield an all-zero vector (and a stderr diagnostic).
VarId extract_global_feature(Tape& t, const PointNetPlan& plan, const PointNetConfig& cfg,
                             ParamRegistry& reg, const std::string& prefix);

// Forward-pass instrumentation (reset per forward by the caller).
long& pointnet_call_counter();

}  // namespace gacnet
