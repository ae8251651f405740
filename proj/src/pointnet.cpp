#include "gacnet/pointnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <limits>
#include <random>
#include <stdexcept>

namespace gacnet {

PointNetConfig PointNetConfig::toy() {
    PointNetConfig c;
    c.n_max = 512;
    c.sa1 = {128, 0.2, 16, {16, 32}};
    c.sa2 = {32, 0.4, 16, {32, 64}};
    c.global_mlp = {64, 256};
    c.out_dim = 256;
    return c;
}

long& pointnet_call_counter() {
    static long counter = 0;
    return counter;
}

namespace {

double sqdist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
        double d = a[static_cast<size_t>(k)] - b[static_cast<size_t>(k)];
        s += d * d;
    }
    return s;
}

std::vector<int> canonical_order(const PointCloud& pc) {
    std::vector<int> order(pc.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return pc.points[static_cast<size_t>(a)] < pc.points[static_cast<size_t>(b)];
    });
    return order;
}

uint64_t hash_cloud(const PointCloud& pc) {
    uint64_t h = 14695981039346656037ull;
    for (const auto& p : pc.points)
        for (double x : p) {
            uint64_t bits;
            std::memcpy(&bits, &x, 8);
            for (int k = 0; k < 8; ++k) {
                h ^= (bits >> (8 * k)) & 0xffu;
                h *= 1099511628211ull;
            }
        }
    return h;
}

VarId mlp_rows(Tape& t, VarId x, const std::vector<int>& widths, ParamRegistry& reg,
               const std::string& prefix) {
    VarId h = x;
    int in = t.val(x).dim(1);
    for (size_t l = 0; l < widths.size(); ++l) {
        std::string name = prefix + ".l" + std::to_string(l);
        VarId w = t.param(name + ".w", reg, {in, widths[l]}, Init::HeFanIn);
        VarId b = t.param(name + ".b", reg, {widths[l]}, Init::Zero);
        h = ops::relu(t, ops::linear_rows(t, h, w, b));
        in = widths[l];
    }
    return h;
}

}  // namespace

std::vector<int> farthest_point_sample(const PointCloud& pc, int m, uint64_t seed) {
    int n = static_cast<int>(pc.size());
    if (n < 1) throw std::invalid_argument("farthest_point_sample: empty cloud");
    if (m > n) throw std::invalid_argument("farthest_point_sample: m > N");
    std::mt19937_64 rng(seed);
    std::vector<int> picked;
    picked.reserve(static_cast<size_t>(m));
    int first = static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
    picked.push_back(first);
    std::vector<double> mind(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
    for (int step = 1; step < m; ++step) {
        const auto& last = pc.points[static_cast<size_t>(picked.back())];
        int best = -1;
        double bestd = -1.0;
        for (int i = 0; i < n; ++i) {
            mind[static_cast<size_t>(i)] =
                std::min(mind[static_cast<size_t>(i)], sqdist(pc.points[static_cast<size_t>(i)], last));
            if (mind[static_cast<size_t>(i)] > bestd) {
                bestd = mind[static_cast<size_t>(i)];
                best = i;
            }
        }
        picked.push_back(best);
    }
    return picked;
}

GroupedNeighborhoods ball_group(const PointCloud& pc, const std::vector<int>& centers,
                                const SetAbstractionConfig& cfg) {
    GroupedNeighborhoods out;
    out.center_indices = centers;
    out.k = cfg.k_neighbors;
    int k = cfg.k_neighbors;
    double r2 = cfg.radius * cfg.radius;
    out.member_indices.reserve(centers.size() * static_cast<size_t>(k));
    out.local_coords = Tensor({static_cast<int>(centers.size()) * k, 3});
    int row = 0;
    for (int c : centers) {
        const auto& cp = pc.points[static_cast<size_t>(c)];
        std::vector<std::pair<double, int>> found;
        for (int i = 0; i < static_cast<int>(pc.size()); ++i) {
            double d = sqdist(pc.points[static_cast<size_t>(i)], cp);
            if (d <= r2) found.emplace_back(d, i);
        }
        std::sort(found.begin(), found.end());
        std::vector<int> members;
        for (int i = 0; i < k; ++i) {
            int idx;
            if (found.empty())
                idx = c;  // no neighbor in radius: pad with the center itself
            else if (i < static_cast<int>(found.size()))
                idx = found[static_cast<size_t>(i)].second;
            else
                idx = found[0].second;  // pad with the nearest found point
            members.push_back(idx);
        }
        for (int i = 0; i < k; ++i) {
            const auto& p = pc.points[static_cast<size_t>(members[static_cast<size_t>(i)])];
            for (int d = 0; d < 3; ++d)
                out.local_coords.at(row, d) = p[static_cast<size_t>(d)] - cp[static_cast<size_t>(d)];
            out.member_indices.push_back(members[static_cast<size_t>(i)]);
            ++row;
        }
    }
    return out;
}

VarId set_abstraction(Tape& t, const GroupedNeighborhoods& groups, VarId features,
                      const SetAbstractionConfig& cfg, ParamRegistry& reg,
                      const std::string& prefix) {
    VarId coords = t.constant(groups.local_coords);
    VarId rows = coords;
    if (features >= 0) {
        VarId gathered = ops::gather_rows(t, features, groups.member_indices);
        rows = ops::concat_cols(t, coords, gathered);
    }
    VarId h = mlp_rows(t, rows, cfg.mlp_widths, reg, prefix);
    std::vector<int> offsets;
    offsets.reserve(groups.center_indices.size());
    for (size_t g = 1; g <= groups.center_indices.size(); ++g)
        offsets.push_back(static_cast<int>(g) * groups.k);
    return ops::group_maxpool(t, h, offsets);
}

PointNetPlan plan_point_encoder(const PointCloud& normalized, const PointNetConfig& cfg) {
    PointNetPlan plan;
    if (normalized.empty()) {
        plan.empty = true;
        return plan;
    }
    plan.order = canonical_order(normalized);
    plan.sorted.points.reserve(normalized.size());
    for (int i : plan.order) plan.sorted.points.push_back(normalized.points[static_cast<size_t>(i)]);
    uint64_t seed = hash_cloud(plan.sorted);

    int n = static_cast<int>(plan.sorted.size());
    int m1 = std::min(cfg.sa1.n_centroids, n);
    plan.fps1 = farthest_point_sample(plan.sorted, m1, seed);
    plan.g1 = ball_group(plan.sorted, plan.fps1, cfg.sa1);
    for (int i : plan.fps1) plan.centers1.points.push_back(plan.sorted.points[static_cast<size_t>(i)]);

    int m2 = std::min(cfg.sa2.n_centroids, m1);
    plan.fps2 = farthest_point_sample(plan.centers1, m2, seed ^ 0x9e3779b97f4a7c15ull);
    plan.g2 = ball_group(plan.centers1, plan.fps2, cfg.sa2);
    return plan;
}

VarId extract_global_feature(Tape& t, const PointNetPlan& plan, const PointNetConfig& cfg,
                             ParamRegistry& reg, const std::string& prefix) {
    ++pointnet_call_counter();
    if (plan.empty) {
        std::cerr << "[gacnet] point encoder: empty cloud, emitting zero global feature\n";
        // still touch the parameters so the registry is stable across frames
        Tape scratch;
        (void)scratch;
        return t.constant(Tensor::zeros({cfg.out_dim}));
    }
    VarId f1 = set_abstraction(t, plan.g1, -1, cfg.sa1, reg, prefix + ".sa1");
    VarId f2 = set_abstraction(t, plan.g2, f1, cfg.sa2, reg, prefix + ".sa2");
    VarId h = mlp_rows(t, f2, cfg.global_mlp, reg, prefix + ".global");
    std::vector<int> one_group{t.val(h).dim(0)};
    VarId pooled = ops::group_maxpool(t, h, one_group);  // [1, C]
    int c = t.val(pooled).dim(1);
    VarId w = t.param(prefix + ".proj.w", reg, {c, cfg.out_dim}, Init::HeFanIn);
    VarId b = t.param(prefix + ".proj.b", reg, {cfg.out_dim}, Init::Zero);
    VarId proj = ops::linear_rows(t, pooled, w, b);
    return ops::reshape(t, proj, {cfg.out_dim});
}

}  // namespace gacnet
