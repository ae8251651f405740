#include "gacnet/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gacnet/ops.hpp"

namespace gacnet {

namespace {

constexpr std::array<int, 6> kFactors{32, 16, 8, 4, 2, 1};

int window_radius_for_factor(int factor) {
    if (factor >= 16) return 7;
    if (factor >= 4) return 15;
    return 31;
}

std::array<ScaleConfig, 6> make_scales(int c_img, int c_depth, int c_out, int w0, int w1,
                                       bool toy) {
    std::array<ScaleConfig, 6> scales;
    for (int i = 0; i < 6; ++i) {
        ScaleConfig& s = scales[static_cast<size_t>(i)];
        s.index = i;
        s.factor = kFactors[static_cast<size_t>(i)];
        s.c_img = c_img;
        s.c_depth = c_depth;
        s.fusion.c_out = c_out;
        // halved U-Net widths at the coarser scales
        bool coarse = s.factor >= 4;
        s.fusion.unet_widths = {coarse ? std::max(2, w0 / 2) : w0,
                                coarse ? std::max(2, w1 / 2) : w1};
        s.fusion.se_reduction = 4;
        s.bilateral.window_radius = toy ? std::min(window_radius_for_factor(s.factor), 9)
                                        : window_radius_for_factor(s.factor);
        s.bilateral.k_nearest = 8;
        s.bilateral.mlp_widths = {toy ? 8 : 16};
    }
    return scales;
}

}  // namespace

NetworkConfig NetworkConfig::defaults() {
    NetworkConfig cfg;
    cfg.scales = make_scales(16, 16, 32, 32, 64, false);
    return cfg;
}

NetworkConfig NetworkConfig::toy() {
    NetworkConfig cfg;
    cfg.scales = make_scales(6, 6, 8, 8, 12, true);
    cfg.pointnet = PointNetConfig::toy();
    return cfg;
}

std::string NetworkConfig::to_json() const {
    nlohmann::json j;
    j["enable_preprocess"] = enable_preprocess;
    j["enable_3d_branch"] = enable_3d_branch;
    j["fusion_mode"] = fusion_mode == FusionMode::Caffm ? "caffm" : "concat";
    j["droppath_rate"] = droppath_rate;
    j["seed"] = seed;
    j["pointnet"] = {{"n_max", pointnet.n_max},
                     {"sa1",
                      {{"n_centroids", pointnet.sa1.n_centroids},
                       {"radius", pointnet.sa1.radius},
                       {"k_neighbors", pointnet.sa1.k_neighbors},
                       {"mlp_widths", pointnet.sa1.mlp_widths}}},
                     {"sa2",
                      {{"n_centroids", pointnet.sa2.n_centroids},
                       {"radius", pointnet.sa2.radius},
                       {"k_neighbors", pointnet.sa2.k_neighbors},
                       {"mlp_widths", pointnet.sa2.mlp_widths}}},
                     {"global_mlp", pointnet.global_mlp},
                     {"out_dim", pointnet.out_dim}};
    j["scales"] = nlohmann::json::array();
    for (const auto& s : scales)
        j["scales"].push_back({{"index", s.index},
                               {"factor", s.factor},
                               {"c_img", s.c_img},
                               {"c_depth", s.c_depth},
                               {"c_out", s.fusion.c_out},
                               {"unet_widths", s.fusion.unet_widths},
                               {"se_reduction", s.fusion.se_reduction},
                               {"window_radius", s.bilateral.window_radius},
                               {"k_nearest", s.bilateral.k_nearest},
                               {"bilateral_mlp", s.bilateral.mlp_widths}});
    return j.dump(2);
}

NetworkConfig NetworkConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    NetworkConfig cfg = NetworkConfig::toy();
    cfg.enable_preprocess = j.value("enable_preprocess", true);
    cfg.enable_3d_branch = j.value("enable_3d_branch", true);
    std::string mode = j.value("fusion_mode", "caffm");
    cfg.fusion_mode = mode == "concat" ? FusionMode::Concat : FusionMode::Caffm;
    cfg.droppath_rate = j.value("droppath_rate", 0.0);
    cfg.seed = j.value("seed", 0ull);
    if (j.contains("pointnet")) {
        const auto& p = j["pointnet"];
        cfg.pointnet.n_max = p.value("n_max", cfg.pointnet.n_max);
        auto load_sa = [](const nlohmann::json& e, SetAbstractionConfig& sa) {
            sa.n_centroids = e.value("n_centroids", sa.n_centroids);
            sa.radius = e.value("radius", sa.radius);
            sa.k_neighbors = e.value("k_neighbors", sa.k_neighbors);
            if (e.contains("mlp_widths")) sa.mlp_widths = e["mlp_widths"].get<std::vector<int>>();
        };
        if (p.contains("sa1")) load_sa(p["sa1"], cfg.pointnet.sa1);
        if (p.contains("sa2")) load_sa(p["sa2"], cfg.pointnet.sa2);
        if (p.contains("global_mlp"))
            cfg.pointnet.global_mlp = p["global_mlp"].get<std::vector<int>>();
        cfg.pointnet.out_dim = p.value("out_dim", 256);
    }
    if (j.contains("scales")) {
        for (size_t i = 0; i < 6 && i < j["scales"].size(); ++i) {
            const auto& e = j["scales"][i];
            ScaleConfig& s = cfg.scales[i];
            s.c_img = e.value("c_img", s.c_img);
            s.c_depth = e.value("c_depth", s.c_depth);
            s.fusion.c_out = e.value("c_out", s.fusion.c_out);
            if (e.contains("unet_widths"))
                s.fusion.unet_widths = e["unet_widths"].get<std::vector<int>>();
            s.fusion.se_reduction = e.value("se_reduction", s.fusion.se_reduction);
            s.bilateral.window_radius = e.value("window_radius", s.bilateral.window_radius);
            s.bilateral.k_nearest = e.value("k_nearest", s.bilateral.k_nearest);
            if (e.contains("bilateral_mlp"))
                s.bilateral.mlp_widths = e["bilateral_mlp"].get<std::vector<int>>();
        }
    }
    return cfg;
}

SparseDepthMap downsample_sparse(const SparseDepthMap& sparse, int factor) {
    if (factor != 1 && factor != 2 && factor != 4 && factor != 8 && factor != 16 && factor != 32)
        throw std::invalid_argument("downsample_sparse: factor must be a power of two <= 32");
    if (factor == 1) return sparse;
    SparseDepthMap out(sparse.h / factor, sparse.w / factor);
    for (int by = 0; by < out.h; ++by)
        for (int bx = 0; bx < out.w; ++bx) {
            std::vector<double> vals;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) {
                    double v = sparse.at(by * factor + dy, bx * factor + dx);
                    if (v > 0.0) vals.push_back(v);
                }
            if (vals.empty()) continue;
            std::vector<double> sorted = vals;
            std::sort(sorted.begin(), sorted.end());
            double median = sorted.size() % 2 == 1
                                ? sorted[sorted.size() / 2]
                                : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
            double best = vals[0];
            for (double v : vals)
                if (std::abs(v - median) < std::abs(best - median)) best = v;
            out.at(by, bx) = best;
        }
    return out;
}

std::vector<VarId> encode_image(Tape& t, const Tensor& image, const NetworkConfig& cfg,
                                ParamRegistry& reg) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("encode_image: expect [3,H,W] image");
    if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0)
        throw std::invalid_argument("encode_image: H and W must be divisible by 32");
    VarId x = t.constant(image);
    std::vector<VarId> fine_to_coarse;
    int c_prev = 3;
    for (int level = 0; level < 6; ++level) {
        int c = cfg.scales[static_cast<size_t>(5 - level)].c_img;
        std::string name = "encoder.conv" + std::to_string(level);
        VarId w = t.param(name + ".w", reg, {c, c_prev, 3, 3}, Init::HeFanIn);
        VarId b = t.param(name + ".b", reg, {c}, Init::Zero);
        x = ops::relu(t, ops::conv2d(t, x, w, b, level == 0 ? 1 : 2, 1));
        fine_to_coarse.push_back(x);
        c_prev = c;
    }
    return {fine_to_coarse.rbegin(), fine_to_coarse.rend()};
}

GacNet::GacNet(NetworkConfig cfg, uint64_t param_seed) : cfg_(std::move(cfg)), reg_(param_seed) {}

GacNet::GacNet(NetworkConfig cfg, ParamRegistry registry)
    : cfg_(std::move(cfg)), reg_(std::move(registry)) {}

FramePlan GacNet::plan_frame(const Frame& frame) const {
    FramePlan plan;
    for (int x = 0; x < 6; ++x) {
        const ScaleConfig& sc = cfg_.scales[static_cast<size_t>(x)];
        plan.sparse_per_scale[static_cast<size_t>(x)] = downsample_sparse(frame.sparse, sc.factor);
        if (cfg_.enable_preprocess)
            plan.bilateral[static_cast<size_t>(x)] =
                plan_bilateral(plan.sparse_per_scale[static_cast<size_t>(x)], sc.bilateral);
    }
    if (cfg_.enable_3d_branch) {
        PointCloud pc = back_project(frame.sparse, frame.intr);
        pc = sample_point_cloud(pc, cfg_.pointnet.n_max, cfg_.seed);
        if (!pc.empty()) {
            plan.pointnet = plan_point_encoder(normalize_point_cloud(pc).cloud, cfg_.pointnet);
        } else {
            plan.pointnet.empty = true;
        }
    }
    plan.coarse_fill = nearest_valid_fill(plan.sparse_per_scale[0]);
    return plan;
}

std::vector<VarId> GacNet::forward(Tape& t, const Frame& frame, const FramePlan& plan,
                                   bool training, std::mt19937_64* droppath_rng) {
    if (frame.sparse.count_valid() < 1)
        throw std::invalid_argument("forward: sparse input has no valid pixels");
    long counter_before = pointnet_call_counter();

    std::vector<VarId> image_feats = encode_image(t, frame.image, cfg_, reg_);

    VarId f3d = -1;
    if (cfg_.enable_3d_branch)
        f3d = extract_global_feature(t, plan.pointnet, cfg_.pointnet, reg_, "pointnet");

    std::vector<VarId> outputs;
    VarId prev = -1;
    for (int x = 0; x < 6; ++x) {
        const ScaleConfig& sc = cfg_.scales[static_cast<size_t>(x)];
        const SparseDepthMap& s = plan.sparse_per_scale[static_cast<size_t>(x)];
        int h = s.h, w = s.w;

        std::optional<VarId> prior;
        if (prev >= 0) prior = ops::bilinear_resize(t, prev, h, w);

        // stage 1: preprocessing
        VarId d_pre;
        if (cfg_.enable_preprocess) {
            d_pre = bilateral_propagate(t, plan.bilateral[static_cast<size_t>(x)], s,
                                        image_feats[static_cast<size_t>(x)], prior, sc.bilateral,
                                        reg_, "pre.s" + std::to_string(x));
        } else if (prior) {
            d_pre = *prior;  // 2-stage ablation: the upsampled coarser output stands in
        } else {
            d_pre = t.constant(Tensor({h, w}, plan.coarse_fill.values));
        }

        // stage 2: multimodal fusion
        std::vector<VarId> depth_stack{ops::reshape(t, d_pre, {1, h, w})};
        Tensor sval({1, h, w}, s.values);
        Tensor mval({1, h, w});
        for (size_t i = 0; i < s.values.size(); ++i) mval.data[i] = s.values[i] > 0.0 ? 1.0 : 0.0;
        depth_stack.push_back(t.constant(sval));
        depth_stack.push_back(t.constant(mval));
        depth_stack.push_back(prior ? ops::reshape(t, *prior, {1, h, w})
                                    : t.constant(Tensor::zeros({1, h, w})));
        std::string sp = "scale" + std::to_string(x);
        VarId dw = t.param(sp + ".depthfeat.w", reg_, {sc.c_depth, 4, 3, 3}, Init::HeFanIn);
        VarId db = t.param(sp + ".depthfeat.b", reg_, {sc.c_depth}, Init::Zero);
        VarId depth_feat =
            ops::relu(t, ops::conv2d(t, ops::concat_channels(t, depth_stack), dw, db, 1, 1));

        VarId f_unet = unet_fuse(t, image_feats[static_cast<size_t>(x)], depth_feat, sc.fusion,
                                 reg_, sp + ".unet");
        VarId f_fused = f_unet;
        if (cfg_.enable_3d_branch) {
            if (cfg_.fusion_mode == FusionMode::Caffm)
                f_fused = caffm(t, f_unet, f3d, sc.fusion, reg_, sp + ".caffm");
            else
                f_fused = concat_fuse(t, f_unet, f3d, sc.fusion, reg_, sp + ".concat");
        }

        // stage 3: refinement
        VarId out = refine(t, f_fused, d_pre, s, cfg_.refine, reg_, sp + ".refine",
                           training ? cfg_.droppath_rate : 0.0, training ? droppath_rng : nullptr);
        outputs.push_back(out);
        prev = out;
    }
    pointnet_calls_ = pointnet_call_counter() - counter_before;
    return outputs;
}

DenseDepthMap GacNet::predict(const Frame& frame) {
    Tape t;
    FramePlan plan = plan_frame(frame);
    std::vector<VarId> outs = forward(t, frame, plan, false, nullptr);
    const Tensor& last = t.val(outs.back());
    DenseDepthMap d(last.dim(0), last.dim(1));
    d.values = last.data;
    return d;
}

}  // namespace gacnet
