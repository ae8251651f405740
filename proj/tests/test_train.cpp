#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gacnet/train.hpp"

using namespace gacnet;
namespace fs = std::filesystem;

static std::vector<Frame> tiny_dataset(int n, uint64_t seed0) {
    std::vector<SceneSpec> specs(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        specs[size_t(i)].seed = seed0 + uint64_t(i);
        specs[size_t(i)].h = 64;
        specs[size_t(i)].w = 64;
        specs[size_t(i)].n_objects = 2;
    }
    return make_synthetic_dataset(specs, {8, 0.3});
}

TEST_CASE("learning rate schedule hits the three anchor points exactly") {
    TrainConfig cfg;
    cfg.max_lr = 2.5e-4;
    cfg.warmup_fraction = 0.10;
    const long long total = 2000;
    CHECK(lr_at(0, total, cfg) == doctest::Approx(2.5e-4 / 40.0).epsilon(1e-15));   // 6.25e-6
    CHECK(lr_at(200, total, cfg) == doctest::Approx(2.5e-4).epsilon(1e-15));        // end of warmup
    CHECK(lr_at(total - 1, total, cfg) == doctest::Approx(2.5e-4 / 400.0).epsilon(1e-15));

    SUBCASE("warmup is linear and annealing is monotone decreasing") {
        for (int s = 1; s <= 200; ++s) {
            double expect = 6.25e-6 + (s / 200.0) * (2.5e-4 - 6.25e-6);
            CHECK(lr_at(s, total, cfg) == doctest::Approx(expect).epsilon(1e-12));
        }
        double prev = lr_at(200, total, cfg);
        for (int s = 201; s < 2000; s += 37) {
            double cur = lr_at(s, total, cfg);
            CHECK(cur < prev);
            prev = cur;
        }
    }

    SUBCASE("no discontinuity at the warmup boundary") {
        double before = lr_at(199, total, cfg);
        double at = lr_at(200, total, cfg);
        double after = lr_at(201, total, cfg);
        CHECK(at - before < 2.0 * (2.5e-4 - 6.25e-6) / 200.0);
        CHECK(at - after < 1e-6);
    }

    CHECK_THROWS(lr_at(-1, total, cfg));
    CHECK_THROWS(lr_at(total, total, cfg));
}

TEST_CASE("weight decay applies to weights but never to biases") {
    CHECK(excluded_from_decay("scale0.unet.enc0.b"));
    CHECK(excluded_from_decay("pointnet.proj.b"));
    CHECK_FALSE(excluded_from_decay("scale0.unet.enc0.w"));
    CHECK_FALSE(excluded_from_decay("pointnet.proj.w"));

    // with zero gradients, one AdamW step shrinks weights and leaves biases
    ParamRegistry reg(1);
    reg.get_or_init("m.w", {4}, Init::One);
    reg.get_or_init("m.b", {4}, Init::One);
    reg.zero_grads();
    AdamWState opt;
    opt.update(reg, /*lr=*/0.1, /*weight_decay=*/0.5);
    for (double v : reg.value("m.w").data) CHECK(v == doctest::Approx(0.95));  // 1 - 0.1*0.5
    for (double v : reg.value("m.b").data) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("adamw matches a hand-stepped scalar reference") {
    ParamRegistry reg(0);
    reg.get_or_init("p.w", {1}, Init::Zero);
    reg.value("p.w")[0] = 2.0;
    AdamWState opt;
    double m = 0, v = 0, p = 2.0;
    const double g = 0.5, lr = 1e-2, wd = 0.05;
    for (int s = 1; s <= 3; ++s) {
        reg.zero_grads();
        reg.add_grad("p.w", Tensor({1}, {g}));
        opt.update(reg, lr, wd);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        double mhat = m / (1.0 - std::pow(0.9, s));
        double vhat = v / (1.0 - std::pow(0.999, s));
        p -= lr * mhat / (std::sqrt(vhat) + 1e-8);
        p -= lr * wd * p;
        CHECK(reg.value("p.w")[0] == doctest::Approx(p).epsilon(1e-12));
    }
}

TEST_CASE("train config json round trips") {
    TrainConfig cfg;
    cfg.max_lr = 1e-3;
    cfg.batch_size = 1;
    cfg.total_steps = 17;
    cfg.seed = 99;
    cfg.net = NetworkConfig::toy();
    cfg.net.fusion_mode = FusionMode::Concat;
    TrainConfig back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.max_lr == cfg.max_lr);
    CHECK(back.batch_size == 1);
    CHECK(back.total_steps == 17);
    CHECK(back.seed == 99);
    CHECK(back.net.fusion_mode == FusionMode::Concat);
    CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("checkpoints round trip bit exactly and reproduce metrics") {
    auto frames = tiny_dataset(2, 500);
    NetworkConfig net_cfg = NetworkConfig::toy();
    net_cfg.seed = 5;
    GacNet net(net_cfg, 5);
    // touch all parameters once
    {
        FramePlan plan = net.plan_frame(frames[0]);
        Tape t;
        net.forward(t, frames[0], plan);
    }
    std::string path = (fs::temp_directory_path() / "gacnet_ckpt_test.ckpt").string();
    net.params().save(path);
    ParamRegistry loaded = ParamRegistry::load(path);
    CHECK(loaded.seed() == net.params().seed());
    REQUIRE(loaded.values().size() == net.params().values().size());
    for (const auto& kv : net.params().values()) {
        REQUIRE(loaded.has(kv.first));
        CHECK(loaded.value(kv.first).shape == kv.second.shape);
        CHECK(loaded.value(kv.first).data == kv.second.data);  // bit exact
    }

    GacNet net2(net_cfg, std::move(loaded));
    MetricReport a = evaluate_frames(net, frames);
    MetricReport b = evaluate_frames(net2, frames);
    CHECK(a.rmse_mm == b.rmse_mm);
    CHECK(a.mae_mm == b.mae_mm);
}

TEST_CASE("a short training run is deterministic per seed and records traces") {
    auto frames = tiny_dataset(3, 900);
    TrainConfig cfg;
    cfg.net = NetworkConfig::toy();
    cfg.total_steps = 6;
    cfg.batch_size = 1;
    cfg.seed = 7;
    cfg.droppath_rate = 0.1;

    RunRecord a = train(cfg, frames, {frames[0]}, "");
    RunRecord b = train(cfg, frames, {frames[0]}, "");
    CHECK(a.losses == b.losses);
    CHECK(a.lr_trace == b.lr_trace);
    REQUIRE(a.losses.size() == 6);
    REQUIRE(a.lr_trace.size() == 6);
    CHECK(a.lr_trace[0] == doctest::Approx(cfg.max_lr / 40.0));
    REQUIRE(!a.val_reports.empty());
    CHECK(a.val_reports.back().rmse_mm == b.val_reports.back().rmse_mm);

    cfg.seed = 8;
    RunRecord c = train(cfg, frames, {frames[0]}, "");
    CHECK(a.losses != c.losses);

    SUBCASE("output directory receives checkpoints and the config") {
        std::string dir = (fs::temp_directory_path() / "gacnet_train_test").string();
        fs::remove_all(dir);
        train(cfg, frames, {frames[0]}, dir);
        CHECK(fs::exists(dir + "/best.ckpt"));
        CHECK(fs::exists(dir + "/last.ckpt"));
        CHECK(fs::exists(dir + "/config.json"));
        std::ifstream in(dir + "/config.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        TrainConfig back = TrainConfig::from_json(text);
        CHECK(back.seed == cfg.seed);
        fs::remove_all(dir);
    }
}

TEST_CASE("inference artifacts are written for a trained network") {
    auto frames = tiny_dataset(1, 1200);
    NetworkConfig net_cfg = NetworkConfig::toy();
    GacNet net(net_cfg, 3);
    std::string dir = (fs::temp_directory_path() / "gacnet_infer_test").string();
    fs::remove_all(dir);
    infer_and_plot(net, frames[0], dir);
    CHECK(fs::exists(dir + "/pred_depth.png"));
    CHECK(fs::exists(dir + "/pred_vis.png"));
    CHECK(fs::exists(dir + "/error_heatmap.png"));
    CHECK(fs::exists(dir + "/metrics.json"));
    SparseDepthMap pred = load_depth_png(dir + "/pred_depth.png");
    CHECK(pred.h == 64);
    CHECK(pred.w == 64);
    fs::remove_all(dir);
}
