#include "gacnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gacnet/ops.hpp"

namespace gacnet {

double lr_at(long long step, long long total_steps, const TrainConfig& cfg) {
    if (step < 0 || step >= total_steps) throw std::invalid_argument("lr_at: step out of range");
    double lr0 = cfg.max_lr / 40.0;
    double lr_end = lr0 / 10.0;
    long long warmup = static_cast<long long>(std::ceil(cfg.warmup_fraction * total_steps));
    if (step < warmup) {
        double f = warmup > 0 ? static_cast<double>(step) / warmup : 1.0;
        return lr0 + f * (cfg.max_lr - lr0);
    }
    long long rest = total_steps - warmup;
    double f = rest > 1 ? static_cast<double>(step - warmup) / (rest - 1) : 1.0;
    return lr_end + 0.5 * (cfg.max_lr - lr_end) * (1.0 + std::cos(M_PI * f));
}

bool excluded_from_decay(const std::string& name) {
    return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
}

void AdamWState::update(ParamRegistry& reg, double lr, double weight_decay) {
    ++step;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (auto& [name, p] : reg.values_mutable()) {
        const Tensor& g = reg.grad(name);
        Tensor& mm = m.emplace(name, Tensor::zeros(p.shape)).first->second;
        Tensor& vv = v.emplace(name, Tensor::zeros(p.shape)).first->second;
        bool decay = !excluded_from_decay(name);
        for (size_t i = 0; i < p.data.size(); ++i) {
            mm.data[i] = beta1 * mm.data[i] + (1.0 - beta1) * g.data[i];
            vv.data[i] = beta2 * vv.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            double mhat = mm.data[i] / bc1;
            double vhat = vv.data[i] / bc2;
            p.data[i] -= lr * (mhat / (std::sqrt(vhat) + eps));
            if (decay) p.data[i] -= lr * weight_decay * p.data[i];
        }
    }
}

MetricReport evaluate_frames(GacNet& net, const std::vector<Frame>& frames,
                             std::vector<MetricReport>* per_frame) {
    if (frames.empty()) throw std::invalid_argument("evaluate_frames: empty dataset");
    MetricReport agg;
    for (const auto& f : frames) {
        DenseDepthMap pred = net.predict(f);
        MetricReport r = compute_metrics(pred, f.gt);
        if (per_frame) per_frame->push_back(r);
        agg.rmse_mm += r.rmse_mm;
        agg.mae_mm += r.mae_mm;
        agg.irmse_per_km += r.irmse_per_km;
        agg.imae_per_km += r.imae_per_km;
        agg.n_valid += r.n_valid;
        agg.inverse_defined = agg.inverse_defined && r.inverse_defined;
    }
    double n = static_cast<double>(frames.size());
    agg.rmse_mm /= n;
    agg.mae_mm /= n;
    agg.irmse_per_km /= n;
    agg.imae_per_km /= n;
    return agg;
}

namespace {

std::string hash_config(const std::string& text) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

RunRecord train(const TrainConfig& cfg, const std::vector<Frame>& train_frames,
                const std::vector<Frame>& val_frames, const std::string& out_dir,
                int eval_every) {
    if (train_frames.empty()) throw std::runtime_error("train: dataset is empty");
    auto t0 = std::chrono::steady_clock::now();

    NetworkConfig net_cfg = cfg.net;
    net_cfg.droppath_rate = cfg.droppath_rate;
    net_cfg.seed = cfg.seed;
    GacNet net(net_cfg, cfg.seed);

    std::vector<FramePlan> plans;
    plans.reserve(train_frames.size());
    for (const auto& f : train_frames) plans.push_back(net.plan_frame(f));

    RunRecord rec;
    rec.config_hash = hash_config(cfg.to_json());
    AdamWState opt;
    std::mt19937_64 order_rng(cfg.seed ^ 0x5bf0a8b1u);
    std::mt19937_64 droppath_rng(cfg.seed ^ 0x94d049bbu);
    std::vector<size_t> order(train_frames.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng);
    size_t cursor = 0;

    double best_rmse = std::numeric_limits<double>::infinity();
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    for (int step = 0; step < cfg.total_steps; ++step) {
        double lr = lr_at(step, cfg.total_steps, cfg);
        rec.lr_trace.push_back(lr);

        Tape tape;
        VarId batch_loss = -1;
        std::vector<size_t> batch_ids;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                std::shuffle(order.begin(), order.end(), order_rng);
                cursor = 0;
            }
            size_t idx = order[cursor++];
            batch_ids.push_back(idx);
            auto outs = net.forward(tape, train_frames[idx], plans[idx], true, &droppath_rng);
            VarId loss = multiscale_loss(tape, outs, train_frames[idx].gt);
            batch_loss = batch_loss < 0 ? loss : ops::add(tape, batch_loss, loss);
        }
        batch_loss = ops::scale(tape, batch_loss, 1.0 / cfg.batch_size);
        double loss_val = tape.val(batch_loss)[0];
        if (!std::isfinite(loss_val)) {
            std::string ids;
            for (size_t i : batch_ids) ids += train_frames[i].id + " ";
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                     " (batch: " + ids + ")");
        }
        rec.losses.push_back(loss_val);

        net.params().zero_grads();
        tape.backward(batch_loss);
        tape.accumulate_param_grads(net.params());

        if (cfg.clip_gradients) {
            double sq = 0.0;
            for (auto& [name, p] : net.params().values_mutable()) {
                const Tensor& g = net.params().grad(name);
                for (double x : g.data) sq += x * x;
            }
            double norm = std::sqrt(sq);
            if (norm > cfg.clip_norm) {
                double s = cfg.clip_norm / norm;
                for (auto& [name, p] : net.params().values_mutable())
                    for (auto& x : net.params().grad(name).data) x *= s;
            }
        }
        opt.update(net.params(), lr, cfg.weight_decay);

        bool last = step + 1 == cfg.total_steps;
        if (!val_frames.empty() && (last || (eval_every > 0 && (step + 1) % eval_every == 0))) {
            MetricReport r = evaluate_frames(net, val_frames);
            rec.val_reports.push_back(r);
            if (r.rmse_mm < best_rmse) {
                best_rmse = r.rmse_mm;
                if (!out_dir.empty()) net.params().save(out_dir + "/best.ckpt");
            }
        }
    }
    if (!out_dir.empty()) {
        net.params().save(out_dir + "/last.ckpt");
        std::ofstream cfg_out(out_dir + "/config.json");
        cfg_out << cfg.to_json() << "\n";
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base_cfg,
                                      const std::vector<Frame>& train_frames,
                                      const std::vector<Frame>& val_frames,
                                      const std::string& out_dir) {
    struct Variant {
        std::string label;
        bool preprocess, branch3d;
        FusionMode mode;
    };
    const std::vector<Variant> variants{
        {"i", false, false, FusionMode::Caffm},
        {"ii", true, false, FusionMode::Caffm},
        {"iii", true, true, FusionMode::Concat},
        {"iv", true, true, FusionMode::Caffm},
    };
    std::vector<AblationRow> rows;
    for (const auto& v : variants) {
        TrainConfig cfg = base_cfg;
        cfg.net.enable_preprocess = v.preprocess;
        cfg.net.enable_3d_branch = v.branch3d;
        cfg.net.fusion_mode = v.mode;
        std::string dir = out_dir.empty() ? "" : out_dir + "/variant_" + v.label;
        RunRecord rec = train(cfg, train_frames, val_frames, dir);
        rows.push_back({v.label, rec.val_reports.back()});
    }
    if (!out_dir.empty()) {
        std::ofstream out(out_dir + "/ablation.txt");
        out << MetricReport::table_header() << "\n";
        for (const auto& r : rows) out << r.report.table_row(r.label) << "\n";
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : rows)
            j.push_back({{"variant", r.label},
                         {"rmse_mm", r.report.rmse_mm},
                         {"mae_mm", r.report.mae_mm}});
        std::ofstream jout(out_dir + "/ablation.json");
        jout << j.dump(2) << "\n";
    }
    return rows;
}

namespace {

// simple blue->red colormap for depth / error visualization
Tensor colorize(const std::vector<double>& values, int h, int w, double lo, double hi) {
    Tensor img({3, h, w});
    double range = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double f = std::clamp((values[static_cast<size_t>(y) * w + x] - lo) / range, 0.0, 1.0);
            img.at(0, y, x) = f;
            img.at(1, y, x) = 4.0 * f * (1.0 - f);
            img.at(2, y, x) = 1.0 - f;
        }
    return img;
}

}  // namespace

void infer_and_plot(GacNet& net, const Frame& frame, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    DenseDepthMap pred = net.predict(frame);
    save_depth_png(pred, out_dir + "/pred_depth.png");

    double lo = 1e300, hi = -1e300;
    for (double v : pred.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    save_color_png(colorize(pred.values, pred.h, pred.w, lo, hi), out_dir + "/pred_vis.png");

    if (frame.gt.count_valid() > 0) {
        std::vector<double> err(pred.values.size(), 0.0);
        double emax = 0.0;
        for (size_t i = 0; i < err.size(); ++i)
            if (frame.gt.values[i] > 0.0) {
                err[i] = std::abs(pred.values[i] - frame.gt.values[i]);
                emax = std::max(emax, err[i]);
            }
        save_color_png(colorize(err, pred.h, pred.w, 0.0, emax), out_dir + "/error_heatmap.png");
        MetricReport r = compute_metrics(pred, frame.gt);
        std::ofstream out(out_dir + "/metrics.json");
        out << r.to_json() << "\n";
    }
}

std::string TrainConfig::to_json() const {
    nlohmann::json j;
    j["max_lr"] = max_lr;
    j["weight_decay"] = weight_decay;
    j["batch_size"] = batch_size;
    j["total_steps"] = total_steps;
    j["warmup_fraction"] = warmup_fraction;
    j["droppath_rate"] = droppath_rate;
    j["seed"] = seed;
    j["clip_gradients"] = clip_gradients;
    j["clip_norm"] = clip_norm;
    j["net"] = nlohmann::json::parse(net.to_json());
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    TrainConfig cfg;
    cfg.max_lr = j.value("max_lr", cfg.max_lr);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.total_steps = j.value("total_steps", cfg.total_steps);
    cfg.warmup_fraction = j.value("warmup_fraction", cfg.warmup_fraction);
    cfg.droppath_rate = j.value("droppath_rate", cfg.droppath_rate);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.clip_gradients = j.value("clip_gradients", false);
    cfg.clip_norm = j.value("clip_norm", 1.0);
    if (j.contains("net")) cfg.net = NetworkConfig::from_json(j["net"].dump());
    else cfg.net = NetworkConfig::toy();
    return cfg;
}

}  // namespace gacnet
