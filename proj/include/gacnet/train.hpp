#pragma once

#include <string>
#include <vector>

#include "gacnet/data_io.hpp"
#include "gacnet/loss_metrics.hpp"
#include "gacnet/pyramid.hpp"

namespace gacnet {

struct TrainConfig {
    double max_lr = 2.5e-4;
    double weight_decay = 0.05;
    int batch_size = 2;
    int total_steps = 2000;
    double warmup_fraction = 0.10;
    double droppath_rate = 0.1;
    uint64_t seed = 0;
    bool clip_gradients = false;  // extension flag, off in paper-faithful mode
    double clip_norm = 1.0;
    NetworkConfig net;

    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

// Linear warmup from max_lr/40 over the first 10% of steps, then cosine
// annealing from max_lr down to max_lr/400.
double lr_at(long long step, long long total_steps, const TrainConfig& cfg);

// True for parameters excluded from weight decay (biases and gains).
bool excluded_from_decay(const std::string& name);

struct AdamWState {
    std::map<std::string, Tensor> m, v;
    long long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void update(ParamRegistry& reg, double lr, double weight_decay);
};

struct RunRecord {
    std::vector<double> losses;           // one per step
    std::vector<double> lr_trace;         // one per step
    std::vector<MetricReport> val_reports;  // one per evaluation point
    double wall_seconds = 0.0;
    std::string config_hash;
};

MetricReport evaluate_frames(GacNet& net, const std::vector<Frame>& frames,
                             std::vector<MetricReport>* per_frame = nullptr);

// Optimizes the multi-scale loss with AdamW + the warmup/cosine schedule.
// Checkpoints the best-validation-RMSE parameters to <out_dir>/best.ckpt
// when out_dir is nonempty.
RunRecord train(const TrainConfig& cfg, const std::vector<Frame>& train_frames,
                const std::vector<Frame>& val_frames, const std::string& out_dir,
                int eval_every = 0);

struct AblationRow {
    std::string label;
    MetricReport report;
};

// Table-2-style runner: i (2-stage), ii (3-stage), iii (+pointnet, concat),
// iv (+pointnet, CAFFM), shared seed and data.
std::vector<AblationRow> run_ablation(const TrainConfig& base_cfg,
                                      const std::vector<Frame>& train_frames,
                                      const std::vector<Frame>& val_frames,
                                      const std::string& out_dir);

// Writes prediction PNG (KITTI encoding), a colormapped visualization, an
// error heat map (when gt is valid anywhere) and a metrics JSON.
void infer_and_plot(GacNet& net, const Frame& frame, const std::string& out_dir);

}  // namespace gacnet
