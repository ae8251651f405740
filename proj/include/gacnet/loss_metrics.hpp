#pragma once

#include <string>
#include <vector>

#include "gacnet/autodiff.hpp"
#include "gacnet/geometry.hpp"

namespace gacnet {

struct MetricReport {
    double rmse_mm = 0.0;
    double mae_mm = 0.0;
    double irmse_per_km = 0.0;
    double imae_per_km = 0.0;
    long long n_valid = 0;
    bool inverse_defined = true;

    std::string to_json() const;
    static std::string table_header();
    std::string table_row(const std::string& label) const;
};

// theta_x = 4^-x for scale x (0 = coarsest).
std::vector<double> loss_weights();

// Multi-scale L2 loss: each prediction is bilinearly upsampled to the ground
// truth resolution; squared error is averaged over valid gt pixels and
// weighted by 4^-x. preds are tape vars ([H,W]) ordered coarsest-first.
VarId multiscale_loss(Tape& t, const std::vector<VarId>& preds, const SparseDepthMap& gt);

// align-corners-false bilinear upsampling (plain, non-tape version).
DenseDepthMap upsample_bilinear(const DenseDepthMap& d, int target_h, int target_w);

MetricReport compute_metrics(const DenseDepthMap& pred, const SparseDepthMap& gt);

}  // namespace gacnet
