#pragma once

#include <vector>

#include "t2net/tensor.hpp"

namespace t2net {

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double nmse = 0.0;
};

/// Identical inputs report this capped PSNR.
inline constexpr double kPsnrCap = 100.0;

/// 10*log10(data_range^2 / MSE), capped at 100 dB when MSE < range^2 * 1e-10.
double psnr(const std::vector<double>& pred, const std::vector<double>& target, double data_range);

/// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5, K1 = 0.01,
/// K2 = 0.03). Images must be at least 11x11.
double ssim(const std::vector<double>& pred, const std::vector<double>& target, int h, int w,
            double data_range);

/// ||pred - target||^2 / ||target||^2. Zero-norm target is a contract error.
double nmse(const std::vector<double>& pred, const std::vector<double>& target);

/// Convenience: evaluate all three on [1,1,H,W] float tensors, with
/// data_range = max over the target.
MetricReport compute_metrics(const TensorPtr& pred, const TensorPtr& target);

std::vector<double> to_doubles(const TensorPtr& t);

/// Catmull-Rom bicubic upsampling of a [B,C,H,W] tensor by an integer factor
/// (align-corners-false, edge clamped). Evaluation-only; not differentiable.
TensorPtr bicubic_upsample(const TensorPtr& img, int factor);

}  // namespace t2net
