#include "t2net/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace t2net {

namespace {

void check_sizes(const char* op, std::size_t a, std::size_t b) {
    if (a != b)
        throw DimensionError(std::string(op) + ": size mismatch, " + std::to_string(a) + " vs " +
                             std::to_string(b));
}

}  // namespace

double psnr(const std::vector<double>& pred, const std::vector<double>& target, double data_range) {
    check_sizes("psnr", pred.size(), target.size());
    if (!(data_range > 0.0)) throw ParameterError("psnr: data_range must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    if (mse < data_range * data_range * 1e-10) return kPsnrCap;
    return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const std::vector<double>& pred, const std::vector<double>& target, int h, int w,
            double data_range) {
    check_sizes("ssim", pred.size(), target.size());
    check_sizes("ssim", pred.size(), static_cast<std::size_t>(h) * w);
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    if (h < kWin || w < kWin)
        throw DimensionError("ssim: image must be at least 11x11, got " + std::to_string(h) + "x" +
                             std::to_string(w));
    if (!(data_range > 0.0)) throw ParameterError("ssim: data_range must be positive");

    double window[kWin][kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dy = i - (kWin - 1) / 2.0, dx = j - (kWin - 1) / 2.0;
            window[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            wsum += window[i][j];
        }
    for (auto& row : window)
        for (auto& v : row) v /= wsum;

    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);

    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + kWin <= h; ++y)
        for (int x = 0; x + kWin <= w; ++x) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double wv = window[i][j];
                    const double a = pred[static_cast<std::size_t>(y + i) * w + (x + j)];
                    const double b = target[static_cast<std::size_t>(y + i) * w + (x + j)];
                    mx += wv * a;
                    my += wv * b;
                    xx += wv * a * a;
                    yy += wv * b * b;
                    xy += wv * a * b;
                }
            const double vx = xx - mx * mx;
            const double vy = yy - my * my;
            const double cov = xy - mx * my;
            acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return acc / count;
}

double nmse(const std::vector<double>& pred, const std::vector<double>& target) {
    check_sizes("nmse", pred.size(), target.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        num += d * d;
        den += target[i] * target[i];
    }
    if (den == 0.0) throw ContractError("nmse: target has zero norm");
    return num / den;
}

std::vector<double> to_doubles(const TensorPtr& t) {
    std::vector<double> out(t->numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(t->values[i]);
    return out;
}

MetricReport compute_metrics(const TensorPtr& pred, const TensorPtr& target) {
    if (pred->shape != target->shape)
        throw DimensionError("metrics: shape mismatch " + shape_str(pred->shape) + " vs " +
                             shape_str(target->shape));
    if (pred->rank() != 4)
        throw DimensionError("metrics: expected [1,1,H,W], got " + shape_str(pred->shape));
    const auto p = to_doubles(pred);
    const auto t = to_doubles(target);
    double range = 0.0;
    for (double v : t) range = std::max(range, std::fabs(v));
    if (range == 0.0) range = 1.0;
    MetricReport r;
    r.psnr_db = psnr(p, t, range);
    r.ssim = ssim(p, t, pred->dim(2), pred->dim(3), range);
    r.nmse = nmse(p, t);
    return r;
}

// ----------------------------------------------------------------------------
// bicubic baseline upsampler
// ----------------------------------------------------------------------------

namespace {

// Keys kernel, a = -0.5
double cubic(double t) {
    const double a = -0.5;
    t = std::fabs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

}  // namespace

TensorPtr bicubic_upsample(const TensorPtr& img, int factor) {
    if (img->rank() != 4) throw DimensionError("bicubic: expected 4-D tensor");
    if (factor < 1) throw ParameterError("bicubic: factor must be >= 1");
    const int b_n = img->dim(0), c = img->dim(1), h = img->dim(2), w = img->dim(3);
    const int oh = h * factor, ow = w * factor;
    auto out = make_tensor<float>({b_n, c, oh, ow});

    std::vector<int> xi(static_cast<std::size_t>(ow) * 4), yi(static_cast<std::size_t>(oh) * 4);
    std::vector<double> xw(static_cast<std::size_t>(ow) * 4), yw(static_cast<std::size_t>(oh) * 4);
    auto setup = [factor](int n_in, int n_out, std::vector<int>& idx, std::vector<double>& wt) {
        for (int i = 0; i < n_out; ++i) {
            const double src = (i + 0.5) / factor - 0.5;
            const int base = static_cast<int>(std::floor(src));
            for (int t = 0; t < 4; ++t) {
                const int p = base - 1 + t;
                idx[static_cast<std::size_t>(i) * 4 + t] = std::clamp(p, 0, n_in - 1);
                wt[static_cast<std::size_t>(i) * 4 + t] = cubic(src - p);
            }
        }
    };
    setup(h, oh, yi, yw);
    setup(w, ow, xi, xw);

    for (int b = 0; b < b_n; ++b)
        for (int ci = 0; ci < c; ++ci) {
            const float* src = img->values.data() + (static_cast<std::size_t>(b) * c + ci) * h * w;
            float* dst = out->values.data() + (static_cast<std::size_t>(b) * c + ci) * oh * ow;
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    double v = 0.0;
                    for (int ty = 0; ty < 4; ++ty) {
                        const double wy = yw[static_cast<std::size_t>(y) * 4 + ty];
                        if (wy == 0.0) continue;
                        const float* row = src + static_cast<std::size_t>(yi[static_cast<std::size_t>(y) * 4 + ty]) * w;
                        double rv = 0.0;
                        for (int tx = 0; tx < 4; ++tx)
                            rv += xw[static_cast<std::size_t>(x) * 4 + tx] *
                                  row[xi[static_cast<std::size_t>(x) * 4 + tx]];
                        v += wy * rv;
                    }
                    dst[static_cast<std::size_t>(y) * ow + x] = static_cast<float>(v);
                }
        }
    return out;
}

}  // namespace t2net
