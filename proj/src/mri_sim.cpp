#include "t2net/mri_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace t2net {

CartesianMask make_cartesian_mask(int width, double acceleration, double center_fraction,
                                  std::uint64_t seed) {
    if (width < 1) throw ParameterError("mask: width must be positive");
    if (acceleration < 1.0) throw ParameterError("mask: acceleration must be >= 1");
    if (center_fraction <= 0.0 || center_fraction > 1.0)
        throw ParameterError("mask: center_fraction must be in (0, 1]");
    if (center_fraction * width < 1.0)
        throw ParameterError("mask: center band narrower than one column");

    const int target = static_cast<int>(std::lround(width / acceleration));
    const int n_center = std::max(1, static_cast<int>(std::lround(center_fraction * width)));
    if (n_center > target)
        throw ParameterError("mask: center band of " + std::to_string(n_center) +
                             " columns exceeds sampling budget of " + std::to_string(target));

    CartesianMask mask;
    mask.width = width;
    mask.sampled.assign(width, false);
    mask.acceleration = acceleration;
    mask.center_fraction = center_fraction;
    mask.seed = seed;

    const int start = (width - n_center) / 2;
    for (int i = 0; i < n_center; ++i) mask.sampled[start + i] = true;

    std::vector<int> pool;
    pool.reserve(width - n_center);
    for (int i = 0; i < width; ++i)
        if (!mask.sampled[i]) pool.push_back(i);

    // Partial Fisher-Yates: draw without replacement until the budget is met.
    Rng rng(seed);
    int remaining = target - n_center;
    for (int i = 0; i < remaining; ++i) {
        const int j = i + rng.uniform_int(static_cast<int>(pool.size()) - i);
        std::swap(pool[i], pool[j]);
        mask.sampled[pool[i]] = true;
    }
    return mask;
}

ComplexGrid undersample(const ComplexGrid& ksp, const CartesianMask& mask) {
    if (ksp.width != mask.width)
        throw DimensionError("undersample: k-space width " + std::to_string(ksp.width) +
                             " does not match mask width " + std::to_string(mask.width));
    ComplexGrid out(ksp.height, ksp.width);
    for (int y = 0; y < ksp.height; ++y)
        for (int x = 0; x < ksp.width; ++x)
            if (mask.sampled[x]) {
                out.re_at(y, x) = ksp.re_at(y, x);
                out.im_at(y, x) = ksp.im_at(y, x);
            }
    return out;
}

ComplexGrid degrade_lr(const ComplexGrid& ksp, int s) {
    if (s < 1) throw ParameterError("degrade_lr: scale must be >= 1");
    if (ksp.height % s != 0 || ksp.width % s != 0)
        throw DimensionError("degrade_lr: " + std::to_string(ksp.height) + "x" +
                             std::to_string(ksp.width) + " not divisible by scale " +
                             std::to_string(s));
    const int h = ksp.height / s, w = ksp.width / s;
    const int y0 = (ksp.height - h) / 2, x0 = (ksp.width - w) / 2;
    const double scale = 1.0 / static_cast<double>(s);
    ComplexGrid out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            out.re_at(y, x) = ksp.re_at(y0 + y, x0 + x) * scale;
            out.im_at(y, x) = ksp.im_at(y0 + y, x0 + x) * scale;
        }
    return out;
}

TensorPtr generate_phantom(const PhantomSpec& spec) {
    if (spec.size < 16) throw ParameterError("phantom: size must be >= 16");
    const int n = spec.size;
    Rng rng(spec.seed);
    struct Ellipse {
        double cx, cy, a, b, cos_r, sin_r, intensity;
    };
    std::vector<Ellipse> ellipses;
    ellipses.reserve(spec.num_ellipses);
    for (int e = 0; e < spec.num_ellipses; ++e) {
        Ellipse el{};
        el.cx = rng.uniform(-0.55, 0.55);
        el.cy = rng.uniform(-0.55, 0.55);
        el.a = rng.uniform(spec.axis_min, spec.axis_max);
        el.b = rng.uniform(spec.axis_min, spec.axis_max);
        const double rot = rng.uniform(spec.rot_min, spec.rot_max);
        el.cos_r = std::cos(rot);
        el.sin_r = std::sin(rot);
        el.intensity = rng.uniform(spec.intensity_min, spec.intensity_max);
        ellipses.push_back(el);
    }

    auto img = make_tensor<float>({1, 1, n, n});
    const double px = 2.0 / n;  // pixel size in [-1,1] coords; soft-edge width
    for (int y = 0; y < n; ++y) {
        const double fy = (y + 0.5) * px - 1.0;
        for (int x = 0; x < n; ++x) {
            const double fx = (x + 0.5) * px - 1.0;
            double v = 0.0;
            for (const auto& el : ellipses) {
                const double dx = fx - el.cx, dy = fy - el.cy;
                const double u = dx * el.cos_r + dy * el.sin_r;
                const double t = -dx * el.sin_r + dy * el.cos_r;
                const double rho = std::sqrt((u / el.a) * (u / el.a) + (t / el.b) * (t / el.b));
                // approximate signed distance from the boundary, one-pixel ramp
                const double dist = (1.0 - rho) * std::min(el.a, el.b);
                const double alpha = std::clamp(0.5 + dist / px, 0.0, 1.0);
                v += el.intensity * alpha;
            }
            img->values[static_cast<std::size_t>(y) * n + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return img;
}

ComplexGrid grid_from_tensor(const TensorPtr& img) {
    if (img->rank() != 4 || img->dim(0) != 1 || img->dim(1) != 1)
        throw DimensionError("grid_from_tensor: expected [1,1,H,W], got " + shape_str(img->shape));
    ComplexGrid g(img->dim(2), img->dim(3));
    for (std::size_t i = 0; i < g.numel(); ++i) g.re[i] = static_cast<double>(img->values[i]);
    return g;
}

TensorPtr magnitude_image(const ComplexGrid& g) {
    auto out = make_tensor<float>({1, 1, g.height, g.width});
    for (std::size_t i = 0; i < g.numel(); ++i)
        out->values[i] = static_cast<float>(std::sqrt(g.re[i] * g.re[i] + g.im[i] * g.im[i]));
    return out;
}

std::uint64_t slice_phantom_seed(const DatasetSpec& spec, int slice) {
    return mix_seed(spec.seed, static_cast<std::uint64_t>(slice) * 2);
}

std::uint64_t slice_mask_seed(const DatasetSpec& spec, int slice) {
    return mix_seed(spec.seed, static_cast<std::uint64_t>(slice) * 2 + 1);
}

SampleTriple generate_slice(const DatasetSpec& spec, int slice) {
    PhantomSpec phantom;
    phantom.size = spec.size;
    phantom.num_ellipses = spec.ellipses;
    phantom.seed = slice_phantom_seed(spec, slice);
    auto hr = generate_phantom(phantom);
    auto mask = make_cartesian_mask(spec.size, spec.acceleration, spec.center_fraction,
                                    slice_mask_seed(spec, slice));
    return make_sample(hr, mask, spec.scale);
}

std::vector<SampleTriple> generate_dataset(const DatasetSpec& spec) {
    std::vector<SampleTriple> out;
    out.reserve(spec.slices);
    for (int i = 0; i < spec.slices; ++i) out.push_back(generate_slice(spec, i));
    return out;
}

SampleTriple make_sample(const TensorPtr& hr, const CartesianMask& mask, int s) {
    if (hr->rank() != 4 || hr->dim(0) != 1 || hr->dim(1) != 1)
        throw DimensionError("make_sample: expected [1,1,H,W] image, got " + shape_str(hr->shape));
    const int h = hr->dim(2), w = hr->dim(3);
    if (h % s != 0 || w % s != 0)
        throw DimensionError("make_sample: image " + std::to_string(h) + "x" + std::to_string(w) +
                             " not divisible by scale " + std::to_string(s));

    float peak = 0.0f;
    for (float v : hr->values) peak = std::max(peak, v);
    const float norm = peak > 0.0f ? peak : 1.0f;

    SampleTriple sample;
    sample.scale = s;
    sample.mask = mask;

    sample.target_sr = make_tensor<float>(hr->shape);
    for (std::size_t i = 0; i < hr->numel(); ++i) sample.target_sr->values[i] = hr->values[i] / norm;

    const ComplexGrid y = fft2(grid_from_tensor(hr));
    sample.target_rec = magnitude_image(ifft2(degrade_lr(y, s)));
    sample.input_lr = magnitude_image(ifft2(degrade_lr(undersample(y, mask), s)));
    for (auto& v : sample.target_rec->values) v /= norm;
    for (auto& v : sample.input_lr->values) v /= norm;
    return sample;
}

}  // namespace t2net
