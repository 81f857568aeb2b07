#pragma once

// Acquisition forward model: Fourier-domain sampling, Cartesian column masks,
// low-resolution degradation by spectrum truncation, and a synthetic ellipse
// phantom that stands in for scanner data.

#include <cstdint>
#include <vector>

#include "t2net/fft.hpp"
#include "t2net/tensor.hpp"

namespace t2net {

/// Column sampling pattern over phase-encode lines of a centered spectrum.
struct CartesianMask {
    int width = 0;
    std::vector<bool> sampled;
    double acceleration = 1.0;
    double center_fraction = 0.0;
    std::uint64_t seed = 0;

    int num_sampled() const {
        int n = 0;
        for (bool s : sampled) n += s ? 1 : 0;
        return n;
    }
};

/// Fully sampled central band of round(center_fraction*width) columns plus
/// uniformly drawn extra columns until round(width/acceleration) in total.
/// Deterministic in seed.
CartesianMask make_cartesian_mask(int width, double acceleration, double center_fraction,
                                  std::uint64_t seed);

/// Keeps sampled columns verbatim, zeroes the rest.
ComplexGrid undersample(const ComplexGrid& ksp, const CartesianMask& mask);

/// Central h/s x w/s block of a centered spectrum, scaled by 1/s so the
/// image-domain mean intensity survives the orthonormal transforms.
ComplexGrid degrade_lr(const ComplexGrid& ksp, int s);

struct PhantomSpec {
    int size = 64;
    int num_ellipses = 6;
    double intensity_min = 0.15, intensity_max = 0.85;
    double axis_min = 0.10, axis_max = 0.55;  // half-axes, in [-1,1] image coords
    double rot_min = 0.0, rot_max = 3.14159265358979323846;
    std::uint64_t seed = 0;
};

/// Sum of anti-aliased random ellipses on a dark background, clamped to
/// [0, 1]. Pure function of its parameters.
TensorPtr generate_phantom(const PhantomSpec& spec);

/// One training example: network input (undersampled + degraded), the LR
/// reconstruction target, and the HR target, all sharing one normalization.
struct SampleTriple {
    TensorPtr input_lr;    // [1,1,h/s,w/s]
    TensorPtr target_rec;  // [1,1,h/s,w/s]
    TensorPtr target_sr;   // [1,1,h,w]
    int scale = 1;
    CartesianMask mask;
};

/// Builds the triple from a fully sampled image: target_sr = hr, target_rec
/// from truncated full spectrum, input_lr from truncated undersampled
/// spectrum. All normalized by max(hr).
SampleTriple make_sample(const TensorPtr& hr, const CartesianMask& mask, int s);

/// Magnitude image of an inverse transform, as a [1,1,h,w] tensor.
TensorPtr magnitude_image(const ComplexGrid& g);

/// Real image -> complex grid with zero imaginary part.
ComplexGrid grid_from_tensor(const TensorPtr& img);

/// Phantom dataset recipe. Per-slice phantom and mask seeds derive from the
/// base seed, so a spec names its dataset exactly.
struct DatasetSpec {
    int slices = 16;
    int size = 64;
    int scale = 2;
    double acceleration = 6.0;
    double center_fraction = 0.0625;
    int ellipses = 6;
    std::uint64_t seed = 17;
};

std::uint64_t slice_phantom_seed(const DatasetSpec& spec, int slice);
std::uint64_t slice_mask_seed(const DatasetSpec& spec, int slice);
SampleTriple generate_slice(const DatasetSpec& spec, int slice);
std::vector<SampleTriple> generate_dataset(const DatasetSpec& spec);

}  // namespace t2net
