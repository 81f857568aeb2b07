#pragma once

#include <vector>

#include "t2net/common.hpp"

namespace t2net {

/// Complex-valued 2-D grid, row-major, double precision. Carries frequency-
/// domain data in the centered convention: after fft2 the DC term sits at
/// (height/2, width/2).
struct ComplexGrid {
    int height = 0;
    int width = 0;
    std::vector<double> re;
    std::vector<double> im;

    ComplexGrid() = default;
    ComplexGrid(int h, int w)
        : height(h), width(w), re(static_cast<std::size_t>(h) * w, 0.0),
          im(static_cast<std::size_t>(h) * w, 0.0) {}

    std::size_t numel() const { return re.size(); }

    double& re_at(int y, int x) { return re[static_cast<std::size_t>(y) * width + x]; }
    double& im_at(int y, int x) { return im[static_cast<std::size_t>(y) * width + x]; }
    double re_at(int y, int x) const { return re[static_cast<std::size_t>(y) * width + x]; }
    double im_at(int y, int x) const { return im[static_cast<std::size_t>(y) * width + x]; }
};

/// Orthonormal 2-D FFT (1/sqrt(hw) scaling), output centered so the DC term is
/// at the grid center. Dimensions must be powers of two.
ComplexGrid fft2(const ComplexGrid& img);

/// Inverse of fft2: expects a centered spectrum, returns the image.
ComplexGrid ifft2(const ComplexGrid& ksp);

/// Sum of squared magnitudes (Parseval checks).
double grid_energy(const ComplexGrid& g);

}  // namespace t2net
