#include "t2net/fft.hpp"

#include <cmath>
#include <complex>

namespace t2net {

namespace {

bool power_of_two(int n) { return n >= 1 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, unnormalized. Caller applies 1/sqrt(n).
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

void check_dims(const ComplexGrid& g, const char* op) {
    if (!power_of_two(g.height) || !power_of_two(g.width))
        throw DimensionError(std::string(op) + ": dimensions must be powers of two, got " +
                             std::to_string(g.height) + "x" + std::to_string(g.width));
}

// Orthonormal 2-D transform without any shift.
ComplexGrid transform2d(const ComplexGrid& in, bool inverse) {
    const int h = in.height, w = in.width;
    ComplexGrid out(h, w);
    std::vector<std::complex<double>> row(w), col(h);
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) row[x] = {in.re_at(y, x), in.im_at(y, x)};
        fft_radix2(row, inverse);
        for (int x = 0; x < w; ++x) buf[static_cast<std::size_t>(y) * w + x] = row[x];
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[y] = buf[static_cast<std::size_t>(y) * w + x];
        fft_radix2(col, inverse);
        for (int y = 0; y < h; ++y) buf[static_cast<std::size_t>(y) * w + x] = col[y];
    }
    const double norm = 1.0 / std::sqrt(static_cast<double>(h) * static_cast<double>(w));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto v = buf[static_cast<std::size_t>(y) * w + x] * norm;
            out.re_at(y, x) = v.real();
            out.im_at(y, x) = v.imag();
        }
    return out;
}

// Rotate by half along both axes; for even power-of-two dims this is its own
// inverse, so one routine serves both shift directions.
ComplexGrid half_shift(const ComplexGrid& in) {
    const int h = in.height, w = in.width;
    ComplexGrid out(h, w);
    const int sy = h / 2, sx = w / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int ty = (y + sy) % h, tx = (x + sx) % w;
            out.re_at(ty, tx) = in.re_at(y, x);
            out.im_at(ty, tx) = in.im_at(y, x);
        }
    return out;
}

}  // namespace

ComplexGrid fft2(const ComplexGrid& img) {
    check_dims(img, "fft2");
    return half_shift(transform2d(img, false));
}

ComplexGrid ifft2(const ComplexGrid& ksp) {
    check_dims(ksp, "ifft2");
    return transform2d(half_shift(ksp), true);
}

double grid_energy(const ComplexGrid& g) {
    double e = 0.0;
    for (std::size_t i = 0; i < g.numel(); ++i) e += g.re[i] * g.re[i] + g.im[i] * g.im[i];
    return e;
}

}  // namespace t2net
