#pragma once

// Raw numeric kernels shared by the autodiff ops. Flat arrays, no tape,
// no shape checks; callers validate. Loops are arranged so the innermost
// index is contiguous on both sides, which lets the compiler vectorize
// without relaxed FP semantics.

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace t2net::kern {

/// C[M x N] += A[M x K] * B[K x N], all row-major.
template <typename T>
void matmul_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    const bool par = static_cast<long long>(m) * k * n >= (1 << 16) && m > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par)
#endif
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    (void)par;
}

/// B[N x M] = transpose of A[M x N].
template <typename T>
void transpose(const T* a, T* b, int m, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) b[static_cast<std::size_t>(j) * m + i] = a[static_cast<std::size_t>(i) * n + j];
}

inline int conv_out_size(int in, int k, int stride, int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

/// Sliding-window patch extraction for one image [C,H,W] -> cols[C*k*k, L],
/// L = out_h*out_w, zero padding. Row d = (c*k + dy)*k + dx.
template <typename T>
void im2col(const T* in, int c_in, int h, int w, int k, int stride, int padding, T* cols,
            int out_h, int out_w) {
    const int l_total = out_h * out_w;
    for (int c = 0; c < c_in; ++c) {
        const T* img = in + static_cast<std::size_t>(c) * h * w;
        for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
                T* row = cols + static_cast<std::size_t>((c * k + dy) * k + dx) * l_total;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - padding + dy;
                    T* dst = row + static_cast<std::size_t>(oy) * out_w;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < out_w; ++ox) dst[ox] = T(0);
                        continue;
                    }
                    const T* src = img + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - padding + dx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

/// Scatter-add inverse of im2col: out[C,H,W] += unfolded cols[C*k*k, L].
template <typename T>
void col2im_acc(const T* cols, int c_in, int h, int w, int k, int stride, int padding, T* out,
                int out_h, int out_w) {
    const int l_total = out_h * out_w;
    for (int c = 0; c < c_in; ++c) {
        T* img = out + static_cast<std::size_t>(c) * h * w;
        for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
                const T* row = cols + static_cast<std::size_t>((c * k + dy) * k + dx) * l_total;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - padding + dy;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = img + static_cast<std::size_t>(iy) * w;
                    const T* src = row + static_cast<std::size_t>(oy) * out_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - padding + dx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

/// Number of sliding windows covering each pixel of an [H,W] grid.
inline std::vector<int> overlap_counts(int h, int w, int k, int stride, int padding) {
    const int out_h = conv_out_size(h, k, stride, padding);
    const int out_w = conv_out_size(w, k, stride, padding);
    std::vector<int> counts(static_cast<std::size_t>(h) * w, 0);
    for (int oy = 0; oy < out_h; ++oy) {
        for (int dy = 0; dy < k; ++dy) {
            const int iy = oy * stride - padding + dy;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < out_w; ++ox) {
                for (int dx = 0; dx < k; ++dx) {
                    const int ix = ox * stride - padding + dx;
                    if (ix >= 0 && ix < w) counts[static_cast<std::size_t>(iy) * w + ix]++;
                }
            }
        }
    }
    return counts;
}

}  // namespace t2net::kern
