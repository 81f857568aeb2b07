#include "t2net/ops.hpp"

#include <cmath>
#include <cstdint>

#include "t2net/kernels.hpp"

namespace t2net {

namespace {

template <typename T>
bool track(TapeT<T>* tape, std::initializer_list<TensorPtrT<T>> ins) {
    if (!tape) return false;
    for (const auto& t : ins)
        if (t && t->requires_grad) return true;
    return false;
}

template <typename T>
void check_same_shape(const char* op, const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    if (a->shape != b->shape)
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
}

template <typename T>
void check_rank4(const char* op, const TensorPtrT<T>& t) {
    if (t->rank() != 4)
        throw DimensionError(std::string(op) + ": expected a 4-D tensor, got " + shape_str(t->shape));
}

}  // namespace

// ----------------------------------------------------------------------------
// conv2d
// ----------------------------------------------------------------------------

template <typename T>
TensorPtrT<T> conv2d(TapeT<T>* tape, const TensorPtrT<T>& input, const TensorPtrT<T>& weight,
                     const TensorPtrT<T>& bias, int stride, int padding) {
    check_rank4("conv2d", input);
    check_rank4("conv2d", weight);
    const int b_n = input->dim(0), c_in = input->dim(1), h = input->dim(2), w = input->dim(3);
    const int c_out = weight->dim(0), k = weight->dim(2);
    if (weight->dim(2) != weight->dim(3))
        throw DimensionError("conv2d: kernel must be square, got " + shape_str(weight->shape));
    if (k % 2 == 0) throw ParameterError("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
    if (padding < 0) throw ParameterError("conv2d: padding must be >= 0");
    if (weight->dim(1) != c_in)
        throw DimensionError("conv2d: input channels do not match weight: input " +
                             shape_str(input->shape) + ", weight " + shape_str(weight->shape));
    if (bias->rank() != 1 || bias->dim(0) != c_out)
        throw DimensionError("conv2d: bias " + shape_str(bias->shape) + " does not match " +
                             std::to_string(c_out) + " output channels");
    if (h + 2 * padding < k || w + 2 * padding < k)
        throw DimensionError("conv2d: kernel " + std::to_string(k) + " exceeds padded input " +
                             shape_str(input->shape));

    const int out_h = kern::conv_out_size(h, k, stride, padding);
    const int out_w = kern::conv_out_size(w, k, stride, padding);
    const int d = c_in * k * k;
    const int l = out_h * out_w;

    auto out = make_tensor<T>({b_n, c_out, out_h, out_w});
    std::vector<T> cols(static_cast<std::size_t>(d) * l);
    for (int b = 0; b < b_n; ++b) {
        kern::im2col(input->values.data() + static_cast<std::size_t>(b) * c_in * h * w, c_in, h, w,
                     k, stride, padding, cols.data(), out_h, out_w);
        T* orow = out->values.data() + static_cast<std::size_t>(b) * c_out * l;
        for (int co = 0; co < c_out; ++co)
            std::fill(orow + static_cast<std::size_t>(co) * l, orow + static_cast<std::size_t>(co + 1) * l,
                      bias->values[co]);
        kern::matmul_acc(weight->values.data(), cols.data(), orow, c_out, d, l);
    }

    if (track(tape, {input, weight, bias})) {
        out->requires_grad = true;
        tape->record([input, weight, bias, out, stride, padding]() {
            if (out->grad.empty()) return;
            const int b_n = input->dim(0), c_in = input->dim(1), h = input->dim(2), w = input->dim(3);
            const int c_out = weight->dim(0), k = weight->dim(2);
            const int out_h = out->dim(2), out_w = out->dim(3);
            const int d = c_in * k * k;
            const int l = out_h * out_w;

            std::vector<T> cols, cols_t, w_t, dcols;
            if (weight->requires_grad) {
                weight->ensure_grad();
                cols.resize(static_cast<std::size_t>(d) * l);
                cols_t.resize(static_cast<std::size_t>(d) * l);
            }
            if (input->requires_grad) {
                input->ensure_grad();
                w_t.resize(static_cast<std::size_t>(d) * c_out);
                kern::transpose(weight->values.data(), w_t.data(), c_out, d);
                dcols.resize(static_cast<std::size_t>(d) * l);
                if (cols.empty()) cols.resize(static_cast<std::size_t>(d) * l);
            }
            if (bias->requires_grad) bias->ensure_grad();

            for (int b = 0; b < b_n; ++b) {
                const T* gy = out->grad.data() + static_cast<std::size_t>(b) * c_out * l;
                if (bias->requires_grad) {
                    for (int co = 0; co < c_out; ++co) {
                        T s = T(0);
                        const T* row = gy + static_cast<std::size_t>(co) * l;
                        for (int i = 0; i < l; ++i) s += row[i];
                        bias->grad[co] += s;
                    }
                }
                if (weight->requires_grad || input->requires_grad)
                    kern::im2col(input->values.data() + static_cast<std::size_t>(b) * c_in * h * w,
                                 c_in, h, w, k, stride, padding, cols.data(), out_h, out_w);
                if (weight->requires_grad) {
                    kern::transpose(cols.data(), cols_t.data(), d, l);
                    kern::matmul_acc(gy, cols_t.data(), weight->grad.data(), c_out, l, d);
                }
                if (input->requires_grad) {
                    std::fill(dcols.begin(), dcols.end(), T(0));
                    kern::matmul_acc(w_t.data(), gy, dcols.data(), d, c_out, l);
                    kern::col2im_acc(dcols.data(), c_in, h, w, k, stride, padding,
                                     input->grad.data() + static_cast<std::size_t>(b) * c_in * h * w,
                                     out_h, out_w);
                }
            }
        });
    }
    return out;
}

// ----------------------------------------------------------------------------
// pixel_shuffle
// ----------------------------------------------------------------------------

template <typename T>
TensorPtrT<T> pixel_shuffle(TapeT<T>* tape, const TensorPtrT<T>& input, int r) {
    check_rank4("pixel_shuffle", input);
    if (r < 1) throw ParameterError("pixel_shuffle: scale must be >= 1");
    const int b_n = input->dim(0), c_in = input->dim(1), h = input->dim(2), w = input->dim(3);
    if (c_in % (r * r) != 0)
        throw DimensionError("pixel_shuffle: " + std::to_string(c_in) +
                             " channels not divisible by r^2 = " + std::to_string(r * r));
    const int c_out = c_in / (r * r);
    auto out = make_tensor<T>({b_n, c_out, r * h, r * w});

    auto scatter = [=](const std::vector<T>& src, std::vector<T>& dst, bool forward) {
        const int oh = r * h, ow = r * w;
        for (int b = 0; b < b_n; ++b)
            for (int c = 0; c < c_out; ++c)
                for (int di = 0; di < r; ++di)
                    for (int dj = 0; dj < r; ++dj) {
                        const int ci = c * r * r + di * r + dj;
                        for (int i = 0; i < h; ++i)
                            for (int j = 0; j < w; ++j) {
                                const std::size_t in_idx =
                                    ((static_cast<std::size_t>(b) * c_in + ci) * h + i) * w + j;
                                const std::size_t out_idx =
                                    ((static_cast<std::size_t>(b) * c_out + c) * oh + r * i + di) * ow +
                                    r * j + dj;
                                if (forward)
                                    dst[out_idx] = src[in_idx];
                                else
                                    dst[in_idx] += src[out_idx];
                            }
                    }
    };
    scatter(input->values, out->values, true);

    if (track(tape, {input})) {
        out->requires_grad = true;
        tape->record([input, out, scatter]() {
            if (out->grad.empty()) return;
            input->ensure_grad();
            scatter(out->grad, input->grad, false);
        });
    }
    return out;
}

// ----------------------------------------------------------------------------
// unfold / fold
// ----------------------------------------------------------------------------

template <typename T>
TensorPtrT<T> unfold(TapeT<T>* tape, const TensorPtrT<T>& input, int k, int stride, int padding) {
    check_rank4("unfold", input);
    if (k % 2 == 0) throw ParameterError("unfold: patch size must be odd, got " + std::to_string(k));
    if (stride < 1) throw ParameterError("unfold: stride must be >= 1");
    if (padding < 0) throw ParameterError("unfold: padding must be >= 0");
    const int b_n = input->dim(0), c = input->dim(1), h = input->dim(2), w = input->dim(3);
    const int out_h = kern::conv_out_size(h, k, stride, padding);
    const int out_w = kern::conv_out_size(w, k, stride, padding);
    if (out_h < 1 || out_w < 1)
        throw DimensionError("unfold: no window positions for input " + shape_str(input->shape));
    const int d = c * k * k;
    const int l = out_h * out_w;

    auto out = make_tensor<T>({b_n, d, l});
    for (int b = 0; b < b_n; ++b)
        kern::im2col(input->values.data() + static_cast<std::size_t>(b) * c * h * w, c, h, w, k,
                     stride, padding, out->values.data() + static_cast<std::size_t>(b) * d * l,
                     out_h, out_w);

    if (track(tape, {input})) {
        out->requires_grad = true;
        tape->record([input, out, k, stride, padding, out_h, out_w]() {
            if (out->grad.empty()) return;
            input->ensure_grad();
            const int b_n = input->dim(0), c = input->dim(1), h = input->dim(2), w = input->dim(3);
            const int d = c * k * k, l = out_h * out_w;
            for (int b = 0; b < b_n; ++b)
                kern::col2im_acc(out->grad.data() + static_cast<std::size_t>(b) * d * l, c, h, w, k,
                                 stride, padding,
                                 input->grad.data() + static_cast<std::size_t>(b) * c * h * w, out_h,
                                 out_w);
        });
    }
    return out;
}

template <typename T>
TensorPtrT<T> fold(TapeT<T>* tape, const TensorPtrT<T>& cols, int k, int stride, int padding,
                   int out_h, int out_w, bool normalize) {
    if (cols->rank() != 3)
        throw DimensionError("fold: expected [B, C*k*k, L], got " + shape_str(cols->shape));
    const int b_n = cols->dim(0), d = cols->dim(1), l = cols->dim(2);
    if (d % (k * k) != 0)
        throw DimensionError("fold: " + std::to_string(d) + " rows not divisible by k^2 = " +
                             std::to_string(k * k));
    const int c = d / (k * k);
    const int win_h = kern::conv_out_size(out_h, k, stride, padding);
    const int win_w = kern::conv_out_size(out_w, k, stride, padding);
    if (win_h * win_w != l)
        throw DimensionError("fold: " + std::to_string(l) + " columns do not match " +
                             std::to_string(win_h * win_w) + " window positions of a " +
                             std::to_string(out_h) + "x" + std::to_string(out_w) + " grid");

    auto counts = kern::overlap_counts(out_h, out_w, k, stride, padding);
    auto out = make_tensor<T>({b_n, c, out_h, out_w});

    // Scatter in double so that the normalized fold of an unfold reproduces
    // the source to within one rounding step.
    std::vector<double> accum(static_cast<std::size_t>(c) * out_h * out_w);
    for (int b = 0; b < b_n; ++b) {
        std::fill(accum.begin(), accum.end(), 0.0);
        const T* src = cols->values.data() + static_cast<std::size_t>(b) * d * l;
        for (int ci = 0; ci < c; ++ci) {
            double* img = accum.data() + static_cast<std::size_t>(ci) * out_h * out_w;
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    const T* row = src + static_cast<std::size_t>((ci * k + dy) * k + dx) * l;
                    for (int oy = 0; oy < win_h; ++oy) {
                        const int iy = oy * stride - padding + dy;
                        if (iy < 0 || iy >= out_h) continue;
                        for (int ox = 0; ox < win_w; ++ox) {
                            const int ix = ox * stride - padding + dx;
                            if (ix >= 0 && ix < out_w)
                                img[static_cast<std::size_t>(iy) * out_w + ix] +=
                                    static_cast<double>(row[static_cast<std::size_t>(oy) * win_w + ox]);
                        }
                    }
                }
        }
        T* dst = out->values.data() + static_cast<std::size_t>(b) * c * out_h * out_w;
        const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
        for (int ci = 0; ci < c; ++ci)
            for (std::size_t p = 0; p < plane; ++p) {
                double v = accum[ci * plane + p];
                if (normalize) v = counts[p] > 0 ? v / counts[p] : 0.0;
                dst[ci * plane + p] = static_cast<T>(v);
            }
    }

    if (track(tape, {cols})) {
        out->requires_grad = true;
        tape->record([cols, out, k, stride, padding, normalize, counts]() {
            if (out->grad.empty()) return;
            cols->ensure_grad();
            const int b_n = cols->dim(0), d = cols->dim(1), l = cols->dim(2);
            const int c = d / (k * k);
            const int out_h = out->dim(2), out_w = out->dim(3);
            const int win_h = kern::conv_out_size(out_h, k, stride, padding);
            const int win_w = kern::conv_out_size(out_w, k, stride, padding);
            const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;

            // Gradient of a (normalized) scatter is a gather of g/count:
            // exactly an unfold of the scaled output gradient.
            std::vector<T> scaled(static_cast<std::size_t>(c) * plane);
            std::vector<T> gcols(static_cast<std::size_t>(d) * l);
            for (int b = 0; b < b_n; ++b) {
                const T* g = out->grad.data() + static_cast<std::size_t>(b) * c * plane;
                for (int ci = 0; ci < c; ++ci)
                    for (std::size_t p = 0; p < plane; ++p)
                        scaled[ci * plane + p] =
                            normalize ? (counts[p] > 0 ? g[ci * plane + p] / static_cast<T>(counts[p])
                                                       : T(0))
                                      : g[ci * plane + p];
                kern::im2col(scaled.data(), c, out_h, out_w, k, stride, padding, gcols.data(), win_h,
                             win_w);
                T* dst = cols->grad.data() + static_cast<std::size_t>(b) * d * l;
                for (std::size_t i = 0; i < gcols.size(); ++i) dst[i] += gcols[i];
            }
        });
    }
    return out;
}

// ----------------------------------------------------------------------------
// index_select_columns
// ----------------------------------------------------------------------------

template <typename T>
TensorPtrT<T> index_select_columns(TapeT<T>* tape, const TensorPtrT<T>& patches,
                                   const IntTensorPtr& indices) {
    if (patches->rank() != 3)
        throw DimensionError("index_select_columns: expected [B, D, L], got " +
                             shape_str(patches->shape));
    if (indices->shape.size() != 2 || indices->shape[0] != patches->dim(0))
        throw DimensionError("index_select_columns: indices " + shape_str(indices->shape) +
                             " do not match patches " + shape_str(patches->shape));
    const int b_n = patches->dim(0), d = patches->dim(1), l = patches->dim(2);
    const int l_out = indices->shape[1];
    for (int b = 0; b < b_n; ++b)
        for (int i = 0; i < l_out; ++i) {
            const std::int32_t v = indices->values[static_cast<std::size_t>(b) * l_out + i];
            if (v < 0 || v >= l)
                throw BoundsError("index_select_columns: index " + std::to_string(v) +
                                  " out of range [0," + std::to_string(l) + ") at batch " +
                                  std::to_string(b) + ", position " + std::to_string(i));
        }

    auto out = make_tensor<T>({b_n, d, l_out});
    for (int b = 0; b < b_n; ++b) {
        const T* src = patches->values.data() + static_cast<std::size_t>(b) * d * l;
        const std::int32_t* idx = indices->values.data() + static_cast<std::size_t>(b) * l_out;
        T* dst = out->values.data() + static_cast<std::size_t>(b) * d * l_out;
        for (int r = 0; r < d; ++r)
            for (int i = 0; i < l_out; ++i)
                dst[static_cast<std::size_t>(r) * l_out + i] = src[static_cast<std::size_t>(r) * l + idx[i]];
    }

    if (track(tape, {patches})) {
        out->requires_grad = true;
        tape->record([patches, indices, out]() {
            if (out->grad.empty()) return;
            patches->ensure_grad();
            const int b_n = patches->dim(0), d = patches->dim(1), l = patches->dim(2);
            const int l_out = indices->shape[1];
            for (int b = 0; b < b_n; ++b) {
                T* dst = patches->grad.data() + static_cast<std::size_t>(b) * d * l;
                const std::int32_t* idx = indices->values.data() + static_cast<std::size_t>(b) * l_out;
                const T* g = out->grad.data() + static_cast<std::size_t>(b) * d * l_out;
                for (int r = 0; r < d; ++r)
                    for (int i = 0; i < l_out; ++i)
                        dst[static_cast<std::size_t>(r) * l + idx[i]] +=
                            g[static_cast<std::size_t>(r) * l_out + i];
            }
        });
    }
    return out;
}

// ----------------------------------------------------------------------------
// resample
// ----------------------------------------------------------------------------

namespace {

int scaled_size(int in, double scale, const char* axis) {
    const double target = scale * in;
    const int out = static_cast<int>(std::lround(target));
    if (out < 1 || std::fabs(target - out) > 1e-9)
        throw DimensionError(std::string("resample: non-integral target ") + axis + " size " +
                             std::to_string(target));
    return out;
}

}  // namespace

template <typename T>
TensorPtrT<T> resample(TapeT<T>* tape, const TensorPtrT<T>& input, double scale, ResampleMode mode) {
    check_rank4("resample", input);
    if (!(scale > 0.0)) throw ParameterError("resample: scale must be positive");
    const int b_n = input->dim(0), c = input->dim(1), h = input->dim(2), w = input->dim(3);
    const int oh = scaled_size(h, scale, "height");
    const int ow = scaled_size(w, scale, "width");
    auto out = make_tensor<T>({b_n, c, oh, ow});

    if (mode == ResampleMode::Nearest) {
        std::vector<int> sy(oh), sx(ow);
        for (int i = 0; i < oh; ++i) sy[i] = static_cast<int>((static_cast<std::int64_t>(i) * h) / oh);
        for (int j = 0; j < ow; ++j) sx[j] = static_cast<int>((static_cast<std::int64_t>(j) * w) / ow);
        for (int b = 0; b < b_n; ++b)
            for (int ci = 0; ci < c; ++ci) {
                const T* src = input->values.data() + (static_cast<std::size_t>(b) * c + ci) * h * w;
                T* dst = out->values.data() + (static_cast<std::size_t>(b) * c + ci) * oh * ow;
                for (int i = 0; i < oh; ++i)
                    for (int j = 0; j < ow; ++j)
                        dst[static_cast<std::size_t>(i) * ow + j] = src[static_cast<std::size_t>(sy[i]) * w + sx[j]];
            }
        if (track(tape, {input})) {
            out->requires_grad = true;
            tape->record([input, out, sy, sx]() {
                if (out->grad.empty()) return;
                input->ensure_grad();
                const int b_n = input->dim(0), c = input->dim(1), h = input->dim(2), w = input->dim(3);
                const int oh = out->dim(2), ow = out->dim(3);
                for (int b = 0; b < b_n; ++b)
                    for (int ci = 0; ci < c; ++ci) {
                        T* gin = input->grad.data() + (static_cast<std::size_t>(b) * c + ci) * h * w;
                        const T* g = out->grad.data() + (static_cast<std::size_t>(b) * c + ci) * oh * ow;
                        for (int i = 0; i < oh; ++i)
                            for (int j = 0; j < ow; ++j)
                                gin[static_cast<std::size_t>(sy[i]) * w + sx[j]] +=
                                    g[static_cast<std::size_t>(i) * ow + j];
                    }
            });
        }
        return out;
    }

    // Bilinear: per-axis source pairs and fractional weights, edge-clamped.
    std::vector<int> y0(oh), y1(oh), x0(ow), x1(ow);
    std::vector<T> wy(oh), wx(ow);
    auto axis_setup = [](int n_in, int n_out, std::vector<int>& i0, std::vector<int>& i1,
                         std::vector<T>& frac) {
        for (int i = 0; i < n_out; ++i) {
            const double src = (i + 0.5) * (static_cast<double>(n_in) / n_out) - 0.5;
            const double f = std::floor(src);
            int lo = static_cast<int>(f);
            T t = static_cast<T>(src - f);
            int hi = lo + 1;
            if (lo < 0) lo = 0;
            if (lo > n_in - 1) lo = n_in - 1;
            if (hi < 0) hi = 0;
            if (hi > n_in - 1) hi = n_in - 1;
            i0[i] = lo;
            i1[i] = hi;
            frac[i] = t;
        }
    };
    axis_setup(h, oh, y0, y1, wy);
    axis_setup(w, ow, x0, x1, wx);

    for (int b = 0; b < b_n; ++b)
        for (int ci = 0; ci < c; ++ci) {
            const T* src = input->values.data() + (static_cast<std::size_t>(b) * c + ci) * h * w;
            T* dst = out->values.data() + (static_cast<std::size_t>(b) * c + ci) * oh * ow;
            for (int i = 0; i < oh; ++i) {
                const T* r0 = src + static_cast<std::size_t>(y0[i]) * w;
                const T* r1 = src + static_cast<std::size_t>(y1[i]) * w;
                for (int j = 0; j < ow; ++j) {
                    // lerp form keeps constants exactly constant
                    const T a = r0[x0[j]], bv = r0[x1[j]], cv = r1[x0[j]], dv = r1[x1[j]];
                    const T top = a + wx[j] * (bv - a);
                    const T bot = cv + wx[j] * (dv - cv);
                    dst[static_cast<std::size_t>(i) * ow + j] = top + wy[i] * (bot - top);
                }
            }
        }

    if (track(tape, {input})) {
        out->requires_grad = true;
        tape->record([input, out, y0, y1, x0, x1, wy, wx]() {
            if (out->grad.empty()) return;
            input->ensure_grad();
            const int b_n = input->dim(0), c = input->dim(1), h = input->dim(2), w = input->dim(3);
            const int oh = out->dim(2), ow = out->dim(3);
            for (int b = 0; b < b_n; ++b)
                for (int ci = 0; ci < c; ++ci) {
                    T* gin = input->grad.data() + (static_cast<std::size_t>(b) * c + ci) * h * w;
                    const T* g = out->grad.data() + (static_cast<std::size_t>(b) * c + ci) * oh * ow;
                    for (int i = 0; i < oh; ++i)
                        for (int j = 0; j < ow; ++j) {
                            const T gv = g[static_cast<std::size_t>(i) * ow + j];
                            if (gv == T(0)) continue;
                            const T fy = wy[i], fx = wx[j];
                            gin[static_cast<std::size_t>(y0[i]) * w + x0[j]] += gv * (T(1) - fy) * (T(1) - fx);
                            gin[static_cast<std::size_t>(y0[i]) * w + x1[j]] += gv * (T(1) - fy) * fx;
                            gin[static_cast<std::size_t>(y1[i]) * w + x0[j]] += gv * fy * (T(1) - fx);
                            gin[static_cast<std::size_t>(y1[i]) * w + x1[j]] += gv * fy * fx;
                        }
                }
        });
    }
    return out;
}

// ----------------------------------------------------------------------------
// element-wise ops
// ----------------------------------------------------------------------------

template <typename T>
TensorPtrT<T> add(TapeT<T>* tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    check_same_shape("add", a, b);
    auto out = make_tensor<T>(a->shape);
    const std::size_t n = a->numel();
    for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] + b->values[i];
    if (track(tape, {a, b})) {
        out->requires_grad = true;
        tape->record([a, b, out]() {
            if (out->grad.empty()) return;
            const std::size_t n = out->numel();
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) b->grad[i] += out->grad[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorPtrT<T> sub(TapeT<T>* tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    check_same_shape("sub", a, b);
    auto out = make_tensor<T>(a->shape);
    const std::size_t n = a->numel();
    for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] - b->values[i];
    if (track(tape, {a, b})) {
        out->requires_grad = true;
        tape->record([a, b, out]() {
            if (out->grad.empty()) return;
            const std::size_t n = out->numel();
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) b->grad[i] -= out->grad[i];
            }
        });
    }
    return out;
}

namespace {

template <typename T>
bool is_channel_map_of(const TensorPtrT<T>& map, const TensorPtrT<T>& full) {
    return map->rank() == 4 && full->rank() == 4 && map->dim(1) == 1 && full->dim(1) >= 1 &&
           map->dim(0) == full->dim(0) && map->dim(2) == full->dim(2) && map->dim(3) == full->dim(3);
}

}  // namespace

template <typename T>
TensorPtrT<T> mul(TapeT<T>* tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    if (a->shape == b->shape) {
        auto out = make_tensor<T>(a->shape);
        const std::size_t n = a->numel();
        for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] * b->values[i];
        if (track(tape, {a, b})) {
            out->requires_grad = true;
            tape->record([a, b, out]() {
                if (out->grad.empty()) return;
                const std::size_t n = out->numel();
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * b->values[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) b->grad[i] += out->grad[i] * a->values[i];
                }
            });
        }
        return out;
    }

    // Single-channel map broadcast across channels.
    const bool a_is_map = is_channel_map_of(a, b);
    const bool b_is_map = is_channel_map_of(b, a);
    if (!a_is_map && !b_is_map)
        throw DimensionError("mul: incompatible shapes " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    const TensorPtrT<T>& full = a_is_map ? b : a;
    const TensorPtrT<T>& map = a_is_map ? a : b;

    const int b_n = full->dim(0), c = full->dim(1), h = full->dim(2), w = full->dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    auto out = make_tensor<T>(full->shape);
    for (int bi = 0; bi < b_n; ++bi) {
        const T* m = map->values.data() + bi * plane;
        for (int ci = 0; ci < c; ++ci) {
            const T* f = full->values.data() + (static_cast<std::size_t>(bi) * c + ci) * plane;
            T* o = out->values.data() + (static_cast<std::size_t>(bi) * c + ci) * plane;
            for (std::size_t p = 0; p < plane; ++p) o[p] = f[p] * m[p];
        }
    }
    if (track(tape, {a, b})) {
        out->requires_grad = true;
        tape->record([full, map, out]() {
            if (out->grad.empty()) return;
            const int b_n = full->dim(0), c = full->dim(1), h = full->dim(2), w = full->dim(3);
            const std::size_t plane = static_cast<std::size_t>(h) * w;
            if (full->requires_grad) {
                full->ensure_grad();
                for (int bi = 0; bi < b_n; ++bi) {
                    const T* m = map->values.data() + bi * plane;
                    for (int ci = 0; ci < c; ++ci) {
                        T* gf = full->grad.data() + (static_cast<std::size_t>(bi) * c + ci) * plane;
                        const T* g = out->grad.data() + (static_cast<std::size_t>(bi) * c + ci) * plane;
                        for (std::size_t p = 0; p < plane; ++p) gf[p] += g[p] * m[p];
                    }
                }
            }
            if (map->requires_grad) {
                map->ensure_grad();
                for (int bi = 0; bi < b_n; ++bi) {
                    T* gm = map->grad.data() + bi * plane;
                    for (int ci = 0; ci < c; ++ci) {
                        const T* f = full->values.data() + (static_cast<std::size_t>(bi) * c + ci) * plane;
                        const T* g = out->grad.data() + (static_cast<std::size_t>(bi) * c + ci) * plane;
                        for (std::size_t p = 0; p < plane; ++p) gm[p] += g[p] * f[p];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
TensorPtrT<T> add_scalar(TapeT<T>* tape, const TensorPtrT<T>& a, T s) {
    auto out = make_tensor<T>(a->shape);
    const std::size_t n = a->numel();
    for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] + s;
    if (track(tape, {a})) {
        out->requires_grad = true;
        tape->record([a, out]() {
            if (out->grad.empty()) return;
            a->ensure_grad();
            const std::size_t n = out->numel();
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
        });
    }
    return out;
}

template <typename T>
TensorPtrT<T> sub_scalar(TapeT<T>* tape, const TensorPtrT<T>& a, T s) {
    return add_scalar(tape, a, static_cast<T>(-s));
}

template <typename T>
TensorPtrT<T> mul_scalar(TapeT<T>* tape, const TensorPtrT<T>& a, T s) {
    auto out = make_tensor<T>(a->shape);
    const std::size_t n = a->numel();
    for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] * s;
    if (track(tape, {a})) {
        out->requires_grad = true;
        tape->record([a, out, s]() {
            if (out->grad.empty()) return;
            a->ensure_grad();
            const std::size_t n = out->numel();
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * s;
        });
    }
    return out;
}

template <typename T>
TensorPtrT<T> relu(TapeT<T>* tape, const TensorPtrT<T>& a) {
    auto out = make_tensor<T>(a->shape);
    const std::size_t n = a->numel();
    for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] > T(0) ? a->values[i] : T(0);
    if (track(tape, {a})) {
        out->requires_grad = true;
        tape->record([a, out]() {
            if (out->grad.empty()) return;
            a->ensure_grad();
            const std::size_t n = out->numel();
            for (std::size_t i = 0; i < n; ++i)
                if (a->values[i] > T(0)) a->grad[i] += out->grad[i];
        });
    }
    return out;
}

template <typename T>
TensorPtrT<T> concat_channels(TapeT<T>* tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    check_rank4("concat_channels", a);
    check_rank4("concat_channels", b);
    if (a->dim(0) != b->dim(0) || a->dim(2) != b->dim(2) || a->dim(3) != b->dim(3))
        throw DimensionError("concat_channels: non-channel dims differ, " + shape_str(a->shape) +
                             " vs " + shape_str(b->shape));
    const int b_n = a->dim(0), ca = a->dim(1), cb = b->dim(1), h = a->dim(2), w = a->dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    auto out = make_tensor<T>({b_n, ca + cb, h, w});
    for (int bi = 0; bi < b_n; ++bi) {
        std::copy_n(a->values.data() + static_cast<std::size_t>(bi) * ca * plane, ca * plane,
                    out->values.data() + static_cast<std::size_t>(bi) * (ca + cb) * plane);
        std::copy_n(b->values.data() + static_cast<std::size_t>(bi) * cb * plane, cb * plane,
                    out->values.data() + (static_cast<std::size_t>(bi) * (ca + cb) + ca) * plane);
    }
    if (track(tape, {a, b})) {
        out->requires_grad = true;
        tape->record([a, b, out]() {
            if (out->grad.empty()) return;
            const int b_n = a->dim(0), ca = a->dim(1), cb = b->dim(1), h = a->dim(2), w = a->dim(3);
            const std::size_t plane = static_cast<std::size_t>(h) * w;
            for (int bi = 0; bi < b_n; ++bi) {
                if (a->requires_grad) {
                    a->ensure_grad();
                    const T* g = out->grad.data() + static_cast<std::size_t>(bi) * (ca + cb) * plane;
                    T* ga = a->grad.data() + static_cast<std::size_t>(bi) * ca * plane;
                    for (std::size_t i = 0; i < ca * plane; ++i) ga[i] += g[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    const T* g =
                        out->grad.data() + (static_cast<std::size_t>(bi) * (ca + cb) + ca) * plane;
                    T* gb = b->grad.data() + static_cast<std::size_t>(bi) * cb * plane;
                    for (std::size_t i = 0; i < cb * plane; ++i) gb[i] += g[i];
                }
            }
        });
    }
    return out;
}

template <typename T>
TensorPtrT<T> l1_loss(TapeT<T>* tape, const TensorPtrT<T>& pred, const TensorPtrT<T>& target) {
    check_same_shape("l1_loss", pred, target);
    const std::size_t n = pred->numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += std::fabs(static_cast<double>(pred->values[i]) - static_cast<double>(target->values[i]));
    auto out = make_tensor<T>({1}, std::vector<T>{static_cast<T>(acc / static_cast<double>(n))});
    if (track(tape, {pred, target})) {
        out->requires_grad = true;
        tape->record([pred, target, out]() {
            if (out->grad.empty()) return;
            const std::size_t n = pred->numel();
            const T g = out->grad[0] / static_cast<T>(n);
            auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
            if (pred->requires_grad) {
                pred->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    pred->grad[i] += g * sign(pred->values[i] - target->values[i]);
            }
            if (target->requires_grad) {
                target->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    target->grad[i] -= g * sign(pred->values[i] - target->values[i]);
            }
        });
    }
    return out;
}

template <typename T>
TensorPtrT<T> sum(TapeT<T>* tape, const TensorPtrT<T>& a) {
    double acc = 0.0;
    for (const T v : a->values) acc += static_cast<double>(v);
    auto out = make_tensor<T>({1}, std::vector<T>{static_cast<T>(acc)});
    if (track(tape, {a})) {
        out->requires_grad = true;
        tape->record([a, out]() {
            if (out->grad.empty()) return;
            a->ensure_grad();
            const T g = out->grad[0];
            for (std::size_t i = 0; i < a->numel(); ++i) a->grad[i] += g;
        });
    }
    return out;
}

// ----------------------------------------------------------------------------
// Adam
// ----------------------------------------------------------------------------

template <typename T>
void adam_step(TensorT<T>& param, AdamStateT<T>& state, double lr, double beta1, double beta2,
               double eps) {
    if (param.grad.size() != param.values.size())
        throw ContractError("adam_step: parameter has no gradient (shape " + shape_str(param.shape) +
                            ")");
    const std::size_t n = param.values.size();
    if (state.m.empty()) {
        state.m.assign(n, T(0));
        state.v.assign(n, T(0));
    }
    if (state.m.size() != n || state.v.size() != n)
        throw ContractError("adam_step: moment arrays do not match parameter size");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(param.grad[i]);
        const double m = beta1 * static_cast<double>(state.m[i]) + (1.0 - beta1) * g;
        const double v = beta2 * static_cast<double>(state.v[i]) + (1.0 - beta2) * g * g;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(v);
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        param.values[i] = static_cast<T>(static_cast<double>(param.values[i]) -
                                         lr * m_hat / (std::sqrt(v_hat) + eps));
    }
}

// ----------------------------------------------------------------------------
// explicit instantiations (float = training precision, double = grad checks)
// ----------------------------------------------------------------------------

#define T2NET_INSTANTIATE_OPS(T)                                                                     \
    template TensorPtrT<T> conv2d<T>(TapeT<T>*, const TensorPtrT<T>&, const TensorPtrT<T>&,         \
                                     const TensorPtrT<T>&, int, int);                                \
    template TensorPtrT<T> pixel_shuffle<T>(TapeT<T>*, const TensorPtrT<T>&, int);                  \
    template TensorPtrT<T> unfold<T>(TapeT<T>*, const TensorPtrT<T>&, int, int, int);               \
    template TensorPtrT<T> fold<T>(TapeT<T>*, const TensorPtrT<T>&, int, int, int, int, int, bool); \
    template TensorPtrT<T> index_select_columns<T>(TapeT<T>*, const TensorPtrT<T>&,                 \
                                                   const IntTensorPtr&);                            \
    template TensorPtrT<T> resample<T>(TapeT<T>*, const TensorPtrT<T>&, double, ResampleMode);      \
    template TensorPtrT<T> add<T>(TapeT<T>*, const TensorPtrT<T>&, const TensorPtrT<T>&);           \
    template TensorPtrT<T> sub<T>(TapeT<T>*, const TensorPtrT<T>&, const TensorPtrT<T>&);           \
    template TensorPtrT<T> mul<T>(TapeT<T>*, const TensorPtrT<T>&, const TensorPtrT<T>&);           \
    template TensorPtrT<T> add_scalar<T>(TapeT<T>*, const TensorPtrT<T>&, T);                       \
    template TensorPtrT<T> sub_scalar<T>(TapeT<T>*, const TensorPtrT<T>&, T);                       \
    template TensorPtrT<T> mul_scalar<T>(TapeT<T>*, const TensorPtrT<T>&, T);                       \
    template TensorPtrT<T> relu<T>(TapeT<T>*, const TensorPtrT<T>&);                                \
    template TensorPtrT<T> concat_channels<T>(TapeT<T>*, const TensorPtrT<T>&,                      \
                                              const TensorPtrT<T>&);                                \
    template TensorPtrT<T> l1_loss<T>(TapeT<T>*, const TensorPtrT<T>&, const TensorPtrT<T>&);       \
    template TensorPtrT<T> sum<T>(TapeT<T>*, const TensorPtrT<T>&);                                 \
    template void adam_step<T>(TensorT<T>&, AdamStateT<T>&, double, double, double, double);

T2NET_INSTANTIATE_OPS(float)
T2NET_INSTANTIATE_OPS(double)

#undef T2NET_INSTANTIATE_OPS

}  // namespace t2net
