#pragma once

// Differentiable operators. Every op computes its forward result and, when
// `tape` is non-null and some input requires grad, records a backward rule.
// Passing tape = nullptr runs pure inference.

#include "t2net/tensor.hpp"

namespace t2net {

enum class ResampleMode { Nearest, Bilinear };

/// 2-D cross-correlation (no kernel flip), zero padding.
/// input [B,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout] -> [B,Cout,H',W'].
template <typename T>
TensorPtrT<T> conv2d(TapeT<T>* tape, const TensorPtrT<T>& input, const TensorPtrT<T>& weight,
                     const TensorPtrT<T>& bias, int stride, int padding);

/// [B, C*r*r, H, W] -> [B, C, r*H, r*W]; out[b,c,r*i+di,r*j+dj] = in[b,c*r*r+di*r+dj,i,j].
template <typename T>
TensorPtrT<T> pixel_shuffle(TapeT<T>* tape, const TensorPtrT<T>& input, int r);

/// Sliding k x k patches -> [B, C*k*k, L]; column l is the flattened patch at
/// window position l.
template <typename T>
TensorPtrT<T> unfold(TapeT<T>* tape, const TensorPtrT<T>& input, int k, int stride, int padding);

/// Inverse of unfold: scatter-adds patch columns back onto a [B, D/k², H, W]
/// grid. With normalize = true each pixel is divided by its overlap count, so
/// fold(unfold(x)) == x.
template <typename T>
TensorPtrT<T> fold(TapeT<T>* tape, const TensorPtrT<T>& cols, int k, int stride, int padding,
                   int out_h, int out_w, bool normalize);

/// out[b,:,i] = patches[b,:,indices[b,i]]. Gradient scatter-adds into the
/// selected columns; indices receive no gradient.
template <typename T>
TensorPtrT<T> index_select_columns(TapeT<T>* tape, const TensorPtrT<T>& patches,
                                   const IntTensorPtr& indices);

/// Nearest / bilinear resampling by a rational scale (scale*H, scale*W must be
/// integral). Bilinear follows the align-corners-false convention with edge
/// clamping: src = (dst + 0.5)/scale - 0.5.
template <typename T>
TensorPtrT<T> resample(TapeT<T>* tape, const TensorPtrT<T>& input, double scale, ResampleMode mode);

template <typename T>
TensorPtrT<T> add(TapeT<T>* tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b);

template <typename T>
TensorPtrT<T> sub(TapeT<T>* tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b);

/// Element-wise product. Shapes must match, except that one operand may be a
/// per-batch single-channel map [B,1,H,W] broadcast across the channels of
/// the other.
template <typename T>
TensorPtrT<T> mul(TapeT<T>* tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b);

template <typename T>
TensorPtrT<T> add_scalar(TapeT<T>* tape, const TensorPtrT<T>& a, T s);

template <typename T>
TensorPtrT<T> sub_scalar(TapeT<T>* tape, const TensorPtrT<T>& a, T s);

template <typename T>
TensorPtrT<T> mul_scalar(TapeT<T>* tape, const TensorPtrT<T>& a, T s);

/// max(x, 0); subgradient at exactly 0 is 0.
template <typename T>
TensorPtrT<T> relu(TapeT<T>* tape, const TensorPtrT<T>& a);

/// [B,Ca,H,W] ++ [B,Cb,H,W] -> [B,Ca+Cb,H,W].
template <typename T>
TensorPtrT<T> concat_channels(TapeT<T>* tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b);

/// Mean absolute error over all elements; returns a scalar tensor.
template <typename T>
TensorPtrT<T> l1_loss(TapeT<T>* tape, const TensorPtrT<T>& pred, const TensorPtrT<T>& target);

/// Sum of all elements; returns a scalar tensor.
template <typename T>
TensorPtrT<T> sum(TapeT<T>* tape, const TensorPtrT<T>& a);

}  // namespace t2net
