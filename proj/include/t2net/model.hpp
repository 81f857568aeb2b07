#pragma once

// T2Net: an SR branch and a reconstruction branch of EDSR-style Resblocks,
// coupled once per stage by a task transformer module that transfers
// artifact-free structure from the reconstruction branch into the SR branch
// via patch-wise hard attention.

#include <string>
#include <utility>
#include <vector>

#include "t2net/ops.hpp"
#include "t2net/tensor.hpp"

namespace t2net {

enum class Variant { Full, NoTt, NoRec };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
    int n_stages = 4;      // Resblock + task-transformer stages per branch
    int channels = 32;     // feature width
    int scale = 2;         // SR enlargement factor
    int patch_k = 3;       // unfold patch size for Q/K/V
    int resblock_convs = 2;
    bool zero_init_outputs = true;

    void validate() const;
};

template <typename T>
struct ConvParamT {
    TensorPtrT<T> weight;  // [Cout, Cin, k, k]
    TensorPtrT<T> bias;    // [Cout]
};

template <typename T>
struct ResblockParamT {
    ConvParamT<T> conv1, conv2;
};

template <typename T>
struct TaskTransformerParamT {
    ConvParamT<T> conv_z;    // fuses transferred features with the query, 2C -> C
    ConvParamT<T> conv_out;  // residual projection gated by soft attention, C -> C
};

template <typename T>
struct T2NetParamsT {
    ConvParamT<T> sr_shallow, rec_shallow;          // 1 -> C
    std::vector<ResblockParamT<T>> sr_blocks;       // C -> C, one per stage
    std::vector<ResblockParamT<T>> rec_blocks;      //   (empty for NoRec)
    std::vector<TaskTransformerParamT<T>> tt;       //   (empty unless Full)
    ConvParamT<T> upsampler;                        // C -> C*scale^2, feeds pixel shuffle
    ConvParamT<T> final_conv;                       // C -> 1, SR output
    ConvParamT<T> rec_out;                          // C -> 1, Rec output (absent for NoRec)

    /// Deterministic (name, tensor) enumeration; checkpoint order.
    std::vector<std::pair<std::string, TensorPtrT<T>>> named_parameters() const;
    std::size_t parameter_count() const;
    void set_requires_grad(bool on);
    void zero_grads();
};

using T2NetParams = T2NetParamsT<float>;

/// Initializes parameters for a variant. Each tensor draws from an RNG seeded
/// by (seed, its name), so shared groups get identical values across variants.
/// Convolutions use fan-in-scaled uniform init; with cfg.zero_init_outputs the
/// task-transformer conv_out layers and both 1-channel output convs start at
/// zero, making the residual paths identity at step 0.
template <typename T>
T2NetParamsT<T> make_params(const ModelConfig& cfg, Variant variant, std::uint64_t seed);

/// Attention products of one task-transformer stage.
///   transfer_index[i]: position in K most similar to position i of Q
///   soft_map[i]:       that maximal cosine similarity, in [-1, 1]
///   transferred:       V patches gathered by transfer_index and folded back
template <typename T>
struct AttentionOutputsT {
    IntTensorPtr transfer_index;  // [B, L]
    TensorPtrT<T> soft_map;       // [B, 1, h, w]
    TensorPtrT<T> transferred;    // [B, C, h, w]
};

using AttentionOutputs = AttentionOutputsT<float>;

/// Patch-wise cosine similarity between Q and K (zero-norm patches score 0).
/// Returns per-position argmax indices and max values. Computed row by row —
/// the full L x L relevance matrix is never materialized — and detached: no
/// gradient flows into Q or K from this op.
template <typename T>
std::pair<IntTensorPtr, TensorPtrT<T>> relevance_embedding(const TensorPtrT<T>& q,
                                                           const TensorPtrT<T>& k, int patch_k);

/// Gathers unfolded patches of V by transfer index and folds them back with
/// overlap normalization, so an identity index map reproduces V. Differentiable
/// with respect to V.
template <typename T>
TensorPtrT<T> transfer_features(TapeT<T>* tape, const TensorPtrT<T>& v, const IntTensorPtr& index,
                                int patch_k);

/// Frozen attention maps for replaying a forward pass with (T, S) held
/// constant; used by finite-difference checks, since the implemented gradient
/// treats both as constants by construction.
template <typename T>
struct AttnFreezeT {
    bool capture = false;  // record on first pass, replay afterwards
    struct Stage {
        IntTensorPtr index;
        TensorPtrT<T> soft;
    };
    std::vector<Stage> stages;
};

/// Runs relevance embedding and feature transfer in one step: hard/soft
/// attention from (Q, K), then V patches gathered by the hard map. When a
/// freeze slot is given, (T, S) are stored on capture and reused on replay.
template <typename T>
AttentionOutputsT<T> compute_attention(TapeT<T>* tape, const TensorPtrT<T>& q,
                                       const TensorPtrT<T>& k, const TensorPtrT<T>& v, int patch_k,
                                       typename AttnFreezeT<T>::Stage* freeze_slot = nullptr,
                                       bool replay = false);

/// One Resblock: x + conv(relu(conv(x))), 3x3, no normalization layers.
template <typename T>
TensorPtrT<T> resblock_forward(TapeT<T>* tape, const TensorPtrT<T>& x, const ResblockParamT<T>& p);

/// One task-transformer stage. Q = F_sr + F_rec, K = F_rec, V = F_rec passed
/// through bilinear up-then-down resampling; output = Q + conv_out(Z) * S
/// where Z = conv_z(concat(C, Q)).
template <typename T>
TensorPtrT<T> task_transformer_forward(TapeT<T>* tape, const TensorPtrT<T>& f_sr,
                                       const TensorPtrT<T>& f_rec,
                                       const TaskTransformerParamT<T>& p, const ModelConfig& cfg,
                                       typename AttnFreezeT<T>::Stage* freeze_slot, bool replay);

template <typename T>
struct ForwardOutT {
    TensorPtrT<T> x_sr;   // [B,1,s*h,s*w]
    TensorPtrT<T> x_rec;  // [B,1,h,w]; null for NoRec
};

/// Full forward pass for any variant. NoTt replaces each task-transformer
/// output with F_sr + F_rec; NoRec drops the reconstruction branch entirely.
template <typename T>
ForwardOutT<T> ablation_forward(Variant variant, const TensorPtrT<T>& input,
                                const T2NetParamsT<T>& params, const ModelConfig& cfg,
                                TapeT<T>* tape, AttnFreezeT<T>* freeze = nullptr);

template <typename T>
ForwardOutT<T> t2net_forward(const TensorPtrT<T>& input, const T2NetParamsT<T>& params,
                             const ModelConfig& cfg, TapeT<T>* tape,
                             AttnFreezeT<T>* freeze = nullptr);

}  // namespace t2net
