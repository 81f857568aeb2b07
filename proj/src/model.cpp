#include "t2net/model.hpp"

#include <algorithm>
#include <cmath>

#include "t2net/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace t2net {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoTt: return "no_tt";
        case Variant::NoRec: return "no_rec";
    }
    return "full";
}

Variant variant_from_name(const std::string& name) {
    if (name == "full") return Variant::Full;
    if (name == "no_tt") return Variant::NoTt;
    if (name == "no_rec") return Variant::NoRec;
    throw ParameterError("unknown variant '" + name + "' (full, no_tt, no_rec)");
}

void ModelConfig::validate() const {
    if (n_stages < 1) throw ParameterError("model: n_stages must be >= 1");
    if (channels < 1) throw ParameterError("model: channels must be >= 1");
    if (scale != 1 && scale != 2 && scale != 4)
        throw ParameterError("model: scale must be 1, 2 or 4, got " + std::to_string(scale));
    if (patch_k < 1 || patch_k % 2 == 0)
        throw ParameterError("model: patch_k must be odd, got " + std::to_string(patch_k));
    if (resblock_convs != 2) throw ParameterError("model: resblock_convs is fixed at 2");
}

// ----------------------------------------------------------------------------
// parameters
// ----------------------------------------------------------------------------

namespace {

template <typename T>
ConvParamT<T> init_conv(int c_out, int c_in, int k, const std::string& name, std::uint64_t seed,
                        bool zero) {
    ConvParamT<T> p;
    p.weight = make_tensor<T>({c_out, c_in, k, k}, true);
    p.bias = make_tensor<T>({c_out}, true);
    if (!zero) {
        Rng rng(mix_seed(seed, fnv1a(name)));
        const double bound = 1.0 / std::sqrt(static_cast<double>(c_in) * k * k);
        for (auto& v : p.weight->values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    return p;
}

}  // namespace

template <typename T>
T2NetParamsT<T> make_params(const ModelConfig& cfg, Variant variant, std::uint64_t seed) {
    cfg.validate();
    const int c = cfg.channels;
    const bool has_rec = variant != Variant::NoRec;
    const bool has_tt = variant == Variant::Full;

    T2NetParamsT<T> p;
    p.sr_shallow = init_conv<T>(c, 1, 3, "sr_shallow", seed, false);
    if (has_rec) p.rec_shallow = init_conv<T>(c, 1, 3, "rec_shallow", seed, false);
    for (int i = 1; i <= cfg.n_stages; ++i) {
        ResblockParamT<T> sr;
        sr.conv1 = init_conv<T>(c, c, 3, "sr_block" + std::to_string(i) + ".conv1", seed, false);
        sr.conv2 = init_conv<T>(c, c, 3, "sr_block" + std::to_string(i) + ".conv2", seed, false);
        p.sr_blocks.push_back(std::move(sr));
        if (has_rec) {
            ResblockParamT<T> rec;
            rec.conv1 = init_conv<T>(c, c, 3, "rec_block" + std::to_string(i) + ".conv1", seed, false);
            rec.conv2 = init_conv<T>(c, c, 3, "rec_block" + std::to_string(i) + ".conv2", seed, false);
            p.rec_blocks.push_back(std::move(rec));
        }
        if (has_tt) {
            TaskTransformerParamT<T> tt;
            tt.conv_z = init_conv<T>(c, 2 * c, 3, "tt" + std::to_string(i) + ".conv_z", seed, false);
            tt.conv_out = init_conv<T>(c, c, 3, "tt" + std::to_string(i) + ".conv_out", seed,
                                       cfg.zero_init_outputs);
            p.tt.push_back(std::move(tt));
        }
    }
    p.upsampler = init_conv<T>(c * cfg.scale * cfg.scale, c, 3, "upsampler", seed, false);
    p.final_conv = init_conv<T>(1, c, 3, "final_conv", seed, cfg.zero_init_outputs);
    if (has_rec) p.rec_out = init_conv<T>(1, c, 3, "rec_out", seed, cfg.zero_init_outputs);
    return p;
}

template <typename T>
std::vector<std::pair<std::string, TensorPtrT<T>>> T2NetParamsT<T>::named_parameters() const {
    std::vector<std::pair<std::string, TensorPtrT<T>>> out;
    auto push = [&out](const std::string& name, const ConvParamT<T>& c) {
        if (!c.weight) return;
        out.emplace_back(name + ".weight", c.weight);
        out.emplace_back(name + ".bias", c.bias);
    };
    push("sr_shallow", sr_shallow);
    push("rec_shallow", rec_shallow);
    for (std::size_t i = 0; i < sr_blocks.size(); ++i) {
        push("sr_block" + std::to_string(i + 1) + ".conv1", sr_blocks[i].conv1);
        push("sr_block" + std::to_string(i + 1) + ".conv2", sr_blocks[i].conv2);
    }
    for (std::size_t i = 0; i < rec_blocks.size(); ++i) {
        push("rec_block" + std::to_string(i + 1) + ".conv1", rec_blocks[i].conv1);
        push("rec_block" + std::to_string(i + 1) + ".conv2", rec_blocks[i].conv2);
    }
    for (std::size_t i = 0; i < tt.size(); ++i) {
        push("tt" + std::to_string(i + 1) + ".conv_z", tt[i].conv_z);
        push("tt" + std::to_string(i + 1) + ".conv_out", tt[i].conv_out);
    }
    push("upsampler", upsampler);
    push("final_conv", final_conv);
    push("rec_out", rec_out);
    return out;
}

template <typename T>
std::size_t T2NetParamsT<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named_parameters()) n += t->numel();
    return n;
}

template <typename T>
void T2NetParamsT<T>::set_requires_grad(bool on) {
    for (auto& [name, t] : named_parameters()) t->requires_grad = on;
}

template <typename T>
void T2NetParamsT<T>::zero_grads() {
    for (auto& [name, t] : named_parameters()) t->zero_grad();
}

// ----------------------------------------------------------------------------
// relevance embedding
// ----------------------------------------------------------------------------

template <typename T>
std::pair<IntTensorPtr, TensorPtrT<T>> relevance_embedding(const TensorPtrT<T>& q,
                                                           const TensorPtrT<T>& k, int patch_k) {
    if (q->shape != k->shape)
        throw DimensionError("relevance_embedding: Q " + shape_str(q->shape) + " vs K " +
                             shape_str(k->shape));
    if (q->rank() != 4)
        throw DimensionError("relevance_embedding: expected [B,C,H,W], got " + shape_str(q->shape));
    const int b_n = q->dim(0), c = q->dim(1), h = q->dim(2), w = q->dim(3);
    const int pad = (patch_k - 1) / 2;
    const int d = c * patch_k * patch_k;
    const int l = h * w;

    auto index = std::make_shared<IntTensor>(std::vector<int>{b_n, l});
    auto soft = make_tensor<T>({b_n, 1, h, w});

    std::vector<T> q_cols(static_cast<std::size_t>(d) * l), k_cols(static_cast<std::size_t>(d) * l);
    std::vector<T> q_rows(static_cast<std::size_t>(l) * d);  // queries as unit rows

    for (int b = 0; b < b_n; ++b) {
        const T* q_src = q->values.data() + static_cast<std::size_t>(b) * c * h * w;
        const T* k_src = k->values.data() + static_cast<std::size_t>(b) * c * h * w;
        kern::im2col(q_src, c, h, w, patch_k, 1, pad, q_cols.data(), h, w);
        kern::im2col(k_src, c, h, w, patch_k, 1, pad, k_cols.data(), h, w);

        // Normalize K columns in place (kept [D, L] so the similarity scan is
        // contiguous over j), and Q as unit rows [L, D].
        for (int j = 0; j < l; ++j) {
            double nrm = 0.0;
            for (int r = 0; r < d; ++r) {
                const double v = static_cast<double>(k_cols[static_cast<std::size_t>(r) * l + j]);
                nrm += v * v;
            }
            const double inv = nrm > 0.0 ? 1.0 / std::sqrt(nrm) : 0.0;
            for (int r = 0; r < d; ++r)
                k_cols[static_cast<std::size_t>(r) * l + j] =
                    static_cast<T>(k_cols[static_cast<std::size_t>(r) * l + j] * inv);
        }
        for (int i = 0; i < l; ++i) {
            double nrm = 0.0;
            for (int r = 0; r < d; ++r) {
                const double v = static_cast<double>(q_cols[static_cast<std::size_t>(r) * l + i]);
                nrm += v * v;
            }
            const double inv = nrm > 0.0 ? 1.0 / std::sqrt(nrm) : 0.0;
            for (int r = 0; r < d; ++r)
                q_rows[static_cast<std::size_t>(i) * d + r] =
                    static_cast<T>(q_cols[static_cast<std::size_t>(r) * l + i] * inv);
        }

        std::int32_t* t_out = index->values.data() + static_cast<std::size_t>(b) * l;
        T* s_out = soft->values.data() + static_cast<std::size_t>(b) * l;

        // One relevance row at a time: acc[j] = <q_i, k_j> for all j, then an
        // argmax scan with lowest-index tie-break.
#ifdef _OPENMP
#pragma omp parallel
#endif
        {
            std::vector<T> acc(l);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
            for (int i = 0; i < l; ++i) {
                std::fill(acc.begin(), acc.end(), T(0));
                const T* qi = q_rows.data() + static_cast<std::size_t>(i) * d;
                for (int r = 0; r < d; ++r) {
                    const T qv = qi[r];
                    if (qv == T(0)) continue;
                    const T* krow = k_cols.data() + static_cast<std::size_t>(r) * l;
                    for (int j = 0; j < l; ++j) acc[j] += qv * krow[j];
                }
                int best_j = 0;
                T best = acc[0];
                for (int j = 1; j < l; ++j)
                    if (acc[j] > best) {
                        best = acc[j];
                        best_j = j;
                    }
                t_out[i] = best_j;
                s_out[i] = std::clamp(best, T(-1), T(1));
            }
        }
    }
    return {index, soft};
}

// ----------------------------------------------------------------------------
// feature transfer
// ----------------------------------------------------------------------------

template <typename T>
TensorPtrT<T> transfer_features(TapeT<T>* tape, const TensorPtrT<T>& v, const IntTensorPtr& index,
                                int patch_k) {
    const int h = v->dim(2), w = v->dim(3);
    const int pad = (patch_k - 1) / 2;
    auto cols = unfold(tape, v, patch_k, 1, pad);
    auto selected = index_select_columns(tape, cols, index);
    return fold(tape, selected, patch_k, 1, pad, h, w, /*normalize=*/true);
}

template <typename T>
AttentionOutputsT<T> compute_attention(TapeT<T>* tape, const TensorPtrT<T>& q,
                                       const TensorPtrT<T>& k, const TensorPtrT<T>& v, int patch_k,
                                       typename AttnFreezeT<T>::Stage* freeze_slot, bool replay) {
    AttentionOutputsT<T> out;
    if (replay && freeze_slot) {
        out.transfer_index = freeze_slot->index;
        out.soft_map = freeze_slot->soft;
    } else {
        std::tie(out.transfer_index, out.soft_map) = relevance_embedding(q, k, patch_k);
        if (freeze_slot) {
            freeze_slot->index = out.transfer_index;
            freeze_slot->soft = out.soft_map;
        }
    }
    out.transferred = transfer_features(tape, v, out.transfer_index, patch_k);
    return out;
}

template <typename T>
TensorPtrT<T> task_transformer_forward(TapeT<T>* tape, const TensorPtrT<T>& f_sr,
                                       const TensorPtrT<T>& f_rec,
                                       const TaskTransformerParamT<T>& p, const ModelConfig& cfg,
                                       typename AttnFreezeT<T>::Stage* freeze_slot, bool replay) {
    if (f_sr->shape != f_rec->shape)
        throw DimensionError("task_transformer: branch features differ, " + shape_str(f_sr->shape) +
                             " vs " + shape_str(f_rec->shape));

    auto q = add(tape, f_sr, f_rec);

    // V: reconstruction features made domain-consistent with Q by an
    // up-then-down resampling round trip.
    auto v = f_rec;
    if (cfg.scale > 1) {
        v = resample(tape, v, static_cast<double>(cfg.scale), ResampleMode::Bilinear);
        v = resample(tape, v, 1.0 / static_cast<double>(cfg.scale), ResampleMode::Bilinear);
    }

    auto att = compute_attention(tape, q, f_rec, v, cfg.patch_k, freeze_slot, replay);
    auto z = conv2d(tape, concat_channels(tape, att.transferred, q), p.conv_z.weight, p.conv_z.bias,
                    1, 1);
    auto gated = mul(tape, conv2d(tape, z, p.conv_out.weight, p.conv_out.bias, 1, 1), att.soft_map);
    return add(tape, q, gated);
}

// ----------------------------------------------------------------------------
// branches
// ----------------------------------------------------------------------------

template <typename T>
TensorPtrT<T> resblock_forward(TapeT<T>* tape, const TensorPtrT<T>& x, const ResblockParamT<T>& p) {
    auto y = conv2d(tape, x, p.conv1.weight, p.conv1.bias, 1, 1);
    y = relu(tape, y);
    y = conv2d(tape, y, p.conv2.weight, p.conv2.bias, 1, 1);
    return add(tape, x, y);
}

template <typename T>
ForwardOutT<T> ablation_forward(Variant variant, const TensorPtrT<T>& input,
                                const T2NetParamsT<T>& params, const ModelConfig& cfg,
                                TapeT<T>* tape, AttnFreezeT<T>* freeze) {
    cfg.validate();
    if (input->rank() != 4 || input->dim(1) != 1)
        throw DimensionError("forward: expected [B,1,H,W] input, got " + shape_str(input->shape));
    const bool has_rec = variant != Variant::NoRec;
    const bool has_tt = variant == Variant::Full;
    const bool replay = freeze && !freeze->capture && !freeze->stages.empty();
    if (freeze && freeze->capture) freeze->stages.assign(cfg.n_stages, {});

    auto f0_sr = conv2d(tape, input, params.sr_shallow.weight, params.sr_shallow.bias, 1, 1);
    TensorPtrT<T> rec;
    if (has_rec) rec = conv2d(tape, input, params.rec_shallow.weight, params.rec_shallow.bias, 1, 1);

    auto sr = f0_sr;
    for (int i = 0; i < cfg.n_stages; ++i) {
        if (has_rec) rec = resblock_forward(tape, rec, params.rec_blocks[i]);
        sr = resblock_forward(tape, sr, params.sr_blocks[i]);
        if (has_tt) {
            auto* slot = freeze ? &freeze->stages[i] : nullptr;
            sr = task_transformer_forward(tape, sr, rec, params.tt[i], cfg, slot, replay);
        } else if (has_rec) {
            sr = add(tape, sr, rec);  // fusion without attention
        }
    }

    ForwardOutT<T> out;
    auto up = conv2d(tape, add(tape, sr, f0_sr), params.upsampler.weight, params.upsampler.bias, 1, 1);
    up = pixel_shuffle(tape, up, cfg.scale);
    out.x_sr = conv2d(tape, up, params.final_conv.weight, params.final_conv.bias, 1, 1);
    if (has_rec) out.x_rec = conv2d(tape, rec, params.rec_out.weight, params.rec_out.bias, 1, 1);
    return out;
}

template <typename T>
ForwardOutT<T> t2net_forward(const TensorPtrT<T>& input, const T2NetParamsT<T>& params,
                             const ModelConfig& cfg, TapeT<T>* tape, AttnFreezeT<T>* freeze) {
    return ablation_forward(Variant::Full, input, params, cfg, tape, freeze);
}

// ----------------------------------------------------------------------------
// explicit instantiations
// ----------------------------------------------------------------------------

#define T2NET_INSTANTIATE_MODEL(T)                                                                   \
    template T2NetParamsT<T> make_params<T>(const ModelConfig&, Variant, std::uint64_t);             \
    template struct T2NetParamsT<T>;                                                                 \
    template std::pair<IntTensorPtr, TensorPtrT<T>> relevance_embedding<T>(const TensorPtrT<T>&,     \
                                                                           const TensorPtrT<T>&,     \
                                                                           int);                     \
    template TensorPtrT<T> transfer_features<T>(TapeT<T>*, const TensorPtrT<T>&,                     \
                                                const IntTensorPtr&, int);                           \
    template AttentionOutputsT<T> compute_attention<T>(TapeT<T>*, const TensorPtrT<T>&,              \
                                                       const TensorPtrT<T>&, const TensorPtrT<T>&,   \
                                                       int, typename AttnFreezeT<T>::Stage*, bool);  \
    template TensorPtrT<T> resblock_forward<T>(TapeT<T>*, const TensorPtrT<T>&,                      \
                                               const ResblockParamT<T>&);                            \
    template TensorPtrT<T> task_transformer_forward<T>(TapeT<T>*, const TensorPtrT<T>&,              \
                                                       const TensorPtrT<T>&,                         \
                                                       const TaskTransformerParamT<T>&,              \
                                                       const ModelConfig&,                           \
                                                       typename AttnFreezeT<T>::Stage*, bool);       \
    template ForwardOutT<T> ablation_forward<T>(Variant, const TensorPtrT<T>&,                       \
                                                const T2NetParamsT<T>&, const ModelConfig&,          \
                                                TapeT<T>*, AttnFreezeT<T>*);                         \
    template ForwardOutT<T> t2net_forward<T>(const TensorPtrT<T>&, const T2NetParamsT<T>&,           \
                                             const ModelConfig&, TapeT<T>*, AttnFreezeT<T>*);

T2NET_INSTANTIATE_MODEL(float)
T2NET_INSTANTIATE_MODEL(double)

#undef T2NET_INSTANTIATE_MODEL

}  // namespace t2net
