#pragma once

// Joint two-term l1 objective over the SR and Rec branches, the Adam loop,
// and dataset-level evaluation against zero-filled / bicubic baselines.

#include <cstdint>
#include <vector>

#include "t2net/metrics.hpp"
#include "t2net/model.hpp"
#include "t2net/mri_sim.hpp"
#include "t2net/serialize.hpp"

namespace t2net {

struct TrainConfig {
    double alpha = 0.2;  // SR-term weight
    double beta = 0.8;   // Rec-term weight
    double lr = 5e-4;
    int steps = 500;
    int batch = 2;
    std::uint64_t seed = 0;
    ModelConfig model;
    Variant variant = Variant::Full;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;  // one per step
};

/// alpha * l1(x_sr, target_sr) + beta * l1(x_rec, target_rec). The Rec term is
/// omitted when x_rec is null (SR-only variant).
template <typename T>
TensorPtrT<T> multitask_loss(TapeT<T>* tape, const TensorPtrT<T>& x_sr,
                             const TensorPtrT<T>& target_sr, const TensorPtrT<T>& x_rec,
                             const TensorPtrT<T>& target_rec, double alpha, double beta);

struct TrainResult {
    T2NetParams params;
    TrainLog log;
};

/// Deterministic in cfg.seed: parameter init and batch sampling both derive
/// from it. Batches are drawn uniformly with replacement. A non-finite loss
/// aborts with a NumericError naming the step.
TrainResult train(const std::vector<SampleTriple>& dataset, const TrainConfig& cfg);

struct EvalReport {
    MetricReport sr;             // x_sr vs target_sr
    MetricReport rec;            // x_rec vs target_rec (zeros for NoRec)
    MetricReport baseline_sr;    // bicubic-upsampled input vs target_sr
    MetricReport baseline_rec;   // raw input vs target_rec (zero-filled)
    bool has_rec = false;
};

struct EvalOptions {
    bool inject_targets = false;  // score targets against themselves (test mode)
};

/// Averages metrics over the dataset.
EvalReport evaluate(const T2NetParams& params, const std::vector<SampleTriple>& dataset,
                    const ModelConfig& cfg, Variant variant, const EvalOptions& opts = {});

}  // namespace t2net
