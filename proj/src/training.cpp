#include "t2net/training.hpp"

#include <cmath>

namespace t2net {

void TrainConfig::validate() const {
    if (alpha < 0.0 || beta < 0.0) throw ParameterError("train: loss weights must be >= 0");
    if (alpha + beta <= 0.0) throw ParameterError("train: alpha + beta must be positive");
    if (steps < 0) throw ParameterError("train: steps must be >= 0");
    if (batch < 1) throw ParameterError("train: batch must be >= 1");
    model.validate();
}

template <typename T>
TensorPtrT<T> multitask_loss(TapeT<T>* tape, const TensorPtrT<T>& x_sr,
                             const TensorPtrT<T>& target_sr, const TensorPtrT<T>& x_rec,
                             const TensorPtrT<T>& target_rec, double alpha, double beta) {
    auto loss = mul_scalar(tape, l1_loss(tape, x_sr, target_sr), static_cast<T>(alpha));
    if (x_rec) {
        auto rec_term = mul_scalar(tape, l1_loss(tape, x_rec, target_rec), static_cast<T>(beta));
        loss = add(tape, loss, rec_term);
    }
    return loss;
}

template TensorPtrT<float> multitask_loss<float>(TapeT<float>*, const TensorPtrT<float>&,
                                                 const TensorPtrT<float>&, const TensorPtrT<float>&,
                                                 const TensorPtrT<float>&, double, double);
template TensorPtrT<double> multitask_loss<double>(TapeT<double>*, const TensorPtrT<double>&,
                                                   const TensorPtrT<double>&,
                                                   const TensorPtrT<double>&,
                                                   const TensorPtrT<double>&, double, double);

namespace {

/// Stacks per-sample [1,1,H,W] tensors into one [B,1,H,W] batch.
TensorPtr stack_batch(const std::vector<SampleTriple>& dataset, const std::vector<int>& picks,
                      const TensorPtr SampleTriple::*field) {
    const TensorPtr& first = dataset[picks[0]].*field;
    const int h = first->dim(2), w = first->dim(3);
    auto out = make_tensor<float>({static_cast<int>(picks.size()), 1, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < picks.size(); ++i) {
        const TensorPtr& src = dataset[picks[i]].*field;
        if (src->dim(2) != h || src->dim(3) != w)
            throw DimensionError("train: inconsistent sample shapes in dataset");
        std::copy_n(src->values.data(), plane, out->values.data() + i * plane);
    }
    return out;
}

}  // namespace

TrainResult train(const std::vector<SampleTriple>& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw ContractError("train: dataset is empty");

    TrainResult result;
    result.params = make_params<float>(cfg.model, cfg.variant, cfg.seed);
    result.params.set_requires_grad(true);

    std::vector<std::pair<std::string, TensorPtr>> named = result.params.named_parameters();
    std::vector<AdamState> states(named.size());

    Rng batch_rng(mix_seed(cfg.seed, 1));  // separate stream from parameter init
    Tape tape;
    std::vector<int> picks(cfg.batch);
    const bool has_rec = cfg.variant != Variant::NoRec;

    for (int step = 0; step < cfg.steps; ++step) {
        for (int i = 0; i < cfg.batch; ++i)
            picks[i] = batch_rng.uniform_int(static_cast<int>(dataset.size()));

        auto input = stack_batch(dataset, picks, &SampleTriple::input_lr);
        auto target_sr = stack_batch(dataset, picks, &SampleTriple::target_sr);
        TensorPtr target_rec;
        if (has_rec) target_rec = stack_batch(dataset, picks, &SampleTriple::target_rec);

        tape.clear();
        result.params.zero_grads();
        auto fwd = ablation_forward(cfg.variant, input, result.params, cfg.model, &tape);

        auto sr_l1 = l1_loss(&tape, fwd.x_sr, target_sr);
        auto loss = mul_scalar(&tape, sr_l1, static_cast<float>(cfg.alpha));
        TensorPtr rec_l1;
        if (has_rec) {
            rec_l1 = l1_loss(&tape, fwd.x_rec, target_rec);
            loss = add(&tape, loss, mul_scalar(&tape, rec_l1, static_cast<float>(cfg.beta)));
        }

        const double total = static_cast<double>(loss->values[0]);
        if (!std::isfinite(total))
            throw NumericError("train: non-finite loss at step " + std::to_string(step), step);

        tape.backward(loss);
        for (std::size_t i = 0; i < named.size(); ++i)
            adam_step(*named[i].second, states[i], cfg.lr, cfg.adam_beta1, cfg.adam_beta2,
                      cfg.adam_eps);

        TrainLogRow row;
        row.step = step;
        row.total = total;
        row.sr_term = static_cast<double>(sr_l1->values[0]);
        row.rec_term = has_rec ? static_cast<double>(rec_l1->values[0]) : 0.0;
        result.log.rows.push_back(row);
    }
    return result;
}

EvalReport evaluate(const T2NetParams& params, const std::vector<SampleTriple>& dataset,
                    const ModelConfig& cfg, Variant variant, const EvalOptions& opts) {
    if (dataset.empty()) throw ContractError("evaluate: dataset is empty");
    EvalReport report;
    report.has_rec = variant != Variant::NoRec;

    auto accumulate = [](MetricReport& acc, const MetricReport& r) {
        acc.psnr_db += r.psnr_db;
        acc.ssim += r.ssim;
        acc.nmse += r.nmse;
    };

    for (const auto& sample : dataset) {
        TensorPtr x_sr, x_rec;
        if (opts.inject_targets) {
            x_sr = sample.target_sr;
            x_rec = sample.target_rec;
        } else {
            auto fwd =
                ablation_forward(variant, sample.input_lr, params, cfg, static_cast<Tape*>(nullptr));
            x_sr = fwd.x_sr;
            x_rec = fwd.x_rec;
        }
        accumulate(report.sr, compute_metrics(x_sr, sample.target_sr));
        if (report.has_rec) accumulate(report.rec, compute_metrics(x_rec, sample.target_rec));
        accumulate(report.baseline_sr,
                   compute_metrics(bicubic_upsample(sample.input_lr, sample.scale), sample.target_sr));
        accumulate(report.baseline_rec, compute_metrics(sample.input_lr, sample.target_rec));
    }

    const double n = static_cast<double>(dataset.size());
    for (MetricReport* r : {&report.sr, &report.rec, &report.baseline_sr, &report.baseline_rec}) {
        r->psnr_db /= n;
        r->ssim /= n;
        r->nmse /= n;
    }
    return report;
}

}  // namespace t2net
