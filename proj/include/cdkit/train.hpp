#pragma once

#include "cdkit/checkpoint.hpp"
#include "cdkit/data.hpp"
#include "cdkit/metrics.hpp"

namespace cdkit {

struct EpochStats {
    double mean_loss = 0;
    std::int64_t steps = 0;
    double train_f1 = 0;
};

namespace detail {

/// Stacks samples into [B,H,W,3] pre/post tensors plus a flat label list.
template <typename T>
struct Batch {
    TensorPtr<T> pre, post;
    std::vector<std::int64_t> labels;
};

template <typename T>
Batch<T> make_batch(const std::vector<BiTemporalSample>& samples) {
    const std::int64_t b = static_cast<std::int64_t>(samples.size());
    const std::int64_t h = samples[0].h, w = samples[0].w;
    Batch<T> out;
    out.pre = Tensor<T>::create({b, h, w, 3});
    out.post = Tensor<T>::create({b, h, w, 3});
    out.labels.reserve(static_cast<std::size_t>(b * h * w));
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        if (s.h != h || s.w != w) throw std::invalid_argument("batch: sample sizes disagree");
        const auto base = static_cast<std::size_t>(i * h * w * 3);
        for (std::size_t j = 0; j < s.pre.size(); ++j) {
            out.pre->data[base + j] = static_cast<T>(s.pre[j]);
            out.post->data[base + j] = static_cast<T>(s.post[j]);
        }
        for (auto v : s.label) out.labels.push_back(v);
    }
    return out;
}

/// Per-pixel argmax over the two logit channels of [..., 2].
template <typename T>
std::vector<std::uint8_t> argmax_mask(const TensorPtr<T>& logits) {
    const auto pixels = logits->numel() / 2;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(pixels));
    for (std::int64_t i = 0; i < pixels; ++i)
        mask[static_cast<std::size_t>(i)] =
            logits->data[static_cast<std::size_t>(2 * i + 1)] > logits->data[static_cast<std::size_t>(2 * i)]
                ? 1
                : 0;
    return mask;
}

}  // namespace detail

/// One pass over the dataset: seeded shuffle, batches of cfg.batch_size (the
/// last, possibly smaller, batch included), per-sample seeded augmentation,
/// forward, cross-entropy, backward, lr_at-scheduled AdamW step. train_f1 is
/// pooled from the epoch's own batch predictions.
template <typename T>
EpochStats train_epoch(const ChangeFormer<T>& model, AdamWState<T>& opt,
                       const std::vector<BiTemporalSample>& data, std::int64_t epoch,
                       const TrainConfig& cfg, std::int64_t total_steps, bool do_augment = true) {
    if (data.empty()) throw std::invalid_argument("train_epoch: empty dataset");
    cfg.validate();

    std::vector<std::int64_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(detail::mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    detail::fisher_yates(order.begin(), order.end(), shuffle_rng);

    auto params = model.parameters();
    ConfusionMatrix cm;
    EpochStats stats;
    double loss_sum = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        std::vector<BiTemporalSample> batch_samples;
        batch_samples.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            const auto idx = order[i];
            if (do_augment) {
                std::mt19937_64 rng(detail::mix_seed(detail::mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)),
                                                     static_cast<std::uint64_t>(idx) + 1));
                batch_samples.push_back(augment(data[static_cast<std::size_t>(idx)], rng));
            } else {
                batch_samples.push_back(data[static_cast<std::size_t>(idx)]);
            }
        }
        auto batch = detail::make_batch<T>(batch_samples);

        model.zero_grad();
        GradTape<T> tape;
        TensorPtr<T> logits, loss;
        {
            TapeScope<T> scope(tape);
            for (const auto& p : params) p.tensor->set_requires_grad(true);
            logits = model.forward(batch.pre, batch.post, /*training=*/true);
            loss = cross_entropy(logits, batch.labels);
            tape.backward(loss);
        }
        const double loss_value = static_cast<double>(loss->data[0]);
        if (std::isnan(loss_value))
            throw std::runtime_error("train_epoch: NaN loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(stats.steps));

        const double lr = lr_at(opt.step, total_steps, cfg);
        adamw_step(params, opt, lr, cfg);

        cm.accumulate(detail::argmax_mask(logits), std::vector<std::uint8_t>(batch.labels.begin(), batch.labels.end()));
        loss_sum += loss_value;
        ++stats.steps;
    }
    stats.mean_loss = loss_sum / static_cast<double>(stats.steps);
    stats.train_f1 = report(cm).f1;
    return stats;
}

/// Metric pass in eval mode (running batch-norm statistics, no augmentation).
template <typename T>
MetricReport evaluate(const ChangeFormer<T>& model, const std::vector<BiTemporalSample>& data) {
    if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
    ConfusionMatrix cm;
    for (const auto& s : data) {
        auto batch = detail::make_batch<T>({s});
        auto logits = model.forward(batch.pre, batch.post, /*training=*/false);
        cm.accumulate(detail::argmax_mask(logits),
                      std::vector<std::uint8_t>(batch.labels.begin(), batch.labels.end()));
    }
    return report(cm);
}

}  // namespace cdkit
