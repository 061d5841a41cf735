#pragma once

#include "cdkit/encoder.hpp"

namespace cdkit {

struct DecoderConfig {
    std::int64_t embed_dim = 256;
    std::int64_t num_classes = 2;  // change / no-change

    void validate() const {
        if (embed_dim <= 0) throw std::invalid_argument("decoder config: embed_dim must be positive");
        if (num_classes != 2) throw std::invalid_argument("decoder config: num_classes must be 2");
    }
};

/// Learned per-level distance between the two branch features:
/// concat(pre, post) -> 3x3 conv (2C -> C) -> ReLU -> BN, in that order.
template <typename T>
struct DifferenceModule {
    Conv2dLayer<T> conv;
    BatchNorm2dLayer<T> bn;

    DifferenceModule() = default;
    explicit DifferenceModule(std::int64_t channels)
        : conv(3, 2 * channels, channels, 1, 1), bn(channels) {}

    TensorPtr<T> forward(const TensorPtr<T>& f_pre, const TensorPtr<T>& f_post, bool training) const {
        if (f_pre->shape != f_post->shape)
            throw std::invalid_argument("difference: branch shapes disagree, " + shape_str(f_pre->shape) +
                                        " vs " + shape_str(f_post->shape));
        auto cat = concat<T>({f_pre, f_post}, f_pre->rank() - 1);
        return bn(relu(conv(cat)), training);
    }

    void collect(ParamList<T>& dst, const std::string& prefix) const {
        conv.collect(dst, prefix + ".conv");
        bn.collect(dst, prefix + ".bn");
    }

    void collect_buffers(ParamList<T>& dst, const std::string& prefix) const {
        bn.collect_buffers(dst, prefix + ".bn");
    }
};

/// MLP decoder: per-level channel unification + bilinear upsample to H/4,
/// concat-fuse, 4x transposed-conv upsample, per-pixel classifier.
template <typename T>
struct Decoder {
    DecoderConfig cfg;
    std::array<DifferenceModule<T>, 4> diff;   // independent weights per level
    std::array<LinearLayer<T>, 4> unify;       // Linear(C_i, C_ebd)
    LinearLayer<T> fuse;                       // Linear(4*C_ebd, C_ebd)
    ConvTranspose2dLayer<T> up;                // S=4, K=3, P=0, OP=1, C_ebd -> C_ebd
    LinearLayer<T> classify;                   // Linear(C_ebd, N_cls)

    Decoder() = default;
    Decoder(const std::array<StageConfig, 4>& stages, const DecoderConfig& dcfg) : cfg(dcfg) {
        cfg.validate();
        for (std::size_t i = 0; i < 4; ++i) {
            diff[i] = DifferenceModule<T>(stages[i].channels);
            unify[i] = LinearLayer<T>(stages[i].channels, cfg.embed_dim);
        }
        fuse = LinearLayer<T>(4 * cfg.embed_dim, cfg.embed_dim);
        up = ConvTranspose2dLayer<T>(3, cfg.embed_dim, cfg.embed_dim, 4, 0, 1);
        classify = LinearLayer<T>(cfg.embed_dim, cfg.num_classes);
    }

    TensorPtr<T> unify_and_upsample(const TensorPtr<T>& f_diff, std::size_t level, std::int64_t target_h,
                                    std::int64_t target_w) const {
        auto y = unify[level](f_diff);
        return bilinear_upsample(y, target_h, target_w);
    }

    TensorPtr<T> forward(const FeaturePyramid<T>& pre, const FeaturePyramid<T>& post, bool training) const {
        const auto& top = pre.levels[0];
        const std::int64_t hr = top->rank();
        const std::int64_t target_h = top->dim(hr - 3);
        const std::int64_t target_w = top->dim(hr - 2);

        std::vector<TensorPtr<T>> unified;
        unified.reserve(4);
        for (std::size_t i = 0; i < 4; ++i) {
            auto d = diff[i].forward(pre.levels[i], post.levels[i], training);
            unified.push_back(unify_and_upsample(d, i, target_h, target_w));
        }
        auto fused = fuse(concat(unified, unified[0]->rank() - 1));
        auto upsampled = up(fused);
        return classify(upsampled);
    }

    void collect(ParamList<T>& dst, const std::string& prefix) const {
        for (std::size_t i = 0; i < 4; ++i) {
            diff[i].collect(dst, prefix + ".diff" + std::to_string(i));
            unify[i].collect(dst, prefix + ".unify" + std::to_string(i));
        }
        fuse.collect(dst, prefix + ".fuse");
        up.collect(dst, prefix + ".up");
        classify.collect(dst, prefix + ".classify");
    }

    void collect_buffers(ParamList<T>& dst, const std::string& prefix) const {
        for (std::size_t i = 0; i < 4; ++i)
            diff[i].collect_buffers(dst, prefix + ".diff" + std::to_string(i));
    }
};

}  // namespace cdkit
