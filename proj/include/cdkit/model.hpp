#pragma once

#include <random>

#include "cdkit/decoder.hpp"

namespace cdkit {

/// All architecture hyperparameters in one place. Presets: "base" for real
/// runs, "tiny" for CI and desk experiments.
struct ModelConfig {
    std::string preset = "base";
    std::array<StageConfig, 4> stages{};
    std::int64_t ffn_expansion = 4;
    DecoderConfig decoder;
    std::int64_t input_h = 256;
    std::int64_t input_w = 256;

    static ModelConfig base() {
        ModelConfig c;
        c.preset = "base";
        c.stages = {StageConfig{32, 2, 1, 64}, StageConfig{64, 2, 2, 16}, StageConfig{128, 2, 4, 4},
                    StageConfig{256, 2, 8, 1}};
        c.ffn_expansion = 4;
        c.decoder.embed_dim = 256;
        return c;
    }

    static ModelConfig tiny() {
        ModelConfig c;
        c.preset = "tiny";
        c.stages = {StageConfig{24, 1, 1, 4}, StageConfig{48, 1, 2, 1}, StageConfig{96, 1, 4, 1},
                    StageConfig{192, 1, 8, 1}};
        c.ffn_expansion = 4;
        c.decoder.embed_dim = 96;
        c.input_h = 64;
        c.input_w = 64;
        return c;
    }

    static ModelConfig from_preset(const std::string& name) {
        if (name == "base") return base();
        if (name == "tiny") return tiny();
        throw std::invalid_argument("unknown preset '" + name + "' (expected base or tiny)");
    }

    void validate() const {
        for (const auto& s : stages) s.validate();
        decoder.validate();
        if (input_h % 32 != 0 || input_w % 32 != 0)
            throw std::invalid_argument("model config: input size must be divisible by 32");
        if (ffn_expansion < 1) throw std::invalid_argument("model config: ffn_expansion must be >= 1");
    }

    bool operator==(const ModelConfig& o) const {
        auto tup = [](const ModelConfig& c) {
            std::vector<std::int64_t> v{c.ffn_expansion, c.decoder.embed_dim, c.decoder.num_classes,
                                        c.input_h, c.input_w};
            for (const auto& s : c.stages) {
                v.push_back(s.channels);
                v.push_back(s.depth);
                v.push_back(s.heads);
                v.push_back(s.reduction);
            }
            return v;
        };
        return preset == o.preset && tup(*this) == tup(o);
    }
};

namespace detail {

/// Truncated normal at +-2 sigma via rejection; deterministic per engine state.
template <typename T>
inline void fill_trunc_normal(std::vector<T>& v, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : v) {
        double s;
        do {
            s = dist(rng);
        } while (std::fabs(s) > 2.0 * stddev);
        x = static_cast<T>(s);
    }
}

}  // namespace detail

/// Siamese ChangeFormer: one encoder weight set shared by both temporal
/// branches, four difference modules, MLP decoder.
template <typename T>
struct ChangeFormer {
    ModelConfig cfg;
    Encoder<T> encoder;
    Decoder<T> decoder;

    ChangeFormer() = default;
    explicit ChangeFormer(const ModelConfig& config)
        : cfg(config), encoder(config.stages, config.ffn_expansion), decoder(config.stages, config.decoder) {
        cfg.validate();
    }

    FeaturePyramid<T> encode(const TensorPtr<T>& image, bool strict = true) const {
        return encoder.forward(image, strict);
    }

    /// Both images through the shared encoder, then the decoder. Inputs are
    /// [N,H,W,3] or [H,W,3] with H, W divisible by 32 (strict mode).
    TensorPtr<T> forward(const TensorPtr<T>& pre, const TensorPtr<T>& post, bool training,
                         bool strict = true) const {
        if (pre->shape != post->shape)
            throw std::invalid_argument("forward: image sizes disagree, " + shape_str(pre->shape) + " vs " +
                                        shape_str(post->shape));
        auto pyr_pre = encode(pre, strict);
        auto pyr_post = encode(post, strict);
        return decoder.forward(pyr_pre, pyr_post, training);
    }

    ParamList<T> parameters() const {
        ParamList<T> out;
        encoder.collect(out, "encoder");
        decoder.collect(out, "decoder");
        return out;
    }

    ParamList<T> buffers() const {
        ParamList<T> out;
        decoder.collect_buffers(out, "decoder");
        return out;
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& p : parameters()) n += p.tensor->numel();
        return n;
    }

    void zero_grad() const {
        for (const auto& p : parameters()) p.tensor->zero_grad();
    }

    /// Random init: truncated normal (std 0.02) for conv/linear weights,
    /// zero biases, unit norm scales, identity batch-norm statistics.
    void init_weights(std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        for (const auto& p : parameters()) {
            const auto& name = p.name;
            const bool is_weight = name.size() >= 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
            const bool is_gamma = name.size() >= 6 && name.compare(name.size() - 6, 6, ".gamma") == 0;
            if (is_weight) {
                detail::fill_trunc_normal(p.tensor->data, 0.02, rng);
            } else if (is_gamma) {
                std::fill(p.tensor->data.begin(), p.tensor->data.end(), T(1));
            } else {  // biases and beta shifts
                std::fill(p.tensor->data.begin(), p.tensor->data.end(), T(0));
            }
        }
        for (const auto& b : buffers()) {
            const bool is_var = b.name.size() >= 12 && b.name.compare(b.name.size() - 12, 12, ".running_var") == 0;
            std::fill(b.tensor->data.begin(), b.tensor->data.end(), is_var ? T(1) : T(0));
        }
    }
};

}  // namespace cdkit
