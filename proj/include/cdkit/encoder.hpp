#pragma once

#include <array>
#include <optional>

#include "cdkit/nn.hpp"

namespace cdkit {

/// Per-stage hyperparameters. `reduction` is the sequence-length reduction
/// factor R and must be a perfect square: tokens are folded over an r x r
/// spatial window with r = sqrt(R) before the channel-mixing linear.
struct StageConfig {
    std::int64_t channels = 0;
    std::int64_t depth = 0;
    std::int64_t heads = 0;
    std::int64_t reduction = 1;

    std::int64_t head_dim() const { return channels / heads; }

    std::int64_t window() const {
        const auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(reduction))));
        if (r * r != reduction)
            throw std::invalid_argument("stage config: reduction " + std::to_string(reduction) +
                                        " is not a perfect square");
        return r;
    }

    void validate() const {
        if (channels <= 0 || depth <= 0 || heads <= 0 || reduction < 1)
            throw std::invalid_argument("stage config: nonpositive field");
        if (channels % heads != 0)
            throw std::invalid_argument("stage config: channels " + std::to_string(channels) +
                                        " not divisible by heads " + std::to_string(heads));
        (void)window();
    }
};

/// The four per-image feature maps, level i stored as [N, H_i, W_i, C_i].
template <typename T>
struct FeaturePyramid {
    std::array<TensorPtr<T>, 4> levels;
};

/// Folds r x r spatial windows of a token sequence into channels:
/// [N, HW, C] -> [N, HW/r^2, C*r^2]. Requires H and W divisible by r.
template <typename T>
TensorPtr<T> fold_tokens(const TensorPtr<T>& x, std::int64_t h, std::int64_t w, std::int64_t r) {
    if (x->rank() != 3 || x->dim(1) != h * w)
        throw std::invalid_argument("fold_tokens: expected [N,HW,C] with HW = " + std::to_string(h * w));
    if (r == 1) return x;
    if (h % r != 0 || w % r != 0)
        throw std::invalid_argument("fold_tokens: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                                    " not divisible by window " + std::to_string(r));
    const std::int64_t n = x->dim(0), c = x->dim(2);
    auto y = reshape(x, Shape{n, h / r, r, w / r, r, c});
    y = permute(y, {0, 1, 3, 2, 4, 5});
    return reshape(y, Shape{n, (h / r) * (w / r), r * r * c});
}

/// Sequence reduction: spatial fold by r = sqrt(R), then Linear(C*R, C).
/// [N, HW, C] -> [N, HW/R, C].
template <typename T>
TensorPtr<T> sequence_reduce(const TensorPtr<T>& x, std::int64_t h, std::int64_t w, std::int64_t r,
                             const LinearLayer<T>& proj) {
    return proj(fold_tokens(x, h, w, r));
}

struct AttentionStats {
    std::uint64_t score_value_macs = 0;
};

/// Multi-head self-attention with reduced keys/values. Queries come from the
/// full sequence; K and V are projected from the reduced sequence. When an
/// AttentionStats sink is given it receives the multiply-accumulate count of
/// the score and value matmuls alone (projections excluded).
template <typename T>
struct EfficientSelfAttention {
    LinearLayer<T> q, k, v, out;
    LinearLayer<T> reduce;  // Linear(C*R, C)
    std::int64_t heads = 1;
    std::int64_t window = 1;  // r = sqrt(R)

    EfficientSelfAttention() = default;
    explicit EfficientSelfAttention(const StageConfig& cfg)
        : q(cfg.channels, cfg.channels),
          k(cfg.channels, cfg.channels),
          v(cfg.channels, cfg.channels),
          out(cfg.channels, cfg.channels),
          reduce(cfg.channels * cfg.reduction, cfg.channels),
          heads(cfg.heads),
          window(cfg.window()) {}

    TensorPtr<T> forward(const TensorPtr<T>& x, std::int64_t h, std::int64_t w,
                         AttentionStats* stats = nullptr) const {
        const std::int64_t n = x->dim(0), len = x->dim(1), c = x->dim(2);
        const std::int64_t d = c / heads;

        auto query = q(x);
        auto reduced = sequence_reduce(x, h, w, window, reduce);
        const std::int64_t rlen = reduced->dim(1);
        auto key = k(reduced);
        auto value = v(reduced);

        // [N,L,C] -> [N,heads,L,d]
        auto split = [&](const TensorPtr<T>& t, std::int64_t l) {
            return permute(reshape(t, Shape{n, l, heads, d}), {0, 2, 1, 3});
        };
        auto qh = split(query, len);
        auto kh = split(key, rlen);
        auto vh = split(value, rlen);

        const std::uint64_t before = detail::mac_counter();
        auto scores = matmul(qh, permute(kh, {0, 1, 3, 2}));
        scores = scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
        auto attn = softmax(scores, 3);
        auto ctx = matmul(attn, vh);
        if (stats) {
            // scale/softmax add no MACs; the delta is the score+value cost.
            stats->score_value_macs = detail::mac_counter() - before;
        }

        auto merged = reshape(permute(ctx, {0, 2, 1, 3}), Shape{n, len, c});
        return out(merged);
    }

    void collect(ParamList<T>& dst, const std::string& prefix) const {
        q.collect(dst, prefix + ".q");
        k.collect(dst, prefix + ".k");
        v.collect(dst, prefix + ".v");
        out.collect(dst, prefix + ".out");
        reduce.collect(dst, prefix + ".reduce");
    }
};

/// Mix-FFN: pre-norm, channel MLP up to expansion*C, 3x3 depthwise conv,
/// GELU, channel MLP back to C, residual from the un-normalized input.
/// The depthwise conv is the positional signal; no positional table exists.
template <typename T>
struct MixFfn {
    LayerNormLayer<T> norm;
    LinearLayer<T> fc1;
    DepthwiseConv2dLayer<T> dw;
    LinearLayer<T> fc2;

    MixFfn() = default;
    MixFfn(std::int64_t c, std::int64_t expansion)
        : norm(c), fc1(c, c * expansion), dw(3, c * expansion, 1, 1), fc2(c * expansion, c) {}

    /// x is [N,H,W,C]; shape-preserving for any H, W >= 1.
    TensorPtr<T> forward(const TensorPtr<T>& x) const {
        auto y = fc1(norm(x));
        y = dw(y);
        y = gelu(y);
        y = fc2(y);
        return add(x, y);
    }

    void collect(ParamList<T>& dst, const std::string& prefix) const {
        norm.collect(dst, prefix + ".norm");
        fc1.collect(dst, prefix + ".fc1");
        dw.collect(dst, prefix + ".dw");
        fc2.collect(dst, prefix + ".fc2");
    }
};

/// Pre-norm transformer block on a token sequence with known spatial extent.
template <typename T>
struct TransformerBlock {
    LayerNormLayer<T> norm1;
    EfficientSelfAttention<T> attn;
    MixFfn<T> ffn;

    TransformerBlock() = default;
    TransformerBlock(const StageConfig& cfg, std::int64_t expansion)
        : norm1(cfg.channels), attn(cfg), ffn(cfg.channels, expansion) {}

    TensorPtr<T> forward(const TensorPtr<T>& x, std::int64_t h, std::int64_t w,
                         AttentionStats* stats = nullptr) const {
        const std::int64_t n = x->dim(0), c = x->dim(2);
        auto y = add(x, attn.forward(norm1(x), h, w, stats));
        auto spatial = reshape(y, Shape{n, h, w, c});
        return reshape(ffn.forward(spatial), Shape{n, h * w, c});
    }

    void collect(ParamList<T>& dst, const std::string& prefix) const {
        norm1.collect(dst, prefix + ".norm1");
        attn.collect(dst, prefix + ".attn");
        ffn.collect(dst, prefix + ".ffn");
    }
};

/// Overlapped-patch downsampling: stride-4 7x7 conv at stage 1, stride-2 3x3
/// conv afterwards, followed by layer norm over channels.
template <typename T>
struct PatchEmbed {
    Conv2dLayer<T> conv;
    LayerNormLayer<T> norm;

    PatchEmbed() = default;
    PatchEmbed(std::int64_t stage_index, std::int64_t cin, std::int64_t cout) {
        if (stage_index == 0)
            conv = Conv2dLayer<T>(7, cin, cout, 4, 3);
        else
            conv = Conv2dLayer<T>(3, cin, cout, 2, 1);
        norm = LayerNormLayer<T>(cout);
    }

    TensorPtr<T> forward(const TensorPtr<T>& x) const { return norm(conv(x)); }

    void collect(ParamList<T>& dst, const std::string& prefix) const {
        conv.collect(dst, prefix + ".conv");
        norm.collect(dst, prefix + ".norm");
    }
};

template <typename T>
struct EncoderStage {
    PatchEmbed<T> embed;
    std::vector<TransformerBlock<T>> blocks;

    TensorPtr<T> forward(const TensorPtr<T>& x, std::int64_t* out_h, std::int64_t* out_w) const {
        auto y = embed.forward(x);
        const std::int64_t n = y->dim(0), h = y->dim(1), w = y->dim(2), c = y->dim(3);
        auto seq = reshape(y, Shape{n, h * w, c});
        for (const auto& blk : blocks) seq = blk.forward(seq, h, w);
        *out_h = h;
        *out_w = w;
        return reshape(seq, Shape{n, h, w, c});
    }

    void collect(ParamList<T>& dst, const std::string& prefix) const {
        embed.collect(dst, prefix + ".embed");
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].collect(dst, prefix + ".block" + std::to_string(i));
    }
};

/// Four-stage hierarchical encoder producing the feature pyramid of one
/// image. Pure in its weights: the two Siamese branches call the same
/// instance.
template <typename T>
struct Encoder {
    std::array<EncoderStage<T>, 4> stages;

    Encoder() = default;
    Encoder(const std::array<StageConfig, 4>& cfgs, std::int64_t expansion, std::int64_t in_channels = 3) {
        std::int64_t prev = in_channels;
        for (std::size_t i = 0; i < 4; ++i) {
            cfgs[i].validate();
            if (i > 0 && cfgs[i].channels <= cfgs[i - 1].channels)
                throw std::invalid_argument("encoder: stage channels must strictly increase");
            stages[i].embed = PatchEmbed<T>(static_cast<std::int64_t>(i), prev, cfgs[i].channels);
            stages[i].blocks.reserve(static_cast<std::size_t>(cfgs[i].depth));
            for (std::int64_t b = 0; b < cfgs[i].depth; ++b)
                stages[i].blocks.emplace_back(cfgs[i], expansion);
            prev = cfgs[i].channels;
        }
    }

    /// `strict` enforces the pyramid shape law (H, W divisible by 32, checked
    /// before any compute). The relaxed path runs any size the convolution
    /// arithmetic admits and exists for the finite-difference harness.
    FeaturePyramid<T> forward(const TensorPtr<T>& image, bool strict = true) const {
        detail::Rank3Guard<T> guard(image, "encode");
        auto x = guard.x4;
        if (strict && (x->dim(1) % 32 != 0 || x->dim(2) % 32 != 0))
            throw std::invalid_argument("encode: input size " + std::to_string(x->dim(1)) + "x" +
                                        std::to_string(x->dim(2)) + " not divisible by 32");
        FeaturePyramid<T> pyr;
        auto cur = x;
        for (std::size_t i = 0; i < 4; ++i) {
            std::int64_t h = 0, w = 0;
            cur = stages[i].forward(cur, &h, &w);
            pyr.levels[i] = guard.was_rank3
                                ? reshape(cur, Shape{cur->dim(1), cur->dim(2), cur->dim(3)})
                                : cur;
        }
        return pyr;
    }

    void collect(ParamList<T>& dst, const std::string& prefix) const {
        for (std::size_t i = 0; i < 4; ++i) stages[i].collect(dst, prefix + ".stage" + std::to_string(i));
    }
};

}  // namespace cdkit
