#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>

#include "cdkit/image_png.hpp"

namespace cdkit {

/// One co-registered image pair plus its change mask. Images are RGB in
/// [0,1]; the label is {0: no-change, 1: change}.
struct BiTemporalSample {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<float> pre;           // h*w*3
    std::vector<float> post;          // h*w*3
    std::vector<std::uint8_t> label;  // h*w

    void validate() const {
        if (pre.size() != static_cast<std::size_t>(h * w * 3) || post.size() != pre.size() ||
            label.size() != static_cast<std::size_t>(h * w))
            throw std::invalid_argument("sample: component sizes disagree");
        for (auto v : label)
            if (v > 1) throw std::invalid_argument("sample: label values must be 0 or 1");
    }
};

// ---------------------------------------------------------------------------
// Patching

/// Non-overlapping row-major grid of size x size patches; pre, post, and
/// label are cropped identically. The source must tile exactly.
inline std::vector<BiTemporalSample> crop_patches(const BiTemporalSample& src, std::int64_t size = 256) {
    if (size <= 0) throw std::invalid_argument("crop_patches: size must be positive");
    if (src.h % size != 0 || src.w % size != 0)
        throw std::invalid_argument("crop_patches: source " + std::to_string(src.h) + "x" +
                                    std::to_string(src.w) + " not divisible by patch size " +
                                    std::to_string(size));
    std::vector<BiTemporalSample> out;
    out.reserve(static_cast<std::size_t>((src.h / size) * (src.w / size)));
    for (std::int64_t py = 0; py < src.h / size; ++py)
        for (std::int64_t px = 0; px < src.w / size; ++px) {
            BiTemporalSample p;
            p.h = p.w = size;
            p.pre.resize(static_cast<std::size_t>(size * size * 3));
            p.post.resize(p.pre.size());
            p.label.resize(static_cast<std::size_t>(size * size));
            for (std::int64_t y = 0; y < size; ++y) {
                const std::int64_t sy = py * size + y;
                const auto src_px = static_cast<std::size_t>((sy * src.w + px * size) * 3);
                const auto dst_px = static_cast<std::size_t>(y * size * 3);
                std::copy_n(src.pre.begin() + static_cast<std::ptrdiff_t>(src_px),
                            static_cast<std::size_t>(size * 3), p.pre.begin() + static_cast<std::ptrdiff_t>(dst_px));
                std::copy_n(src.post.begin() + static_cast<std::ptrdiff_t>(src_px),
                            static_cast<std::size_t>(size * 3), p.post.begin() + static_cast<std::ptrdiff_t>(dst_px));
                std::copy_n(src.label.begin() + static_cast<std::ptrdiff_t>(sy * src.w + px * size),
                            static_cast<std::size_t>(size), p.label.begin() + static_cast<std::ptrdiff_t>(y * size));
            }
            out.push_back(std::move(p));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Splits

struct DatasetSplits {
    std::vector<std::int64_t> train, val, test;
};

namespace detail {

/// Explicit Fisher-Yates so shuffles are identical across standard libraries.
template <typename It>
void fisher_yates(It first, It last, std::mt19937_64& rng) {
    const auto n = static_cast<std::uint64_t>(std::distance(first, last));
    for (std::uint64_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::uint64_t> pick(0, i - 1);
        std::swap(*(first + static_cast<std::ptrdiff_t>(i - 1)), *(first + static_cast<std::ptrdiff_t>(pick(rng))));
    }
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

inline DatasetSplits split_random(std::int64_t count, std::int64_t n_train, std::int64_t n_val,
                                  std::int64_t n_test, std::uint64_t seed) {
    if (n_train < 0 || n_val < 0 || n_test < 0 || n_train + n_val + n_test > count)
        throw std::invalid_argument("split_random: requested " + std::to_string(n_train + n_val + n_test) +
                                    " samples from " + std::to_string(count));
    std::vector<std::int64_t> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    detail::fisher_yates(order.begin(), order.end(), rng);
    DatasetSplits s;
    auto it = order.begin();
    s.train.assign(it, it + n_train);
    it += n_train;
    s.val.assign(it, it + n_val);
    it += n_val;
    s.test.assign(it, it + n_test);
    return s;
}

// ---------------------------------------------------------------------------
// Augmentation

namespace detail {

inline float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

inline void flip_image(std::vector<float>& img, std::int64_t h, std::int64_t w, bool horizontal) {
    for (std::int64_t y = 0; y < (horizontal ? h : h / 2); ++y)
        for (std::int64_t x = 0; x < (horizontal ? w / 2 : w); ++x) {
            const std::int64_t my = horizontal ? y : h - 1 - y;
            const std::int64_t mx = horizontal ? w - 1 - x : x;
            for (std::int64_t c = 0; c < 3; ++c)
                std::swap(img[static_cast<std::size_t>((y * w + x) * 3 + c)],
                          img[static_cast<std::size_t>((my * w + mx) * 3 + c)]);
        }
}

inline void flip_mask(std::vector<std::uint8_t>& m, std::int64_t h, std::int64_t w, bool horizontal) {
    for (std::int64_t y = 0; y < (horizontal ? h : h / 2); ++y)
        for (std::int64_t x = 0; x < (horizontal ? w / 2 : w); ++x) {
            const std::int64_t my = horizontal ? y : h - 1 - y;
            const std::int64_t mx = horizontal ? w - 1 - x : x;
            std::swap(m[static_cast<std::size_t>(y * w + x)], m[static_cast<std::size_t>(my * w + mx)]);
        }
}

/// Reflect index into [0, n); standard mirror without edge repetition.
inline std::int64_t reflect(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

inline std::vector<float> resize_bilinear(const std::vector<float>& img, std::int64_t h, std::int64_t w,
                                          std::int64_t h2, std::int64_t w2) {
    std::vector<float> out(static_cast<std::size_t>(h2 * w2 * 3));
    const double sy = static_cast<double>(h) / static_cast<double>(h2);
    const double sx = static_cast<double>(w) / static_cast<double>(w2);
    for (std::int64_t y = 0; y < h2; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        const auto y0 = static_cast<std::int64_t>(std::floor(fy));
        const double wy = fy - static_cast<double>(y0);
        const std::int64_t ya = std::clamp<std::int64_t>(y0, 0, h - 1);
        const std::int64_t yb = std::clamp<std::int64_t>(y0 + 1, 0, h - 1);
        for (std::int64_t x = 0; x < w2; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            const auto x0 = static_cast<std::int64_t>(std::floor(fx));
            const double wx = fx - static_cast<double>(x0);
            const std::int64_t xa = std::clamp<std::int64_t>(x0, 0, w - 1);
            const std::int64_t xb = std::clamp<std::int64_t>(x0 + 1, 0, w - 1);
            for (std::int64_t c = 0; c < 3; ++c) {
                auto at = [&](std::int64_t yy, std::int64_t xx) {
                    return static_cast<double>(img[static_cast<std::size_t>((yy * w + xx) * 3 + c)]);
                };
                const double v = (1 - wy) * ((1 - wx) * at(ya, xa) + wx * at(ya, xb)) +
                                 wy * ((1 - wx) * at(yb, xa) + wx * at(yb, xb));
                out[static_cast<std::size_t>((y * w2 + x) * 3 + c)] = static_cast<float>(v);
            }
        }
    }
    return out;
}

inline std::vector<std::uint8_t> resize_nearest(const std::vector<std::uint8_t>& m, std::int64_t h,
                                                std::int64_t w, std::int64_t h2, std::int64_t w2) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(h2 * w2));
    for (std::int64_t y = 0; y < h2; ++y) {
        const auto sy = std::min<std::int64_t>(h - 1, y * h / h2);
        for (std::int64_t x = 0; x < w2; ++x) {
            const auto sx = std::min<std::int64_t>(w - 1, x * w / w2);
            out[static_cast<std::size_t>(y * w2 + x)] = m[static_cast<std::size_t>(sy * w + sx)];
        }
    }
    return out;
}

inline void gaussian_blur(std::vector<float>& img, std::int64_t h, std::int64_t w, double sigma) {
    if (sigma < 1e-3) return;
    const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        norm += v;
    }
    for (auto& v : kernel) v /= norm;

    std::vector<float> tmp(img.size());
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) {
                double acc = 0;
                for (std::int64_t i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] *
                           static_cast<double>(img[static_cast<std::size_t>((y * w + reflect(x + i, w)) * 3 + c)]);
                tmp[static_cast<std::size_t>((y * w + x) * 3 + c)] = static_cast<float>(acc);
            }
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) {
                double acc = 0;
                for (std::int64_t i = -radius; i <= radius; ++i)
                    acc += kernel[static_cast<std::size_t>(i + radius)] *
                           static_cast<double>(tmp[static_cast<std::size_t>((reflect(y + i, h) * w + x) * 3 + c)]);
                img[static_cast<std::size_t>((y * w + x) * 3 + c)] = static_cast<float>(acc);
            }
}

inline void color_jitter(std::vector<float>& img, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pm(-0.2, 0.2);
    const double brightness = 1.0 + pm(rng);
    const double contrast = 1.0 + pm(rng);
    const double saturation = 1.0 + pm(rng);
    double mean = 0;
    for (float v : img) mean += v;
    mean /= static_cast<double>(img.size());
    for (std::size_t i = 0; i < img.size(); i += 3) {
        double r = img[i] * brightness, g = img[i + 1] * brightness, b = img[i + 2] * brightness;
        r = mean + (r - mean) * contrast;
        g = mean + (g - mean) * contrast;
        b = mean + (b - mean) * contrast;
        const double gray = 0.299 * r + 0.587 * g + 0.114 * b;
        img[i] = clamp01(static_cast<float>(gray + (r - gray) * saturation));
        img[i + 1] = clamp01(static_cast<float>(gray + (g - gray) * saturation));
        img[i + 2] = clamp01(static_cast<float>(gray + (b - gray) * saturation));
    }
}

}  // namespace detail

/// Geometric flip applied to all three components.
inline void flip_sample(BiTemporalSample& s, bool horizontal) {
    detail::flip_image(s.pre, s.h, s.w, horizontal);
    detail::flip_image(s.post, s.h, s.w, horizontal);
    detail::flip_mask(s.label, s.h, s.w, horizontal);
}

/// The training augmentation pipeline. Each transform fires independently
/// with probability 0.5, in this fixed draw order: horizontal flip, vertical
/// flip, rescale (factor U[0.8,1.2], reflection pad when shrunk, random crop
/// back to the original size), Gaussian blur (sigma U[0,1.5], images only),
/// color jitter (brightness/contrast/saturation each +-0.2, drawn per image,
/// images only). Geometric transforms hit pre, post, and label identically;
/// the label is resampled nearest-neighbor and stays binary.
inline BiTemporalSample augment(BiTemporalSample s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    // All decision variables are drawn up front in a fixed order, so the
    // stream position never depends on which transforms fire.
    const bool do_hflip = coin(rng) < 0.5;
    const bool do_vflip = coin(rng) < 0.5;
    const bool do_rescale = coin(rng) < 0.5;
    const double factor = 0.8 + 0.4 * coin(rng);
    const double crop_uy = coin(rng);
    const double crop_ux = coin(rng);
    const bool do_blur = coin(rng) < 0.5;
    const double sigma = 1.5 * coin(rng);
    const bool do_jitter = coin(rng) < 0.5;

    if (do_hflip) flip_sample(s, true);
    if (do_vflip) flip_sample(s, false);

    if (do_rescale) {
        const double f = factor;
        const auto h2 = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(static_cast<double>(s.h) * f)));
        const auto w2 = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(static_cast<double>(s.w) * f)));
        auto pre = detail::resize_bilinear(s.pre, s.h, s.w, h2, w2);
        auto post = detail::resize_bilinear(s.post, s.h, s.w, h2, w2);
        auto label = detail::resize_nearest(s.label, s.h, s.w, h2, w2);

        // Reflection-pad up to at least the original size, then random crop.
        const auto ph = std::max(h2, s.h), pw = std::max(w2, s.w);
        if (ph != h2 || pw != w2) {
            std::vector<float> ppre(static_cast<std::size_t>(ph * pw * 3)), ppost(ppre.size());
            std::vector<std::uint8_t> plab(static_cast<std::size_t>(ph * pw));
            for (std::int64_t y = 0; y < ph; ++y)
                for (std::int64_t x = 0; x < pw; ++x) {
                    const auto sy = detail::reflect(y, h2), sx = detail::reflect(x, w2);
                    for (std::int64_t c = 0; c < 3; ++c) {
                        ppre[static_cast<std::size_t>((y * pw + x) * 3 + c)] =
                            pre[static_cast<std::size_t>((sy * w2 + sx) * 3 + c)];
                        ppost[static_cast<std::size_t>((y * pw + x) * 3 + c)] =
                            post[static_cast<std::size_t>((sy * w2 + sx) * 3 + c)];
                    }
                    plab[static_cast<std::size_t>(y * pw + x)] = label[static_cast<std::size_t>(sy * w2 + sx)];
                }
            pre = std::move(ppre);
            post = std::move(ppost);
            label = std::move(plab);
        }

        const auto y0 = std::min<std::int64_t>(ph - s.h, static_cast<std::int64_t>(crop_uy * static_cast<double>(ph - s.h + 1)));
        const auto x0 = std::min<std::int64_t>(pw - s.w, static_cast<std::int64_t>(crop_ux * static_cast<double>(pw - s.w + 1)));
        BiTemporalSample c;
        c.h = s.h;
        c.w = s.w;
        c.pre.resize(s.pre.size());
        c.post.resize(s.post.size());
        c.label.resize(s.label.size());
        for (std::int64_t y = 0; y < s.h; ++y)
            for (std::int64_t x = 0; x < s.w; ++x) {
                const auto si = static_cast<std::size_t>(((y + y0) * pw + (x + x0)));
                const auto di = static_cast<std::size_t>(y * s.w + x);
                for (std::int64_t ch = 0; ch < 3; ++ch) {
                    c.pre[di * 3 + static_cast<std::size_t>(ch)] = pre[si * 3 + static_cast<std::size_t>(ch)];
                    c.post[di * 3 + static_cast<std::size_t>(ch)] = post[si * 3 + static_cast<std::size_t>(ch)];
                }
                c.label[di] = label[si];
            }
        s = std::move(c);
    }

    if (do_blur) {
        detail::gaussian_blur(s.pre, s.h, s.w, sigma);
        detail::gaussian_blur(s.post, s.h, s.w, sigma);
    }

    if (do_jitter) {
        detail::color_jitter(s.pre, rng);
        detail::color_jitter(s.post, rng);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic generator

struct SynthShape {
    bool ellipse = false;
    double cx = 0, cy = 0;  // center, pixel units
    double rx = 0, ry = 0;  // half extents
    float color[3] = {0, 0, 0};

    bool covers(std::int64_t x, std::int64_t y) const {
        const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
        const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
        return ellipse ? (dx * dx + dy * dy <= 1.0) : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
    }
};

struct SynthEdit {
    SynthShape shape;
    bool added = false;  // present only in post; otherwise present only in pre
};

struct SynthOptions {
    float noise_std = 0.01f;       // per-pixel Gaussian noise, both images
    float brightness_max = 0.05f;  // global shift applied to post
    std::int64_t min_edits = 0;
    std::int64_t max_edits = 5;
    std::int64_t base_shapes = 3;
    double edit_radius_min = 0.28;  // fraction of image side
    double edit_radius_max = 0.46;
};

struct SynthRecord {
    BiTemporalSample sample;
    std::vector<SynthShape> base;   // shared scene content
    std::vector<SynthEdit> edits;   // label = union of these footprints
};

namespace detail {

inline void draw_shape(std::vector<float>& img, std::int64_t h, std::int64_t w, const SynthShape& s) {
    const auto y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(s.cy - s.ry)) - 1);
    const auto y1 = std::min<std::int64_t>(h, static_cast<std::int64_t>(std::ceil(s.cy + s.ry)) + 1);
    const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(s.cx - s.rx)) - 1);
    const auto x1 = std::min<std::int64_t>(w, static_cast<std::int64_t>(std::ceil(s.cx + s.rx)) + 1);
    for (std::int64_t y = y0; y < y1; ++y)
        for (std::int64_t x = x0; x < x1; ++x)
            if (s.covers(x, y))
                for (std::int64_t c = 0; c < 3; ++c)
                    img[static_cast<std::size_t>((y * w + x) * 3 + c)] = s.color[static_cast<std::size_t>(c)];
}

}  // namespace detail

/// Full-provenance variant: returns the shape lists alongside each sample so
/// the label can be recomputed independently.
inline std::vector<SynthRecord> synth_generate_detailed(std::int64_t n, std::int64_t size,
                                                        std::uint64_t seed,
                                                        const SynthOptions& opts = {}) {
    if (n < 1) throw std::invalid_argument("synth: n must be >= 1");
    if (size % 32 != 0) throw std::invalid_argument("synth: size " + std::to_string(size) +
                                                    " not divisible by 32");
    std::vector<SynthRecord> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        std::mt19937_64 rng(detail::mix_seed(seed, static_cast<std::uint64_t>(i)));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        SynthRecord rec;
        auto& s = rec.sample;
        s.h = s.w = size;
        s.pre.resize(static_cast<std::size_t>(size * size * 3));
        s.post.resize(s.pre.size());
        s.label.assign(static_cast<std::size_t>(size * size), 0);

        // Smooth mid-gray background: two low-frequency waves per channel.
        double amp[3], fx[3], fy[3], ph[3], base_v[3];
        for (int c = 0; c < 3; ++c) {
            base_v[c] = 0.35 + 0.2 * uni(rng);
            amp[c] = 0.05 + 0.05 * uni(rng);
            fx[c] = (1.0 + 2.0 * uni(rng)) * 2.0 * M_PI / static_cast<double>(size);
            fy[c] = (1.0 + 2.0 * uni(rng)) * 2.0 * M_PI / static_cast<double>(size);
            ph[c] = 2.0 * M_PI * uni(rng);
        }
        for (std::int64_t y = 0; y < size; ++y)
            for (std::int64_t x = 0; x < size; ++x)
                for (int c = 0; c < 3; ++c)
                    s.pre[static_cast<std::size_t>((y * size + x) * 3 + c)] = static_cast<float>(
                        base_v[c] + amp[c] * std::sin(fx[c] * static_cast<double>(x) +
                                                      fy[c] * static_cast<double>(y) + ph[c]));

        // Polarity convention keeps every labeled pixel evidenced in the image
        // pair even when edit footprints overlap: added shapes are bright
        // (visible in post only), removed shapes are dark (visible in pre
        // only), and background/base content stays mid-range. Any stack of
        // overlapping edits therefore still yields a large pre/post delta.
        auto random_shape = [&](int polarity) {  // -1 dark edit, 0 base, +1 bright edit
            SynthShape sh;
            sh.ellipse = uni(rng) < 0.5;
            const double lo = polarity == 0 ? 0.13 : opts.edit_radius_min;
            const double span = polarity == 0 ? 0.11 : opts.edit_radius_max - opts.edit_radius_min;
            sh.rx = (lo + span * uni(rng)) * static_cast<double>(size);
            sh.ry = (lo + span * uni(rng)) * static_cast<double>(size);
            if (polarity == 0) {
                sh.cx = sh.rx + uni(rng) * (static_cast<double>(size) - 2 * sh.rx);
                sh.cy = sh.ry + uni(rng) * (static_cast<double>(size) - 2 * sh.ry);
            } else {
                // Edits may straddle the border so change is not concentrated
                // in the image center.
                sh.cx = uni(rng) * static_cast<double>(size);
                sh.cy = uni(rng) * static_cast<double>(size);
            }
            for (int c = 0; c < 3; ++c) {
                if (polarity > 0)
                    sh.color[c] = static_cast<float>(0.95 + 0.05 * uni(rng));
                else if (polarity < 0)
                    sh.color[c] = static_cast<float>(0.00 + 0.05 * uni(rng));
                else
                    sh.color[c] = static_cast<float>(0.25 + 0.5 * uni(rng));
            }
            return sh;
        };

        for (std::int64_t b = 0; b < opts.base_shapes; ++b) rec.base.push_back(random_shape(0));
        std::uniform_int_distribution<std::int64_t> ne(opts.min_edits, opts.max_edits);
        const auto edits = ne(rng);
        for (std::int64_t e = 0; e < edits; ++e) {
            const bool added = uni(rng) < 0.5;
            rec.edits.push_back(SynthEdit{random_shape(added ? +1 : -1), added});
        }

        for (const auto& sh : rec.base) detail::draw_shape(s.pre, size, size, sh);
        s.post = s.pre;
        for (const auto& e : rec.edits) {
            detail::draw_shape(e.added ? s.post : s.pre, size, size, e.shape);
            for (std::int64_t y = 0; y < size; ++y)
                for (std::int64_t x = 0; x < size; ++x)
                    if (e.shape.covers(x, y)) s.label[static_cast<std::size_t>(y * size + x)] = 1;
        }

        // Irrelevant changes: global brightness shift on post, noise on both.
        const double shift = (2.0 * uni(rng) - 1.0) * static_cast<double>(opts.brightness_max);
        std::normal_distribution<double> noise(0.0, static_cast<double>(opts.noise_std));
        for (std::size_t j = 0; j < s.pre.size(); ++j) {
            double a = s.pre[j], b = static_cast<double>(s.post[j]) + shift;
            if (opts.noise_std > 0) {
                a += noise(rng);
                b += noise(rng);
            }
            s.pre[j] = detail::clamp01(static_cast<float>(a));
            s.post[j] = detail::clamp01(static_cast<float>(b));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<BiTemporalSample> synth_generate(std::int64_t n, std::int64_t size, std::uint64_t seed,
                                                    const SynthOptions& opts = {}) {
    auto recs = synth_generate_detailed(n, size, seed, opts);
    std::vector<BiTemporalSample> out;
    out.reserve(recs.size());
    for (auto& r : recs) out.push_back(std::move(r.sample));
    return out;
}

// ---------------------------------------------------------------------------
// On-disk datasets (LEVIR-style layout)

namespace detail {

inline ImageU8 image_from_floats(const std::vector<float>& v, std::int64_t h, std::int64_t w) {
    ImageU8 img = ImageU8::make(h, w, 3);
    for (std::size_t i = 0; i < v.size(); ++i)
        img.px[i] = static_cast<std::uint8_t>(std::lround(clamp01(v[i]) * 255.0f));
    return img;
}

}  // namespace detail

/// Validated view of `root/{train,val,test}/{A,B,label}/<name>.png`. Pairing
/// and image sizes are checked up front; pixel data loads lazily.
struct DatasetOnDisk {
    std::filesystem::path root;
    std::vector<std::string> train, val, test;  // sorted stems per split

    const std::vector<std::string>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw std::invalid_argument("dataset: unknown split " + name);
    }

    BiTemporalSample load(const std::string& split_name, const std::string& stem) const {
        const auto dir = root / split_name;
        auto a = read_png((dir / "A" / (stem + ".png")).string());
        auto b = read_png((dir / "B" / (stem + ".png")).string());
        auto l = read_png((dir / "label" / (stem + ".png")).string());
        if (a.c != 3 || b.c != 3)
            throw std::runtime_error("dataset: " + stem + ": A/B must be RGB");
        if (l.c != 1) throw std::runtime_error("dataset: " + stem + ": label must be grayscale");
        BiTemporalSample s;
        s.h = a.h;
        s.w = a.w;
        s.pre.resize(a.px.size());
        s.post.resize(b.px.size());
        s.label.resize(l.px.size());
        for (std::size_t i = 0; i < a.px.size(); ++i) s.pre[i] = static_cast<float>(a.px[i]) / 255.0f;
        for (std::size_t i = 0; i < b.px.size(); ++i) s.post[i] = static_cast<float>(b.px[i]) / 255.0f;
        for (std::size_t i = 0; i < l.px.size(); ++i) {
            if (l.px[i] == 0)
                s.label[i] = 0;
            else if (l.px[i] == 255)
                s.label[i] = 1;
            else
                throw std::runtime_error("dataset: label " + (dir / "label" / (stem + ".png")).string() +
                                         " has value " + std::to_string(l.px[i]) +
                                         " outside the {0,255} encoding");
        }
        return s;
    }
};

inline DatasetOnDisk load_dataset(const std::string& root_path) {
    DatasetOnDisk ds;
    ds.root = root_path;
    if (!std::filesystem::is_directory(ds.root))
        throw std::runtime_error("dataset: " + root_path + " is not a directory");
    std::array<std::vector<std::string>*, 3> lists{&ds.train, &ds.val, &ds.test};
    const std::array<const char*, 3> names{"train", "val", "test"};
    for (std::size_t si = 0; si < 3; ++si) {
        const char* split = names[si];
        const auto dir = ds.root / split;
        auto& stems = *lists[si];
        if (!std::filesystem::is_directory(dir)) continue;
        for (const char* part : {"A", "B", "label"})
            if (!std::filesystem::is_directory(dir / part))
                throw std::runtime_error("dataset: missing directory " + (dir / part).string());
        for (const auto& entry : std::filesystem::directory_iterator(dir / "A"))
            if (entry.path().extension() == ".png") stems.push_back(entry.path().stem().string());
        std::sort(stems.begin(), stems.end());
        for (const auto& stem : stems) {
            const auto pa = dir / "A" / (stem + ".png");
            std::array<std::pair<const char*, std::filesystem::path>, 2> others{
                std::pair{"B", dir / "B" / (stem + ".png")},
                std::pair{"label", dir / "label" / (stem + ".png")}};
            const auto sa = png_size(pa.string());
            for (const auto& [part, p] : others) {
                if (!std::filesystem::exists(p))
                    throw std::runtime_error("dataset: " + std::string(split) + "/" + part +
                                             " is missing counterpart for stem " + stem);
                const auto sz = png_size(p.string());
                if (sz != sa)
                    throw std::runtime_error("dataset: size mismatch for " + p.string());
            }
        }
    }
    return ds;
}

/// Writes one split in the on-disk layout; stems are zero-padded indices.
inline void write_split(const std::filesystem::path& root, const std::string& split,
                        const std::vector<BiTemporalSample>& samples) {
    for (const char* part : {"A", "B", "label"})
        std::filesystem::create_directories(root / split / part);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        char stem[16];
        std::snprintf(stem, sizeof(stem), "%05zu", i);
        write_png((root / split / "A" / (std::string(stem) + ".png")).string(),
                  detail::image_from_floats(s.pre, s.h, s.w));
        write_png((root / split / "B" / (std::string(stem) + ".png")).string(),
                  detail::image_from_floats(s.post, s.h, s.w));
        ImageU8 lab = ImageU8::make(s.h, s.w, 1);
        for (std::size_t j = 0; j < s.label.size(); ++j) lab.px[j] = s.label[j] ? 255 : 0;
        write_png((root / split / "label" / (std::string(stem) + ".png")).string(), lab);
    }
}

}  // namespace cdkit
