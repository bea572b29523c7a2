#pragma once

// Pluggable feature backends. Everything here is hermetic; pre-trained
// extractors plug in behind the same interfaces via the backend registry.

#include <cctype>
#include <memory>
#include <string>
#include <vector>

#include "t2v/raster.hpp"
#include "t2v/tensor.hpp"
#include "t2v/util.hpp"

namespace t2v::features {

using ad::Tensor;

// [H, W, 3] -> [1, 3, H, W]
inline Tensor hwc_to_chw(const Tensor& x, int64_t h, int64_t w) {
    if (x.numel() != h * w * 3) throw ArgumentError("hwc_to_chw: size mismatch");
    std::vector<float> out(x.numel());
    const auto& xv = x.data();
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < h * w; ++i) out[c * h * w + i] = xv[i * 3 + c];
    auto xn = x.node();
    return ad::make_op({1, 3, h, w}, std::move(out), {x}, [xn, h, w](ad::Node& self) {
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t i = 0; i < h * w; ++i) xn->grad[i * 3 + c] += self.grad[c * h * w + i];
    });
}

// fixed 3x3 binomial blur, applied per channel
inline Tensor blur3x3(const Tensor& x) {
    const ad::Shape& s = x.shape();
    int64_t C = s[1];
    std::vector<float> w(static_cast<size_t>(C) * C * 9, 0.0f);
    const float k[9] = {1 / 16.0f, 2 / 16.0f, 1 / 16.0f, 2 / 16.0f, 4 / 16.0f,
                        2 / 16.0f, 1 / 16.0f, 2 / 16.0f, 1 / 16.0f};
    for (int64_t c = 0; c < C; ++c)
        for (int i = 0; i < 9; ++i) w[(c * C + c) * 9 + i] = k[i];
    Tensor wt = Tensor::from(std::move(w), {C, C, 3, 3});
    return ad::conv2d(x, wt, Tensor(), 1, 1);
}

// ---------------------------------------------------------------------------
// Perceptual loss backend for the VAE image branch.
// ---------------------------------------------------------------------------
class PerceptualBackend {
public:
    virtual ~PerceptualBackend() = default;
    virtual std::string id() const = 0;
    // both [B, 1, H, W]
    virtual Tensor loss(const Tensor& a, const Tensor& b) const = 0;
};

// deterministic fallback: L1 over a 3-octave blurred pyramid
class BlurPyramidPerceptual final : public PerceptualBackend {
public:
    std::string id() const override { return "blur-pyramid"; }

    Tensor loss(const Tensor& a, const Tensor& b) const override {
        Tensor la = a, lb = b;
        Tensor total = Tensor::scalar(0.0f);
        for (int octave = 0; octave < 3; ++octave) {
            la = ad::avg_pool2d(blur3x3(la), 2);
            lb = ad::avg_pool2d(blur3x3(lb), 2);
            total = ad::add(total, ad::mean(ad::abs(ad::sub(la, lb))));
        }
        return total;
    }
};

// ---------------------------------------------------------------------------
// Multi-level image features for the stage-2 reconstruction loss.
// ---------------------------------------------------------------------------
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    // x: [H, W, 3] in-graph render
    virtual std::vector<Tensor> levels(const Tensor& x, int64_t h, int64_t w) const = 0;
};

// features = raw pixels; the feature loss then equals plain L2 pixel loss
class IdentityFeatures final : public FeatureExtractor {
public:
    std::string id() const override { return "identity"; }
    std::vector<Tensor> levels(const Tensor& x, int64_t, int64_t) const override { return {x}; }
};

// identity at full resolution plus two blurred octaves
class PyramidFeatures final : public FeatureExtractor {
public:
    std::string id() const override { return "pyramid"; }

    std::vector<Tensor> levels(const Tensor& x, int64_t h, int64_t w) const override {
        std::vector<Tensor> out{x};
        Tensor chw = hwc_to_chw(x, h, w);
        for (int octave = 0; octave < 2; ++octave) {
            chw = ad::avg_pool2d(blur3x3(chw), 2);
            out.push_back(chw);
        }
        return out;
    }
};

// sum over levels of mean squared feature distance
inline Tensor feature_loss(const FeatureExtractor& fx, const Tensor& render, const Tensor& target,
                           int64_t h, int64_t w) {
    std::vector<Tensor> fa = fx.levels(render, h, w);
    std::vector<Tensor> fb = fx.levels(target, h, w);
    Tensor total = Tensor::scalar(0.0f);
    for (size_t i = 0; i < fa.size(); ++i)
        total = ad::add(total, ad::mean(ad::square(ad::sub(fa[i], fb[i]))));
    return total;
}

inline std::unique_ptr<FeatureExtractor> make_feature_extractor(const std::string& id) {
    if (id == "identity") return std::make_unique<IdentityFeatures>();
    if (id == "pyramid") return std::make_unique<PyramidFeatures>();
    throw BackendError("unknown feature extractor: " + id);
}

// ---------------------------------------------------------------------------
// Text-image similarity and FID features (metrics side, no gradients).
// ---------------------------------------------------------------------------
class TextImageBackend {
public:
    virtual ~TextImageBackend() = default;
    virtual std::string id() const = 0;
    virtual float similarity(const std::string& prompt, const raster::RasterImage& image) const = 0;
    virtual std::vector<float> image_features(const raster::RasterImage& image) const = 0;
};

// Hermetic stand-in: text embeds via hashed bag of words, images via an 8x8
// gray thumbnail; both projected to a shared 64-d space. Not semantic, but
// deterministic and well-behaved for plumbing and ordering tests.
class PixelBackend final : public TextImageBackend {
public:
    std::string id() const override { return "pixel"; }

    std::vector<float> image_features(const raster::RasterImage& image) const override {
        constexpr int kThumb = 8;
        std::vector<float> f(kThumb * kThumb, 0.0f);
        std::vector<int> counts(kThumb * kThumb, 0);
        for (int y = 0; y < image.height; ++y) {
            int ty = y * kThumb / image.height;
            for (int x = 0; x < image.width; ++x) {
                int tx = x * kThumb / image.width;
                const float* px = image.pixel(x, y);
                f[ty * kThumb + tx] += (px[0] + px[1] + px[2]) / 3.0f;
                counts[ty * kThumb + tx]++;
            }
        }
        for (size_t i = 0; i < f.size(); ++i)
            if (counts[i] > 0) f[i] /= static_cast<float>(counts[i]);
        return f;
    }

    float similarity(const std::string& prompt, const raster::RasterImage& image) const override {
        std::vector<float> t = embed_text(prompt);
        std::vector<float> v = image_features(image);
        for (float& x : v) x -= 0.5f;
        return cosine(t, v);
    }

    static std::vector<float> embed_text(const std::string& prompt) {
        std::vector<float> e(64, 0.0f);
        std::string word;
        auto flush = [&](const std::string& w) {
            if (w.empty()) return;
            Rng rng(fnv1a(w.data(), w.size()));
            for (float& x : e) x += rng.normal();
        };
        for (char c : prompt) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                word.push_back(static_cast<char>(std::tolower(c)));
            else {
                flush(word);
                word.clear();
            }
        }
        flush(word);
        return e;
    }

    static float cosine(const std::vector<float>& a, const std::vector<float>& b) {
        double dot = 0, na = 0, nb = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            dot += static_cast<double>(a[i]) * b[i];
            na += static_cast<double>(a[i]) * a[i];
            nb += static_cast<double>(b[i]) * b[i];
        }
        if (na < 1e-20 || nb < 1e-20) return 0.0f;
        return static_cast<float>(dot / (std::sqrt(na) * std::sqrt(nb)));
    }
};

// reference-anchored similarity: sim(prompt, I) = -mean |I - reference|;
// prompt-independent, used as the hermetic layer-semantics fallback
class ReferenceSimilarity final : public TextImageBackend {
public:
    explicit ReferenceSimilarity(raster::RasterImage reference) : ref_(std::move(reference)) {}

    std::string id() const override { return "pixel"; }

    float similarity(const std::string&, const raster::RasterImage& image) const override {
        return -raster::image_l1(image, ref_);
    }

    std::vector<float> image_features(const raster::RasterImage& image) const override {
        return PixelBackend().image_features(image);
    }

private:
    raster::RasterImage ref_;
};

}  // namespace t2v::features
