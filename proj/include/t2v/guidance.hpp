#pragma once

// Score-distillation guidance. The "toy" backend is a closed-form oracle
// used by the hermetic suites; "latent-diffusion" adapts an external
// SD-v1-5-compatible model server over HTTP (weights never ship with this
// repository).

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2v/features.hpp"
#include "t2v/nn.hpp"
#include "t2v/raster.hpp"
#include "t2v/tensor.hpp"
#include "t2v/util.hpp"

namespace t2v::guide {

using ad::Tensor;
using raster::RasterImage;

// ---------------------------------------------------------------------------
// noise schedule: scaled-linear betas, the SD-v1-5 convention
// ---------------------------------------------------------------------------
class NoiseSchedule {
public:
    static constexpr int kTimesteps = 1000;
    static constexpr int kSampleMin = 50;
    static constexpr int kSampleMax = 950;

    NoiseSchedule(float beta_start = 0.00085f, float beta_end = 0.012f) {
        alpha_bar_.resize(kTimesteps);
        double prod = 1.0;
        double s0 = std::sqrt(beta_start), s1 = std::sqrt(beta_end);
        for (int t = 0; t < kTimesteps; ++t) {
            double s = s0 + (s1 - s0) * static_cast<double>(t) / (kTimesteps - 1);
            prod *= 1.0 - s * s;
            alpha_bar_[t] = static_cast<float>(prod);
        }
    }

    float alpha_bar(int t) const {
        if (t < 0 || t >= kTimesteps) throw ArgumentError("timestep out of schedule range");
        return alpha_bar_[t];
    }

    float sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }
    float sqrt_one_minus_alpha_bar(int t) const { return std::sqrt(1.0f - alpha_bar(t)); }

    int sample_t(Rng& rng) const {
        return kSampleMin + static_cast<int>(rng.uniform_index(kSampleMax - kSampleMin + 1));
    }

    std::vector<float> add_noise(const std::vector<float>& x, int t,
                                 const std::vector<float>& eps) const {
        if (x.size() != eps.size()) throw ArgumentError("add_noise: noise shape mismatch");
        float sa = sqrt_alpha_bar(t), sb = sqrt_one_minus_alpha_bar(t);
        std::vector<float> out(x.size());
        for (size_t i = 0; i < x.size(); ++i) out[i] = sa * x[i] + sb * eps[i];
        return out;
    }

private:
    std::vector<float> alpha_bar_;
};

// ---------------------------------------------------------------------------
// context and backend interface
// ---------------------------------------------------------------------------
struct GuidanceContext {
    std::string prompt;
    float guidance_scale = 10.0f;
    uint64_t seed = 0;

    void check() const {
        if (guidance_scale < 1.0f) throw ArgumentError("guidance scale must be >= 1");
    }
};

class DiffusionBackend {
public:
    virtual ~DiffusionBackend() = default;
    virtual std::string id() const = 0;
    virtual int64_t latent_numel() const = 0;
    virtual int latent_channels() const = 0;
    virtual const NoiseSchedule& schedule() const = 0;

    // image [H, W, 3] in-graph -> flat latent tensor (differentiable)
    virtual Tensor encode(const Tensor& image_hwc, int canvas) const = 0;

    // noise predictions; plain vectors, never differentiated through
    virtual std::vector<float> predict(const std::vector<float>& x_t, int t,
                                       const std::string& prompt) const = 0;
    virtual std::vector<float> predict_uncond(const std::vector<float>& x_t, int t) const = 0;

    // img2img pass used for guidance-image creation
    virtual RasterImage denoise_image(const RasterImage& img, float strength, int steps,
                                      const std::string& prompt, uint64_t seed) const = 0;
};

// classifier-free guidance; scale 1 returns the conditional prediction as-is
inline std::vector<float> cfg_predict(const DiffusionBackend& backend, const std::vector<float>& x_t,
                                      int t, const GuidanceContext& ctx) {
    std::vector<float> cond = backend.predict(x_t, t, ctx.prompt);
    if (ctx.guidance_scale == 1.0f) return cond;
    std::vector<float> uncond = backend.predict_uncond(x_t, t);
    for (size_t i = 0; i < cond.size(); ++i)
        cond[i] = uncond[i] + ctx.guidance_scale * (cond[i] - uncond[i]);
    return cond;
}

// ---------------------------------------------------------------------------
// toy target oracle: the exact noise predictor under the hypothesis that the
// clean latent is x_target, so distillation gradients point at x_target
// ---------------------------------------------------------------------------
class ToyTargetBackend final : public DiffusionBackend {
public:
    // latent layout: [3, side, side] flattened
    ToyTargetBackend(std::vector<float> x_target, int side)
        : x_target_(std::move(x_target)), side_(side) {
        if (static_cast<int64_t>(x_target_.size()) != latent_numel())
            throw ArgumentError("toy target size mismatch");
    }

    std::string id() const override { return "toy"; }
    int64_t latent_numel() const override { return static_cast<int64_t>(3) * side_ * side_; }
    int latent_channels() const override { return 3; }
    const NoiseSchedule& schedule() const override { return schedule_; }
    int side() const { return side_; }
    const std::vector<float>& target() const { return x_target_; }

    Tensor encode(const Tensor& image_hwc, int canvas) const override {
        Tensor chw = features::hwc_to_chw(image_hwc, canvas, canvas);
        if (canvas == side_) return ad::reshape(chw, {latent_numel()});
        if (canvas % side_ != 0)
            throw ArgumentError("toy encode: canvas must be a multiple of the latent side");
        Tensor pooled = ad::avg_pool2d(chw, canvas / side_);
        return ad::reshape(pooled, {latent_numel()});
    }

    std::vector<float> predict(const std::vector<float>& x_t, int t, const std::string&) const override {
        float sa = schedule_.sqrt_alpha_bar(t);
        float sb = schedule_.sqrt_one_minus_alpha_bar(t);
        std::vector<float> eps(x_t.size());
        for (size_t i = 0; i < x_t.size(); ++i) eps[i] = (x_t[i] - sa * x_target_[i]) / sb;
        return eps;
    }

    std::vector<float> predict_uncond(const std::vector<float>& x_t, int t) const override {
        return predict(x_t, t, std::string());
    }

    RasterImage denoise_image(const RasterImage& img, float, int, const std::string&,
                              uint64_t) const override {
        return img;  // pass-through contract
    }

private:
    std::vector<float> x_target_;
    int side_;
    NoiseSchedule schedule_;
};

// deterministic prompt-derived target: a few colored disks on white; gives
// the toy backend a meaningful, reproducible target for end-to-end runs
inline std::vector<float> prompt_target_latent(const std::string& prompt, int side) {
    Rng rng(fnv1a(prompt.data(), prompt.size()), 0x7A96);
    RasterImage img = RasterImage::white(side, side);
    int disks = 2 + static_cast<int>(rng.uniform_index(3));
    for (int d = 0; d < disks; ++d) {
        float cx = rng.uniform(0.2f, 0.8f) * side;
        float cy = rng.uniform(0.2f, 0.8f) * side;
        float r = rng.uniform(0.12f, 0.3f) * side;
        float col[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                float dx = x + 0.5f - cx, dy = y + 0.5f - cy;
                if (dx * dx + dy * dy <= r * r) {
                    float* px = img.pixel(x, y);
                    for (int c = 0; c < 3; ++c) px[c] = col[c];
                }
            }
    }
    std::vector<float> latent(static_cast<size_t>(3) * side * side);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < side * side; ++i) latent[c * side * side + i] = img.rgb[i * 3 + c];
    return latent;
}

// ---------------------------------------------------------------------------
// LoRA branch: low-rank channel mixing with a learned time gate, applied as
// a residual on top of the frozen base predictor
// ---------------------------------------------------------------------------
struct LoraConfig {
    int rank = 4;
    float lr = 1e-4f;
};

class LoraState {
public:
    enum class Mode { learned, forced_true_noise };

    LoraState(int channels, LoraConfig cfg, uint64_t seed) : channels_(channels), cfg_(cfg) {
        Rng rng(seed, 0x10FA);
        down_ = Tensor::randn({channels, cfg.rank}, rng, 1.0f / std::sqrt((float)channels), true);
        up_ = Tensor::zeros({cfg.rank, channels}, true);  // zero init: delta starts at 0
        time_gate_ = Tensor::randn({8, cfg.rank}, rng, 0.1f, true);
        opt_ = std::make_unique<ad::Adam>(std::vector<Tensor>{down_, up_, time_gate_},
                                          ad::AdamParams{.lr = cfg.lr});
    }

    Mode mode = Mode::learned;

    static std::vector<float> time_features(int t) {
        std::vector<float> f(8);
        for (int k = 0; k < 4; ++k) {
            double w = std::pow(10.0, k) * static_cast<double>(t) / NoiseSchedule::kTimesteps;
            f[2 * k] = static_cast<float>(std::sin(w));
            f[2 * k + 1] = static_cast<float>(std::cos(w));
        }
        return f;
    }

    // in-graph residual for training; x_t viewed as [pixels, channels]
    Tensor delta(const Tensor& x_t_flat, int t) const {
        int64_t n = x_t_flat.numel();
        int64_t pixels = n / channels_;
        // latent layout is channel-major [C, S, S]: transpose to [pixels, C]
        Tensor x_pc = ad::transpose2d(ad::reshape(x_t_flat, {channels_, pixels}));
        Tensor h = ad::matmul(x_pc, down_);  // [pixels, rank]
        Tensor gate = ad::matmul(Tensor::from(time_features(t), {1, 8}), time_gate_);  // [1, rank]
        h = ad::mul(h, nn::tile_rows(gate, pixels));
        Tensor d_pc = ad::matmul(h, up_);  // [pixels, C]
        return ad::reshape(ad::transpose2d(d_pc), {n});
    }

    // LoRA noise prediction: base conditional (scale-1) plus the residual
    std::vector<float> predict(const DiffusionBackend& backend, const std::vector<float>& x_t, int t,
                               const std::string& prompt, const std::vector<float>& true_noise) const {
        if (mode == Mode::forced_true_noise) return true_noise;
        std::vector<float> base = backend.predict(x_t, t, prompt);
        ad::NoGradGuard ng;
        Tensor d = delta(Tensor::from(x_t, {static_cast<int64_t>(x_t.size())}), t);
        for (size_t i = 0; i < base.size(); ++i) base[i] += d.data()[i];
        return base;
    }

    // one denoising step on the LoRA parameters only
    float step(const DiffusionBackend& backend, const std::vector<float>& x, const std::string& prompt,
               Rng& rng) {
        const NoiseSchedule& sched = backend.schedule();
        int t = sched.sample_t(rng);
        std::vector<float> eps(x.size());
        for (float& e : eps) e = rng.normal();
        std::vector<float> x_t = sched.add_noise(x, t, eps);
        std::vector<float> base = backend.predict(x_t, t, prompt);

        Tensor d = delta(Tensor::from(x_t, {static_cast<int64_t>(x_t.size())}), t);
        std::vector<float> target(x.size());
        for (size_t i = 0; i < x.size(); ++i) target[i] = eps[i] - base[i];
        Tensor loss = ad::mean(ad::square(ad::sub(d, Tensor::from(target, d.shape()))));
        float v = loss.item();
        opt_->zero_grad();
        ad::backward(loss);
        opt_->step();
        return v;
    }

    int rank() const { return cfg_.rank; }
    std::vector<Tensor> parameters() const { return {down_, up_, time_gate_}; }

private:
    int channels_;
    LoraConfig cfg_;
    Tensor down_, up_, time_gate_;
    std::unique_ptr<ad::Adam> opt_;
};

// ---------------------------------------------------------------------------
// SDS / VSD gradient assembly
// ---------------------------------------------------------------------------
struct GuidanceStep {
    int t = 0;
    float residual_norm = 0.0f;
};

inline constexpr float kTimeWeight = 1.0f;  // w(t); constant by configuration

// Samples (t, eps), forms w(t) * (eps_cfg - subtracted) and backpropagates it
// through x into whatever leaves produced x.
inline GuidanceStep score_distillation_step(const Tensor& x, const DiffusionBackend& backend,
                                            const GuidanceContext& ctx, Rng& rng,
                                            const LoraState* lora /* null = SDS */) {
    ctx.check();
    const NoiseSchedule& sched = backend.schedule();
    int t = sched.sample_t(rng);
    std::vector<float> eps(x.numel());
    for (float& e : eps) e = rng.normal();
    std::vector<float> x_t = sched.add_noise(x.data(), t, eps);

    std::vector<float> eps_cfg = cfg_predict(backend, x_t, t, ctx);
    std::vector<float> subtracted =
        lora ? lora->predict(backend, x_t, t, ctx.prompt, eps) : eps;

    std::vector<float> residual(eps_cfg.size());
    double norm = 0;
    for (size_t i = 0; i < residual.size(); ++i) {
        residual[i] = kTimeWeight * (eps_cfg[i] - subtracted[i]);
        norm += static_cast<double>(residual[i]) * residual[i];
    }
    ad::backward(x, &residual);

    GuidanceStep out;
    out.t = t;
    out.residual_norm = static_cast<float>(std::sqrt(norm));
    return out;
}

// ---------------------------------------------------------------------------
// remote latent-diffusion adapter (SD-v1-5-compatible model server)
// ---------------------------------------------------------------------------
struct RemoteBackendConfig {
    std::string endpoint;     // e.g. http://127.0.0.1:7870
    std::string model_cache;  // forwarded to the server; env override applies
};

class RemoteDiffusionBackend final : public DiffusionBackend {
public:
    explicit RemoteDiffusionBackend(RemoteBackendConfig cfg);

    std::string id() const override { return "latent-diffusion"; }
    int64_t latent_numel() const override { return latent_numel_; }
    int latent_channels() const override { return latent_channels_; }
    const NoiseSchedule& schedule() const override { return schedule_; }
    Tensor encode(const Tensor& image_hwc, int canvas) const override;
    std::vector<float> predict(const std::vector<float>& x_t, int t,
                               const std::string& prompt) const override;
    std::vector<float> predict_uncond(const std::vector<float>& x_t, int t) const override;
    RasterImage denoise_image(const RasterImage& img, float strength, int steps,
                              const std::string& prompt, uint64_t seed) const override;

private:
    nlohmann::json post(const std::string& route, const nlohmann::json& body) const;

    RemoteBackendConfig cfg_;
    int64_t latent_numel_ = 0;
    int latent_channels_ = 4;
    NoiseSchedule schedule_;
};

inline std::unique_ptr<DiffusionBackend> make_backend(const std::string& id, const std::string& prompt,
                                                      int toy_side,
                                                      const RemoteBackendConfig& remote = {}) {
    if (id == "toy") return std::make_unique<ToyTargetBackend>(prompt_target_latent(prompt, toy_side), toy_side);
    if (id == "latent-diffusion") return std::make_unique<RemoteDiffusionBackend>(remote);
    throw BackendError("unknown guidance backend: " + id);
}

}  // namespace t2v::guide

// impl kept separate to avoid pulling httplib into every translation unit
#include "t2v/guidance_remote.hpp"
