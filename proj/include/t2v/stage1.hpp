#pragma once

// Stage 1: score-distillation optimization of a randomly initialized set of
// neural paths toward the text prompt, producing SVG^0.

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2v/guidance.hpp"
#include "t2v/render.hpp"
#include "t2v/vae.hpp"

namespace t2v::stage1 {

using render::NeuralSvg;
using render::PathTheta;

struct Stage1Config {
    int path_count = 64;  // m
    int iters = 1000;
    std::string mode = "vsd";  // "vsd" | "sds"
    int canvas = 512;
    float sharpness = 2.0f;  // soft band keeps gradients alive during optimization
    int samples_per_segment = 12;
    float lr_z = 0.05f;
    float lr_color = 0.02f;
    float lr_transform = 0.01f;
    int snapshot_every = 100;
    std::string prompt_suffix = "minimal flat 2d vector";
    bool append_suffix = true;
    float guidance_scale = 10.0f;
    int lora_interleave = 1;

    void check() const {
        if (path_count < 1) throw ConfigError("stage1 path_count must be >= 1");
        if (iters < 1) throw ConfigError("stage1 iters must be >= 1");
        if (mode != "vsd" && mode != "sds") throw ConfigError("stage1 mode must be vsd or sds");
    }
};

inline std::string full_prompt(const std::string& prompt, const Stage1Config& cfg) {
    if (!cfg.append_suffix || cfg.prompt_suffix.empty()) return prompt;
    return prompt + ", " + cfg.prompt_suffix;
}

// ---------------------------------------------------------------------------
// initialization: z ~ N(0,I), uniform colors with alpha 1, scale log-uniform
// in [0.1, 0.4], rotation uniform, translation keeping the path on canvas
// ---------------------------------------------------------------------------
inline NeuralSvg init_svg(const vae::PathVae& model, int path_count, uint64_t seed, int canvas) {
    if (path_count < 1) throw ArgumentError("init_svg: need at least one path");
    Rng rng(seed, 0x571);
    NeuralSvg svg;
    svg.canvas = canvas;
    for (int i = 0; i < path_count; ++i) {
        PathTheta theta;
        theta.z.resize(model.cfg.d_latent);
        for (float& v : theta.z) v = rng.normal();
        theta.color = {rng.uniform(), rng.uniform(), rng.uniform(), 1.0f};
        double s = std::exp(rng.uniform(std::log(0.1f), std::log(0.4f)));
        theta.transform.sx = theta.transform.sy = s;
        theta.transform.rotation = rng.uniform(0.0f, 2.0f * static_cast<float>(std::numbers::pi));

        // bounding box of the decoded, scaled, rotated path with zero shift
        geom::BezierPath shape = model.decode_sequence(theta.z);
        geom::BezierPath placed = geom::apply_transform(shape, theta.transform);
        geom::Vec2 lo{1e9, 1e9}, hi{-1e9, -1e9};
        for (auto p : placed.points) {
            lo.x = std::min(lo.x, p.x);
            lo.y = std::min(lo.y, p.y);
            hi.x = std::max(hi.x, p.x);
            hi.y = std::max(hi.y, p.y);
        }
        auto pick = [&](double low, double high) {
            if (high <= low) return 0.5 * (low + high);
            return static_cast<double>(rng.uniform(static_cast<float>(low), static_cast<float>(high)));
        };
        theta.transform.tx = pick(-lo.x, 1.0 - hi.x);
        theta.transform.ty = pick(-lo.y, 1.0 - hi.y);
        svg.paths.push_back(std::move(theta));
    }
    svg.validate();
    return svg;
}

// ---------------------------------------------------------------------------
// optimization loop
// ---------------------------------------------------------------------------
struct IterationTrace {
    int iter = 0;
    int t = 0;
    float residual_norm = 0.0f;
};

struct Stage1Result {
    NeuralSvg svg;
    std::vector<IterationTrace> trace;
    nlohmann::json manifest;
};

// parameter domains enforced after every step
inline void clamp_theta(render::SceneVars& vars) {
    auto& cv = vars.colors.data();
    for (size_t i = 0; i < cv.size(); ++i) cv[i] = std::clamp(cv[i], 0.0f, 1.0f);
    auto& tv = vars.trs.data();
    int64_t m = vars.trs.dim(0);
    for (int64_t i = 0; i < m; ++i) {
        tv[i * 5 + 3] = std::clamp(tv[i * 5 + 3], 0.01f, 2.0f);
        tv[i * 5 + 4] = std::clamp(tv[i * 5 + 4], 0.01f, 2.0f);
    }
}

inline bool theta_finite(const render::SceneVars& vars) {
    for (const ad::Tensor* t : {&vars.z, &vars.colors, &vars.trs})
        for (float v : t->data())
            if (!std::isfinite(v)) return false;
    return true;
}

inline Stage1Result optimize_stage1(
    const vae::PathVae& model, guide::DiffusionBackend& backend, const std::string& prompt,
    const Stage1Config& cfg, uint64_t seed,
    const std::function<void(int, const NeuralSvg&)>& snapshot_sink = {}) {
    cfg.check();
    guide::GuidanceContext ctx;
    ctx.prompt = full_prompt(prompt, cfg);
    ctx.guidance_scale = cfg.guidance_scale;
    ctx.seed = seed;
    ctx.check();

    // decoder stays frozen; gradients flow through it into z
    for (ad::Tensor& p : model.parameters()) p.set_requires_grad(false);

    NeuralSvg svg = init_svg(model, cfg.path_count, seed, cfg.canvas);
    render::SceneVars vars = render::SceneVars::from_svg(svg);
    render::RendererConfig rcfg;
    rcfg.canvas = cfg.canvas;
    rcfg.sharpness = cfg.sharpness;
    rcfg.samples_per_segment = cfg.samples_per_segment;

    ad::Adam opt_z({vars.z}, {.lr = cfg.lr_z});
    ad::Adam opt_color({vars.colors}, {.lr = cfg.lr_color});
    ad::Adam opt_tr({vars.trs}, {.lr = cfg.lr_transform});

    std::unique_ptr<guide::LoraState> lora;
    if (cfg.mode == "vsd")
        lora = std::make_unique<guide::LoraState>(backend.latent_channels(), guide::LoraConfig{}, seed);

    Rng rng(seed, 0x5D5);
    Stage1Result result;
    NeuralSvg last_good = svg;
    for (int iter = 0; iter < cfg.iters; ++iter) {
        render::RenderOut out = render::render_scene(model, vars, cfg.path_count, rcfg);
        ad::Tensor hwc = render::planes_to_hwc(out.planes, cfg.canvas);
        ad::Tensor x = backend.encode(hwc, cfg.canvas);

        opt_z.zero_grad();
        opt_color.zero_grad();
        opt_tr.zero_grad();
        guide::GuidanceStep step = guide::score_distillation_step(x, backend, ctx, rng, lora.get());
        opt_z.step();
        opt_color.step();
        opt_tr.step();
        clamp_theta(vars);

        if (!theta_finite(vars)) {
            if (snapshot_sink) snapshot_sink(iter, last_good);
            throw NumericError("stage1 diverged at iteration " + std::to_string(iter) +
                               "; last good state snapshotted");
        }
        vars.write_back(svg);
        last_good = svg;

        if (lora) {
            for (int k = 0; k < cfg.lora_interleave; ++k)
                lora->step(backend, x.data(), ctx.prompt, rng);
        }

        result.trace.push_back({iter, step.t, step.residual_norm});
        if (snapshot_sink && cfg.snapshot_every > 0 && (iter + 1) % cfg.snapshot_every == 0)
            snapshot_sink(iter + 1, svg);
    }

    result.svg = svg;
    std::vector<float> residuals;
    residuals.reserve(result.trace.size());
    for (const IterationTrace& t : result.trace) residuals.push_back(t.residual_norm);
    result.manifest = {
        {"trace", residuals},
        {"prompt", prompt},
        {"full_prompt", ctx.prompt},
        {"suffix_appended", cfg.append_suffix},
        {"seed", seed},
        {"mode", cfg.mode},
        {"iters", cfg.iters},
        {"path_count", cfg.path_count},
        {"canvas", cfg.canvas},
        {"guidance_scale", cfg.guidance_scale},
        {"backend", backend.id()},
        {"t_range", {guide::NoiseSchedule::kSampleMin, guide::NoiseSchedule::kSampleMax}},
    };
    return result;
}

}  // namespace t2v::stage1
