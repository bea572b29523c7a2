#pragma once

// Stage 2: path simplification, re-encoding into the latent space, guidance
// image creation, and area-sorted progressive layer-wise optimization.

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "t2v/contour_fit.hpp"
#include "t2v/dataset.hpp"
#include "t2v/features.hpp"
#include "t2v/guidance.hpp"
#include "t2v/render.hpp"
#include "t2v/stage1.hpp"
#include "t2v/vae.hpp"

namespace t2v::stage2 {

using geom::BezierPath;
using render::NeuralSvg;
using render::PathTheta;

struct Stage2Config {
    float alpha_threshold = 0.05f;
    float min_visible_px = 10.0f;     // at the accounting resolution
    int overlap_threshold_px = 5;
    float color_tolerance = 2.0f / 255.0f;  // per channel
    float reencode_eps = 0.05f;
    float lambda_iou = 0.01f;
    float guidance_strength = 0.4f;
    int guidance_steps = 25;
    int total_iters = 800;
    int canvas = 512;
    int accounting_canvas = 512;  // hard-mask resolution for areas/overlaps
    std::string feature_backend = "pyramid";
    float lr_z = 0.05f;
    float lr_color = 0.02f;
    float lr_transform = 0.01f;
    float sharpness = 2.0f;
    int samples_per_segment = 12;
};

// ---------------------------------------------------------------------------
// simplification planning on decoded flat geometry (unit-testable without a
// trained decoder)
// ---------------------------------------------------------------------------
struct FlatTheta {
    BezierPath world;  // decoded + transformed, canvas units
    std::array<float, 4> color{0, 0, 0, 1};
};

struct SimplifyPlan {
    std::vector<int> kept;                 // original indices, z-order preserved
    std::vector<std::vector<int>> merges;  // groups of original indices (ascending)
    int removed_alpha = 0;
    int removed_area = 0;
};

inline bool colors_match(const std::array<float, 4>& a, const std::array<float, 4>& b, float tol) {
    for (int c = 0; c < 4; ++c)
        if (std::fabs(a[c] - b[c]) > tol) return false;
    return true;
}

inline SimplifyPlan plan_simplify(const std::vector<FlatTheta>& flats, const Stage2Config& cfg) {
    int n = static_cast<int>(flats.size());
    int res = cfg.accounting_canvas;
    std::vector<geom::Mask> masks(n);
    for (int i = 0; i < n; ++i) masks[i] = raster::path_mask(flats[i].world, res, res);

    // visible (unoccluded) pixels. Only opaque paths of a different color
    // count as occluders: same-color cover above is merge material, not a
    // reason to drop the path below it.
    std::vector<int64_t> visible(n, 0);
    for (int i = 0; i < n; ++i) {
        geom::Mask occluded = geom::make_mask(res, res);
        for (int j = i + 1; j < n; ++j) {
            if (flats[j].color[3] < 0.5f) continue;
            if (colors_match(flats[i].color, flats[j].color, cfg.color_tolerance)) continue;
            for (size_t p = 0; p < occluded.on.size(); ++p) occluded.on[p] |= masks[j].on[p];
        }
        int64_t count = 0;
        for (size_t p = 0; p < masks[i].on.size(); ++p)
            count += (masks[i].on[p] && !occluded.on[p]) ? 1 : 0;
        visible[i] = count;
    }

    SimplifyPlan plan;
    std::vector<int> alive;
    for (int i = 0; i < n; ++i) {
        if (flats[i].color[3] < cfg.alpha_threshold) {
            ++plan.removed_alpha;
            continue;
        }
        if (static_cast<float>(visible[i]) < cfg.min_visible_px) {
            ++plan.removed_area;
            continue;
        }
        alive.push_back(i);
    }

    // merge same-color pairs with pixel overlap above the threshold
    // (transitively grouped via union-find)
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (size_t a = 0; a < alive.size(); ++a) {
        for (size_t b = a + 1; b < alive.size(); ++b) {
            int i = alive[a], j = alive[b];
            if (!colors_match(flats[i].color, flats[j].color, cfg.color_tolerance)) continue;
            if (geom::mask_overlap(masks[i], masks[j]) >= cfg.overlap_threshold_px)
                parent[find(i)] = find(j);
        }
    }
    std::map<int, std::vector<int>> groups;
    for (int i : alive) groups[find(i)].push_back(i);
    for (auto& [root, members] : groups) {
        std::sort(members.begin(), members.end());
        if (members.size() == 1) {
            plan.kept.push_back(members[0]);
        } else {
            plan.merges.push_back(members);
        }
    }
    std::sort(plan.kept.begin(), plan.kept.end());
    return plan;
}

// ---------------------------------------------------------------------------
// re-encoding into the latent space
// ---------------------------------------------------------------------------
struct ReencodedPath {
    std::vector<float> z;
    geom::AffineTransform transform;  // canonical frame -> world
    bool frozen_geometry = false;     // optimize via transform/color only
    double residual = 0.0;            // chamfer of decode(z) vs the canonical input
};

// canonical frame: the dataset normalization (isotropic fit into the margin
// box); the returned transform maps the canonical path back to world space
inline geom::AffineTransform canonical_frame_transform(const BezierPath& world, BezierPath& canonical) {
    canonical = world;
    geom::Vec2 lo = world.points[0], hi = world.points[0];
    for (auto p : world.points) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
    }
    double extent = std::max(hi.x - lo.x, hi.y - lo.y);
    if (extent < 1e-9) throw FitError("degenerate path cannot be re-encoded");
    double scale = (1.0 - 2.0 * data::kNormalizedMargin) / extent;
    geom::Vec2 center{(lo.x + hi.x) * 0.5, (lo.y + hi.y) * 0.5};
    for (auto& p : canonical.points) {
        p.x = std::clamp((p.x - center.x) * scale + 0.5, 0.0, 1.0);
        p.y = std::clamp((p.y - center.y) * scale + 0.5, 0.0, 1.0);
    }
    geom::AffineTransform tr;
    tr.sx = tr.sy = 1.0 / scale;
    tr.tx = center.x - 0.5;
    tr.ty = center.y - 0.5;
    return tr;
}

inline ReencodedPath reencode_path(const vae::PathVae& model, const BezierPath& world,
                                   const Stage2Config& cfg) {
    ad::NoGradGuard ng;
    ReencodedPath out;
    BezierPath canonical;
    out.transform = canonical_frame_transform(world, canonical);

    std::vector<float> img = raster::rasterize_shape_gray(canonical, model.cfg.image_size);
    std::vector<int> lengths;
    ad::Tensor padded = model.pad_paths({canonical}, lengths);
    ad::Tensor z_seq = model.encode_sequence_padded(padded, lengths);
    ad::Tensor z_img = model.encode_image_batch(model.image_tensor({&img}));
    auto [mu, logvar] = model.fuse(z_seq, z_img);
    out.z = mu.data();

    BezierPath decoded = model.decode_sequence(out.z);
    out.residual = geom::chamfer_distance(geom::sample_auxiliary_points(decoded, model.cfg.aux_n),
                                          geom::sample_auxiliary_points(canonical, model.cfg.aux_n));
    if (out.residual > 3.0 * cfg.reencode_eps) out.frozen_geometry = true;
    return out;
}

inline std::vector<ReencodedPath> reencode(const vae::PathVae& model,
                                           const std::vector<BezierPath>& paths,
                                           const Stage2Config& cfg = {}) {
    std::vector<ReencodedPath> out;
    out.reserve(paths.size());
    for (const BezierPath& p : paths) out.push_back(reencode_path(model, p, cfg));
    return out;
}

// ---------------------------------------------------------------------------
// simplify: drop, merge, and re-encode
// ---------------------------------------------------------------------------
struct SimplifyLog {
    int input_paths = 0;
    int output_paths = 0;
    int removed_alpha = 0;
    int removed_area = 0;
    int merged_groups = 0;
    int merge_failures = 0;
    std::vector<bool> frozen;  // per output path
};

inline NeuralSvg simplify(const vae::PathVae& model, const NeuralSvg& svg, const Stage2Config& cfg,
                          SimplifyLog* log_out = nullptr) {
    svg.validate();
    std::vector<FlatTheta> flats;
    {
        ad::NoGradGuard ng;
        for (const PathTheta& t : svg.paths) {
            FlatTheta f;
            f.world = geom::apply_transform(model.decode_sequence(t.z), t.transform);
            f.color = t.color;
            flats.push_back(std::move(f));
        }
    }
    SimplifyPlan plan = plan_simplify(flats, cfg);

    SimplifyLog log;
    log.input_paths = static_cast<int>(svg.paths.size());
    log.removed_alpha = plan.removed_alpha;
    log.removed_area = plan.removed_area;

    struct Candidate {
        int z_order;
        PathTheta theta;
        bool frozen;
    };
    std::vector<Candidate> out_paths;
    for (int idx : plan.kept) {
        // survivors are re-encoded into the latent space in canonical frame
        try {
            ReencodedPath re = reencode_path(model, flats[idx].world, cfg);
            PathTheta theta;
            theta.z = re.z;
            theta.color = flats[idx].color;
            theta.transform = re.transform;
            out_paths.push_back({idx, std::move(theta), re.frozen_geometry});
        } catch (const FitError&) {
            out_paths.push_back({idx, svg.paths[idx], true});
            ++log.merge_failures;
        }
    }
    for (const std::vector<int>& group : plan.merges) {
        ++log.merged_groups;
        try {
            int res = cfg.accounting_canvas;
            geom::Mask u = geom::make_mask(res, res);
            for (int idx : group) u = geom::mask_union(u, raster::path_mask(flats[idx].world, res, res));
            std::vector<geom::Vec2> contour = geom::trace_largest_contour(u);
            if (contour.size() < 8) throw FitError("contour too small to merge");
            for (auto& p : contour) p = p * (1.0 / res);
            BezierPath merged = geom::fit_path_to_contour(contour, model.cfg.k_max);
            ReencodedPath re = reencode_path(model, merged, cfg);
            PathTheta theta;
            theta.z = re.z;
            std::array<float, 4> mean_color{};
            for (int idx : group)
                for (int c = 0; c < 4; ++c) mean_color[c] += flats[idx].color[c];
            for (int c = 0; c < 4; ++c) mean_color[c] /= static_cast<float>(group.size());
            theta.color = mean_color;
            theta.transform = re.transform;
            out_paths.push_back({group.front(), std::move(theta), re.frozen_geometry});
        } catch (const FitError&) {
            // keep the originals on merge failure
            ++log.merge_failures;
            for (int idx : group) out_paths.push_back({idx, svg.paths[idx], false});
        }
    }
    std::sort(out_paths.begin(), out_paths.end(),
              [](const Candidate& a, const Candidate& b) { return a.z_order < b.z_order; });

    NeuralSvg out;
    out.canvas = svg.canvas;
    for (auto& c : out_paths) {
        out.paths.push_back(std::move(c.theta));
        log.frozen.push_back(c.frozen);
    }
    log.output_paths = static_cast<int>(out.paths.size());
    if (log_out) *log_out = log;
    if (out.paths.empty()) throw NumericError("simplify removed every path");
    return out;
}

// ---------------------------------------------------------------------------
// guidance bundle
// ---------------------------------------------------------------------------
struct GuidanceBundle {
    raster::RasterImage image;
    geom::Mask mask;
    nlohmann::json provenance;
};

inline GuidanceBundle make_guidance(const vae::PathVae& model, const NeuralSvg& svg,
                                    const std::string& prompt, float strength,
                                    guide::DiffusionBackend& backend, uint64_t seed,
                                    const Stage2Config& cfg = {}) {
    render::RendererConfig rcfg;
    rcfg.canvas = cfg.canvas;
    rcfg.samples_per_segment = cfg.samples_per_segment;
    raster::RasterImage rendered = render::render(model, svg, rcfg);

    GuidanceBundle bundle;
    if (strength <= 0.0f) {
        bundle.image = rendered;
    } else {
        bundle.image = backend.denoise_image(rendered, strength, cfg.guidance_steps, prompt, seed);
    }
    bundle.mask = raster::foreground_mask(bundle.image);
    bundle.provenance = {{"strength", strength},
                         {"steps", cfg.guidance_steps},
                         {"seed", seed},
                         {"backend", backend.id()},
                         {"prompt", prompt}};
    return bundle;
}

// ---------------------------------------------------------------------------
// layer schedule: geometric ramp ending at n
// ---------------------------------------------------------------------------
inline std::vector<int> layer_schedule(int n) {
    if (n < 1) throw ArgumentError("layer_schedule: n must be >= 1");
    auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
    std::vector<int> raw{ceil_div(n, 8), ceil_div(n, 4), ceil_div(n, 2), n};
    std::vector<int> out;
    for (int v : raw)
        if (out.empty() || v > out.back()) out.push_back(v);
    return out;
}

// ---------------------------------------------------------------------------
// differentiable soft IoU between a soft mask and a reference mask
// ---------------------------------------------------------------------------
inline ad::Tensor soft_iou(const ad::Tensor& a, const ad::Tensor& b) {
    ad::Tensor inter = ad::sum(ad::minimum(a, b));
    ad::Tensor uni = ad::sum(ad::maximum(a, b));
    return ad::div(inter, ad::add_scalar(uni, 1e-8f));
}

// ---------------------------------------------------------------------------
// layer-wise optimization
// ---------------------------------------------------------------------------
struct StageTrace {
    int path_count = 0;
    int iters = 0;
    float final_loss = 0.0f;
    float final_soft_iou = 0.0f;
};

struct Stage2Result {
    NeuralSvg svg;
    std::vector<StageTrace> stages;
    nlohmann::json manifest;
};

inline ad::Tensor mask_tensor(const geom::Mask& m) {
    std::vector<float> v(m.on.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = m.on[i] ? 1.0f : 0.0f;
    return ad::Tensor::from(std::move(v), {static_cast<int64_t>(v.size())});
}

inline ad::Tensor image_tensor_hwc(const raster::RasterImage& img) {
    std::vector<float> v = img.rgb;
    return ad::Tensor::from(std::move(v), {img.height, img.width, 3});
}

inline Stage2Result optimize_stage2(const vae::PathVae& model, const NeuralSvg& simplified,
                                    const GuidanceBundle& bundle, const std::vector<int>& schedule,
                                    const Stage2Config& cfg, uint64_t seed,
                                    const std::vector<bool>& frozen_geometry = {},
                                    const std::function<void(int, const NeuralSvg&)>& snapshot_sink = {}) {
    simplified.validate();
    if (schedule.empty() || schedule.back() != static_cast<int>(simplified.paths.size()))
        throw ArgumentError("schedule must be non-empty and end at the path count");
    for (size_t i = 1; i < schedule.size(); ++i)
        if (schedule[i] <= schedule[i - 1]) throw ArgumentError("schedule must be strictly increasing");
    if (bundle.mask.width != cfg.canvas || bundle.image.width != cfg.canvas)
        throw ArgumentError("guidance bundle resolution must match the stage-2 canvas");

    for (ad::Tensor& p : model.parameters()) p.set_requires_grad(false);

    // sort paths by descending decoded area; a pure permutation of the set
    NeuralSvg svg = simplified;
    std::vector<bool> frozen = frozen_geometry;
    frozen.resize(svg.paths.size(), false);
    {
        ad::NoGradGuard ng;
        std::vector<double> areas(svg.paths.size());
        for (size_t i = 0; i < svg.paths.size(); ++i) {
            BezierPath world =
                geom::apply_transform(model.decode_sequence(svg.paths[i].z), svg.paths[i].transform);
            areas[i] = geom::path_area(world);
        }
        std::vector<size_t> order(svg.paths.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return areas[a] > areas[b]; });
        NeuralSvg sorted;
        sorted.canvas = svg.canvas;
        std::vector<bool> sorted_frozen;
        for (size_t idx : order) {
            sorted.paths.push_back(svg.paths[idx]);
            sorted_frozen.push_back(frozen[idx]);
        }
        svg = std::move(sorted);
        frozen = std::move(sorted_frozen);
    }

    render::SceneVars vars = render::SceneVars::from_svg(svg);
    render::RendererConfig rcfg;
    rcfg.canvas = cfg.canvas;
    rcfg.sharpness = cfg.sharpness;
    rcfg.samples_per_segment = cfg.samples_per_segment;

    auto fx = features::make_feature_extractor(cfg.feature_backend);
    ad::Tensor target = image_tensor_hwc(bundle.image);
    ad::Tensor fg_mask = mask_tensor(bundle.mask);

    Stage2Result result;
    int iters_per_stage = std::max(1, cfg.total_iters / static_cast<int>(schedule.size()));
    NeuralSvg stage_snapshot = svg;
    Rng rng(seed, 0x572);
    for (int k : schedule) {
        // fresh optimizers per stage: paths beyond k must not drift on stale momentum
        ad::Adam opt_z({vars.z}, {.lr = cfg.lr_z});
        ad::Adam opt_color({vars.colors}, {.lr = cfg.lr_color});
        ad::Adam opt_tr({vars.trs}, {.lr = cfg.lr_transform});
        StageTrace trace;
        trace.path_count = k;
        for (int iter = 0; iter < iters_per_stage; ++iter) {
            render::RenderOut out = render::render_scene(model, vars, k, rcfg);
            ad::Tensor hwc = render::planes_to_hwc(out.planes, cfg.canvas);
            ad::Tensor silhouette = render::silhouette_from_coverages(out.coverages);
            ad::Tensor iou = soft_iou(silhouette, fg_mask);
            ad::Tensor loss =
                ad::add(features::feature_loss(*fx, hwc, target, cfg.canvas, cfg.canvas),
                        ad::mul_scalar(ad::add_scalar(ad::neg(iou), 1.0f), cfg.lambda_iou));
            float loss_v = loss.item();
            if (!std::isfinite(loss_v)) {
                if (snapshot_sink) snapshot_sink(k, stage_snapshot);
                throw NumericError("stage2 diverged at stage " + std::to_string(k));
            }
            opt_z.zero_grad();
            opt_color.zero_grad();
            opt_tr.zero_grad();
            ad::backward(loss);
            // frozen-geometry paths are optimized via transform/color only
            for (size_t i = 0; i < frozen.size(); ++i) {
                if (!frozen[i]) continue;
                for (int64_t c = 0; c < vars.z.dim(1); ++c)
                    vars.z.grad()[static_cast<int64_t>(i) * vars.z.dim(1) + c] = 0.0f;
            }
            opt_z.step();
            opt_color.step();
            opt_tr.step();
            stage1::clamp_theta(vars);
            trace.final_loss = loss_v;
            trace.final_soft_iou = iou.item();
        }
        trace.iters = iters_per_stage;
        result.stages.push_back(trace);
        vars.write_back(svg);
        stage_snapshot = svg;
        if (snapshot_sink) snapshot_sink(k, svg);
    }
    vars.write_back(svg);
    result.svg = svg;
    nlohmann::json stages_json = nlohmann::json::array();
    for (const StageTrace& t : result.stages)
        stages_json.push_back({{"paths", t.path_count},
                               {"iters", t.iters},
                               {"loss", t.final_loss},
                               {"soft_iou", t.final_soft_iou}});
    result.manifest = {{"schedule", schedule},
                       {"lambda_iou", cfg.lambda_iou},
                       {"feature_backend", fx->id()},
                       {"stages", stages_json}};
    return result;
}

// decoded document export for serialization and metrics
inline svg::SvgDocument to_document(const vae::PathVae& model, const NeuralSvg& neural, double size) {
    ad::NoGradGuard ng;
    svg::SvgDocument doc;
    doc.width = doc.height = size;
    for (const PathTheta& t : neural.paths) {
        svg::SvgEntry e;
        BezierPath world = geom::apply_transform(model.decode_sequence(t.z), t.transform);
        for (auto& p : world.points) p = {p.x * size, p.y * size};
        e.path = std::move(world);
        e.rgba = {t.color[0], t.color[1], t.color[2], t.color[3]};
        doc.entries.push_back(std::move(e));
    }
    return doc;
}

}  // namespace t2v::stage2
