#pragma once

// Differentiable rendering of neural SVGs. Two rasterizer backends share one
// contract: "reference" is the built-in soft rasterizer (signed distance to
// the densified polygon through a sigmoid) with analytic gradients;
// "scanline" is the exact-coverage rasterizer, non-differentiable, used for
// dataset rasters and golden comparisons.

#include <array>
#include <numbers>
#include <string>
#include <vector>

#include "t2v/geometry.hpp"
#include "t2v/raster.hpp"
#include "t2v/tensor.hpp"
#include "t2v/vae.hpp"

namespace t2v::render {

using ad::Tensor;
using geom::BezierPath;
using raster::RasterImage;

// ---------------------------------------------------------------------------
// scene model
// ---------------------------------------------------------------------------
struct PathTheta {
    std::vector<float> z;             // d_latent
    std::array<float, 4> color{0.5f, 0.5f, 0.5f, 1.0f};
    geom::AffineTransform transform;
};

struct NeuralSvg {
    std::vector<PathTheta> paths;  // index 0 = bottom layer
    int canvas = 512;

    void validate() const {
        if (paths.empty()) throw StructuralError("NeuralSvg needs at least one path");
        if (canvas != 64 && canvas != 256 && canvas != 512)
            throw StructuralError("canvas must be one of 64, 256, 512");
        for (const PathTheta& p : paths) {
            if (p.color[3] < 0.0f || p.color[3] > 1.0f)
                throw StructuralError("alpha must lie in [0,1]");
            p.transform.check();
            for (float v : p.z)
                if (!std::isfinite(v)) throw StructuralError("non-finite latent");
        }
    }
};

struct RendererConfig {
    int canvas = 512;
    int samples_per_segment = 16;  // polygon densification for the soft backend
    float sharpness = 40.0f;       // sigmoid slope per pixel of signed distance
    std::string backend = "reference";
};

// ---------------------------------------------------------------------------
// soft polygon coverage op: verts [P,2] in canvas units -> [H*W] coverage
// ---------------------------------------------------------------------------
inline Tensor polygon_coverage_soft(const Tensor& verts, int canvas, float sharpness) {
    int64_t P = verts.dim(0);
    if (P < 3) throw ArgumentError("polygon needs >= 3 vertices");
    const auto& v = verts.data();
    int W = canvas, H = canvas;

    // expanded bounding box: outside it the sigmoid is saturated at 0
    float band_px = 18.0f / sharpness + 1.5f;
    float lo_x = v[0], hi_x = v[0], lo_y = v[1], hi_y = v[1];
    for (int64_t i = 1; i < P; ++i) {
        lo_x = std::min(lo_x, v[2 * i]);
        hi_x = std::max(hi_x, v[2 * i]);
        lo_y = std::min(lo_y, v[2 * i + 1]);
        hi_y = std::max(hi_y, v[2 * i + 1]);
    }
    int x0 = std::clamp(static_cast<int>(std::floor(lo_x * W - band_px)), 0, W);
    int x1 = std::clamp(static_cast<int>(std::ceil(hi_x * W + band_px)) + 1, 0, W);
    int y0 = std::clamp(static_cast<int>(std::floor(lo_y * H - band_px)), 0, H);
    int y1 = std::clamp(static_cast<int>(std::ceil(hi_y * H + band_px)) + 1, 0, H);

    std::vector<float> cover(static_cast<size_t>(W) * H, 0.0f);
    std::vector<int32_t> edge_arg(static_cast<size_t>(W) * H, -1);
    std::vector<float> edge_t(static_cast<size_t>(W) * H, 0.0f);

    parallel_for(y1 - y0, [&](int64_t r0, int64_t r1) {
        for (int64_t ry = r0; ry < r1; ++ry) {
            int y = y0 + static_cast<int>(ry);
            float py = (y + 0.5f) / H;
            for (int x = x0; x < x1; ++x) {
                float px = (x + 0.5f) / W;
                float best = std::numeric_limits<float>::max();
                int32_t arg = -1;
                float arg_t = 0.0f;
                int winding = 0;
                for (int64_t e = 0; e < P; ++e) {
                    float ax = v[2 * e], ay = v[2 * e + 1];
                    int64_t j = (e + 1) % P;
                    float bx = v[2 * j], by = v[2 * j + 1];
                    // winding: signed crossings of the +x ray
                    if (ay <= py ? by > py : by <= py) {
                        float t = (py - ay) / (by - ay);
                        if (ax + t * (bx - ax) > px) winding += (by > ay) ? 1 : -1;
                    }
                    float dx = bx - ax, dy = by - ay;
                    float len_sq = dx * dx + dy * dy;
                    float t = len_sq > 1e-20f
                                  ? std::clamp(((px - ax) * dx + (py - ay) * dy) / len_sq, 0.0f, 1.0f)
                                  : 0.0f;
                    float qx = ax + t * dx - px, qy = ay + t * dy - py;
                    float d = qx * qx + qy * qy;
                    if (d < best) {
                        best = d;
                        arg = static_cast<int32_t>(e);
                        arg_t = t;
                    }
                }
                float sd_px = std::sqrt(best) * W * (winding != 0 ? 1.0f : -1.0f);
                float a = sharpness * sd_px;
                size_t idx = static_cast<size_t>(y) * W + x;
                cover[idx] = 1.0f / (1.0f + std::exp(-a));
                edge_arg[idx] = arg;
                edge_t[idx] = arg_t;
            }
        }
    });

    auto vn = verts.node();
    return ad::make_op(
        {static_cast<int64_t>(W) * H}, std::move(cover), {verts},
        [vn, W, H, P, sharpness, edge_arg, edge_t, x0, x1, y0, y1](ad::Node& self) {
            for (int y = y0; y < y1; ++y) {
                float py = (y + 0.5f) / H;
                for (int x = x0; x < x1; ++x) {
                    size_t idx = static_cast<size_t>(y) * W + x;
                    float c = self.value[idx];
                    float g = self.grad[idx];
                    if (g == 0.0f || c <= 1e-7f || c >= 1.0f - 1e-7f) continue;
                    int32_t e = edge_arg[idx];
                    if (e < 0) continue;
                    float px = (x + 0.5f) / W;
                    int64_t j = (e + 1) % P;
                    float ax = vn->value[2 * e], ay = vn->value[2 * e + 1];
                    float bx = vn->value[2 * j], by = vn->value[2 * j + 1];
                    float t = edge_t[idx];
                    float qx = ax + t * (bx - ax) - px;
                    float qy = ay + t * (by - ay) - py;
                    float d = std::sqrt(qx * qx + qy * qy);
                    if (d < 1e-9f) continue;
                    // sign of the stored signed distance
                    float sign = (c >= 0.5f) ? 1.0f : -1.0f;
                    float scale = g * c * (1.0f - c) * sharpness * W * sign / d;
                    // moving an endpoint along q increases the distance
                    vn->grad[2 * e] += scale * qx * (1.0f - t);
                    vn->grad[2 * e + 1] += scale * qy * (1.0f - t);
                    vn->grad[2 * j] += scale * qx * t;
                    vn->grad[2 * j + 1] += scale * qy * t;
                }
            }
        });
}

// ---------------------------------------------------------------------------
// in-graph affine transform of [P,2] points; params [1,5] = (tx,ty,rot,sx,sy)
// about the canvas center
// ---------------------------------------------------------------------------
inline Tensor transform_points(const Tensor& pts, const Tensor& params) {
    if (params.numel() != 5) throw ArgumentError("transform params must have 5 entries");
    Tensor tx = ad::slice_cols(params, 0, 1);
    Tensor ty = ad::slice_cols(params, 1, 2);
    Tensor rot = ad::slice_cols(params, 2, 3);
    Tensor sx = ad::slice_cols(params, 3, 4);
    Tensor sy = ad::slice_cols(params, 4, 5);
    Tensor cx = ad::add_scalar(ad::slice_cols(pts, 0, 1), -0.5f);
    Tensor cy = ad::add_scalar(ad::slice_cols(pts, 1, 2), -0.5f);
    Tensor xs = ad::mul(cx, sx);
    Tensor ys = ad::mul(cy, sy);
    Tensor c = ad::cos(rot), s = ad::sin(rot);
    Tensor xr = ad::sub(ad::mul(xs, c), ad::mul(ys, s));
    Tensor yr = ad::add(ad::mul(xs, s), ad::mul(ys, c));
    Tensor xw = ad::add(ad::add_scalar(xr, 0.5f), tx);
    Tensor yw = ad::add(ad::add_scalar(yr, 0.5f), ty);
    return ad::concat_cols({xw, yw});
}

// densification matrix for a closed layout: [segments*spp, n_points]
inline Tensor densify_matrix(int n_points, int samples_per_segment) {
    int rows = 0;
    std::vector<float> m =
        vae::closed_sampling_matrix(n_points, samples_per_segment - 1, true, rows);
    return Tensor::from(std::move(m), {rows, n_points});
}

// ---------------------------------------------------------------------------
// differentiable scene rendering
// ---------------------------------------------------------------------------
struct SceneVars {
    Tensor z;       // [m, d_latent]
    Tensor colors;  // [m, 4]
    Tensor trs;     // [m, 5]

    static SceneVars from_svg(const NeuralSvg& svg, bool requires_grad = true) {
        svg.validate();
        int64_t m = static_cast<int64_t>(svg.paths.size());
        int64_t d = static_cast<int64_t>(svg.paths[0].z.size());
        std::vector<float> zv, cv, tv;
        for (const PathTheta& p : svg.paths) {
            if (static_cast<int64_t>(p.z.size()) != d) throw ArgumentError("mixed latent sizes");
            zv.insert(zv.end(), p.z.begin(), p.z.end());
            cv.insert(cv.end(), p.color.begin(), p.color.end());
            tv.push_back(static_cast<float>(p.transform.tx));
            tv.push_back(static_cast<float>(p.transform.ty));
            tv.push_back(static_cast<float>(p.transform.rotation));
            tv.push_back(static_cast<float>(p.transform.sx));
            tv.push_back(static_cast<float>(p.transform.sy));
        }
        SceneVars out;
        out.z = Tensor::from(std::move(zv), {m, d}, requires_grad);
        out.colors = Tensor::from(std::move(cv), {m, 4}, requires_grad);
        out.trs = Tensor::from(std::move(tv), {m, 5}, requires_grad);
        return out;
    }

    void write_back(NeuralSvg& svg) const {
        int64_t m = static_cast<int64_t>(svg.paths.size());
        for (int64_t i = 0; i < m; ++i) {
            PathTheta& p = svg.paths[i];
            int64_t d = static_cast<int64_t>(p.z.size());
            for (int64_t k = 0; k < d; ++k) p.z[k] = z.data()[i * d + k];
            for (int k = 0; k < 4; ++k) p.color[k] = colors.data()[i * 4 + k];
            const float* t = &trs.data()[i * 5];
            p.transform.tx = t[0];
            p.transform.ty = t[1];
            p.transform.rotation = t[2];
            p.transform.sx = t[3];
            p.transform.sy = t[4];
        }
    }

    std::vector<Tensor> leaves() const { return {z, colors, trs}; }
};

struct RenderOut {
    std::vector<Tensor> planes;     // r, g, b as [H*W]
    std::vector<Tensor> coverages;  // per path, [H*W]
    int canvas = 0;
};

// rasterize one already-densified polygon and composite over the planes
inline void composite_path(RenderOut& out, const Tensor& polygon, const Tensor& color_row,
                           int canvas, float sharpness) {
    Tensor cover = polygon_coverage_soft(polygon, canvas, sharpness);
    out.coverages.push_back(cover);
    Tensor alpha = ad::slice_cols(color_row, 3, 4);
    Tensor a = ad::mul(cover, alpha);
    Tensor one_minus = ad::add_scalar(ad::neg(a), 1.0f);
    for (int ch = 0; ch < 3; ++ch) {
        Tensor c = ad::slice_cols(color_row, ch, ch + 1);
        out.planes[ch] = ad::add(ad::mul(a, c), ad::mul(out.planes[ch], one_minus));
    }
}

// render the first `count` paths (back-to-front prefix of the scene)
inline RenderOut render_scene(const vae::PathVae& model, const SceneVars& vars, int64_t count,
                              const RendererConfig& cfg) {
    if (cfg.backend != "reference")
        throw BackendError("differentiable rendering requires the reference backend");
    int64_t m = vars.z.dim(0);
    if (count < 1 || count > m) throw ArgumentError("render_scene: bad path count");
    RenderOut out;
    out.canvas = cfg.canvas;
    int64_t n_px = static_cast<int64_t>(cfg.canvas) * cfg.canvas;
    for (int ch = 0; ch < 3; ++ch) out.planes.push_back(Tensor::full({n_px}, 1.0f));  // white

    Tensor decoded = model.decode_sequence_batch(vars.z);  // [m*k_max, 2]
    Tensor dmat = densify_matrix(model.cfg.decoded_points, cfg.samples_per_segment);
    for (int64_t i = 0; i < count; ++i) {
        Tensor pts = ad::slice_rows(decoded, i * model.cfg.k_max,
                                    i * model.cfg.k_max + model.cfg.decoded_points);
        Tensor world = transform_points(pts, ad::slice_rows(vars.trs, i, i + 1));
        Tensor polygon = ad::matmul(dmat, world);
        composite_path(out, polygon, ad::slice_rows(vars.colors, i, i + 1), cfg.canvas, cfg.sharpness);
    }
    return out;
}

// raw control-point scene (no decoder): one leaf tensor per path
inline RenderOut render_raw_paths(const std::vector<Tensor>& control_points,
                                  const std::vector<Tensor>& colors, const RendererConfig& cfg,
                                  int samples_per_segment = 0) {
    if (control_points.empty() || control_points.size() != colors.size())
        throw ArgumentError("render_raw_paths: length mismatch");
    int spp = samples_per_segment > 0 ? samples_per_segment : cfg.samples_per_segment;
    RenderOut out;
    out.canvas = cfg.canvas;
    int64_t n_px = static_cast<int64_t>(cfg.canvas) * cfg.canvas;
    for (int ch = 0; ch < 3; ++ch) out.planes.push_back(Tensor::full({n_px}, 1.0f));
    for (size_t i = 0; i < control_points.size(); ++i) {
        int n_pts = static_cast<int>(control_points[i].dim(0));
        Tensor dmat = densify_matrix(n_pts, spp);
        Tensor polygon = ad::matmul(dmat, control_points[i]);
        composite_path(out, polygon, colors[i], cfg.canvas, cfg.sharpness);
    }
    return out;
}

// union coverage of all paths, ignoring color: 1 - prod(1 - cover_i)
inline Tensor silhouette_from_coverages(const std::vector<Tensor>& coverages) {
    if (coverages.empty()) throw ArgumentError("silhouette needs at least one coverage");
    Tensor u = coverages[0];
    for (size_t i = 1; i < coverages.size(); ++i) {
        Tensor c = coverages[i];
        u = ad::sub(ad::add(u, c), ad::mul(u, c));
    }
    return u;
}

// [H*W] r,g,b planes -> interleaved [H, W, 3]
inline Tensor planes_to_hwc(const std::vector<Tensor>& planes, int canvas) {
    int64_t n = static_cast<int64_t>(canvas) * canvas;
    std::vector<float> out(static_cast<size_t>(n) * 3);
    for (int ch = 0; ch < 3; ++ch) {
        const auto& p = planes[ch].data();
        for (int64_t i = 0; i < n; ++i) out[i * 3 + ch] = p[i];
    }
    std::vector<std::shared_ptr<ad::Node>> pn;
    for (const Tensor& p : planes) pn.push_back(p.node());
    return ad::make_op({canvas, canvas, 3}, std::move(out), planes, [pn, n](ad::Node& self) {
        for (int ch = 0; ch < 3; ++ch) {
            if (!pn[ch]->requires_grad) continue;
            for (int64_t i = 0; i < n; ++i) pn[ch]->grad[i] += self.grad[i * 3 + ch];
        }
    });
}

inline RasterImage to_raster_image(const RenderOut& out) {
    RasterImage img = RasterImage::white(out.canvas, out.canvas);
    int64_t n = static_cast<int64_t>(out.canvas) * out.canvas;
    for (int ch = 0; ch < 3; ++ch) {
        const auto& p = out.planes[ch].data();
        for (int64_t i = 0; i < n; ++i) img.rgb[i * 3 + ch] = std::clamp(p[i], 0.0f, 1.0f);
    }
    return img;
}

// ---------------------------------------------------------------------------
// scanline (exact coverage) backend: not differentiable
// ---------------------------------------------------------------------------
inline std::vector<raster::FlatPath> decode_flat_paths(const vae::PathVae& model, const NeuralSvg& svg,
                                                       int64_t count = -1) {
    ad::NoGradGuard ng;
    svg.validate();
    if (count < 0) count = static_cast<int64_t>(svg.paths.size());
    std::vector<raster::FlatPath> flats;
    for (int64_t i = 0; i < count; ++i) {
        const PathTheta& p = svg.paths[i];
        raster::FlatPath fp;
        fp.path = geom::apply_transform(model.decode_sequence(p.z), p.transform);
        for (int k = 0; k < 4; ++k) fp.rgba[k] = p.color[k];
        flats.push_back(std::move(fp));
    }
    return flats;
}

inline RasterImage render(const vae::PathVae& model, const NeuralSvg& svg, const RendererConfig& cfg) {
    if (cfg.backend == "scanline") {
        return raster::composite_scanline(decode_flat_paths(model, svg), cfg.canvas, cfg.canvas,
                                          cfg.samples_per_segment);
    }
    if (cfg.backend != "reference") throw BackendError("unknown rasterizer backend: " + cfg.backend);
    ad::NoGradGuard ng;
    SceneVars vars = SceneVars::from_svg(svg, false);
    return to_raster_image(render_scene(model, vars, svg.paths.size(), cfg));
}

inline std::vector<float> render_silhouette(const vae::PathVae& model, const NeuralSvg& svg,
                                            const RendererConfig& cfg) {
    ad::NoGradGuard ng;
    SceneVars vars = SceneVars::from_svg(svg, false);
    RenderOut out = render_scene(model, vars, svg.paths.size(), cfg);
    return silhouette_from_coverages(out.coverages).data();
}

// ---------------------------------------------------------------------------
// gradient check: analytic vs central finite differences on a pixel loss
// ---------------------------------------------------------------------------
struct GradientCheckReport {
    double max_rel_color = 0.0;
    double max_rel_translation = 0.0;
    double max_rel_points = 0.0;
};

inline GradientCheckReport gradient_check(uint64_t seed, const RendererConfig& cfg_in = {}) {
    RendererConfig cfg = cfg_in;
    cfg.canvas = 64;
    cfg.sharpness = std::min(cfg.sharpness, 2.0f);  // wide band so FD stays in range
    Rng rng(seed);

    // a random closed 12-point blob
    auto make_path = [&](int idx) {
        std::vector<float> pts;
        int segments = 4;
        for (int s = 0; s < segments * 3; ++s) {
            double a = 2.0 * std::numbers::pi * s / (segments * 3.0);
            double r = 0.18 + 0.08 * rng.uniform() + 0.1 * idx;
            pts.push_back(static_cast<float>(0.5 + r * std::cos(a)));
            pts.push_back(static_cast<float>(0.5 + r * std::sin(a)));
        }
        return pts;
    };
    std::vector<float> base_pts = make_path(0);
    std::vector<float> base_color = {rng.uniform(), rng.uniform(), rng.uniform(), 0.9f};
    std::vector<float> base_tr = {0.05f * (rng.uniform() - 0.5f), 0.05f * (rng.uniform() - 0.5f),
                                  0.2f * rng.uniform(), 1.0f, 1.0f};
    std::vector<float> weights(static_cast<size_t>(cfg.canvas) * cfg.canvas * 3);
    for (float& w : weights) w = rng.uniform() - 0.5f;

    auto forward = [&](const std::vector<float>& pts, const std::vector<float>& color,
                       const std::vector<float>& tr) {
        Tensor pt = Tensor::from(pts, {static_cast<int64_t>(pts.size() / 2), 2}, true);
        Tensor ct = Tensor::from(color, {1, 4}, true);
        Tensor tt = Tensor::from(tr, {1, 5}, true);
        Tensor world = transform_points(pt, tt);
        RenderOut out = render_raw_paths({world}, {ct}, cfg, 8);
        Tensor hwc = planes_to_hwc(out.planes, cfg.canvas);
        Tensor loss = ad::sum(ad::mul(hwc, Tensor::from(weights, hwc.shape())));
        return std::tuple<Tensor, Tensor, Tensor, Tensor>(loss, pt, ct, tt);
    };

    auto [loss, pt, ct, tt] = forward(base_pts, base_color, base_tr);
    ad::backward(loss);

    GradientCheckReport report;
    auto fd_check = [&](std::vector<float> base, int index, int which, float h) {
        auto eval = [&](float delta) {
            std::vector<float> v = base;
            v[index] += delta;
            ad::NoGradGuard ng;
            auto [l2, a, b, c] =
                forward(which == 0 ? v : base_pts, which == 1 ? v : base_color,
                        which == 2 ? v : base_tr);
            return static_cast<double>(l2.item());
        };
        double fd = (eval(h) - eval(-h)) / (2.0 * h);
        double analytic = which == 0 ? pt.grad()[index] : (which == 1 ? ct.grad()[index] : tt.grad()[index]);
        double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-2});
        return std::fabs(fd - analytic) / denom;
    };

    // compositing is linear in color, so a large FD step is exact and keeps
    // float cancellation noise out of the quotient
    for (int k = 0; k < 4; ++k)
        report.max_rel_color = std::max(report.max_rel_color, fd_check(base_color, k, 1, 5e-2f));
    for (int k = 0; k < 2; ++k)
        report.max_rel_translation =
            std::max(report.max_rel_translation, fd_check(base_tr, k, 2, 2e-4f));
    for (size_t k = 0; k < base_pts.size(); k += 5)
        report.max_rel_points =
            std::max(report.max_rel_points, fd_check(base_pts, static_cast<int>(k), 0, 2e-4f));
    return report;
}

}  // namespace t2v::render
