#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "t2v/geometry.hpp"
#include "t2v/util.hpp"

namespace t2v::raster {

using geom::BezierPath;
using geom::Mask;
using geom::Vec2;

// ---------------------------------------------------------------------------
// RasterImage: H x W x 3, values in [0,1], white background pre-composited.
// ---------------------------------------------------------------------------
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;  // row-major, 3 floats per pixel

    static RasterImage white(int w, int h) {
        RasterImage img;
        img.width = w;
        img.height = h;
        img.rgb.assign(static_cast<size_t>(w) * h * 3, 1.0f);
        return img;
    }

    float* pixel(int x, int y) { return &rgb[(static_cast<size_t>(y) * width + x) * 3]; }
    const float* pixel(int x, int y) const { return &rgb[(static_cast<size_t>(y) * width + x) * 3]; }
};

// ---------------------------------------------------------------------------
// Exact-coverage scanline fill (nonzero winding), 4 sub-scanlines per pixel
// row with analytic horizontal span coverage. Input polygon is in canvas
// units [0,1]; output is per-pixel coverage in [0,1].
// ---------------------------------------------------------------------------
inline std::vector<float> polygon_coverage_scanline(const std::vector<Vec2>& poly, int width, int height) {
    std::vector<float> cov(static_cast<size_t>(width) * height, 0.0f);
    size_t n = poly.size();
    if (n < 3) return cov;

    constexpr int kSubRows = 4;
    const double sub_weight = 1.0 / kSubRows;

    struct Hit {
        double x;
        int dir;
    };
    std::vector<Hit> hits;
    hits.reserve(16);

    for (int j = 0; j < height; ++j) {
        for (int k = 0; k < kSubRows; ++k) {
            double y = (static_cast<double>(j) + (k + 0.5) / kSubRows) / height;
            hits.clear();
            for (size_t i = 0; i < n; ++i) {
                Vec2 p = poly[i];
                Vec2 q = poly[(i + 1) % n];
                if (p.y == q.y) continue;
                // half-open rule avoids double counting at shared vertices
                bool up = p.y <= y && y < q.y;
                bool down = q.y <= y && y < p.y;
                if (!up && !down) continue;
                double t = (y - p.y) / (q.y - p.y);
                hits.push_back({p.x + t * (q.x - p.x), up ? 1 : -1});
            }
            if (hits.empty()) continue;
            std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.x < b.x; });
            int winding = 0;
            double span_start = 0.0;
            for (const Hit& h : hits) {
                int prev = winding;
                winding += h.dir;
                if (prev == 0 && winding != 0) {
                    span_start = h.x;
                } else if (prev != 0 && winding == 0) {
                    double x0 = std::clamp(span_start, 0.0, 1.0) * width;
                    double x1 = std::clamp(h.x, 0.0, 1.0) * width;
                    if (x1 <= x0) continue;
                    int i0 = static_cast<int>(x0);
                    int i1 = std::min(static_cast<int>(x1), width - 1);
                    for (int i = i0; i <= i1; ++i) {
                        double lo = std::max(x0, static_cast<double>(i));
                        double hi = std::min(x1, static_cast<double>(i + 1));
                        if (hi > lo)
                            cov[static_cast<size_t>(j) * width + i] +=
                                static_cast<float>((hi - lo) * sub_weight);
                    }
                }
            }
        }
    }
    for (float& c : cov) c = std::min(c, 1.0f);
    return cov;
}

inline std::vector<float> path_coverage_scanline(const BezierPath& path, int width, int height,
                                                 int samples_per_segment = geom::kDensifySamplesPerSegment) {
    return polygon_coverage_scanline(geom::densify(path, samples_per_segment), width, height);
}

inline Mask coverage_to_mask(const std::vector<float>& cov, int width, int height, float threshold = 0.5f) {
    Mask m = geom::make_mask(width, height);
    for (size_t i = 0; i < cov.size(); ++i) m.on[i] = cov[i] >= threshold ? 1 : 0;
    return m;
}

inline Mask path_mask(const BezierPath& path, int width, int height) {
    return coverage_to_mask(path_coverage_scanline(path, width, height), width, height);
}

// Filled dark shape on a white canvas, single channel. This is the polarity
// the VAE image branch trains on.
inline std::vector<float> rasterize_shape_gray(const BezierPath& path, int size) {
    std::vector<float> cov = path_coverage_scanline(path, size, size);
    std::vector<float> img(cov.size());
    for (size_t i = 0; i < cov.size(); ++i) img[i] = 1.0f - cov[i];
    return img;
}

// ---------------------------------------------------------------------------
// Plain (non-differentiable) compositing over white, back-to-front.
// ---------------------------------------------------------------------------
struct FlatPath {
    BezierPath path;           // canvas units
    float rgba[4] = {0, 0, 0, 1};
};

inline RasterImage composite_scanline(const std::vector<FlatPath>& paths, int width, int height,
                                      int samples_per_segment = geom::kDensifySamplesPerSegment) {
    RasterImage img = RasterImage::white(width, height);
    for (const FlatPath& fp : paths) {
        std::vector<float> cov = path_coverage_scanline(fp.path, width, height, samples_per_segment);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                float a = cov[static_cast<size_t>(y) * width + x] * fp.rgba[3];
                if (a <= 0.0f) continue;
                float* px = img.pixel(x, y);
                for (int c = 0; c < 3; ++c) px[c] = fp.rgba[c] * a + px[c] * (1.0f - a);
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Image utilities shared by the stage-2 pipeline and metrics.
// ---------------------------------------------------------------------------
inline std::vector<float> distance_from_white(const RasterImage& img) {
    size_t n = static_cast<size_t>(img.width) * img.height;
    std::vector<float> d(n);
    for (size_t i = 0; i < n; ++i) {
        const float* px = &img.rgb[i * 3];
        float dx = 1.0f - px[0], dy = 1.0f - px[1], dz = 1.0f - px[2];
        d[i] = std::sqrt((dx * dx + dy * dy + dz * dz) / 3.0f);
    }
    return d;
}

inline std::vector<float> median_filter_3x3(const std::vector<float>& src, int width, int height) {
    std::vector<float> out(src.size());
    float window[9];
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            int k = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    int xx = std::clamp(x + dx, 0, width - 1);
                    int yy = std::clamp(y + dy, 0, height - 1);
                    window[k++] = src[static_cast<size_t>(yy) * width + xx];
                }
            }
            std::nth_element(window, window + 4, window + 9);
            out[static_cast<size_t>(y) * width + x] = window[4];
        }
    }
    return out;
}

// Foreground = pixels whose median-filtered distance from white exceeds the
// threshold (16/255 by default).
inline Mask foreground_mask(const RasterImage& img, float threshold = 16.0f / 255.0f) {
    std::vector<float> d = median_filter_3x3(distance_from_white(img), img.width, img.height);
    Mask m = geom::make_mask(img.width, img.height);
    for (size_t i = 0; i < d.size(); ++i) m.on[i] = d[i] > threshold ? 1 : 0;
    return m;
}

inline float image_l1(const RasterImage& a, const RasterImage& b) {
    if (a.width != b.width || a.height != b.height) throw ArgumentError("image_l1: size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i) acc += std::fabs(static_cast<double>(a.rgb[i]) - b.rgb[i]);
    return static_cast<float>(acc / a.rgb.size());
}

}  // namespace t2v::raster
