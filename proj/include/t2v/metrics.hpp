#pragma once

// Vector-level, image-level, and text-level evaluation.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2v/features.hpp"
#include "t2v/geometry.hpp"
#include "t2v/raster.hpp"
#include "t2v/svg_io.hpp"
#include "t2v/util.hpp"

namespace t2v::metrics {

using geom::BezierPath;
using raster::RasterImage;

// ---------------------------------------------------------------------------
// smoothness: inverse of the average curvature variation. Per sample pair,
// the variation is |dkappa| * mean arclength step, which keeps the score
// invariant under uniform scaling (kappa ~ 1/s, ds ~ s).
// ---------------------------------------------------------------------------
inline constexpr int kCurvatureSamplesPerSegment = 64;

inline double curvature_variation(const BezierPath& path) {
    std::vector<double> kappa = geom::curvature_profile(path, kCurvatureSamplesPerSegment);
    if (kappa.size() < 2) return 0.0;
    std::vector<geom::Vec2> poly = geom::densify(path, kCurvatureSamplesPerSegment);
    double arc = 0.0;
    for (size_t i = 0; i + 1 < poly.size(); ++i) arc += (poly[i + 1] - poly[i]).norm();
    if (path.closed) arc += (poly.front() - poly.back()).norm();
    double mean_step = arc / static_cast<double>(kappa.size());
    double acc = 0.0;
    for (size_t i = 0; i + 1 < kappa.size(); ++i) acc += std::fabs(kappa[i + 1] - kappa[i]);
    return acc / static_cast<double>(kappa.size() - 1) * mean_step;
}

inline double smoothness(const svg::SvgDocument& doc) {
    if (doc.entries.empty()) throw ArgumentError("smoothness needs at least one path");
    double total = 0.0;
    int counted = 0;
    for (const svg::SvgEntry& e : doc.entries) {
        if (!e.path.is_valid()) continue;
        total += curvature_variation(e.path);
        ++counted;
    }
    if (counted == 0) throw ArgumentError("smoothness: no valid paths");
    return 1.0 / (1.0 + total / static_cast<double>(counted));
}

// ---------------------------------------------------------------------------
// simplicity: the path count
// ---------------------------------------------------------------------------
inline int64_t simplicity(const svg::SvgDocument& doc) {
    return static_cast<int64_t>(doc.entries.size());
}

// ---------------------------------------------------------------------------
// layer-wise semantics: similarity drop after removing 30% of the paths
// ---------------------------------------------------------------------------
inline constexpr int kMetricsRenderSize = 256;

inline RasterImage render_document(const svg::SvgDocument& doc, int size = kMetricsRenderSize,
                                   const std::vector<uint8_t>* keep = nullptr) {
    std::vector<raster::FlatPath> flats;
    for (size_t i = 0; i < doc.entries.size(); ++i) {
        if (keep && !(*keep)[i]) continue;
        const svg::SvgEntry& e = doc.entries[i];
        if (!e.path.is_valid()) continue;
        raster::FlatPath fp;
        fp.path = svg::to_unit_canvas(e.path, doc.width, doc.height);
        fp.rgba[0] = e.rgba[0];
        fp.rgba[1] = e.rgba[1];
        fp.rgba[2] = e.rgba[2];
        fp.rgba[3] = e.rgba[3] * e.opacity;
        flats.push_back(std::move(fp));
    }
    return raster::composite_scanline(flats, size, size, 24);
}

struct MetricValue {
    double value = 0.0;
    bool skipped = false;
    std::string backend;
};

inline std::unique_ptr<features::TextImageBackend> make_text_image_backend(
    const std::string& id, const RasterImage* reference = nullptr) {
    if (id == "pixel") {
        if (reference) return std::make_unique<features::ReferenceSimilarity>(*reference);
        return std::make_unique<features::PixelBackend>();
    }
    return nullptr;  // unknown/unavailable: callers mark the metric skipped
}

inline MetricValue layer_semantics(const svg::SvgDocument& doc, const std::string& prompt,
                                   const std::string& backend_id, int trials = 10, double drop = 0.3,
                                   uint64_t seed = 0) {
    if (doc.entries.empty()) throw ArgumentError("layer_semantics needs at least one path");
    RasterImage full = render_document(doc);
    std::unique_ptr<features::TextImageBackend> backend = make_text_image_backend(backend_id, &full);
    if (!backend) return {0.0, true, backend_id};

    size_t n = doc.entries.size();
    auto drop_count = static_cast<size_t>(std::ceil(drop * static_cast<double>(n)));
    double sim_full = backend->similarity(prompt, full);
    Rng rng(seed, 0x3E3A);
    double acc = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<uint8_t> keep(n, 1);
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(static_cast<uint32_t>(i))]);
        for (size_t k = 0; k < drop_count && k < n; ++k) keep[order[k]] = 0;
        RasterImage dropped = render_document(doc, kMetricsRenderSize, &keep);
        acc += sim_full - backend->similarity(prompt, dropped);
    }
    return {acc / static_cast<double>(trials), false, backend->id()};
}

// ---------------------------------------------------------------------------
// FID over backend features, and text-image cosine similarity
// ---------------------------------------------------------------------------
inline double frechet_distance(const std::vector<std::vector<float>>& fa,
                               const std::vector<std::vector<float>>& fb) {
    if (fa.size() < 2 || fb.size() < 2)
        throw MetricError("FID needs at least two samples per side");
    const int64_t d = static_cast<int64_t>(fa[0].size());
    auto fit = [&](const std::vector<std::vector<float>>& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
        const int64_t n = static_cast<int64_t>(f.size());
        Eigen::MatrixXd X(n, d);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < d; ++j) X(i, j) = f[i][j];
        mu = X.colwise().mean();
        Eigen::MatrixXd centered = X.rowwise() - mu.transpose();
        cov = centered.transpose() * centered / static_cast<double>(n - 1);
    };
    Eigen::VectorXd mu1, mu2;
    Eigen::MatrixXd s1, s2;
    fit(fa, mu1, s1);
    fit(fb, mu2, s2);

    auto sqrtm = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
    };
    Eigen::MatrixXd s1_half = sqrtm(s1);
    Eigen::MatrixXd covmean = sqrtm(s1_half * s2 * s1_half);
    double dist = (mu1 - mu2).squaredNorm() + (s1 + s2 - 2.0 * covmean).trace();
    return std::max(0.0, dist);
}

inline double fid(const std::vector<const RasterImage*>& report_set,
                  const std::vector<const RasterImage*>& reference_set,
                  const features::TextImageBackend& backend) {
    auto extract = [&](const std::vector<const RasterImage*>& imgs) {
        std::vector<std::vector<float>> f;
        f.reserve(imgs.size());
        for (const RasterImage* img : imgs) f.push_back(backend.image_features(*img));
        return f;
    };
    return frechet_distance(extract(report_set), extract(reference_set));
}

inline double clip_similarity(const std::string& prompt, const RasterImage& image,
                              const features::TextImageBackend& backend) {
    return backend.similarity(prompt, image);
}

// ---------------------------------------------------------------------------
// corpus report
// ---------------------------------------------------------------------------
struct EvalOptions {
    std::string backend_id = "pixel";
    int trials = 10;
    double drop = 0.3;
    uint64_t seed = 0;
};

inline nlohmann::json evaluate_document(const svg::SvgDocument& doc, const std::string& prompt,
                                        const EvalOptions& opt) {
    nlohmann::json item;
    item["smoothness"] = smoothness(doc);
    item["simplicity"] = simplicity(doc);
    MetricValue sem = layer_semantics(doc, prompt, opt.backend_id, opt.trials, opt.drop, opt.seed);
    if (sem.skipped) {
        item["layer_semantics"] = nullptr;
        item["layer_semantics_skipped"] = true;
    } else {
        item["layer_semantics"] = sem.value;
    }
    item["backend"] = opt.backend_id;
    return item;
}

}  // namespace t2v::metrics
