#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "t2v/util.hpp"

namespace t2v::geom {

// Geometry runs in double; float32 is reserved for the tensor/NN layer.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(Vec2 o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::sqrt(x * x + y * y); }
    double norm_sq() const { return x * x + y * y; }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

using PointSet = std::vector<Vec2>;

// ---------------------------------------------------------------------------
// Affine transforms
//
// The optimizable parametrization is (translation, rotation, anisotropic
// scale), applied about the canvas center (0.5, 0.5): scale, then rotate,
// then translate. Its exact inverse is not expressible in the same five
// parameters when rotation meets anisotropic scale, so the inverse is a
// general 2x3 matrix.
// ---------------------------------------------------------------------------
struct Affine2x3 {
    // p' = [a b; c d] * p + [e; f]
    double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

    Vec2 apply(Vec2 p) const { return {a * p.x + b * p.y + e, c * p.x + d * p.y + f}; }

    Affine2x3 then(const Affine2x3& o) const {
        // o applied after *this
        return {o.a * a + o.b * c, o.a * b + o.b * d,
                o.c * a + o.d * c, o.c * b + o.d * d,
                o.a * e + o.b * f + o.e, o.c * e + o.d * f + o.f};
    }

    Affine2x3 inverse() const {
        double det = a * d - b * c;
        if (std::fabs(det) < 1e-30) throw ArgumentError("singular affine transform");
        double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;
        return {ia, ib, ic, id, -(ia * e + ib * f), -(ic * e + id * f)};
    }

    static Affine2x3 identity() { return {}; }
    static Affine2x3 translation(double tx, double ty) { return {1, 0, 0, 1, tx, ty}; }
    static Affine2x3 scaling(double sx, double sy) { return {sx, 0, 0, sy, 0, 0}; }
    static Affine2x3 rotation(double rad) {
        double cs = std::cos(rad), sn = std::sin(rad);
        return {cs, -sn, sn, cs, 0, 0};
    }
};

inline constexpr Vec2 kTransformCenter{0.5, 0.5};

struct AffineTransform {
    double tx = 0.0;
    double ty = 0.0;
    double rotation = 0.0;  // radians
    double sx = 1.0;
    double sy = 1.0;

    static AffineTransform identity() { return {}; }

    void check() const {
        if (!(sx > 0.0) || !(sy > 0.0)) throw ArgumentError("transform scale must be positive");
    }

    // scale -> rotate about canvas center -> translate
    Affine2x3 matrix() const {
        check();
        return Affine2x3::translation(-kTransformCenter.x, -kTransformCenter.y)
            .then(Affine2x3::scaling(sx, sy))
            .then(Affine2x3::rotation(rotation))
            .then(Affine2x3::translation(kTransformCenter.x + tx, kTransformCenter.y + ty));
    }

    Affine2x3 inverse_matrix() const { return matrix().inverse(); }

    Vec2 apply(Vec2 p) const { return matrix().apply(p); }
};

// ---------------------------------------------------------------------------
// BezierPath: end-to-end cubic segments. `points` holds only the valid
// entries; zero-padding to capacity happens at the dataset boundary.
// ---------------------------------------------------------------------------
struct BezierPath {
    static constexpr int kMaxPoints = 50;

    std::vector<Vec2> points;
    bool closed = false;

    int length() const { return static_cast<int>(points.size()); }

    int segment_count() const {
        int len = length();
        if (closed) return len / 3;
        return (len - 1) / 3;
    }

    // (p0,p1,p2,p3) of segment i; closed paths wrap the final endpoint.
    std::array<Vec2, 4> segment(int i) const {
        int base = 3 * i;
        int len = length();
        return {points[base], points[base + 1], points[base + 2], points[(base + 3) % len]};
    }

    void validate(bool require_unit_range = false) const {
        int len = length();
        if (len < 4 || len > kMaxPoints)
            throw StructuralError("path length " + std::to_string(len) + " outside [4, 50]");
        if (closed) {
            if (len % 3 != 0) throw StructuralError("closed path length must be divisible by 3");
        } else {
            if ((len - 1) % 3 != 0) throw StructuralError("open path length must be 3s+1");
        }
        for (const Vec2& p : points) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y))
                throw StructuralError("non-finite control point");
            if (require_unit_range) {
                const double eps = 1e-4;
                if (p.x < -eps || p.x > 1.0 + eps || p.y < -eps || p.y > 1.0 + eps)
                    throw StructuralError("control point outside [0,1]");
            }
        }
    }

    bool is_valid(bool require_unit_range = false) const {
        try {
            validate(require_unit_range);
            return true;
        } catch (const StructuralError&) {
            return false;
        }
    }

    BezierPath reversed() const {
        BezierPath out;
        out.closed = closed;
        out.points = points;
        if (closed) {
            std::reverse(out.points.begin() + 1, out.points.end());
        } else {
            std::reverse(out.points.begin(), out.points.end());
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Cubic Bezier evaluation
// ---------------------------------------------------------------------------
inline Vec2 evaluate_segment(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double t) {
    double u = 1.0 - t;
    double b0 = u * u * u;
    double b1 = 3.0 * u * u * t;
    double b2 = 3.0 * u * t * t;
    double b3 = t * t * t;
    return {b0 * p0.x + b1 * p1.x + b2 * p2.x + b3 * p3.x,
            b0 * p0.y + b1 * p1.y + b2 * p2.y + b3 * p3.y};
}

inline Vec2 segment_derivative(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double t) {
    double u = 1.0 - t;
    return 3.0 * u * u * (p1 - p0) + 6.0 * u * t * (p2 - p1) + 3.0 * t * t * (p3 - p2);
}

inline Vec2 segment_second_derivative(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double t) {
    double u = 1.0 - t;
    return 6.0 * u * (p2 - 2.0 * p1 + p0) + 6.0 * t * (p3 - 2.0 * p2 + p1);
}

// ---------------------------------------------------------------------------
// Auxiliary point sampling: n interior samples per segment at t = j/(n+1)
// plus every segment endpoint exactly once.
// ---------------------------------------------------------------------------
inline PointSet sample_auxiliary_points(const BezierPath& path, int n) {
    path.validate();
    if (n < 1) throw ArgumentError("auxiliary sample count must be >= 1");
    int s = path.segment_count();
    PointSet out;
    out.reserve(static_cast<size_t>(s) * (n + 1) + 1);
    for (int i = 0; i < s; ++i) {
        auto [p0, p1, p2, p3] = path.segment(i);
        out.push_back(p0);
        for (int j = 1; j <= n; ++j) {
            double t = static_cast<double>(j) / static_cast<double>(n + 1);
            out.push_back(evaluate_segment(p0, p1, p2, p3, t));
        }
    }
    if (!path.closed) out.push_back(path.points.back());
    return out;
}

// ---------------------------------------------------------------------------
// Chamfer distance: mean nearest-neighbor distance in both directions.
// Plain Euclidean; flip to squared via the constant below if ever needed.
// ---------------------------------------------------------------------------
inline constexpr bool kChamferSquared = false;

inline double chamfer_distance(const PointSet& a, const PointSet& b) {
    if (a.empty() || b.empty()) throw ArgumentError("chamfer distance of empty point set");
    auto one_way = [](const PointSet& from, const PointSet& to) {
        double acc = 0.0;
        for (const Vec2& p : from) {
            double best = std::numeric_limits<double>::max();
            for (const Vec2& q : to) best = std::min(best, (p - q).norm_sq());
            acc += kChamferSquared ? best : std::sqrt(best);
        }
        return acc / static_cast<double>(from.size());
    };
    return one_way(a, b) + one_way(b, a);
}

// ---------------------------------------------------------------------------
// Signed curvature profile, uniformly spaced t within each segment.
// ---------------------------------------------------------------------------
inline constexpr double kSpeedEpsilon = 1e-6;

inline std::vector<double> curvature_profile(const BezierPath& path, int samples_per_segment) {
    path.validate();
    if (samples_per_segment < 2) throw ArgumentError("need >= 2 curvature samples per segment");
    int s = path.segment_count();
    std::vector<double> out;
    out.reserve(static_cast<size_t>(s) * samples_per_segment);
    for (int i = 0; i < s; ++i) {
        auto [p0, p1, p2, p3] = path.segment(i);
        for (int j = 0; j < samples_per_segment; ++j) {
            double t = static_cast<double>(j) / static_cast<double>(samples_per_segment - 1);
            Vec2 d1 = segment_derivative(p0, p1, p2, p3, t);
            Vec2 d2 = segment_second_derivative(p0, p1, p2, p3, t);
            double speed_sq = d1.norm_sq();
            if (speed_sq < kSpeedEpsilon * kSpeedEpsilon) {
                out.push_back(0.0);
            } else {
                out.push_back(d1.cross(d2) / (speed_sq * std::sqrt(speed_sq)));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Densification and area
// ---------------------------------------------------------------------------
inline constexpr int kDensifySamplesPerSegment = 64;

// Polyline of the path boundary; for closed paths the start point is not
// repeated at the end.
inline std::vector<Vec2> densify(const BezierPath& path, int samples_per_segment = kDensifySamplesPerSegment) {
    path.validate();
    if (samples_per_segment < 1) throw ArgumentError("samples_per_segment must be >= 1");
    int s = path.segment_count();
    std::vector<Vec2> out;
    out.reserve(static_cast<size_t>(s) * samples_per_segment + 1);
    for (int i = 0; i < s; ++i) {
        auto [p0, p1, p2, p3] = path.segment(i);
        for (int j = 0; j < samples_per_segment; ++j) {
            double t = static_cast<double>(j) / static_cast<double>(samples_per_segment);
            out.push_back(evaluate_segment(p0, p1, p2, p3, t));
        }
    }
    if (!path.closed) out.push_back(path.points.back());
    return out;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
    double acc = 0.0;
    size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    return std::fabs(acc) * 0.5;
}

inline double path_area(const BezierPath& path) {
    path.validate();
    if (!path.closed) throw ArgumentError("path_area requires a closed path");
    return polygon_area(densify(path));
}

// ---------------------------------------------------------------------------
// Transform application
// ---------------------------------------------------------------------------
inline BezierPath apply_transform(const BezierPath& path, const Affine2x3& m) {
    path.validate();
    BezierPath out;
    out.closed = path.closed;
    out.points.reserve(path.points.size());
    for (Vec2 p : path.points) out.points.push_back(m.apply(p));
    return out;
}

inline BezierPath apply_transform(const BezierPath& path, const AffineTransform& tr) {
    return apply_transform(path, tr.matrix());
}

// ---------------------------------------------------------------------------
// Binary raster mask helpers
// ---------------------------------------------------------------------------
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> on;  // row-major, 0/1

    bool at(int x, int y) const { return on[static_cast<size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { on[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
    int64_t count() const {
        int64_t c = 0;
        for (uint8_t v : on) c += v;
        return c;
    }
};

inline Mask make_mask(int width, int height) {
    Mask m;
    m.width = width;
    m.height = height;
    m.on.assign(static_cast<size_t>(width) * height, 0);
    return m;
}

inline int64_t mask_overlap(const Mask& a, const Mask& b) {
    if (a.width != b.width || a.height != b.height)
        throw ArgumentError("mask_overlap: raster dimensions differ");
    int64_t c = 0;
    for (size_t i = 0; i < a.on.size(); ++i) c += (a.on[i] & b.on[i]);
    return c;
}

inline Mask mask_union(const Mask& a, const Mask& b) {
    if (a.width != b.width || a.height != b.height)
        throw ArgumentError("mask_union: raster dimensions differ");
    Mask out = a;
    for (size_t i = 0; i < out.on.size(); ++i) out.on[i] = (a.on[i] | b.on[i]);
    return out;
}

}  // namespace t2v::geom
