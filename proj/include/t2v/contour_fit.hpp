#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "t2v/geometry.hpp"
#include "t2v/util.hpp"

namespace t2v::geom {

// ---------------------------------------------------------------------------
// Boundary tracing. Walks the cracks between on- and off-pixels of the
// largest 4-connected component, so the traced polygon's area equals the
// component's exact pixel count. Corners are emitted in pixel units.
// ---------------------------------------------------------------------------
inline std::vector<Vec2> trace_largest_contour(const Mask& mask) {
    int w = mask.width, h = mask.height;
    std::vector<int32_t> label(static_cast<size_t>(w) * h, -1);
    int best_label = -1;
    int64_t best_size = 0;
    int best_start = -1;
    int next_label = 0;
    std::vector<int> stack;
    for (int idx = 0; idx < w * h; ++idx) {
        if (!mask.on[idx] || label[idx] >= 0) continue;
        int64_t size = 0;
        stack.assign(1, idx);
        label[idx] = next_label;
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            ++size;
            int x = cur % w, y = cur / w;
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
                int ni = ny[k] * w + nx[k];
                if (mask.on[ni] && label[ni] < 0) {
                    label[ni] = next_label;
                    stack.push_back(ni);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best_label = next_label;
            best_start = idx;
        }
        ++next_label;
    }
    if (best_label < 0) return {};

    auto inside = [&](int cx, int cy) {
        return cx >= 0 && cx < w && cy >= 0 && cy < h &&
               label[static_cast<size_t>(cy) * w + cx] == best_label;
    };
    // cells adjacent to the directed edge leaving corner (x,y) with direction d
    auto right_cell = [&](int x, int y, int dx, int dy, int& cx, int& cy) {
        if (dx == 1) { cx = x; cy = y; }
        else if (dx == -1) { cx = x - 1; cy = y - 1; }
        else if (dy == 1) { cx = x - 1; cy = y; }
        else { cx = x; cy = y - 1; }
    };
    auto left_cell = [&](int x, int y, int dx, int dy, int& cx, int& cy) {
        if (dx == 1) { cx = x; cy = y - 1; }
        else if (dx == -1) { cx = x - 1; cy = y; }
        else if (dy == 1) { cx = x; cy = y; }
        else { cx = x - 1; cy = y - 1; }
    };
    auto boundary_edge = [&](int x, int y, int dx, int dy) {
        int rx, ry, lx, ly;
        right_cell(x, y, dx, dy, rx, ry);
        left_cell(x, y, dx, dy, lx, ly);
        return inside(rx, ry) && !inside(lx, ly);
    };

    int sx = best_start % w, sy = best_start / w;
    // top-left corner of the topmost-leftmost pixel, walking +x keeps the
    // region on the right
    int x = sx, y = sy, dx = 1, dy = 0;
    std::vector<Vec2> contour;
    int64_t guard = 4 * static_cast<int64_t>(w + 2) * (h + 2) + 16;
    do {
        contour.push_back({static_cast<double>(x), static_cast<double>(y)});
        x += dx;
        y += dy;
        // prefer turning right (toward the region), then straight, then left
        int cand[3][2] = {{-dy, dx}, {dx, dy}, {dy, -dx}};
        bool moved = false;
        for (auto& c : cand) {
            if (boundary_edge(x, y, c[0], c[1])) {
                dx = c[0];
                dy = c[1];
                moved = true;
                break;
            }
        }
        if (!moved) {
            dx = -dx;
            dy = -dy;  // dead end (single pixel), turn back
        }
    } while ((x != sx || y != sy || dx != 1 || dy != 0) && guard-- > 0);
    return contour;
}

// ---------------------------------------------------------------------------
// Iterative least-squares cubic fitting with corner splitting, capped at
// max_points: detect corners on the polyline, fit each corner-to-corner
// section independently, grow the tolerance until the point cap is honored.
// ---------------------------------------------------------------------------
namespace detail {

struct CubicSeg {
    Vec2 p[4];
};

inline Vec2 normalize_or_zero(Vec2 v) {
    double n = v.norm();
    if (n < 1e-12) return {0, 0};
    return {v.x / n, v.y / n};
}

inline Vec2 bezier_point(const CubicSeg& s, double t) {
    return evaluate_segment(s.p[0], s.p[1], s.p[2], s.p[3], t);
}

inline void chord_length_params(const std::vector<Vec2>& d, int first, int last, std::vector<double>& u) {
    u.assign(last - first + 1, 0.0);
    for (int i = first + 1; i <= last; ++i)
        u[i - first] = u[i - first - 1] + (d[i] - d[i - 1]).norm();
    double total = u.back();
    if (total < 1e-12) total = 1.0;
    for (double& v : u) v /= total;
}

inline CubicSeg generate_bezier(const std::vector<Vec2>& d, int first, int last,
                                const std::vector<double>& u, Vec2 t1, Vec2 t2) {
    int n = last - first + 1;
    CubicSeg seg;
    seg.p[0] = d[first];
    seg.p[3] = d[last];

    double c00 = 0, c01 = 0, c11 = 0, x0 = 0, x1 = 0;
    for (int i = 0; i < n; ++i) {
        double t = u[i], om = 1.0 - t;
        double b0 = om * om * om, b1 = 3 * om * om * t, b2 = 3 * om * t * t, b3 = t * t * t;
        Vec2 a0 = t1 * b1;
        Vec2 a1 = t2 * b2;
        Vec2 tmp = d[first + i] - (d[first] * (b0 + b1) + d[last] * (b2 + b3));
        c00 += a0.dot(a0);
        c01 += a0.dot(a1);
        c11 += a1.dot(a1);
        x0 += a0.dot(tmp);
        x1 += a1.dot(tmp);
    }
    double det = c00 * c11 - c01 * c01;
    double alpha1 = 0, alpha2 = 0;
    if (std::fabs(det) > 1e-12) {
        alpha1 = (c11 * x0 - c01 * x1) / det;
        alpha2 = (c00 * x1 - c01 * x0) / det;
    }
    double seg_len = (d[last] - d[first]).norm();
    if (seg_len < 1e-12) seg_len = 1.0;
    double fallback = seg_len / 3.0;
    if (alpha1 <= 1e-6 * seg_len || alpha2 <= 1e-6 * seg_len || !std::isfinite(alpha1) ||
        !std::isfinite(alpha2)) {
        alpha1 = alpha2 = fallback;
    }
    seg.p[1] = seg.p[0] + t1 * alpha1;
    seg.p[2] = seg.p[3] + t2 * alpha2;
    return seg;
}

inline double max_fit_error(const std::vector<Vec2>& d, int first, int last, const CubicSeg& seg,
                            const std::vector<double>& u, int& split_index) {
    double max_err = 0.0;
    split_index = (first + last) / 2;
    for (int i = first + 1; i < last; ++i) {
        Vec2 p = bezier_point(seg, u[i - first]);
        double err = (p - d[i]).norm_sq();
        if (err > max_err) {
            max_err = err;
            split_index = i;
        }
    }
    return std::sqrt(max_err);
}

inline void reparameterize(const std::vector<Vec2>& d, int first, int last, const CubicSeg& seg,
                           std::vector<double>& u) {
    for (int i = 0; i <= last - first; ++i) {
        double t = u[i];
        Vec2 q = bezier_point(seg, t);
        Vec2 q1 = segment_derivative(seg.p[0], seg.p[1], seg.p[2], seg.p[3], t);
        Vec2 q2 = segment_second_derivative(seg.p[0], seg.p[1], seg.p[2], seg.p[3], t);
        Vec2 diff = q - d[first + i];
        double num = diff.dot(q1);
        double den = q1.dot(q1) + diff.dot(q2);
        if (std::fabs(den) > 1e-12) u[i] = std::clamp(t - num / den, 0.0, 1.0);
    }
}

inline void fit_cubic_rec(const std::vector<Vec2>& d, int first, int last, Vec2 t1, Vec2 t2,
                          double tol, int depth, std::vector<CubicSeg>& out) {
    if (last - first == 1) {
        CubicSeg seg;
        seg.p[0] = d[first];
        seg.p[3] = d[last];
        double len3 = (d[last] - d[first]).norm() / 3.0;
        seg.p[1] = seg.p[0] + t1 * len3;
        seg.p[2] = seg.p[3] + t2 * len3;
        out.push_back(seg);
        return;
    }
    std::vector<double> u;
    chord_length_params(d, first, last, u);
    CubicSeg seg = generate_bezier(d, first, last, u, t1, t2);
    int split = 0;
    double err = max_fit_error(d, first, last, seg, u, split);
    if (err < tol || depth > 24) {
        out.push_back(seg);
        return;
    }
    for (int iter = 0; iter < 4; ++iter) {
        reparameterize(d, first, last, seg, u);
        seg = generate_bezier(d, first, last, u, t1, t2);
        err = max_fit_error(d, first, last, seg, u, split);
        if (err < tol) {
            out.push_back(seg);
            return;
        }
    }
    split = std::clamp(split, first + 1, last - 1);
    Vec2 center_tangent = normalize_or_zero(d[split - 1] - d[split + 1]);
    if (center_tangent.norm_sq() < 0.5)
        center_tangent = normalize_or_zero(d[split - 1] - d[split]);
    fit_cubic_rec(d, first, split, t1, center_tangent, tol, depth + 1, out);
    fit_cubic_rec(d, split, last, center_tangent * -1.0, t2, tol, depth + 1, out);
}

inline void split_segment(const CubicSeg& s, CubicSeg& a, CubicSeg& b) {
    // de Casteljau at t = 0.5
    Vec2 p01 = (s.p[0] + s.p[1]) * 0.5;
    Vec2 p12 = (s.p[1] + s.p[2]) * 0.5;
    Vec2 p23 = (s.p[2] + s.p[3]) * 0.5;
    Vec2 p012 = (p01 + p12) * 0.5;
    Vec2 p123 = (p12 + p23) * 0.5;
    Vec2 mid = (p012 + p123) * 0.5;
    a = {{s.p[0], p01, p012, mid}};
    b = {{mid, p123, p23, s.p[3]}};
}

// Tangent at the first point of a polyline, from the parabola through the
// first three samples; falls back to the one-sided chord.
inline Vec2 estimate_start_tangent(const std::vector<Vec2>& pts) {
    if (pts.size() < 3) return normalize_or_zero(pts[1] - pts[0]);
    double u1 = (pts[1] - pts[0]).norm();
    double u2 = u1 + (pts[2] - pts[1]).norm();
    if (u1 < 1e-12 || u2 - u1 < 1e-12) return normalize_or_zero(pts[1] - pts[0]);
    double w0 = -(u1 + u2) / (u1 * u2);
    double w1 = u2 / (u1 * (u2 - u1));
    double w2 = -u1 / (u2 * (u2 - u1));
    Vec2 t = pts[0] * w0 + pts[1] * w1 + pts[2] * w2;
    Vec2 nt = normalize_or_zero(t);
    if (nt.norm_sq() < 0.5) return normalize_or_zero(pts[1] - pts[0]);
    return nt;
}

inline Vec2 estimate_end_tangent(const std::vector<Vec2>& pts) {
    std::vector<Vec2> rev(pts.rbegin(), pts.rend());
    return estimate_start_tangent(rev);
}

// Corner indices of a closed polyline: direction change over a k-point
// lookahead above the angle threshold, non-max suppressed.
inline std::vector<int> detect_corners(const std::vector<Vec2>& d, int k, double angle_threshold_rad) {
    int n = static_cast<int>(d.size());
    std::vector<double> angle(n, 0.0);
    for (int i = 0; i < n; ++i) {
        Vec2 aft = d[i] - d[((i - k) % n + n) % n];
        Vec2 fore = d[(i + k) % n] - d[i];
        double na = aft.norm(), nf = fore.norm();
        if (na < 1e-12 || nf < 1e-12) continue;
        double c = std::clamp(aft.dot(fore) / (na * nf), -1.0, 1.0);
        angle[i] = std::acos(c);
    }
    std::vector<int> corners;
    for (int i = 0; i < n; ++i) {
        if (angle[i] < angle_threshold_rad) continue;
        bool is_max = true;
        for (int off = -k; off <= k && is_max; ++off) {
            if (off == 0) continue;
            int j = ((i + off) % n + n) % n;
            if (angle[j] > angle[i] || (angle[j] == angle[i] && j < i)) is_max = false;
        }
        if (is_max) corners.push_back(i);
    }
    return corners;
}

}  // namespace detail

inline BezierPath fit_path_to_contour(const std::vector<Vec2>& contour, int max_points = BezierPath::kMaxPoints,
                                      double tolerance = -1.0) {
    if (contour.size() < 8) throw ArgumentError("contour must have >= 8 points");
    if (max_points < 6 || max_points > BezierPath::kMaxPoints)
        throw ArgumentError("max_points must be in [6, 50]");

    // degenerate contours (zero area) cannot be fit as a filled region
    Vec2 lo = contour[0], hi = contour[0];
    for (Vec2 p : contour) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
    }
    double diag = (hi - lo).norm();
    if (diag < 1e-12 || polygon_area(contour) < 1e-6 * diag * diag)
        throw FitError("degenerate contour: zero area");

    std::vector<Vec2> d = contour;
    if ((d.front() - d.back()).norm() < 1e-9) d.pop_back();
    if (d.size() < 7) throw ArgumentError("contour must have >= 8 points");
    int n = static_cast<int>(d.size());

    int k = std::clamp(n / 24, 2, 12);
    std::vector<int> corners = detail::detect_corners(d, k, 60.0 * std::numbers::pi / 180.0);

    int max_segments = max_points / 3;
    double tol = tolerance > 0.0 ? tolerance : std::max(diag / 256.0, 1e-9);
    for (int attempt = 0; attempt < 48; ++attempt) {
        std::vector<detail::CubicSeg> segs;
        if (corners.size() >= 2) {
            // fit each corner-to-corner section with free one-sided tangents
            size_t m = corners.size();
            for (size_t ci = 0; ci < m; ++ci) {
                int a = corners[ci];
                int b = corners[(ci + 1) % m];
                std::vector<Vec2> section;
                for (int i = a;; i = (i + 1) % n) {
                    section.push_back(d[i]);
                    if (i == b) break;
                }
                if (section.size() < 2) continue;
                Vec2 t1 = detail::estimate_start_tangent(section);
                Vec2 t2 = detail::estimate_end_tangent(section);
                detail::fit_cubic_rec(section, 0, static_cast<int>(section.size()) - 1, t1, t2, tol,
                                      0, segs);
            }
        } else {
            // smooth closed loop: wrap-aware tangents, matched at the seam
            std::vector<Vec2> loop = d;
            loop.push_back(d.front());
            Vec2 t1 = detail::normalize_or_zero(d[1] - d[n - 1]);
            if (t1.norm_sq() < 0.5) t1 = detail::normalize_or_zero(d[1] - d[0]);
            detail::fit_cubic_rec(loop, 0, n, t1, t1 * -1.0, tol, 0, segs);
        }
        if (segs.size() == 1) {
            detail::CubicSeg a, b;
            detail::split_segment(segs[0], a, b);
            segs = {a, b};
        }
        if (static_cast<int>(segs.size()) <= max_segments && segs.size() >= 2) {
            BezierPath path;
            path.closed = true;
            path.points.reserve(segs.size() * 3);
            for (const auto& s : segs) {
                path.points.push_back(s.p[0]);
                path.points.push_back(s.p[1]);
                path.points.push_back(s.p[2]);
            }
            path.validate();
            return path;
        }
        tol *= 1.6;
    }
    throw FitError("contour fit did not converge within the point cap");
}

}  // namespace t2v::geom
