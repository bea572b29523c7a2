#pragma once

// Parametric path fixtures shared by the unit and acceptance suites.

#include <cmath>

#include "t2v/geometry.hpp"
#include "t2v/util.hpp"

namespace t2v::test_shapes {

using geom::BezierPath;
using geom::Vec2;

// Axis-aligned rectangle as four degree-elevated line segments (12 points).
inline BezierPath square_path(Vec2 lo, Vec2 hi) {
    BezierPath p;
    p.closed = true;
    Vec2 corners[4] = {{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}};
    for (int i = 0; i < 4; ++i) {
        Vec2 a = corners[i], b = corners[(i + 1) % 4];
        p.points.push_back(a);
        p.points.push_back(a + (b - a) * (1.0 / 3.0));
        p.points.push_back(a + (b - a) * (2.0 / 3.0));
    }
    return p;
}

// Four-segment circle approximation with the standard kappa constant.
inline BezierPath circle_path(Vec2 center, double r) {
    constexpr double k = 0.5519150244935105707435627;
    BezierPath p;
    p.closed = true;
    Vec2 on[4] = {{center.x + r, center.y}, {center.x, center.y + r},
                  {center.x - r, center.y}, {center.x, center.y - r}};
    Vec2 tan[4] = {{0, 1}, {-1, 0}, {0, -1}, {1, 0}};
    for (int i = 0; i < 4; ++i) {
        int j = (i + 1) % 4;
        p.points.push_back(on[i]);
        p.points.push_back(on[i] + tan[i] * (k * r));
        p.points.push_back(on[j] - tan[j] * (k * r));
    }
    return p;
}

// Open path with s segments snaking left to right inside the unit square.
inline BezierPath wavy_open_path(int segments) {
    BezierPath p;
    p.closed = false;
    double x0 = 0.1, x1 = 0.9;
    auto at = [&](double t) {
        return Vec2{x0 + (x1 - x0) * t, 0.5 + 0.25 * std::sin(6.0 * t)};
    };
    for (int i = 0; i < segments; ++i) {
        double ta = static_cast<double>(i) / segments;
        double tb = static_cast<double>(i + 1) / segments;
        Vec2 a = at(ta), b = at(tb);
        p.points.push_back(a);
        p.points.push_back(a + (b - a) * (1.0 / 3.0) + Vec2{0.0, 0.03});
        p.points.push_back(a + (b - a) * (2.0 / 3.0) - Vec2{0.0, 0.03});
    }
    p.points.push_back(at(1.0));
    return p;
}

// Smooth closed blob with s segments and seeded radial wobble.
inline BezierPath blob_path(int segments, uint64_t seed) {
    Rng rng(seed);
    BezierPath p;
    p.closed = true;
    std::vector<Vec2> on(segments);
    for (int i = 0; i < segments; ++i) {
        double a = 2.0 * std::numbers::pi * i / segments;
        double r = 0.25 + 0.1 * rng.uniform();
        on[i] = {0.5 + r * std::cos(a), 0.5 + r * std::sin(a)};
    }
    for (int i = 0; i < segments; ++i) {
        Vec2 a = on[i], b = on[(i + 1) % segments];
        Vec2 chord = b - a;
        Vec2 perp{-chord.y, chord.x};
        double j1 = 0.05 * (rng.uniform() - 0.5);
        double j2 = 0.05 * (rng.uniform() - 0.5);
        p.points.push_back(a);
        p.points.push_back(a + chord * (1.0 / 3.0) + perp * j1);
        p.points.push_back(a + chord * (2.0 / 3.0) + perp * j2);
    }
    return p;
}

// Star with alternately bowed edges: strong curvature swings at every tip.
inline BezierPath zigzag_star_path(int tips = 6, Vec2 center = {0.5, 0.5}) {
    BezierPath p;
    p.closed = true;
    int n = tips * 2;  // segments (outer/inner alternating), 3n points must stay <= 50
    std::vector<Vec2> on(n);
    for (int i = 0; i < n; ++i) {
        double a = 2.0 * std::numbers::pi * i / n;
        double r = (i % 2 == 0) ? 0.4 : 0.18;
        on[i] = {center.x + r * std::cos(a), center.y + r * std::sin(a)};
    }
    for (int i = 0; i < n; ++i) {
        Vec2 a = on[i], b = on[(i + 1) % n];
        Vec2 chord = b - a;
        Vec2 perp{-chord.y, chord.x};
        double bulge = (i % 2 == 0 ? 0.18 : -0.18);
        p.points.push_back(a);
        p.points.push_back(a + chord * (1.0 / 3.0) + perp * bulge);
        p.points.push_back(a + chord * (2.0 / 3.0) + perp * bulge);
    }
    return p;
}

}  // namespace t2v::test_shapes
