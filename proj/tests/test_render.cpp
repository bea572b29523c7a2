#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "t2v/render.hpp"
#include "test_shapes.hpp"

using namespace t2v;
using namespace t2v::render;
using ad::Tensor;
using geom::BezierPath;

namespace {

const vae::PathVae& test_model() {
    static vae::PathVae model([] {
        vae::VaeConfig c;
        c.depth = 2;
        c.init_seed = 7;
        return c;
    }());
    return model;
}

Tensor path_tensor(const BezierPath& p) {
    std::vector<float> v;
    for (auto q : p.points) {
        v.push_back(static_cast<float>(q.x));
        v.push_back(static_cast<float>(q.y));
    }
    return Tensor::from(std::move(v), {static_cast<int64_t>(p.points.size()), 2});
}

Tensor color_tensor(float r, float g, float b, float a) {
    return Tensor::from({r, g, b, a}, {1, 4});
}

RendererConfig small_cfg() {
    RendererConfig cfg;
    cfg.canvas = 64;
    return cfg;
}

}  // namespace

TEST_CASE("full-coverage opaque path paints every pixel its color") {
    BezierPath big = test_shapes::square_path({-0.3, -0.3}, {1.3, 1.3});
    RenderOut out = render_raw_paths({path_tensor(big)}, {color_tensor(1, 0, 0, 1)}, small_cfg());
    for (int64_t i = 0; i < out.planes[0].numel(); ++i) {
        CHECK(out.planes[0].data()[i] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(out.planes[1].data()[i] == doctest::Approx(0.0).scale(1).epsilon(1e-6));
        CHECK(out.planes[2].data()[i] == doctest::Approx(0.0).scale(1).epsilon(1e-6));
    }
}

TEST_CASE("stacking: top opaque path wins inside the overlap") {
    BezierPath bottom = test_shapes::square_path({0.1, 0.1}, {0.7, 0.7});
    BezierPath top = test_shapes::square_path({0.3, 0.3}, {0.9, 0.9});
    RenderOut out = render_raw_paths({path_tensor(bottom), path_tensor(top)},
                                     {color_tensor(0, 0, 1, 1), color_tensor(0, 1, 0, 1)}, small_cfg());
    // pixel at (0.5, 0.5): inside both -> green
    int64_t idx = 32 * 64 + 32;
    CHECK(out.planes[0].data()[idx] == doctest::Approx(0.0).scale(1).epsilon(1e-5));
    CHECK(out.planes[1].data()[idx] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(out.planes[2].data()[idx] == doctest::Approx(0.0).scale(1).epsilon(1e-5));
    // pixel at (0.2, 0.2): bottom only -> blue
    int64_t idx2 = 13 * 64 + 13;
    CHECK(out.planes[2].data()[idx2] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("alpha 0.5 red over white gives (1, 0.5, 0.5)") {
    BezierPath sq = test_shapes::square_path({0.2, 0.2}, {0.8, 0.8});
    RenderOut out = render_raw_paths({path_tensor(sq)}, {color_tensor(1, 0, 0, 0.5f)}, small_cfg());
    int64_t idx = 32 * 64 + 32;
    CHECK(out.planes[0].data()[idx] == doctest::Approx(1.0).epsilon(1.0 / 255));
    CHECK(out.planes[1].data()[idx] == doctest::Approx(0.5).epsilon(1.0 / 255));
    CHECK(out.planes[2].data()[idx] == doctest::Approx(0.5).epsilon(1.0 / 255));
}

TEST_CASE("silhouette: empty, full, and fractional coverage") {
    const vae::PathVae& model = test_model();
    RendererConfig cfg = small_cfg();

    NeuralSvg off_canvas;
    off_canvas.canvas = 64;
    PathTheta t;
    t.z = vae::sample_prior(24, 5);
    t.transform.tx = 5.0;  // far off canvas
    off_canvas.paths.push_back(t);
    std::vector<float> sil = render_silhouette(model, off_canvas, cfg);
    for (float v : sil) CHECK(v == doctest::Approx(0.0).scale(1).epsilon(1e-6));

    // full canvas via raw path
    BezierPath big = test_shapes::square_path({-0.3, -0.3}, {1.3, 1.3});
    RenderOut out = render_raw_paths({path_tensor(big)}, {color_tensor(0, 0, 0, 1)}, cfg);
    Tensor u = silhouette_from_coverages(out.coverages);
    for (float v : u.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));

    // two disjoint half-canvas-ish squares: mean ~ total coverage fraction
    BezierPath a = test_shapes::square_path({0.0, 0.0}, {0.5, 1.0});
    BezierPath b = test_shapes::square_path({0.5, 0.0}, {1.0, 0.5});
    RenderOut out2 = render_raw_paths({path_tensor(a), path_tensor(b)},
                                      {color_tensor(1, 0, 0, 1), color_tensor(0, 1, 0, 1)}, cfg);
    Tensor u2 = silhouette_from_coverages(out2.coverages);
    double mean = 0;
    for (float v : u2.data()) mean += v;
    mean /= static_cast<double>(u2.numel());
    CHECK(mean == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("rendering is deterministic") {
    const vae::PathVae& model = test_model();
    NeuralSvg svg;
    svg.canvas = 64;
    for (int i = 0; i < 3; ++i) {
        PathTheta t;
        t.z = vae::sample_prior(24, 10 + i);
        t.color = {0.2f * i, 0.5f, 1.0f - 0.3f * i, 0.8f};
        t.transform.tx = 0.1 * i - 0.1;
        svg.paths.push_back(t);
    }
    RendererConfig cfg = small_cfg();
    raster::RasterImage img1 = render::render(model, svg, cfg);
    raster::RasterImage img2 = render::render(model, svg, cfg);
    CHECK(img1.rgb == img2.rgb);
}

TEST_CASE("pixel compositing is associative within 1e-6") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        float w[3] = {1, 1, 1};  // white background
        float ca[4] = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
        float cb[4] = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
        // iterative back-to-front: B over W, then A over that
        float iter[3];
        for (int c = 0; c < 3; ++c) iter[c] = cb[c] * cb[3] + w[c] * (1 - cb[3]);
        for (int c = 0; c < 3; ++c) iter[c] = ca[c] * ca[3] + iter[c] * (1 - ca[3]);
        // over(A, over(B, W)) with premultiplied association
        float ab_a = ca[3] + cb[3] * (1 - ca[3]);
        float ab[3];
        for (int c = 0; c < 3; ++c) ab[c] = ca[c] * ca[3] + cb[c] * cb[3] * (1 - ca[3]);
        float assoc[3];
        for (int c = 0; c < 3; ++c) assoc[c] = ab[c] + w[c] * (1 - ab_a);
        for (int c = 0; c < 3; ++c) CHECK(std::fabs(iter[c] - assoc[c]) < 1e-6f);
    }
}

TEST_CASE("reference and scanline backends agree on the golden suite") {
    std::ifstream in(std::string(T2V_TEST_DATA_DIR) + "/golden/scenes.json");
    REQUIRE(in.good());
    nlohmann::json doc = nlohmann::json::parse(in);
    REQUIRE(doc["scenes"].size() == 20);

    for (const auto& scene : doc["scenes"]) {
        int canvas = scene["canvas"].get<int>();
        RendererConfig cfg;
        cfg.canvas = canvas;
        std::vector<Tensor> pts;
        std::vector<Tensor> colors;
        std::vector<raster::FlatPath> flats;
        for (const auto& jp : scene["paths"]) {
            BezierPath p;
            p.closed = jp["closed"].get<bool>();
            for (const auto& q : jp["points"]) p.points.push_back({q[0].get<double>(), q[1].get<double>()});
            raster::FlatPath fp;
            fp.path = p;
            for (int k = 0; k < 4; ++k) fp.rgba[k] = jp["rgba"][k].get<float>();
            flats.push_back(fp);
            pts.push_back(path_tensor(p));
            colors.push_back(color_tensor(fp.rgba[0], fp.rgba[1], fp.rgba[2], fp.rgba[3]));
        }
        ad::NoGradGuard ng;
        RenderOut soft = render_raw_paths(pts, colors, cfg);
        raster::RasterImage hard =
            raster::composite_scanline(flats, canvas, canvas, cfg.samples_per_segment);
        double mean_diff = 0;
        int64_t n = static_cast<int64_t>(canvas) * canvas;
        for (int64_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c)
                mean_diff += std::fabs(soft.planes[c].data()[i] - hard.rgb[i * 3 + c]);
        mean_diff /= static_cast<double>(n * 3);
        CHECK(mean_diff <= 2.0 / 255.0);
    }
}

TEST_CASE("gradient check: color, translation, control points") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        GradientCheckReport rep = gradient_check(seed);
        CHECK(rep.max_rel_color < 1e-4);
        CHECK(rep.max_rel_translation < 5e-2);
        CHECK(rep.max_rel_points < 5e-2);
    }
}

TEST_CASE("fully occluded path receives zero gradient") {
    BezierPath small = test_shapes::square_path({0.4, 0.4}, {0.6, 0.6});
    BezierPath big = test_shapes::square_path({0.1, 0.1}, {0.9, 0.9});
    Tensor small_t = Tensor::from(
        [&] {
            std::vector<float> v;
            for (auto q : small.points) {
                v.push_back(static_cast<float>(q.x));
                v.push_back(static_cast<float>(q.y));
            }
            return v;
        }(),
        {12, 2}, true);
    Tensor small_color = Tensor::from({1, 0, 0, 1}, {1, 4}, true);
    RenderOut out = render_raw_paths({small_t, path_tensor(big)},
                                     {small_color, color_tensor(0, 0, 1, 1)}, small_cfg());
    Tensor loss = ad::sum(ad::add(ad::add(out.planes[0], out.planes[1]), out.planes[2]));
    ad::backward(loss);
    for (float g : small_t.grad()) CHECK(g == 0.0f);
    for (float g : small_color.grad()) CHECK(g == 0.0f);
}

TEST_CASE("render via decoder produces a valid image and bad configs throw") {
    const vae::PathVae& model = test_model();
    NeuralSvg svg;
    svg.canvas = 64;
    PathTheta t;
    t.z = vae::sample_prior(24, 3);
    svg.paths.push_back(t);
    RendererConfig cfg = small_cfg();
    raster::RasterImage img = render::render(model, svg, cfg);
    CHECK(img.width == 64);
    for (float v : img.rgb) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    cfg.backend = "no-such-backend";
    CHECK_THROWS_AS(render::render(model, svg, cfg), BackendError);

    NeuralSvg bad;
    bad.canvas = 100;
    bad.paths.push_back(t);
    CHECK_THROWS_AS(bad.validate(), StructuralError);
    NeuralSvg empty;
    empty.canvas = 64;
    CHECK_THROWS_AS(empty.validate(), StructuralError);
}
