#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "t2v/vae.hpp"
#include "test_shapes.hpp"

using namespace t2v;
using namespace t2v::vae;
using ad::Tensor;
using geom::BezierPath;

namespace {

VaeConfig tiny_config() {
    VaeConfig c;
    c.depth = 2;  // keep unit tests quick; full depth is exercised at desk scale
    c.init_seed = 7;
    return c;
}

const PathVae& tiny_model() {
    static PathVae model(tiny_config());
    return model;
}

// independent double-precision oracle for the chamfer reconstruction loss
double chamfer_loss_oracle(const PathVae& model, const BezierPath& input,
                           const std::vector<double>& decoded_flat) {
    BezierPath rec;
    rec.closed = true;
    for (int i = 0; i < model.cfg.decoded_points; ++i)
        rec.points.push_back({decoded_flat[2 * i], decoded_flat[2 * i + 1]});
    geom::PointSet a = geom::sample_auxiliary_points(rec, model.cfg.aux_n);
    geom::PointSet b = geom::sample_auxiliary_points(input, model.cfg.aux_n);
    return geom::chamfer_distance(a, b);
}

}  // namespace

TEST_CASE("encoding ignores the content of padded positions") {
    const PathVae& model = tiny_model();
    BezierPath path = test_shapes::blob_path(4, 11);  // 12 valid points
    std::vector<int> lengths;
    Tensor clean = model.pad_paths({path}, lengths);

    std::vector<float> dirty = clean.data();
    Rng rng(5);
    for (size_t i = static_cast<size_t>(lengths[0]) * 2; i < dirty.size(); ++i) dirty[i] = rng.uniform();
    ad::NoGradGuard ng;
    Tensor z1 = model.encode_sequence_padded(clean, lengths);
    Tensor z2 = model.encode_sequence_padded(Tensor::from(dirty, clean.shape()), lengths);
    REQUIRE(z1.numel() == model.cfg.d_seq);
    for (int64_t i = 0; i < z1.numel(); ++i) CHECK(z1.data()[i] == z2.data()[i]);
}

TEST_CASE("sequence encoding: shape, finiteness, determinism, input checks") {
    const PathVae& model = tiny_model();
    BezierPath path = test_shapes::circle_path({0.5, 0.5}, 0.3);
    std::vector<float> z1 = model.encode_sequence(path);
    std::vector<float> z2 = model.encode_sequence(path);
    CHECK(z1.size() == 32);
    for (float v : z1) CHECK(std::isfinite(v));
    CHECK(z1 == z2);

    BezierPath out_of_range = path;
    out_of_range.points[2].x = 1.7;
    CHECK_THROWS_AS(model.encode_sequence(out_of_range), ArgumentError);
}

TEST_CASE("image encoding: shape, determinism, distinct inputs differ") {
    const PathVae& model = tiny_model();
    std::vector<float> white(64 * 64, 1.0f), black(64 * 64, 0.0f);
    std::vector<float> zw = model.encode_image(white);
    std::vector<float> zb = model.encode_image(black);
    CHECK(zw.size() == 64);
    CHECK(model.encode_image(white) == zw);
    double dist = 0;
    for (size_t i = 0; i < zw.size(); ++i) dist += std::fabs(zw[i] - zb[i]);
    CHECK(dist > 0.0);

    std::vector<float> wrong(32 * 32, 0.5f);
    CHECK_THROWS_AS(model.encode_image(wrong), ArgumentError);
}

TEST_CASE("fusion produces mu/logvar; z = mu at inference") {
    const PathVae& model = tiny_model();
    ad::NoGradGuard ng;
    Tensor z_seq = Tensor::full({2, 32}, 0.3f);
    Tensor z_img = Tensor::full({2, 64}, -0.2f);
    auto [mu, logvar] = model.fuse(z_seq, z_img);
    CHECK(mu.shape() == ad::Shape{2, 24});
    CHECK(logvar.shape() == ad::Shape{2, 24});
    for (float v : logvar.data()) CHECK((v >= -10.0f && v <= 10.0f));
}

TEST_CASE("KL divergence matches the closed form") {
    Tensor mu0 = Tensor::zeros({3, 24});
    Tensor lv0 = Tensor::zeros({3, 24});
    CHECK(kl_divergence(mu0, lv0).item() == doctest::Approx(0.0));

    Rng rng(9);
    std::vector<float> muv(48), lvv(48);
    for (auto& v : muv) v = rng.normal();
    for (auto& v : lvv) v = rng.normal() * 0.5f;
    Tensor mu = Tensor::from(muv, {2, 24});
    Tensor lv = Tensor::from(lvv, {2, 24});
    double expected = 0;
    for (int i = 0; i < 48; ++i)
        expected += -0.5 * (1.0 + lvv[i] - muv[i] * muv[i] - std::exp((double)lvv[i]));
    expected /= 2.0;
    CHECK(kl_divergence(mu, lv).item() == doctest::Approx(expected).epsilon(1e-6));
    CHECK(kl_divergence(mu, lv).item() >= 0.0f);
}

TEST_CASE("decoded paths pass invariants and decoding is deterministic") {
    const PathVae& model = tiny_model();
    std::vector<float> z = sample_prior(24, 4);
    BezierPath p1 = model.decode_sequence(z);
    BezierPath p2 = model.decode_sequence(z);
    CHECK(p1.closed);
    CHECK(p1.length() == 48);
    p1.validate(true);
    REQUIRE(p1.length() == p2.length());
    for (int i = 0; i < p1.length(); ++i) {
        CHECK(p1.points[i].x == p2.points[i].x);
        CHECK(p1.points[i].y == p2.points[i].y);
    }

    std::vector<float> img = model.decode_image(z);
    CHECK(img.size() == 64 * 64);
    for (float v : img) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("loss weights default to the configured (1, 0.1, 0.01)") {
    VaeConfig c;
    CHECK(c.lambda_cfr == 1.0f);
    CHECK(c.lambda_img == 0.1f);
    CHECK(c.lambda_kl == 0.01f);
    CHECK(c.epochs == 100);
    CHECK(c.dropout == 0.1f);
    CHECK(c.lr == 0.001f);
    CHECK(c.aux_n == 4);
    CHECK(c.d_h == 64);
    CHECK(c.d_seq == 32);
    CHECK(c.d_img == 64);
    CHECK(c.d_latent == 24);
    CHECK(c.k_max == 50);
}

TEST_CASE("perfect reconstruction with mu=0, logvar=0 gives zero loss") {
    const PathVae& model = tiny_model();
    // an input that exactly matches the decoder layout: 48-point closed path
    BezierPath input = test_shapes::blob_path(16, 21);
    REQUIRE(input.length() == 48);
    std::vector<float> pts(static_cast<size_t>(model.cfg.k_max) * 2, 0.0f);
    for (int i = 0; i < 48; ++i) {
        pts[2 * i] = static_cast<float>(input.points[i].x);
        pts[2 * i + 1] = static_cast<float>(input.points[i].y);
    }
    // the chamfer term compares float-rounded decode to double input; round
    // the input to float so the match is exact
    for (int i = 0; i < 48; ++i) input.points[i] = {pts[2 * i], pts[2 * i + 1]};

    Tensor decoded_pts = Tensor::from(pts, {model.cfg.k_max, 2});
    std::vector<float> img = raster::rasterize_shape_gray(input, 64);
    Tensor images = model.image_tensor({&img});
    Tensor mu = Tensor::zeros({1, 24});
    Tensor logvar = Tensor::zeros({1, 24});
    features::BlurPyramidPerceptual perceptual;
    LossTerms t = vae_loss_terms(model, {&input}, images, decoded_pts, images, mu, logvar, perceptual);
    CHECK(std::fabs(t.cfr.item()) < 1e-6f);
    CHECK(t.img.item() == doctest::Approx(0.0));
    CHECK(t.kl.item() == doctest::Approx(0.0));
    CHECK(std::fabs(t.total.item()) < 1e-6f);
}

TEST_CASE("chamfer loss gradient matches a double-precision FD oracle") {
    const PathVae& model = tiny_model();
    Rng rng(31);
    for (int trial = 0; trial < 3; ++trial) {
        BezierPath input = test_shapes::blob_path(5, 100 + trial);
        std::vector<float> pts(static_cast<size_t>(model.cfg.k_max) * 2, 0.0f);
        for (size_t i = 0; i < pts.size(); ++i) pts[i] = 0.2f + 0.6f * rng.uniform();
        Tensor decoded = Tensor::from(pts, {model.cfg.k_max, 2}, true);
        Tensor loss = chamfer_reconstruction_loss(model, {&input}, decoded);
        ad::backward(loss);
        const auto& g = decoded.grad();

        std::vector<double> flat(pts.begin(), pts.end());
        const double h = 1e-6;
        double g_scale = 0;
        for (int i = 0; i < model.cfg.decoded_points * 2; ++i)
            g_scale = std::max(g_scale, std::fabs((double)g[i]));
        double max_rel = 0, max_scaled = 0;
        for (int i = 0; i < model.cfg.decoded_points * 2; ++i) {
            std::vector<double> up = flat, dn = flat;
            up[i] += h;
            dn[i] -= h;
            double fd = (chamfer_loss_oracle(model, input, up) -
                         chamfer_loss_oracle(model, input, dn)) / (2.0 * h);
            double err = std::fabs(fd - g[i]);
            max_rel = std::max(max_rel, err / std::max({std::fabs(fd), std::fabs((double)g[i]),
                                                        0.01 * g_scale}));
            max_scaled = std::max(max_scaled, err / g_scale);
        }
        CHECK(max_rel < 1e-3);      // per-coordinate
        CHECK(max_scaled < 1e-4);   // relative to the gradient scale
    }
}

TEST_CASE("checkpoint round trip is bitwise identical") {
    PathVae model(tiny_config());
    auto dir = std::filesystem::temp_directory_path() / "t2v_ckpt_test";
    std::filesystem::create_directories(dir);
    auto file = dir / "model.t2vc";
    save_checkpoint(model, file, 0xABCD1234, 17);

    auto [loaded, meta] = load_checkpoint(file);
    CHECK(meta.dataset_hash == 0xABCD1234);
    CHECK(meta.epoch == 17);
    CHECK(meta.config.depth == model.cfg.depth);

    std::vector<float> z = sample_prior(24, 99);
    BezierPath a = model.decode_sequence(z);
    BezierPath b = loaded.decode_sequence(z);
    REQUIRE(a.length() == b.length());
    for (int i = 0; i < a.length(); ++i) {
        CHECK(a.points[i].x == b.points[i].x);
        CHECK(a.points[i].y == b.points[i].y);
    }
    std::vector<float> ia = model.decode_image(z);
    std::vector<float> ib = loaded.decode_image(z);
    CHECK(ia == ib);
    std::filesystem::remove_all(dir);
}

TEST_CASE("latent interpolation endpoints and prior sampling") {
    std::vector<float> z1 = sample_prior(24, 1);
    std::vector<float> z2 = sample_prior(24, 2);
    CHECK(interpolate(z1, z2, 0.0f) == z1);
    CHECK(interpolate(z1, z2, 1.0f) == z2);
    CHECK(sample_prior(24, 1) == z1);
    CHECK(z1 != z2);

    const PathVae& model = tiny_model();
    BezierPath mid = model.decode_sequence(interpolate(z1, z2, 0.5f));
    mid.validate(true);
    CHECK(mid.closed);
    CHECK_THROWS_AS(interpolate(z1, z2, 1.5f), ArgumentError);
}

TEST_CASE("reparameterization is seeded and centered on mu") {
    Tensor mu = Tensor::full({4, 24}, 0.7f);
    Tensor logvar = Tensor::full({4, 24}, -20.0f);  // tiny variance
    Rng rng(3);
    Tensor z = PathVae::reparameterize(mu, logvar, rng);
    for (float v : z.data()) CHECK(v == doctest::Approx(0.7f).epsilon(1e-3));
}

TEST_CASE("a few training steps reduce the loss on a toy dataset") {
    VaeConfig cfg = tiny_config();
    cfg.epochs = 6;
    cfg.batch_size = 4;
    cfg.dropout = 0.0f;
    PathVae model(cfg);

    svg::SvgDocument doc;
    doc.width = doc.height = 1;
    for (int i = 0; i < 8; ++i) {
        svg::SvgEntry e;
        e.path = test_shapes::blob_path(3 + (i % 3), 500 + i);
        doc.entries.push_back(e);
    }
    data::PathDataset ds = data::build_dataset_from_documents({doc}, {.seed = 5, .val_fraction = 0.25});
    features::BlurPyramidPerceptual perceptual;
    TrainResult result = train(model, ds, perceptual, 123);
    REQUIRE(result.log_lines.size() == 6);
    auto first = nlohmann::json::parse(result.log_lines.front());
    auto last = nlohmann::json::parse(result.log_lines.back());
    CHECK(last["loss"].get<double>() < first["loss"].get<double>());
    CHECK(std::isfinite(last["L_kl"].get<double>()));
}
