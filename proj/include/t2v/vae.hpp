#pragma once

// Dual-branch path VAE: transformer sequence branch + convolutional image
// branch fused into one latent, with mirrored decoders.

#include <filesystem>
#include <numbers>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2v/dataset.hpp"
#include "t2v/features.hpp"
#include "t2v/geometry.hpp"
#include "t2v/nn.hpp"
#include "t2v/tensor.hpp"

namespace t2v::vae {

using ad::Tensor;
using geom::BezierPath;
using geom::Vec2;

struct VaeConfig {
    int d_h = 64;       // point embedding width
    int depth = 6;      // transformer layers per branch
    int d_seq = 32;     // sequence feature
    int d_img = 64;     // image feature
    int d_latent = 24;  // fused latent
    int k_max = 50;
    int image_size = 64;
    int heads = 2;
    int ffn_dim = 128;
    float dropout = 0.1f;
    float lambda_cfr = 1.0f;
    float lambda_img = 0.1f;
    float lambda_kl = 0.01f;
    float lr = 1e-3f;
    float warmup_frac = 0.05f;
    int epochs = 100;
    int batch_size = 128;
    int aux_n = 4;
    int decoded_points = 48;  // 16 closed cubic segments
    uint64_t init_seed = 1;

    int decoded_segments() const { return decoded_points / 3; }

    void check() const {
        if (d_h <= 0 || depth <= 0 || d_seq <= 0 || d_img <= 0 || d_latent <= 0)
            throw ConfigError("vae dimensions must be positive");
        if (lambda_cfr < 0 || lambda_img < 0 || lambda_kl < 0)
            throw ConfigError("vae loss weights must be non-negative");
        if (decoded_points % 3 != 0 || decoded_points < 6 || decoded_points > k_max)
            throw ConfigError("decoded_points must be a multiple of 3 in [6, k_max]");
        if (d_h % heads != 0) throw ConfigError("d_h must be divisible by heads");
    }
};

// ---------------------------------------------------------------------------
// Bernstein sampling matrix: aux/densify positions as a linear map from the
// decoder's fixed closed control layout [rows x n_points].
// ---------------------------------------------------------------------------
inline std::vector<float> closed_sampling_matrix(int n_points, int per_segment_interior,
                                                 bool include_segment_starts, int& rows_out) {
    int segments = n_points / 3;
    int per_seg = per_segment_interior + (include_segment_starts ? 1 : 0);
    int rows = segments * per_seg;
    std::vector<float> m(static_cast<size_t>(rows) * n_points, 0.0f);
    int row = 0;
    for (int s = 0; s < segments; ++s) {
        int i0 = 3 * s, i1 = 3 * s + 1, i2 = 3 * s + 2, i3 = (3 * s + 3) % n_points;
        if (include_segment_starts) m[static_cast<size_t>(row++) * n_points + i0] = 1.0f;
        for (int j = 1; j <= per_segment_interior; ++j) {
            float t = static_cast<float>(j) / static_cast<float>(per_segment_interior + 1);
            float u = 1.0f - t;
            float* r = &m[static_cast<size_t>(row++) * n_points];
            r[i0] += u * u * u;
            r[i1] += 3 * u * u * t;
            r[i2] += 3 * u * t * t;
            r[i3] += t * t * t;
        }
    }
    rows_out = rows;
    return m;
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------
class PathVae {
public:
    VaeConfig cfg;

    explicit PathVae(VaeConfig config = {}) : cfg(config) {
        cfg.check();
        Rng rng(cfg.init_seed, 0xA11CE);
        point_embed_ = nn::Linear(2, cfg.d_h, rng);
        pos_table_ = nn::sinusoidal_positions(cfg.k_max, cfg.d_h);
        for (int i = 0; i < cfg.depth; ++i)
            enc_layers_.emplace_back(cfg.d_h, cfg.heads, cfg.ffn_dim, cfg.dropout, rng);
        seq_head_ = nn::Linear(cfg.d_h, cfg.d_seq, rng);

        const int enc_ch[7] = {1, 16, 32, 64, 128, 128, 128};
        for (int i = 0; i < 6; ++i) img_enc_.emplace_back(enc_ch[i], enc_ch[i + 1], 3, 2, 1, rng);
        img_head_ = nn::Linear(128, cfg.d_img, rng);

        mu_head_ = nn::Linear(cfg.d_seq + cfg.d_img, cfg.d_latent, rng);
        logvar_head_ = nn::Linear(cfg.d_seq + cfg.d_img, cfg.d_latent, rng);

        query_embed_ = Tensor::randn({cfg.k_max, cfg.d_h}, rng, 0.02f, true);
        z_proj_ = nn::Linear(cfg.d_latent, cfg.d_h, rng);
        for (int i = 0; i < cfg.depth; ++i)
            dec_layers_.emplace_back(cfg.d_h, cfg.heads, cfg.ffn_dim, cfg.dropout, rng);
        point_head_ = nn::Linear(cfg.d_h, 2, rng);

        // fixed circular template in logit space: the decoder deforms a
        // centered ring instead of regressing coordinates from scratch
        {
            std::vector<float> base(static_cast<size_t>(cfg.k_max) * 2);
            auto logit = [](double p) { return static_cast<float>(std::log(p / (1.0 - p))); };
            for (int i = 0; i < cfg.k_max; ++i) {
                double a = 2.0 * std::numbers::pi * (i % cfg.decoded_points) / cfg.decoded_points;
                base[2 * i] = logit(0.5 + 0.22 * std::cos(a));
                base[2 * i + 1] = logit(0.5 + 0.22 * std::sin(a));
            }
            template_logits_ = Tensor::from(std::move(base), {cfg.k_max, 2});
        }

        img_proj_ = nn::Linear(cfg.d_latent, 128, rng);
        const int dec_ch[7] = {128, 128, 128, 64, 32, 16, 1};
        for (int i = 0; i < 6; ++i) img_dec_.emplace_back(dec_ch[i], dec_ch[i + 1], 4, 2, 1, rng);

        int aux_rows = 0;
        std::vector<float> aux_m = closed_sampling_matrix(cfg.decoded_points, cfg.aux_n, true, aux_rows);
        aux_matrix_ = Tensor::from(std::move(aux_m), {aux_rows, cfg.decoded_points});
        aux_rows_ = aux_rows;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        point_embed_.collect(out);
        for (const auto& l : enc_layers_) l.collect(out);
        seq_head_.collect(out);
        for (const auto& c : img_enc_) c.collect(out);
        img_head_.collect(out);
        mu_head_.collect(out);
        logvar_head_.collect(out);
        out.push_back(query_embed_);
        z_proj_.collect(out);
        for (const auto& l : dec_layers_) l.collect(out);
        point_head_.collect(out);
        img_proj_.collect(out);
        for (const auto& c : img_dec_) c.collect(out);
        return out;
    }

    // ----- sequence branch ---------------------------------------------------

    // padded points [B*k_max, 2] plus per-sample valid lengths
    Tensor encode_sequence_padded(const Tensor& padded, const std::vector<int>& lengths,
                                  Rng* train_rng = nullptr) const {
        int64_t B = static_cast<int64_t>(lengths.size());
        int64_t S = cfg.k_max;
        std::vector<std::vector<uint8_t>> valid(B, std::vector<uint8_t>(S, 0));
        for (int64_t b = 0; b < B; ++b)
            for (int i = 0; i < lengths[b]; ++i) valid[b][i] = 1;
        std::vector<Tensor> biases = nn::attention_biases(valid, S);

        Tensor x = point_embed_.forward(padded);
        x = ad::add(x, nn::tile_rows(pos_table_, B));
        for (const auto& layer : enc_layers_) x = layer.forward(x, B, S, &biases, train_rng);

        // masked mean pool per sample
        std::vector<Tensor> pooled;
        pooled.reserve(B);
        for (int64_t b = 0; b < B; ++b) {
            std::vector<float> w(S, 0.0f);
            for (int i = 0; i < lengths[b]; ++i) w[i] = 1.0f / static_cast<float>(lengths[b]);
            Tensor wb = Tensor::from(std::move(w), {1, S});
            pooled.push_back(ad::matmul(wb, ad::slice_rows(x, b * S, (b + 1) * S)));
        }
        Tensor agg = B == 1 ? pooled[0] : ad::concat_rows(pooled);
        return seq_head_.forward(agg);  // [B, d_seq]
    }

    Tensor pad_paths(const std::vector<BezierPath>& paths, std::vector<int>& lengths) const {
        int64_t B = static_cast<int64_t>(paths.size());
        std::vector<float> buf(static_cast<size_t>(B) * cfg.k_max * 2, 0.0f);
        lengths.resize(B);
        for (int64_t b = 0; b < B; ++b) {
            const BezierPath& p = paths[b];
            if (p.length() < 4 || p.length() > cfg.k_max)
                throw ArgumentError("path length outside encoder capacity");
            for (int i = 0; i < p.length(); ++i) {
                double x = p.points[i].x, y = p.points[i].y;
                if (x < -1e-4 || x > 1.0 + 1e-4 || y < -1e-4 || y > 1.0 + 1e-4)
                    throw ArgumentError("encoder input must be normalized to [0,1]");
                buf[(b * cfg.k_max + i) * 2] = static_cast<float>(x);
                buf[(b * cfg.k_max + i) * 2 + 1] = static_cast<float>(y);
            }
            lengths[b] = p.length();
        }
        return Tensor::from(std::move(buf), {B * cfg.k_max, 2});
    }

    std::vector<float> encode_sequence(const BezierPath& path) const {
        ad::NoGradGuard ng;
        std::vector<int> lengths;
        Tensor padded = pad_paths({path}, lengths);
        return encode_sequence_padded(padded, lengths).data();
    }

    // ----- image branch ------------------------------------------------------

    Tensor encode_image_batch(const Tensor& imgs) const {  // [B, 1, S, S]
        if (imgs.shape().size() != 4 || imgs.dim(2) != cfg.image_size || imgs.dim(3) != cfg.image_size)
            throw ArgumentError("image branch expects [B,1," + std::to_string(cfg.image_size) + "^2]");
        Tensor x = imgs;
        for (size_t i = 0; i < img_enc_.size(); ++i) {
            x = img_enc_[i].forward(x);
            if (i + 1 < img_enc_.size()) x = ad::relu(x);
        }
        x = ad::reshape(x, {imgs.dim(0), 128});
        return img_head_.forward(x);  // [B, d_img]
    }

    Tensor image_tensor(const std::vector<const std::vector<float>*>& imgs) const {
        int64_t B = static_cast<int64_t>(imgs.size());
        size_t n = static_cast<size_t>(cfg.image_size) * cfg.image_size;
        std::vector<float> buf(static_cast<size_t>(B) * n);
        for (int64_t b = 0; b < B; ++b) {
            if (imgs[b]->size() != n) throw ArgumentError("image raster has wrong resolution");
            for (size_t i = 0; i < n; ++i) {
                float v = (*imgs[b])[i];
                if (v < 0.0f || v > 1.0f) throw ArgumentError("image values must lie in [0,1]");
                buf[b * n + i] = v;
            }
        }
        return Tensor::from(std::move(buf), {B, 1, cfg.image_size, cfg.image_size});
    }

    std::vector<float> encode_image(const std::vector<float>& img) const {
        ad::NoGradGuard ng;
        return encode_image_batch(image_tensor({&img})).data();
    }

    // ----- fusion ------------------------------------------------------------

    std::pair<Tensor, Tensor> fuse(const Tensor& z_seq, const Tensor& z_img) const {
        Tensor cat = ad::concat_cols({z_seq, z_img});
        Tensor mu = mu_head_.forward(cat);
        Tensor logvar = ad::clamp(logvar_head_.forward(cat), -10.0f, 10.0f);
        return {mu, logvar};
    }

    static Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng) {
        Tensor eps = Tensor::randn(mu.shape(), rng);
        return ad::add(mu, ad::mul(ad::exp(ad::mul_scalar(logvar, 0.5f)), eps));
    }

    // ----- decoders ----------------------------------------------------------

    Tensor decode_sequence_batch(const Tensor& z, Rng* train_rng = nullptr) const {  // z: [B, d_latent]
        int64_t B = z.dim(0);
        Tensor queries = nn::tile_rows(query_embed_, B);
        Tensor cond = nn::repeat_rows(z_proj_.forward(z), cfg.k_max);
        Tensor x = ad::add(queries, cond);
        for (const auto& layer : dec_layers_) x = layer.forward(x, B, cfg.k_max, nullptr, train_rng);
        Tensor logits = ad::add(point_head_.forward(x), nn::tile_rows(template_logits_, B));
        return ad::sigmoid(logits);  // [B*k_max, 2]
    }

    BezierPath points_to_path(const Tensor& decoded, int64_t sample_index) const {
        BezierPath p;
        p.closed = true;
        p.points.reserve(cfg.decoded_points);
        const auto& v = decoded.data();
        for (int i = 0; i < cfg.decoded_points; ++i) {
            size_t off = (static_cast<size_t>(sample_index) * cfg.k_max + i) * 2;
            p.points.push_back({v[off], v[off + 1]});
        }
        return p;
    }

    BezierPath decode_sequence(const std::vector<float>& z) const {
        ad::NoGradGuard ng;
        check_latent(z);
        Tensor zt = Tensor::from(z, {1, cfg.d_latent});
        return points_to_path(decode_sequence_batch(zt), 0);
    }

    Tensor decode_image_batch(const Tensor& z) const {
        int64_t B = z.dim(0);
        Tensor x = ad::reshape(img_proj_.forward(z), {B, 128, 1, 1});
        for (size_t i = 0; i < img_dec_.size(); ++i) {
            x = img_dec_[i].forward(x);
            if (i + 1 < img_dec_.size()) x = ad::relu(x);
        }
        return ad::sigmoid(x);  // [B, 1, S, S]
    }

    std::vector<float> decode_image(const std::vector<float>& z) const {
        ad::NoGradGuard ng;
        check_latent(z);
        return decode_image_batch(Tensor::from(z, {1, cfg.d_latent})).data();
    }

    void check_latent(const std::vector<float>& z) const {
        if (static_cast<int>(z.size()) != cfg.d_latent) throw ArgumentError("latent size mismatch");
        for (float v : z)
            if (!std::isfinite(v)) throw ArgumentError("latent must be finite");
    }

    const Tensor& aux_matrix() const { return aux_matrix_; }
    int aux_rows() const { return aux_rows_; }

private:
    nn::Linear point_embed_;
    Tensor pos_table_;
    std::vector<nn::TransformerLayer> enc_layers_;
    nn::Linear seq_head_;
    std::vector<nn::Conv2d> img_enc_;
    nn::Linear img_head_;
    nn::Linear mu_head_, logvar_head_;
    Tensor query_embed_;
    nn::Linear z_proj_;
    std::vector<nn::TransformerLayer> dec_layers_;
    nn::Linear point_head_;
    nn::Linear img_proj_;
    std::vector<nn::ConvTranspose2d> img_dec_;
    Tensor template_logits_;
    Tensor aux_matrix_;
    int aux_rows_ = 0;
};

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------
struct LossTerms {
    Tensor total, cfr, img, kl;
};

// closed-form Gaussian KL, summed over latent dims, averaged over the batch
inline Tensor kl_divergence(const Tensor& mu, const Tensor& logvar) {
    Tensor term = ad::add_scalar(ad::sub(logvar, ad::add(ad::square(mu), ad::exp(logvar))), 1.0f);
    return ad::mul_scalar(ad::sum(term), -0.5f / static_cast<float>(mu.dim(0)));
}

inline Tensor chamfer_reconstruction_loss(const PathVae& model,
                                          const std::vector<const BezierPath*>& inputs,
                                          const Tensor& decoded_points) {
    int64_t B = static_cast<int64_t>(inputs.size());
    Tensor total = Tensor::scalar(0.0f);
    for (int64_t b = 0; b < B; ++b) {
        geom::PointSet aux_in = geom::sample_auxiliary_points(*inputs[b], model.cfg.aux_n);
        std::vector<float> target(aux_in.size() * 2);
        for (size_t i = 0; i < aux_in.size(); ++i) {
            target[2 * i] = static_cast<float>(aux_in[i].x);
            target[2 * i + 1] = static_cast<float>(aux_in[i].y);
        }
        Tensor target_t = Tensor::from(std::move(target), {static_cast<int64_t>(aux_in.size()), 2});
        Tensor pts = ad::slice_rows(decoded_points, b * model.cfg.k_max,
                                    b * model.cfg.k_max + model.cfg.decoded_points);
        Tensor aux_rec = ad::matmul(model.aux_matrix(), pts);
        total = ad::add(total, ad::chamfer(aux_rec, target_t));
    }
    return ad::mul_scalar(total, 1.0f / static_cast<float>(B));
}

inline LossTerms vae_loss_terms(const PathVae& model, const std::vector<const BezierPath*>& in_paths,
                                const Tensor& in_images, const Tensor& decoded_points,
                                const Tensor& decoded_images, const Tensor& mu, const Tensor& logvar,
                                const features::PerceptualBackend& perceptual) {
    LossTerms t;
    t.cfr = chamfer_reconstruction_loss(model, in_paths, decoded_points);
    Tensor l1 = ad::mean(ad::abs(ad::sub(in_images, decoded_images)));
    t.img = ad::add(l1, perceptual.loss(decoded_images, in_images));
    t.kl = kl_divergence(mu, logvar);
    t.total = ad::add(ad::add(ad::mul_scalar(t.cfr, model.cfg.lambda_cfr),
                              ad::mul_scalar(t.img, model.cfg.lambda_img)),
                      ad::mul_scalar(t.kl, model.cfg.lambda_kl));
    return t;
}

// ---------------------------------------------------------------------------
// latent utilities
// ---------------------------------------------------------------------------
inline std::vector<float> interpolate(const std::vector<float>& z1, const std::vector<float>& z2, float t) {
    if (z1.size() != z2.size()) throw ArgumentError("interpolate: latent size mismatch");
    if (t < 0.0f || t > 1.0f) throw ArgumentError("interpolate: t must lie in [0,1]");
    std::vector<float> out(z1.size());
    for (size_t i = 0; i < z1.size(); ++i) out[i] = (1.0f - t) * z1[i] + t * z2[i];
    return out;
}

inline std::vector<float> sample_prior(int d_latent, uint64_t seed) {
    Rng rng(seed, 0x9A37);
    std::vector<float> z(d_latent);
    for (float& v : z) v = rng.normal();
    return z;
}

// ---------------------------------------------------------------------------
// checkpoint container
// ---------------------------------------------------------------------------
inline constexpr uint32_t kCheckpointMagic = 0x43325654;  // "T2VC"
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    VaeConfig config;
    uint64_t dataset_hash = 0;
    int64_t epoch = 0;
};

inline void save_checkpoint(const PathVae& model, const std::filesystem::path& file,
                            uint64_t dataset_hash, int64_t epoch) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw ArgumentError("cannot write checkpoint: " + file.string());
    auto put = [&](const void* p, size_t n) { out.write(static_cast<const char*>(p), n); };
    put(&kCheckpointMagic, 4);
    put(&kCheckpointVersion, 4);
    const VaeConfig& c = model.cfg;
    int64_t ints[12] = {c.d_h, c.depth, c.d_seq, c.d_img, c.d_latent, c.k_max,
                        c.image_size, c.heads, c.ffn_dim, c.epochs, c.batch_size, c.aux_n};
    float floats[7] = {c.dropout, c.lambda_cfr, c.lambda_img, c.lambda_kl, c.lr, c.warmup_frac, 0.0f};
    int64_t decoded_points = c.decoded_points;
    put(ints, sizeof(ints));
    put(floats, sizeof(floats));
    put(&decoded_points, 8);
    put(&c.init_seed, 8);
    put(&dataset_hash, 8);
    put(&epoch, 8);
    std::vector<Tensor> params = model.parameters();
    uint64_t count = params.size();
    put(&count, 8);
    for (const Tensor& p : params) {
        uint32_t nd = static_cast<uint32_t>(p.shape().size());
        put(&nd, 4);
        for (int64_t d : p.shape()) put(&d, 8);
        put(p.data().data(), p.data().size() * 4);
    }
}

inline std::pair<PathVae, Checkpoint> load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ArgumentError("cannot open checkpoint: " + file.string());
    auto get = [&](void* p, size_t n) {
        in.read(static_cast<char*>(p), n);
        if (!in) throw ArgumentError("truncated checkpoint: " + file.string());
    };
    uint32_t magic = 0, version = 0;
    get(&magic, 4);
    if (magic != kCheckpointMagic) throw ArgumentError("not a checkpoint file: " + file.string());
    get(&version, 4);
    if (version != kCheckpointVersion) throw ArgumentError("unsupported checkpoint version");
    int64_t ints[12];
    float floats[7];
    int64_t decoded_points = 0;
    VaeConfig c;
    get(ints, sizeof(ints));
    get(floats, sizeof(floats));
    get(&decoded_points, 8);
    get(&c.init_seed, 8);
    c.d_h = static_cast<int>(ints[0]);
    c.depth = static_cast<int>(ints[1]);
    c.d_seq = static_cast<int>(ints[2]);
    c.d_img = static_cast<int>(ints[3]);
    c.d_latent = static_cast<int>(ints[4]);
    c.k_max = static_cast<int>(ints[5]);
    c.image_size = static_cast<int>(ints[6]);
    c.heads = static_cast<int>(ints[7]);
    c.ffn_dim = static_cast<int>(ints[8]);
    c.epochs = static_cast<int>(ints[9]);
    c.batch_size = static_cast<int>(ints[10]);
    c.aux_n = static_cast<int>(ints[11]);
    c.dropout = floats[0];
    c.lambda_cfr = floats[1];
    c.lambda_img = floats[2];
    c.lambda_kl = floats[3];
    c.lr = floats[4];
    c.warmup_frac = floats[5];
    c.decoded_points = static_cast<int>(decoded_points);

    Checkpoint meta;
    meta.config = c;
    get(&meta.dataset_hash, 8);
    get(&meta.epoch, 8);

    PathVae model(c);
    std::vector<Tensor> params = model.parameters();
    uint64_t count = 0;
    get(&count, 8);
    if (count != params.size()) throw ArgumentError("checkpoint parameter count mismatch");
    for (Tensor& p : params) {
        uint32_t nd = 0;
        get(&nd, 4);
        ad::Shape shape(nd);
        for (uint32_t i = 0; i < nd; ++i) get(&shape[i], 8);
        if (shape != p.shape()) throw ArgumentError("checkpoint parameter shape mismatch");
        get(p.data().data(), p.data().size() * 4);
    }
    return {std::move(model), meta};
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------
struct TrainResult {
    std::vector<std::string> log_lines;  // JSON lines, one per epoch
    std::vector<std::string> warnings;
    std::vector<double> val_chamfer;  // per epoch
    int64_t epochs_run = 0;
};

inline double validation_chamfer(const PathVae& model, const data::PathDataset& ds) {
    ad::NoGradGuard ng;
    double total = 0;
    int64_t n = 0;
    const int64_t chunk = 32;
    std::vector<const data::PathRecord*> val;
    for (const auto& r : ds.records)
        if (r.split == data::Split::val) val.push_back(&r);
    if (val.empty()) return 0.0;
    for (size_t start = 0; start < val.size(); start += chunk) {
        size_t end = std::min(val.size(), start + chunk);
        std::vector<BezierPath> paths;
        std::vector<const std::vector<float>*> imgs;
        for (size_t i = start; i < end; ++i) {
            paths.push_back(val[i]->path);
            imgs.push_back(&val[i]->image);
        }
        std::vector<int> lengths;
        Tensor padded = model.pad_paths(paths, lengths);
        Tensor z_seq = model.encode_sequence_padded(padded, lengths);
        Tensor z_img = model.encode_image_batch(model.image_tensor(imgs));
        auto [mu, logvar] = model.fuse(z_seq, z_img);
        Tensor decoded = model.decode_sequence_batch(mu);
        for (size_t i = start; i < end; ++i) {
            BezierPath rec = model.points_to_path(decoded, static_cast<int64_t>(i - start));
            geom::PointSet a = geom::sample_auxiliary_points(val[i]->path, model.cfg.aux_n);
            geom::PointSet b = geom::sample_auxiliary_points(rec, model.cfg.aux_n);
            total += geom::chamfer_distance(a, b);
            ++n;
        }
    }
    return n ? total / n : 0.0;
}

inline TrainResult train(PathVae& model, const data::PathDataset& ds,
                         const features::PerceptualBackend& perceptual, uint64_t seed,
                         const std::function<void(const std::string&)>& log_sink = {}) {
    if (ds.records.empty()) throw DatasetError("cannot train on an empty dataset");
    const VaeConfig& cfg = model.cfg;
    std::vector<const data::PathRecord*> train_set;
    for (const auto& r : ds.records)
        if (r.split == data::Split::train) train_set.push_back(&r);
    if (train_set.empty()) throw DatasetError("dataset has no training split");

    ad::Adam opt(model.parameters(), {.lr = cfg.lr});
    int64_t steps_per_epoch = (static_cast<int64_t>(train_set.size()) + cfg.batch_size - 1) / cfg.batch_size;
    int64_t total_steps = steps_per_epoch * cfg.epochs;

    TrainResult result;
    Rng data_rng(seed, 0xDA7A);
    Rng model_rng(seed, 0x0DE1);
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), 0);
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[data_rng.uniform_index(static_cast<uint32_t>(i))]);

        double ep_total = 0, ep_cfr = 0, ep_img = 0, ep_kl = 0;
        int64_t batches = 0;
        for (int64_t bstart = 0; bstart < static_cast<int64_t>(order.size()); bstart += cfg.batch_size) {
            int64_t bend = std::min<int64_t>(order.size(), bstart + cfg.batch_size);
            std::vector<BezierPath> paths;
            std::vector<const BezierPath*> path_ptrs;
            std::vector<const std::vector<float>*> imgs;
            for (int64_t i = bstart; i < bend; ++i) {
                const data::PathRecord* r = train_set[order[i]];
                paths.push_back(r->path);
                imgs.push_back(&r->image);
            }
            for (const BezierPath& p : paths) path_ptrs.push_back(&p);

            std::vector<int> lengths;
            Tensor padded = model.pad_paths(paths, lengths);
            Tensor images = model.image_tensor(imgs);
            Tensor z_seq = model.encode_sequence_padded(padded, lengths, &model_rng);
            Tensor z_img = model.encode_image_batch(images);
            auto [mu, logvar] = model.fuse(z_seq, z_img);
            Tensor z = PathVae::reparameterize(mu, logvar, model_rng);
            Tensor decoded_pts = model.decode_sequence_batch(z, &model_rng);
            Tensor decoded_img = model.decode_image_batch(z);
            LossTerms loss = vae_loss_terms(model, path_ptrs, images, decoded_pts, decoded_img, mu,
                                            logvar, perceptual);
            float total_v = loss.total.item();
            if (!std::isfinite(total_v))
                throw NumericError("vae training diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch));
            opt.zero_grad();
            ad::backward(loss.total);
            opt.step(ad::lr_schedule_scale(step, total_steps, cfg.warmup_frac));
            ++step;
            ep_total += total_v;
            ep_cfr += loss.cfr.item();
            ep_img += loss.img.item();
            ep_kl += loss.kl.item();
            ++batches;
        }

        double val_cfr = validation_chamfer(model, ds);
        result.val_chamfer.push_back(val_cfr);
        nlohmann::json line = {{"epoch", epoch},
                               {"loss", ep_total / batches},
                               {"L_cfr", ep_cfr / batches},
                               {"L_img", ep_img / batches},
                               {"L_kl", ep_kl / batches},
                               {"val_chamfer", val_cfr}};
        result.log_lines.push_back(line.dump());
        if (log_sink) log_sink(result.log_lines.back());

        if (epoch >= 10 && result.val_chamfer[epoch] > result.val_chamfer[epoch - 10]) {
            result.warnings.push_back("validation chamfer regressed over the last 10 epochs at epoch " +
                                      std::to_string(epoch));
        }
        result.epochs_run = epoch + 1;
    }
    return result;
}

}  // namespace t2v::vae
