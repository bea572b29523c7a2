#pragma once

#include <cmath>
#include <vector>

#include "t2v/tensor.hpp"
#include "t2v/util.hpp"

namespace t2v::nn {

using ad::Shape;
using ad::Tensor;

// ---------------------------------------------------------------------------
// row tiling helpers
// ---------------------------------------------------------------------------

// [S, D] -> [B*S, D], the block repeated B times
inline Tensor tile_rows(const Tensor& x, int64_t times) {
    int64_t rows, cols;
    ad::as2d(x.shape(), rows, cols);
    std::vector<float> out(static_cast<size_t>(times) * rows * cols);
    for (int64_t t = 0; t < times; ++t)
        std::copy(x.data().begin(), x.data().end(), out.begin() + t * rows * cols);
    auto xn = x.node();
    return ad::make_op({times * rows, cols}, std::move(out), {x}, [xn, times, rows, cols](ad::Node& self) {
        for (int64_t t = 0; t < times; ++t)
            for (int64_t i = 0; i < rows * cols; ++i) xn->grad[i] += self.grad[t * rows * cols + i];
    });
}

// [B, D] -> [B*times, D], each row repeated `times` consecutive times
inline Tensor repeat_rows(const Tensor& x, int64_t times) {
    int64_t rows, cols;
    ad::as2d(x.shape(), rows, cols);
    std::vector<float> out(static_cast<size_t>(times) * rows * cols);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t t = 0; t < times; ++t)
            std::copy(x.data().begin() + r * cols, x.data().begin() + (r + 1) * cols,
                      out.begin() + (r * times + t) * cols);
    auto xn = x.node();
    return ad::make_op({rows * times, cols}, std::move(out), {x}, [xn, times, rows, cols](ad::Node& self) {
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t t = 0; t < times; ++t)
                for (int64_t c = 0; c < cols; ++c)
                    xn->grad[r * cols + c] += self.grad[(r * times + t) * cols + c];
    });
}

// fixed sinusoidal positional table [positions, dim]
inline Tensor sinusoidal_positions(int64_t positions, int64_t dim) {
    std::vector<float> table(static_cast<size_t>(positions) * dim);
    for (int64_t p = 0; p < positions; ++p) {
        for (int64_t i = 0; i < dim; ++i) {
            double angle = static_cast<double>(p) /
                           std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
            table[p * dim + i] = static_cast<float>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
        }
    }
    return Tensor::from(std::move(table), {positions, dim});
}

// ---------------------------------------------------------------------------
// modules
// ---------------------------------------------------------------------------
struct Linear {
    Tensor W, b;

    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng) {
        float scale = std::sqrt(2.0f / static_cast<float>(in + out));
        W = Tensor::randn({in, out}, rng, scale, true);
        b = Tensor::zeros({out}, true);
    }

    Tensor forward(const Tensor& x) const { return ad::add_rowwise(ad::matmul(x, W), b); }

    void collect(std::vector<Tensor>& out) const {
        out.push_back(W);
        out.push_back(b);
    }
};

struct LayerNorm {
    Tensor gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(int64_t dim) {
        gamma = Tensor::full({dim}, 1.0f, true);
        beta = Tensor::zeros({dim}, true);
    }

    Tensor forward(const Tensor& x) const { return ad::layer_norm(x, gamma, beta); }

    void collect(std::vector<Tensor>& out) const {
        out.push_back(gamma);
        out.push_back(beta);
    }
};

// additive attention bias from a per-sample key validity mask
inline std::vector<Tensor> attention_biases(const std::vector<std::vector<uint8_t>>& valid, int64_t seq) {
    std::vector<Tensor> biases;
    biases.reserve(valid.size());
    for (const auto& v : valid) {
        std::vector<float> bias(static_cast<size_t>(seq) * seq, 0.0f);
        for (int64_t j = 0; j < seq; ++j) {
            if (!v[static_cast<size_t>(j)]) {
                for (int64_t i = 0; i < seq; ++i) bias[i * seq + j] = -1e9f;
            }
        }
        biases.push_back(Tensor::from(std::move(bias), {seq, seq}));
    }
    return biases;
}

struct MultiHeadSelfAttention {
    int64_t dim = 0, heads = 1, head_dim = 0;
    Linear wq, wk, wv, wo;

    MultiHeadSelfAttention() = default;
    MultiHeadSelfAttention(int64_t dim_, int64_t heads_, Rng& rng)
        : dim(dim_), heads(heads_), head_dim(dim_ / heads_),
          wq(dim_, dim_, rng), wk(dim_, dim_, rng), wv(dim_, dim_, rng), wo(dim_, dim_, rng) {
        if (dim % heads != 0) throw ArgumentError("attention dim must divide heads");
    }

    // x: [B*S, dim]; bias: nullptr or per-sample [S, S] additive mask
    Tensor forward(const Tensor& x, int64_t batch, int64_t seq, const std::vector<Tensor>* bias) const {
        Tensor q = wq.forward(x);
        Tensor k = wk.forward(x);
        Tensor v = wv.forward(x);
        float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(head_dim));
        std::vector<Tensor> rows;
        rows.reserve(batch);
        for (int64_t b = 0; b < batch; ++b) {
            Tensor qb = ad::slice_rows(q, b * seq, (b + 1) * seq);
            Tensor kb = ad::slice_rows(k, b * seq, (b + 1) * seq);
            Tensor vb = ad::slice_rows(v, b * seq, (b + 1) * seq);
            std::vector<Tensor> head_outs;
            head_outs.reserve(heads);
            for (int64_t h = 0; h < heads; ++h) {
                Tensor qh = ad::slice_cols(qb, h * head_dim, (h + 1) * head_dim);
                Tensor kh = ad::slice_cols(kb, h * head_dim, (h + 1) * head_dim);
                Tensor vh = ad::slice_cols(vb, h * head_dim, (h + 1) * head_dim);
                Tensor scores = ad::mul_scalar(ad::matmul(qh, ad::transpose2d(kh)), inv_sqrt);
                if (bias) scores = ad::add(scores, (*bias)[b]);
                Tensor attn = ad::softmax_rows(scores);
                head_outs.push_back(ad::matmul(attn, vh));
            }
            rows.push_back(heads == 1 ? head_outs[0] : ad::concat_cols(head_outs));
        }
        Tensor merged = batch == 1 ? rows[0] : ad::concat_rows(rows);
        return wo.forward(merged);
    }

    void collect(std::vector<Tensor>& out) const {
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
    }
};

// pre-norm transformer block
struct TransformerLayer {
    MultiHeadSelfAttention attn;
    LayerNorm norm1, norm2;
    Linear ff1, ff2;
    float dropout = 0.0f;

    TransformerLayer() = default;
    TransformerLayer(int64_t dim, int64_t heads, int64_t ffn_dim, float dropout_, Rng& rng)
        : attn(dim, heads, rng), norm1(dim), norm2(dim),
          ff1(dim, ffn_dim, rng), ff2(ffn_dim, dim, rng), dropout(dropout_) {}

    Tensor forward(const Tensor& x, int64_t batch, int64_t seq, const std::vector<Tensor>* bias,
                   Rng* train_rng) const {
        Tensor a = attn.forward(norm1.forward(x), batch, seq, bias);
        if (train_rng && dropout > 0.0f) a = ad::dropout(a, dropout, *train_rng);
        Tensor h = ad::add(x, a);
        Tensor f = ff2.forward(ad::relu(ff1.forward(norm2.forward(h))));
        if (train_rng && dropout > 0.0f) f = ad::dropout(f, dropout, *train_rng);
        return ad::add(h, f);
    }

    void collect(std::vector<Tensor>& out) const {
        attn.collect(out);
        norm1.collect(out);
        norm2.collect(out);
        ff1.collect(out);
        ff2.collect(out);
    }
};

struct Conv2d {
    Tensor W, b;
    int64_t stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int64_t cin, int64_t cout, int64_t k, int64_t stride_, int64_t pad_, Rng& rng)
        : stride(stride_), pad(pad_) {
        float scale = std::sqrt(2.0f / static_cast<float>(cin * k * k));
        W = Tensor::randn({cout, cin, k, k}, rng, scale, true);
        b = Tensor::zeros({cout}, true);
    }

    Tensor forward(const Tensor& x) const { return ad::conv2d(x, W, b, stride, pad); }

    void collect(std::vector<Tensor>& out) const {
        out.push_back(W);
        out.push_back(b);
    }
};

struct ConvTranspose2d {
    Tensor W, b;
    int64_t stride = 1, pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int64_t cin, int64_t cout, int64_t k, int64_t stride_, int64_t pad_, Rng& rng)
        : stride(stride_), pad(pad_) {
        float scale = std::sqrt(2.0f / static_cast<float>(cin * k * k));
        W = Tensor::randn({cin, cout, k, k}, rng, scale, true);
        b = Tensor::zeros({cout}, true);
    }

    Tensor forward(const Tensor& x) const { return ad::conv_transpose2d(x, W, b, stride, pad); }

    void collect(std::vector<Tensor>& out) const {
        out.push_back(W);
        out.push_back(b);
    }
};

}  // namespace t2v::nn
