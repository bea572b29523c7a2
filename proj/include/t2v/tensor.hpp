#pragma once

// Reverse-mode autodiff over float32 tensors. Dense matmuls go through
// Eigen; everything else is plain loops. All reductions run in a fixed
// order so results are bit-stable between runs.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "t2v/util.hpp"

namespace t2v::ad {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline bool grad_enabled_flag(int delta = 0) {
    thread_local int depth = 0;
    depth += delta;
    return depth == 0;
}

struct NoGradGuard {
    NoGradGuard() { grad_enabled_flag(+1); }
    ~NoGradGuard() { grad_enabled_flag(-1); }
};

inline bool grad_enabled() { return grad_enabled_flag(); }

struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor from(std::vector<float> data, Shape shape, bool requires_grad = false) {
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw ArgumentError("tensor data does not match shape");
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(n);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        int64_t n = shape_numel(shape);
        return from(std::vector<float>(n, 0.0f), std::move(shape), requires_grad);
    }

    static Tensor full(Shape shape, float v, bool requires_grad = false) {
        int64_t n = shape_numel(shape);
        return from(std::vector<float>(n, v), std::move(shape), requires_grad);
    }

    static Tensor scalar(float v, bool requires_grad = false) {
        return from({v}, {1}, requires_grad);
    }

    static Tensor randn(Shape shape, Rng& rng, float stddev = 1.0f, bool requires_grad = false) {
        std::vector<float> d(shape_numel(shape));
        for (float& x : d) x = rng.normal() * stddev;
        return from(std::move(d), std::move(shape), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
    int64_t dim(int i) const { return node_->shape[i]; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }

    std::vector<float>& data() { return node_->value; }
    const std::vector<float>& data() const { return node_->value; }
    std::vector<float>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0f); }

    float item() const {
        if (node_->value.size() != 1) throw ArgumentError("item() on non-scalar tensor");
        return node_->value[0];
    }

    std::shared_ptr<Node> node() const { return node_; }

    Tensor detach() const {
        auto n = std::make_shared<Node>();
        n->shape = node_->shape;
        n->value = node_->value;
        n->requires_grad = false;
        return Tensor(n);
    }

private:
    std::shared_ptr<Node> node_;
};

// build an op node; backward_fn sees the finished node (grad filled)
inline Tensor make_op(Shape shape, std::vector<float> value, std::vector<Tensor> parents,
                      std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (grad_enabled()) {
        bool any = false;
        for (const Tensor& p : parents) any = any || p.requires_grad();
        if (any) {
            n->requires_grad = true;
            n->parents.reserve(parents.size());
            for (const Tensor& p : parents) n->parents.push_back(p.node());
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(n);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------
inline void backward(const Tensor& root, const std::vector<float>* seed = nullptr) {
    Node* r = root.node().get();
    if (!r->requires_grad) throw ArgumentError("backward() on a graph with no gradients");
    r->ensure_grad();
    if (seed) {
        if (seed->size() != r->value.size()) throw ArgumentError("seed gradient shape mismatch");
        for (size_t i = 0; i < seed->size(); ++i) r->grad[i] += (*seed)[i];
    } else {
        if (r->value.size() != 1) throw ArgumentError("implicit backward needs a scalar root");
        r->grad[0] += 1.0f;
    }

    // iterative post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        size_t next_child;
    };
    std::vector<Frame> stack{{r, 0}};
    visited.insert(r);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.n->parents.size()) {
            Node* c = f.n->parents[f.next_child++].get();
            if (c->requires_grad && !visited.count(c)) {
                visited.insert(c);
                stack.push_back({c, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            for (const auto& p : n->parents) p->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

// ---------------------------------------------------------------------------
// Eigen map helpers
// ---------------------------------------------------------------------------
using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

inline MapC map2(const std::vector<float>& v, int64_t rows, int64_t cols) {
    return MapC(v.data(), rows, cols);
}
inline MapM map2(std::vector<float>& v, int64_t rows, int64_t cols) {
    return MapM(v.data(), rows, cols);
}

// rows/cols of a tensor treated as 2-D (trailing dim = cols)
inline void as2d(const Shape& s, int64_t& rows, int64_t& cols) {
    if (s.empty()) throw ArgumentError("scalar tensor where matrix expected");
    cols = s.back();
    rows = 1;
    for (size_t i = 0; i + 1 < s.size(); ++i) rows *= s[i];
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------
namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) throw ArgumentError(std::string(what) + ": shape mismatch");
}

template <typename F, typename G>
Tensor unary_op(const Tensor& x, F&& f, G&& dfdx) {
    const auto& xv = x.data();
    std::vector<float> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {x}, [xn, dfdx](Node& self) {
        for (size_t i = 0; i < self.value.size(); ++i)
            xn->grad[i] += self.grad[i] * dfdx(xn->value[i], self.value[i]);
    });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (b.numel() == 1 && a.numel() != 1) {
        float bv = b.data()[0];
        const auto& av = a.data();
        std::vector<float> out(av.size());
        for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv;
        auto an = a.node(), bn = b.node();
        return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
            if (an->requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            if (bn->requires_grad) {
                double acc = 0;
                for (float g : self.grad) acc += g;
                bn->grad[0] += static_cast<float>(acc);
            }
        });
    }
    detail::check_same_shape(a, b, "add");
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
    });
}

// x: [M, N], bias: [N], added to every row
inline Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
    int64_t rows, cols;
    as2d(x.shape(), rows, cols);
    if (bias.numel() != cols) throw ArgumentError("add_rowwise: bias length mismatch");
    const auto& xv = x.data();
    const auto& bv = bias.data();
    std::vector<float> out(xv.size());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
    auto xn = x.node(), bn = bias.node();
    return make_op(x.shape(), std::move(out), {x, bias}, [xn, bn, rows, cols](Node& self) {
        if (xn->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        if (bn->requires_grad)
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < cols; ++c) bn->grad[c] += self.grad[r * cols + c];
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (b.numel() == 1 && a.numel() != 1) {
        float bv = b.data()[0];
        const auto& av = a.data();
        std::vector<float> out(av.size());
        for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv;
        auto an = a.node(), bn = b.node();
        return make_op(a.shape(), std::move(out), {a, b}, [an, bn, bv](Node& self) {
            if (an->requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bv;
            if (bn->requires_grad) {
                double acc = 0;
                for (size_t i = 0; i < self.grad.size(); ++i)
                    acc += static_cast<double>(self.grad[i]) * an->value[i];
                bn->grad[0] += static_cast<float>(acc);
            }
        });
    }
    detail::check_same_shape(a, b, "mul");
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
    });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    if (b.numel() == 1 && a.numel() != 1) {
        float bv = b.data()[0];
        const auto& av = a.data();
        std::vector<float> out(av.size());
        for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv;
        auto an = a.node(), bn = b.node();
        return make_op(a.shape(), std::move(out), {a, b}, [an, bn, bv](Node& self) {
            if (an->requires_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] / bv;
            if (bn->requires_grad) {
                double acc = 0;
                for (size_t i = 0; i < self.grad.size(); ++i)
                    acc -= static_cast<double>(self.grad[i]) * an->value[i] / (bv * bv);
                bn->grad[0] += static_cast<float>(acc);
            }
        });
    }
    detail::check_same_shape(a, b, "div");
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] / bn->value[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] -= self.grad[i] * an->value[i] / (bn->value[i] * bn->value[i]);
    });
}

inline Tensor add_scalar(const Tensor& x, float c) {
    return detail::unary_op(x, [c](float v) { return v + c; }, [](float, float) { return 1.0f; });
}
inline Tensor mul_scalar(const Tensor& x, float c) {
    return detail::unary_op(x, [c](float v) { return v * c; }, [c](float, float) { return c; });
}
inline Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0f); }

inline Tensor exp(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return std::exp(v); },
                            [](float, float y) { return y; });
}
inline Tensor log(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return std::log(std::max(v, 1e-20f)); },
                            [](float v, float) { return 1.0f / std::max(v, 1e-20f); });
}
inline Tensor sigmoid(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
                            [](float, float y) { return y * (1.0f - y); });
}
inline Tensor tanh(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return std::tanh(v); },
                            [](float, float y) { return 1.0f - y * y; });
}
inline Tensor relu(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return v > 0.0f ? v : 0.0f; },
                            [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}
inline Tensor square(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return v * v; },
                            [](float v, float) { return 2.0f * v; });
}
inline Tensor sqrt(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return std::sqrt(std::max(v, 0.0f)); },
                            [](float v, float y) { return v > 0.0f ? 0.5f / y : 0.0f; });
}
inline Tensor abs(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return std::fabs(v); },
                            [](float v, float) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}
inline Tensor sin(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return std::sin(v); },
                            [](float v, float) { return std::cos(v); });
}
inline Tensor cos(const Tensor& x) {
    return detail::unary_op(x, [](float v) { return std::cos(v); },
                            [](float v, float) { return -std::sin(v); });
}
inline Tensor clamp(const Tensor& x, float lo, float hi) {
    return detail::unary_op(x, [lo, hi](float v) { return std::clamp(v, lo, hi); },
                            [lo, hi](float v, float) { return (v > lo && v < hi) ? 1.0f : 0.0f; });
}

inline Tensor minimum(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "minimum");
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::min(av[i], bv[i]);
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
            bool a_wins = an->value[i] <= bn->value[i];
            if (a_wins && an->requires_grad) an->grad[i] += self.grad[i];
            if (!a_wins && bn->requires_grad) bn->grad[i] += self.grad[i];
        }
    });
}

inline Tensor maximum(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "maximum");
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = std::max(av[i], bv[i]);
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
            bool a_wins = an->value[i] >= bn->value[i];
            if (a_wins && an->requires_grad) an->grad[i] += self.grad[i];
            if (!a_wins && bn->requires_grad) bn->grad[i] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------
inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) throw ArgumentError("reshape: element count mismatch");
    auto xn = x.node();
    return make_op(std::move(shape), x.data(), {x}, [xn](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    });
}

inline Tensor transpose2d(const Tensor& x) {
    int64_t rows, cols;
    as2d(x.shape(), rows, cols);
    std::vector<float> out(x.numel());
    map2(out, cols, rows) = map2(x.data(), rows, cols).transpose();
    auto xn = x.node();
    return make_op({cols, rows}, std::move(out), {x}, [xn, rows, cols](Node& self) {
        map2(xn->grad, rows, cols) += map2(self.grad, cols, rows).transpose();
    });
}

inline Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1) {
    int64_t rows, cols;
    as2d(x.shape(), rows, cols);
    if (r0 < 0 || r1 > rows || r0 >= r1) throw ArgumentError("slice_rows: bad range");
    std::vector<float> out(static_cast<size_t>(r1 - r0) * cols);
    std::copy(x.data().begin() + r0 * cols, x.data().begin() + r1 * cols, out.begin());
    auto xn = x.node();
    return make_op({r1 - r0, cols}, std::move(out), {x}, [xn, r0, cols](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[r0 * cols + i] += self.grad[i];
    });
}

inline Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
    int64_t rows, cols;
    as2d(x.shape(), rows, cols);
    if (c0 < 0 || c1 > cols || c0 >= c1) throw ArgumentError("slice_cols: bad range");
    int64_t w = c1 - c0;
    std::vector<float> out(static_cast<size_t>(rows) * w);
    for (int64_t r = 0; r < rows; ++r)
        std::copy(x.data().begin() + r * cols + c0, x.data().begin() + r * cols + c1,
                  out.begin() + r * w);
    auto xn = x.node();
    return make_op({rows, w}, std::move(out), {x}, [xn, rows, cols, c0, w](Node& self) {
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < w; ++c) xn->grad[r * cols + c0 + c] += self.grad[r * w + c];
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat_cols: empty");
    int64_t rows = 0, total = 0;
    std::vector<int64_t> widths;
    for (const Tensor& t : parts) {
        int64_t r, c;
        as2d(t.shape(), r, c);
        if (rows == 0) rows = r;
        if (r != rows) throw ArgumentError("concat_cols: row mismatch");
        widths.push_back(c);
        total += c;
    }
    std::vector<float> out(static_cast<size_t>(rows) * total);
    int64_t off = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        const auto& pv = parts[k].data();
        for (int64_t r = 0; r < rows; ++r)
            std::copy(pv.begin() + r * widths[k], pv.begin() + (r + 1) * widths[k],
                      out.begin() + r * total + off);
        off += widths[k];
    }
    std::vector<std::shared_ptr<Node>> pnodes;
    for (const Tensor& t : parts) pnodes.push_back(t.node());
    return make_op({rows, total}, std::move(out), parts,
                   [pnodes, widths, rows, total](Node& self) {
                       int64_t off2 = 0;
                       for (size_t k = 0; k < pnodes.size(); ++k) {
                           if (pnodes[k]->requires_grad) {
                               for (int64_t r = 0; r < rows; ++r)
                                   for (int64_t c = 0; c < widths[k]; ++c)
                                       pnodes[k]->grad[r * widths[k] + c] +=
                                           self.grad[r * total + off2 + c];
                           }
                           off2 += widths[k];
                       }
                   });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat_rows: empty");
    int64_t cols = 0, total_rows = 0;
    std::vector<int64_t> heights;
    for (const Tensor& t : parts) {
        int64_t r, c;
        as2d(t.shape(), r, c);
        if (cols == 0) cols = c;
        if (c != cols) throw ArgumentError("concat_rows: column mismatch");
        heights.push_back(r);
        total_rows += r;
    }
    std::vector<float> out;
    out.reserve(static_cast<size_t>(total_rows) * cols);
    for (const Tensor& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
    std::vector<std::shared_ptr<Node>> pnodes;
    for (const Tensor& t : parts) pnodes.push_back(t.node());
    return make_op({total_rows, cols}, std::move(out), parts,
                   [pnodes, heights, cols](Node& self) {
                       int64_t row_off = 0;
                       for (size_t k = 0; k < pnodes.size(); ++k) {
                           int64_t count = heights[k] * cols;
                           if (pnodes[k]->requires_grad)
                               for (int64_t i = 0; i < count; ++i)
                                   pnodes[k]->grad[i] += self.grad[row_off * cols + i];
                           row_off += heights[k];
                       }
                   });
}

// ---------------------------------------------------------------------------
// matmul and reductions
// ---------------------------------------------------------------------------
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    int64_t ar, ac, br, bc;
    as2d(a.shape(), ar, ac);
    as2d(b.shape(), br, bc);
    if (ac != br) throw ArgumentError("matmul: inner dimension mismatch");
    std::vector<float> out(static_cast<size_t>(ar) * bc);
    map2(out, ar, bc).noalias() = map2(a.data(), ar, ac) * map2(b.data(), br, bc);
    auto an = a.node(), bn = b.node();
    return make_op({ar, bc}, std::move(out), {a, b}, [an, bn, ar, ac, bc](Node& self) {
        auto g = map2(self.grad, ar, bc);
        if (an->requires_grad)
            map2(an->grad, ar, ac).noalias() += g * map2(bn->value, ac, bc).transpose();
        if (bn->requires_grad)
            map2(bn->grad, ac, bc).noalias() += map2(an->value, ar, ac).transpose() * g;
    });
}

inline Tensor sum(const Tensor& x) {
    double acc = 0;
    for (float v : x.data()) acc += v;
    auto xn = x.node();
    return make_op({1}, {static_cast<float>(acc)}, {x}, [xn](Node& self) {
        float g = self.grad[0];
        for (float& gi : xn->grad) gi += g;
    });
}

inline Tensor mean(const Tensor& x) {
    double acc = 0;
    for (float v : x.data()) acc += v;
    float inv = 1.0f / static_cast<float>(x.numel());
    auto xn = x.node();
    return make_op({1}, {static_cast<float>(acc * inv)}, {x}, [xn, inv](Node& self) {
        float g = self.grad[0] * inv;
        for (float& gi : xn->grad) gi += g;
    });
}

// row-wise softmax over the last dimension
inline Tensor softmax_rows(const Tensor& x) {
    int64_t rows, cols;
    as2d(x.shape(), rows, cols);
    std::vector<float> out(x.numel());
    const auto& xv = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = &xv[r * cols];
        float* dst = &out[r * cols];
        float mx = src[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, src[c]);
        double denom = 0;
        for (int64_t c = 0; c < cols; ++c) {
            dst[c] = std::exp(src[c] - mx);
            denom += dst[c];
        }
        float inv = static_cast<float>(1.0 / denom);
        for (int64_t c = 0; c < cols; ++c) dst[c] *= inv;
    }
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {x}, [xn, rows, cols](Node& self) {
        for (int64_t r = 0; r < rows; ++r) {
            const float* y = &self.value[r * cols];
            const float* g = &self.grad[r * cols];
            double dot = 0;
            for (int64_t c = 0; c < cols; ++c) dot += static_cast<double>(y[c]) * g[c];
            float* gx = &xn->grad[r * cols];
            for (int64_t c = 0; c < cols; ++c)
                gx[c] += y[c] * (g[c] - static_cast<float>(dot));
        }
    });
}

// layer norm over the last dimension with affine parameters
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f) {
    int64_t rows, cols;
    as2d(x.shape(), rows, cols);
    if (gamma.numel() != cols || beta.numel() != cols)
        throw ArgumentError("layer_norm: parameter length mismatch");
    std::vector<float> out(x.numel());
    std::vector<float> inv_std(rows), mean_row(rows);
    const auto& xv = x.data();
    const auto& gv = gamma.data();
    const auto& bv = beta.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = &xv[r * cols];
        double m = 0;
        for (int64_t c = 0; c < cols; ++c) m += src[c];
        m /= cols;
        double var = 0;
        for (int64_t c = 0; c < cols; ++c) {
            double d = src[c] - m;
            var += d * d;
        }
        var /= cols;
        float is = static_cast<float>(1.0 / std::sqrt(var + eps));
        mean_row[r] = static_cast<float>(m);
        inv_std[r] = is;
        float* dst = &out[r * cols];
        for (int64_t c = 0; c < cols; ++c)
            dst[c] = (src[c] - mean_row[r]) * is * gv[c] + bv[c];
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return make_op(x.shape(), std::move(out), {x, gamma, beta},
                   [xn, gn, bn, rows, cols, inv_std, mean_row](Node& self) {
                       for (int64_t r = 0; r < rows; ++r) {
                           const float* xrow = &xn->value[r * cols];
                           const float* grow = &self.grad[r * cols];
                           float is = inv_std[r], mu = mean_row[r];
                           // dL/dxhat and its statistics
                           double sum_g = 0, sum_gx = 0;
                           for (int64_t c = 0; c < cols; ++c) {
                               float xhat = (xrow[c] - mu) * is;
                               float gy = grow[c] * gn->value[c];
                               sum_g += gy;
                               sum_gx += static_cast<double>(gy) * xhat;
                               if (gn->requires_grad) gn->grad[c] += grow[c] * xhat;
                               if (bn->requires_grad) bn->grad[c] += grow[c];
                           }
                           if (xn->requires_grad) {
                               float* gx = &xn->grad[r * cols];
                               float invn = 1.0f / static_cast<float>(cols);
                               for (int64_t c = 0; c < cols; ++c) {
                                   float xhat = (xrow[c] - mu) * is;
                                   float gy = grow[c] * gn->value[c];
                                   gx[c] += is * (gy - invn * static_cast<float>(sum_g) -
                                                  xhat * invn * static_cast<float>(sum_gx));
                               }
                           }
                       }
                   });
}

inline Tensor dropout(const Tensor& x, float p, Rng& rng) {
    if (p <= 0.0f) return x;
    if (p >= 1.0f) throw ArgumentError("dropout probability must be < 1");
    float scale = 1.0f / (1.0f - p);
    std::vector<float> mask(x.numel());
    for (float& m : mask) m = (rng.uniform() < p) ? 0.0f : scale;
    const auto& xv = x.data();
    std::vector<float> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {x}, [xn, mask](Node& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * mask[i];
    });
}

// ---------------------------------------------------------------------------
// convolution: x [B, C, H, W]
// ---------------------------------------------------------------------------
namespace detail {

inline void im2col(const float* img, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
                   int64_t pad, int64_t Ho, int64_t Wo, float* cols) {
    // cols layout: [C*k*k, Ho*Wo]
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                int64_t row = (c * k + ky) * k + kx;
                float* dst = cols + row * Ho * Wo;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    int64_t iy = oy * stride + ky - pad;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        int64_t ix = ox * stride + kx - pad;
                        dst[oy * Wo + ox] =
                            (iy >= 0 && iy < H && ix >= 0 && ix < W) ? img[(c * H + iy) * W + ix] : 0.0f;
                    }
                }
            }
        }
    }
}

inline void col2im_add(const float* cols, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
                       int64_t pad, int64_t Ho, int64_t Wo, float* img) {
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                int64_t row = (c * k + ky) * k + kx;
                const float* src = cols + row * Ho * Wo;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    int64_t iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        int64_t ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W) img[(c * H + iy) * W + ix] += src[oy * Wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// w: [Cout, Cin, k, k], bias: [Cout] (optional, pass undefined Tensor to skip)
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride, int64_t pad) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 4) throw ArgumentError("conv2d expects 4-D tensors");
    int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    int64_t Cout = ws[0], k = ws[2];
    if (ws[1] != C || ws[3] != k) throw ArgumentError("conv2d: weight shape mismatch");
    int64_t Ho = (H + 2 * pad - k) / stride + 1;
    int64_t Wo = (W + 2 * pad - k) / stride + 1;

    std::vector<float> out(static_cast<size_t>(B) * Cout * Ho * Wo);
    int64_t col_rows = C * k * k, col_cols = Ho * Wo;
    {
        std::vector<float> cols(static_cast<size_t>(col_rows) * col_cols);
        for (int64_t b = 0; b < B; ++b) {
            detail::im2col(&x.data()[b * C * H * W], C, H, W, k, stride, pad, Ho, Wo, cols.data());
            map2(out, B * Cout, Ho * Wo).middleRows(b * Cout, Cout).noalias() =
                map2(w.data(), Cout, col_rows) * map2(cols, col_rows, col_cols);
        }
    }
    if (bias.defined()) {
        if (bias.numel() != Cout) throw ArgumentError("conv2d: bias length mismatch");
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < Cout; ++c) {
                float bv = bias.data()[c];
                float* dst = &out[(b * Cout + c) * Ho * Wo];
                for (int64_t i = 0; i < Ho * Wo; ++i) dst[i] += bv;
            }
    }

    std::vector<Tensor> parents = bias.defined() ? std::vector<Tensor>{x, w, bias}
                                                 : std::vector<Tensor>{x, w};
    auto xn = x.node(), wn = w.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    return make_op({B, Cout, Ho, Wo}, std::move(out), parents,
                   [xn, wn, bn, B, C, H, W, Cout, k, stride, pad, Ho, Wo, col_rows,
                    col_cols](Node& self) {
                       std::vector<float> cols(static_cast<size_t>(col_rows) * col_cols);
                       std::vector<float> dcols(cols.size());
                       for (int64_t b = 0; b < B; ++b) {
                           auto g = map2(self.grad, B * Cout, Ho * Wo).middleRows(b * Cout, Cout);
                           if (wn->requires_grad || xn->requires_grad)
                               detail::im2col(&xn->value[b * C * H * W], C, H, W, k, stride, pad, Ho,
                                              Wo, cols.data());
                           if (wn->requires_grad)
                               map2(wn->grad, Cout, col_rows).noalias() +=
                                   g * map2(cols, col_rows, col_cols).transpose();
                           if (xn->requires_grad) {
                               map2(dcols, col_rows, col_cols).noalias() =
                                   map2(wn->value, Cout, col_rows).transpose() * g;
                               detail::col2im_add(dcols.data(), C, H, W, k, stride, pad, Ho, Wo,
                                                  &xn->grad[b * C * H * W]);
                           }
                           if (bn && bn->requires_grad) {
                               for (int64_t c = 0; c < Cout; ++c) {
                                   const float* src = &self.grad[(b * Cout + c) * Ho * Wo];
                                   double acc = 0;
                                   for (int64_t i = 0; i < Ho * Wo; ++i) acc += src[i];
                                   bn->grad[c] += static_cast<float>(acc);
                               }
                           }
                       }
                   });
}

// transposed convolution; w: [Cin, Cout, k, k]; output size = stride * H
inline Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride,
                               int64_t pad) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 4) throw ArgumentError("conv_transpose2d expects 4-D tensors");
    int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    int64_t Cout = ws[1], k = ws[2];
    if (ws[0] != C || ws[3] != k) throw ArgumentError("conv_transpose2d: weight shape mismatch");
    int64_t Ho = (H - 1) * stride + k - 2 * pad;
    int64_t Wo = (W - 1) * stride + k - 2 * pad;

    int64_t col_rows = Cout * k * k, col_cols = H * W;
    std::vector<float> out(static_cast<size_t>(B) * Cout * Ho * Wo, 0.0f);
    {
        std::vector<float> cols(static_cast<size_t>(col_rows) * col_cols);
        for (int64_t b = 0; b < B; ++b) {
            map2(cols, col_rows, col_cols).noalias() =
                map2(w.data(), C, col_rows).transpose() * map2(x.data(), B * C, H * W).middleRows(b * C, C);
            detail::col2im_add(cols.data(), Cout, Ho, Wo, k, stride, pad, H, W,
                               &out[b * Cout * Ho * Wo]);
        }
    }
    if (bias.defined()) {
        if (bias.numel() != Cout) throw ArgumentError("conv_transpose2d: bias length mismatch");
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < Cout; ++c) {
                float bv = bias.data()[c];
                float* dst = &out[(b * Cout + c) * Ho * Wo];
                for (int64_t i = 0; i < Ho * Wo; ++i) dst[i] += bv;
            }
    }

    std::vector<Tensor> parents = bias.defined() ? std::vector<Tensor>{x, w, bias}
                                                 : std::vector<Tensor>{x, w};
    auto xn = x.node(), wn = w.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    return make_op({B, Cout, Ho, Wo}, std::move(out), parents,
                   [xn, wn, bn, B, C, H, W, Cout, k, stride, pad, Ho, Wo, col_rows,
                    col_cols](Node& self) {
                       std::vector<float> dcols(static_cast<size_t>(col_rows) * col_cols);
                       for (int64_t b = 0; b < B; ++b) {
                           detail::im2col(&self.grad[b * Cout * Ho * Wo], Cout, Ho, Wo, k, stride,
                                          pad, H, W, dcols.data());
                           if (xn->requires_grad)
                               map2(xn->grad, B * C, H * W).middleRows(b * C, C).noalias() +=
                                   map2(wn->value, C, col_rows) * map2(dcols, col_rows, col_cols);
                           if (wn->requires_grad)
                               map2(wn->grad, C, col_rows).noalias() +=
                                   map2(xn->value, B * C, H * W).middleRows(b * C, C) *
                                   map2(dcols, col_rows, col_cols).transpose();
                           if (bn && bn->requires_grad) {
                               for (int64_t c = 0; c < Cout; ++c) {
                                   const float* src = &self.grad[(b * Cout + c) * Ho * Wo];
                                   double acc = 0;
                                   for (int64_t i = 0; i < Ho * Wo; ++i) acc += src[i];
                                   bn->grad[c] += static_cast<float>(acc);
                               }
                           }
                       }
                   });
}

// non-overlapping average pooling on [B, C, H, W]
inline Tensor avg_pool2d(const Tensor& x, int64_t k) {
    const Shape& xs = x.shape();
    if (xs.size() != 4) throw ArgumentError("avg_pool2d expects a 4-D tensor");
    int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (H % k != 0 || W % k != 0) throw ArgumentError("avg_pool2d: size not divisible by kernel");
    int64_t Ho = H / k, Wo = W / k;
    std::vector<float> out(static_cast<size_t>(B) * C * Ho * Wo);
    float inv = 1.0f / static_cast<float>(k * k);
    const auto& xv = x.data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const float* src = &xv[bc * H * W];
        float* dst = &out[bc * Ho * Wo];
        for (int64_t oy = 0; oy < Ho; ++oy)
            for (int64_t ox = 0; ox < Wo; ++ox) {
                double acc = 0;
                for (int64_t dy = 0; dy < k; ++dy)
                    for (int64_t dx = 0; dx < k; ++dx) acc += src[(oy * k + dy) * W + ox * k + dx];
                dst[oy * Wo + ox] = static_cast<float>(acc) * inv;
            }
    }
    auto xn = x.node();
    return make_op({B, C, Ho, Wo}, std::move(out), {x}, [xn, B, C, H, W, k, Ho, Wo, inv](Node& self) {
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const float* g = &self.grad[bc * Ho * Wo];
            float* gx = &xn->grad[bc * H * W];
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    float gv = g[oy * Wo + ox] * inv;
                    for (int64_t dy = 0; dy < k; ++dy)
                        for (int64_t dx = 0; dx < k; ++dx) gx[(oy * k + dy) * W + ox * k + dx] += gv;
                }
        }
    });
}

// ---------------------------------------------------------------------------
// chamfer distance between two point lists [Na, 2], [Nb, 2] (plain Euclidean,
// mean in both directions); fused op with analytic backward
// ---------------------------------------------------------------------------
inline Tensor chamfer(const Tensor& a, const Tensor& b) {
    int64_t na = a.dim(0), nb = b.dim(0);
    if (a.shape().back() != 2 || b.shape().back() != 2 || na < 1 || nb < 1)
        throw ArgumentError("chamfer expects non-empty [N, 2] point lists");
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<int32_t> nearest_ab(na), nearest_ba(nb);
    double total = 0;
    for (int64_t i = 0; i < na; ++i) {
        double best = std::numeric_limits<double>::max();
        int32_t arg = 0;
        for (int64_t j = 0; j < nb; ++j) {
            double dx = av[2 * i] - bv[2 * j], dy = av[2 * i + 1] - bv[2 * j + 1];
            double d = dx * dx + dy * dy;
            if (d < best) {
                best = d;
                arg = static_cast<int32_t>(j);
            }
        }
        nearest_ab[i] = arg;
        total += std::sqrt(best) / static_cast<double>(na);
    }
    for (int64_t j = 0; j < nb; ++j) {
        double best = std::numeric_limits<double>::max();
        int32_t arg = 0;
        for (int64_t i = 0; i < na; ++i) {
            double dx = bv[2 * j] - av[2 * i], dy = bv[2 * j + 1] - av[2 * i + 1];
            double d = dx * dx + dy * dy;
            if (d < best) {
                best = d;
                arg = static_cast<int32_t>(i);
            }
        }
        nearest_ba[j] = arg;
        total += std::sqrt(best) / static_cast<double>(nb);
    }
    auto an = a.node(), bn = b.node();
    return make_op({1}, {static_cast<float>(total)}, {a, b},
                   [an, bn, na, nb, nearest_ab, nearest_ba](Node& self) {
                       float g = self.grad[0];
                       auto push = [g](std::vector<float>& ga, std::vector<float>& gb,
                                       const std::vector<float>& va, const std::vector<float>& vb,
                                       int64_t i, int64_t j, float weight, bool wa, bool wb) {
                           float dx = va[2 * i] - vb[2 * j];
                           float dy = va[2 * i + 1] - vb[2 * j + 1];
                           float d = std::sqrt(dx * dx + dy * dy);
                           if (d < 1e-12f) return;
                           float s = g * weight / d;
                           if (wa) {
                               ga[2 * i] += s * dx;
                               ga[2 * i + 1] += s * dy;
                           }
                           if (wb) {
                               gb[2 * j] -= s * dx;
                               gb[2 * j + 1] -= s * dy;
                           }
                       };
                       float wa = 1.0f / static_cast<float>(na);
                       float wb = 1.0f / static_cast<float>(nb);
                       for (int64_t i = 0; i < na; ++i)
                           push(an->grad, bn->grad, an->value, bn->value, i, nearest_ab[i], wa,
                                an->requires_grad, bn->requires_grad);
                       for (int64_t j = 0; j < nb; ++j)
                           push(bn->grad, an->grad, bn->value, an->value, j, nearest_ba[j], wb,
                                bn->requires_grad, an->requires_grad);
                   });
}

// ---------------------------------------------------------------------------
// Adam with linear warmup + linear decay
// ---------------------------------------------------------------------------
struct AdamParams {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

class Adam {
public:
    explicit Adam(std::vector<Tensor> params, AdamParams hp = {}) : params_(std::move(params)), hp_(hp) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].numel(), 0.0f);
            v_[i].assign(params_[i].numel(), 0.0f);
        }
    }

    void zero_grad() {
        for (Tensor& p : params_) p.zero_grad();
    }

    void step(float lr_scale = 1.0f) {
        ++t_;
        float lr = hp_.lr * lr_scale;
        float bc1 = 1.0f - std::pow(hp_.beta1, static_cast<float>(t_));
        float bc2 = 1.0f - std::pow(hp_.beta2, static_cast<float>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].data();
            auto& g = params_[i].grad();
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < p.size(); ++j) {
                m[j] = hp_.beta1 * m[j] + (1.0f - hp_.beta1) * g[j];
                v[j] = hp_.beta2 * v[j] + (1.0f - hp_.beta2) * g[j] * g[j];
                float mh = m[j] / bc1;
                float vh = v[j] / bc2;
                p[j] -= lr * mh / (std::sqrt(vh) + hp_.eps);
            }
        }
    }

    const std::vector<Tensor>& params() const { return params_; }
    int64_t steps_taken() const { return t_; }

private:
    std::vector<Tensor> params_;
    AdamParams hp_;
    std::vector<std::vector<float>> m_, v_;
    int64_t t_ = 0;
};

// warmup fraction then linear decay to zero
inline float lr_schedule_scale(int64_t step, int64_t total_steps, float warmup_frac = 0.05f) {
    if (total_steps <= 1) return 1.0f;
    auto warmup = static_cast<int64_t>(warmup_frac * static_cast<float>(total_steps));
    if (warmup > 0 && step < warmup) return static_cast<float>(step + 1) / static_cast<float>(warmup);
    float rest = static_cast<float>(total_steps - step) / static_cast<float>(std::max<int64_t>(1, total_steps - warmup));
    return std::max(0.0f, rest);
}

}  // namespace t2v::ad
