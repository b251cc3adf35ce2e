#pragma once

// Dense row-major tensors plus a reverse-mode tape over a fixed primitive set.
//
// Conventions baked in everywhere:
//   * row-major data, spatial tensors ordered (batch, channel, height, width)
//   * reductions accumulate sequentially left-to-right, single-threaded, so
//     identical inputs give bitwise-identical results across runs
//   * gradients accumulate additively on reused leaves

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "clora/common.hpp"
#include "clora/rng.hpp"

namespace clora {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    return "(" + join(s) + ")";
}

namespace detail {
[[noreturn]] inline void shape_fail(const char* op, const std::string& msg) {
    throw ShapeError(std::string(op) + ": " + msg);
}
}  // namespace detail

struct TensorImpl {
    Shape shape;
    std::vector<scalar> data;
    bool requires_grad = false;
    std::vector<scalar> grad;  // allocated lazily, same length as data
};

// Cheap shared handle. Immutable after construction except for the grad
// buffer and explicit parameter updates in the optimizer.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->shape = shape;
        for (int64_t d : shape)
            if (d <= 0) detail::shape_fail("zeros", "non-positive extent in " + shape_str(shape));
        t.impl_->data.assign(static_cast<size_t>(shape_numel(shape)), scalar(0));
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(const Shape& shape, scalar v) {
        Tensor t = zeros(shape);
        std::fill(t.data().begin(), t.data().end(), v);
        return t;
    }

    static Tensor from_data(const Shape& shape, std::vector<scalar> data, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            detail::shape_fail("from_data", "shape " + shape_str(shape) + " does not hold " +
                                                std::to_string(data.size()) + " values");
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->shape = shape;
        t.impl_->data = std::move(data);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar_value(scalar v) { return from_data({}, {v}); }

    static Tensor randn(const Shape& shape, RngStream& rng, scalar stddev = 1.0, bool requires_grad = false) {
        Tensor t = zeros(shape, requires_grad);
        for (auto& x : t.data()) x = static_cast<scalar>(rng.normal()) * stddev;
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t ndim() const { return static_cast<int64_t>(impl_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
    int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    bool is_scalar() const { return numel() == 1 && ndim() <= 1; }

    std::vector<scalar>& data() { return impl_->data; }
    const std::vector<scalar>& data() const { return impl_->data; }
    scalar item() const {
        if (numel() != 1) detail::shape_fail("item", "tensor has " + std::to_string(numel()) + " elements");
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::vector<scalar>& grad() {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), scalar(0));
        return impl_->grad;
    }
    const std::vector<scalar>& grad() const { return impl_->grad; }
    void zero_grad() {
        if (impl_) impl_->grad.clear();
    }

    TensorImpl* impl() const { return impl_.get(); }

    Tensor clone() const {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->shape = impl_->shape;
        t.impl_->data = impl_->data;
        t.impl_->requires_grad = impl_->requires_grad;
        return t;
    }

  private:
    std::shared_ptr<TensorImpl> impl_;
};

// Attribute record attached to a primitive application.
struct Attrs {
    std::map<std::string, int64_t> ints;
    std::map<std::string, scalar> floats;
    std::map<std::string, std::vector<int64_t>> int_lists;

    int64_t geti(const std::string& k, int64_t dflt) const {
        auto it = ints.find(k);
        return it == ints.end() ? dflt : it->second;
    }
    scalar getf(const std::string& k, scalar dflt) const {
        auto it = floats.find(k);
        return it == floats.end() ? dflt : it->second;
    }
    std::vector<int64_t> getl(const std::string& k) const {
        auto it = int_lists.find(k);
        return it == int_lists.end() ? std::vector<int64_t>{} : it->second;
    }
};

// Reverse-mode tape. Nodes are appended in execution order, which is a
// topological order by construction; backward() walks them exactly once in
// reverse. Single-writer: one Graph per forward pass.
class Graph {
  public:
    struct Node {
        std::string op;
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> backward;
    };

    bool recording = true;

    void record(std::string op, std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
        if (!recording) return;
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (!any) return;
        output.set_requires_grad(true);
        nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
    }

    // Backpropagate from a scalar root produced through this graph.
    // Every requires_grad leaf reachable from root accumulates its gradient.
    // One backward pass per recorded graph; record a fresh graph per loss.
    void backward(const Tensor& root) {
        if (!root.is_scalar())
            detail::shape_fail("backward", "root must be scalar, got shape " + shape_str(root.shape()));
        if (ran_backward_)
            detail::shape_fail("backward", "graph already backpropagated; build a new graph per root");
        ran_backward_ = true;
        bool found = false;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (it->output.impl() == root.impl()) {
                found = true;
                break;
            }
        }
        if (!found) detail::shape_fail("backward", "root was not produced through this graph");
        Tensor(root).grad()[0] += scalar(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (!it->output.has_grad()) continue;  // never contributed to root
            it->backward();
        }
    }

    size_t size() const { return nodes_.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }
    void clear() {
        nodes_.clear();
        ran_backward_ = false;
    }

  private:
    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

// ---------------------------------------------------------------------------
// broadcasting helpers (numpy alignment on trailing axes)
// ---------------------------------------------------------------------------
namespace detail {

inline Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
    size_t nd = std::max(a.size(), b.size());
    Shape out(nd, 1);
    for (size_t i = 0; i < nd; ++i) {
        int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            shape_fail(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides with 0 on broadcast axes, aligned to `out` rank.
inline std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
        size_t oi = out.size() - in.size() + static_cast<size_t>(i);
        strides[oi] = (in[static_cast<size_t>(i)] == 1 && out[oi] != 1) ? 0 : s;
        s *= in[static_cast<size_t>(i)];
    }
    return strides;
}

// Iterates the output index space once, calling fn(out_flat, a_flat, b_flat).
template <typename Fn>
void for_each_broadcast2(const Shape& out, const Shape& a, const Shape& b, Fn&& fn) {
    const auto sa = broadcast_strides(a, out);
    const auto sb = broadcast_strides(b, out);
    const int64_t n = shape_numel(out);
    const size_t nd = out.size();
    std::vector<int64_t> idx(nd, 0);
    int64_t ia = 0, ib = 0;
    for (int64_t flat = 0; flat < n; ++flat) {
        fn(flat, ia, ib);
        for (int d = static_cast<int>(nd) - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            ia += sa[static_cast<size_t>(d)];
            ib += sb[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < out[static_cast<size_t>(d)]) break;
            ia -= sa[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            ib -= sb[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
}

template <typename Fn>
void for_each_broadcast3(const Shape& out, const Shape& a, const Shape& b, const Shape& c, Fn&& fn) {
    const auto sa = broadcast_strides(a, out);
    const auto sb = broadcast_strides(b, out);
    const auto sc = broadcast_strides(c, out);
    const int64_t n = shape_numel(out);
    const size_t nd = out.size();
    std::vector<int64_t> idx(nd, 0);
    int64_t ia = 0, ib = 0, ic = 0;
    for (int64_t flat = 0; flat < n; ++flat) {
        fn(flat, ia, ib, ic);
        for (int d = static_cast<int>(nd) - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            ia += sa[static_cast<size_t>(d)];
            ib += sb[static_cast<size_t>(d)];
            ic += sc[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < out[static_cast<size_t>(d)]) break;
            ia -= sa[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            ib -= sb[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            ic -= sc[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

inline Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    Shape os = detail::broadcast_shape("add", a.shape(), b.shape());
    Tensor out = Tensor::zeros(os);
    {
        auto& od = out.data();
        const auto& ad = a.data();
        const auto& bd = b.data();
        detail::for_each_broadcast2(os, a.shape(), b.shape(),
                                    [&](int64_t o, int64_t ia, int64_t ib) { od[o] = ad[ia] + bd[ib]; });
    }
    g.record("add", {a, b}, out, [a = Tensor(a), b = Tensor(b), out]() mutable {
        const auto& og = out.grad();
        if (a.requires_grad()) {
            auto& ga = a.grad();
            detail::for_each_broadcast2(out.shape(), a.shape(), b.shape(),
                                        [&](int64_t o, int64_t ia, int64_t) { ga[ia] += og[o]; });
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            detail::for_each_broadcast2(out.shape(), a.shape(), b.shape(),
                                        [&](int64_t o, int64_t, int64_t ib) { gb[ib] += og[o]; });
        }
    });
    return out;
}

inline Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
    Shape os = detail::broadcast_shape("mul", a.shape(), b.shape());
    Tensor out = Tensor::zeros(os);
    {
        auto& od = out.data();
        const auto& ad = a.data();
        const auto& bd = b.data();
        detail::for_each_broadcast2(os, a.shape(), b.shape(),
                                    [&](int64_t o, int64_t ia, int64_t ib) { od[o] = ad[ia] * bd[ib]; });
    }
    g.record("mul", {a, b}, out, [a = Tensor(a), b = Tensor(b), out]() mutable {
        const auto& og = out.grad();
        if (a.requires_grad()) {
            auto& ga = a.grad();
            const auto& bd = b.data();
            detail::for_each_broadcast2(out.shape(), a.shape(), b.shape(),
                                        [&](int64_t o, int64_t ia, int64_t ib) { ga[ia] += og[o] * bd[ib]; });
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            const auto& ad = a.data();
            detail::for_each_broadcast2(out.shape(), a.shape(), b.shape(),
                                        [&](int64_t o, int64_t ia, int64_t ib) { gb[ib] += og[o] * ad[ia]; });
        }
    });
    return out;
}

// y = a*x + b with constant scalars; covers negation, subtraction and
// constant scaling without extra tape entries for the constants.
inline Tensor affine(Graph& g, const Tensor& x, scalar a, scalar b) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = a * xd[i] + b;
    g.record("affine", {x}, out, [x = Tensor(x), out, a]() mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const auto& og = out.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += a * og[i];
    });
    return out;
}

inline Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
    return add(g, a, affine(g, b, scalar(-1), scalar(0)));
}

// Elementwise scale-shift y = gamma .* z + beta, with gamma/beta broadcast
// against z. The output shape must equal z's shape (gamma/beta only ever
// broadcast up to z, never the other way around).
inline Tensor scale_shift(Graph& g, const Tensor& z, const Tensor& gamma, const Tensor& beta) {
    Shape os = detail::broadcast_shape("scale_shift", z.shape(), gamma.shape());
    os = detail::broadcast_shape("scale_shift", os, beta.shape());
    if (os != z.shape())
        detail::shape_fail("scale_shift", "signal shapes " + shape_str(gamma.shape()) + "/" +
                                              shape_str(beta.shape()) + " do not broadcast into " +
                                              shape_str(z.shape()));
    Tensor out = Tensor::zeros(os);
    {
        auto& od = out.data();
        const auto& zd = z.data();
        const auto& gd = gamma.data();
        const auto& bd = beta.data();
        detail::for_each_broadcast3(os, z.shape(), gamma.shape(), beta.shape(),
                                    [&](int64_t o, int64_t iz, int64_t ig, int64_t ib) {
                                        od[o] = gd[ig] * zd[iz] + bd[ib];
                                    });
    }
    g.record("scale_shift", {z, gamma, beta}, out, [z = Tensor(z), gamma = Tensor(gamma), beta = Tensor(beta), out]() mutable {
        const auto& og = out.grad();
        const auto& zd = z.data();
        const auto& gd = gamma.data();
        const bool nz = z.requires_grad(), ng = gamma.requires_grad(), nb = beta.requires_grad();
        auto* gz = nz ? &z.grad() : nullptr;
        auto* gg = ng ? &gamma.grad() : nullptr;
        auto* gb = nb ? &beta.grad() : nullptr;
        detail::for_each_broadcast3(out.shape(), z.shape(), gamma.shape(), beta.shape(),
                                    [&](int64_t o, int64_t iz, int64_t ig, int64_t ib) {
                                        if (nz) (*gz)[iz] += og[o] * gd[ig];
                                        if (ng) (*gg)[ig] += og[o] * zd[iz];
                                        if (nb) (*gb)[ib] += og[o];
                                    });
    });
    return out;
}

// matmul: (n,k)x(k,m) -> (n,m). A 3-d first operand is treated as a batch;
// a 3-d second operand must carry the same batch count. trans_b multiplies
// by b's transpose, i.e. (n,k)x(m,k)^T -> (n,m).
inline Tensor matmul(Graph& g, const Tensor& a, const Tensor& b, bool trans_b = false) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 2 || as.size() > 3 || bs.size() < 2 || bs.size() > 3)
        detail::shape_fail("matmul", "operands must be 2-d or 3-d, got " + shape_str(as) + " x " + shape_str(bs));
    if (bs.size() == 3 && as.size() != 3)
        detail::shape_fail("matmul", "batched rhs requires batched lhs");

    const int64_t batch = as.size() == 3 ? as[0] : 1;
    const int64_t n = as[as.size() - 2];
    const int64_t k = as[as.size() - 1];
    const int64_t bk = trans_b ? bs[bs.size() - 1] : bs[bs.size() - 2];
    const int64_t m = trans_b ? bs[bs.size() - 2] : bs[bs.size() - 1];
    if (bs.size() == 3 && bs[0] != batch)
        detail::shape_fail("matmul", "batch mismatch " + shape_str(as) + " x " + shape_str(bs));
    if (k != bk)
        detail::shape_fail("matmul", "inner dims differ: " + shape_str(as) + " x " + shape_str(bs) +
                                         (trans_b ? " (trans_b)" : ""));

    Shape os = as.size() == 3 ? Shape{batch, n, m} : Shape{n, m};
    Tensor out = Tensor::zeros(os);
    const bool b_batched = bs.size() == 3;

    auto run = [=](const scalar* A, const scalar* B, scalar* O) {
        // O[i][j] += A[i][l] * B[l][j]   (accumulation over l, fixed order)
        if (!trans_b) {
            for (int64_t i = 0; i < n; ++i)
                for (int64_t l = 0; l < k; ++l) {
                    const scalar av = A[i * k + l];
                    const scalar* brow = B + l * m;
                    scalar* orow = O + i * m;
                    for (int64_t j = 0; j < m; ++j) orow[j] += av * brow[j];
                }
        } else {
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < m; ++j) {
                    const scalar* arow = A + i * k;
                    const scalar* brow = B + j * k;
                    scalar acc = 0;
                    for (int64_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
                    O[i * m + j] = acc;
                }
        }
    };

    for (int64_t bi = 0; bi < batch; ++bi)
        run(a.data().data() + bi * n * k, b.data().data() + (b_batched ? bi * k * m : 0),
            out.data().data() + bi * n * m);

    g.record("matmul", {a, b}, out, [a = Tensor(a), b = Tensor(b), out, trans_b, batch, n, k, m, b_batched]() mutable {
        const auto& og = out.grad();
        if (a.requires_grad()) {
            auto& ga = a.grad();
            const auto& bd = b.data();
            for (int64_t bi = 0; bi < batch; ++bi) {
                const scalar* G = og.data() + bi * n * m;
                const scalar* B = bd.data() + (b_batched ? bi * k * m : 0);
                scalar* GA = ga.data() + bi * n * k;
                if (!trans_b) {
                    // dA = G * B^T
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t l = 0; l < k; ++l) {
                            const scalar* grow = G + i * m;
                            const scalar* brow = B + l * m;
                            scalar acc = 0;
                            for (int64_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                            GA[i * k + l] += acc;
                        }
                } else {
                    // dA = G * B  (B stored (m,k))
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t j = 0; j < m; ++j) {
                            const scalar gv = G[i * m + j];
                            const scalar* brow = B + j * k;
                            scalar* garow = GA + i * k;
                            for (int64_t l = 0; l < k; ++l) garow[l] += gv * brow[l];
                        }
                }
            }
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            const auto& ad = a.data();
            for (int64_t bi = 0; bi < batch; ++bi) {
                const scalar* G = og.data() + bi * n * m;
                const scalar* A = ad.data() + bi * n * k;
                scalar* GB = gb.data() + (b_batched ? bi * k * m : 0);
                if (!trans_b) {
                    // dB = A^T * G
                    for (int64_t l = 0; l < k; ++l)
                        for (int64_t i = 0; i < n; ++i) {
                            const scalar av = A[i * k + l];
                            const scalar* grow = G + i * m;
                            scalar* gbrow = GB + l * m;
                            for (int64_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
                        }
                } else {
                    // dB = G^T * A  (dB stored (m,k))
                    for (int64_t j = 0; j < m; ++j)
                        for (int64_t i = 0; i < n; ++i) {
                            const scalar gv = G[i * m + j];
                            const scalar* arow = A + i * k;
                            scalar* gbrow = GB + j * k;
                            for (int64_t l = 0; l < k; ++l) gbrow[l] += gv * arow[l];
                        }
                }
            }
        }
    });
    return out;
}

// 2-d cross-correlation. x: (B, ci, H, W), kernel: (co, ci, kh, kw).
inline Tensor conv2d(Graph& g, const Tensor& x, const Tensor& kernel, int64_t stride, int64_t pad) {
    const Shape& xs = x.shape();
    const Shape& ks = kernel.shape();
    if (xs.size() != 4 || ks.size() != 4)
        detail::shape_fail("conv2d", "want 4-d input and kernel, got " + shape_str(xs) + " / " + shape_str(ks));
    if (xs[1] != ks[1])
        detail::shape_fail("conv2d", "input channels " + std::to_string(xs[1]) + " != kernel channels " +
                                         std::to_string(ks[1]));
    if (stride < 1) detail::shape_fail("conv2d", "stride must be >= 1");
    const int64_t B = xs[0], ci = xs[1], H = xs[2], W = xs[3];
    const int64_t co = ks[0], kh = ks[2], kw = ks[3];
    const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0)
        detail::shape_fail("conv2d", "non-positive output size from input " + shape_str(xs) + " kernel " +
                                         shape_str(ks));

    Tensor out = Tensor::zeros({B, co, Ho, Wo});
    const scalar* X = x.data().data();
    const scalar* K = kernel.data().data();
    scalar* O = out.data().data();

    // accumulation order per output element: (ci, kh, kw), fixed
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oc = 0; oc < co; ++oc) {
            scalar* obase = O + ((b * co + oc) * Ho) * Wo;
            for (int64_t ic = 0; ic < ci; ++ic) {
                const scalar* xbase = X + ((b * ci + ic) * H) * W;
                const scalar* kbase = K + ((oc * ci + ic) * kh) * kw;
                for (int64_t r = 0; r < kh; ++r)
                    for (int64_t c = 0; c < kw; ++c) {
                        const scalar kv = kbase[r * kw + c];
                        for (int64_t oy = 0; oy < Ho; ++oy) {
                            const int64_t iy = oy * stride - pad + r;
                            if (iy < 0 || iy >= H) continue;
                            const scalar* xrow = xbase + iy * W;
                            scalar* orow = obase + oy * Wo;
                            for (int64_t ox = 0; ox < Wo; ++ox) {
                                const int64_t ix = ox * stride - pad + c;
                                if (ix < 0 || ix >= W) continue;
                                orow[ox] += kv * xrow[ix];
                            }
                        }
                    }
            }
        }

    g.record("conv2d", {x, kernel}, out, [x = Tensor(x), kernel = Tensor(kernel), out, stride, pad, B, ci, H, W, co, kh, kw, Ho, Wo]() mutable {
        const auto& og = out.grad();
        const scalar* G = og.data();
        if (x.requires_grad()) {
            auto& gx = x.grad();
            const scalar* K = kernel.data().data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t oc = 0; oc < co; ++oc) {
                    const scalar* gbase = G + ((b * co + oc) * Ho) * Wo;
                    for (int64_t ic = 0; ic < ci; ++ic) {
                        scalar* xgbase = gx.data() + ((b * ci + ic) * H) * W;
                        const scalar* kbase = K + ((oc * ci + ic) * kh) * kw;
                        for (int64_t r = 0; r < kh; ++r)
                            for (int64_t c = 0; c < kw; ++c) {
                                const scalar kv = kbase[r * kw + c];
                                for (int64_t oy = 0; oy < Ho; ++oy) {
                                    const int64_t iy = oy * stride - pad + r;
                                    if (iy < 0 || iy >= H) continue;
                                    const scalar* grow = gbase + oy * Wo;
                                    scalar* xgrow = xgbase + iy * W;
                                    for (int64_t ox = 0; ox < Wo; ++ox) {
                                        const int64_t ix = ox * stride - pad + c;
                                        if (ix < 0 || ix >= W) continue;
                                        xgrow[ix] += kv * grow[ox];
                                    }
                                }
                            }
                    }
                }
        }
        if (kernel.requires_grad()) {
            auto& gk = kernel.grad();
            const scalar* X = x.data().data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t oc = 0; oc < co; ++oc) {
                    const scalar* gbase = G + ((b * co + oc) * Ho) * Wo;
                    for (int64_t ic = 0; ic < ci; ++ic) {
                        const scalar* xbase = X + ((b * ci + ic) * H) * W;
                        scalar* kgbase = gk.data() + ((oc * ci + ic) * kh) * kw;
                        for (int64_t r = 0; r < kh; ++r)
                            for (int64_t c = 0; c < kw; ++c) {
                                scalar acc = 0;
                                for (int64_t oy = 0; oy < Ho; ++oy) {
                                    const int64_t iy = oy * stride - pad + r;
                                    if (iy < 0 || iy >= H) continue;
                                    const scalar* grow = gbase + oy * Wo;
                                    const scalar* xrow = xbase + iy * W;
                                    for (int64_t ox = 0; ox < Wo; ++ox) {
                                        const int64_t ix = ox * stride - pad + c;
                                        if (ix < 0 || ix >= W) continue;
                                        acc += grow[ox] * xrow[ix];
                                    }
                                }
                                kgbase[r * kw + c] += acc;
                            }
                    }
                }
        }
    });
    return out;
}

// softmax over the last axis
inline Tensor softmax(Graph& g, const Tensor& x) {
    if (x.ndim() < 1) detail::shape_fail("softmax", "need at least 1-d input");
    const int64_t d = x.shape().back();
    const int64_t rows = x.numel() / d;
    Tensor out = Tensor::zeros(x.shape());
    const scalar* X = x.data().data();
    scalar* O = out.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const scalar* xr = X + r * d;
        scalar* orow = O + r * d;
        scalar mx = xr[0];
        for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
        scalar denom = 0;
        for (int64_t i = 0; i < d; ++i) {
            orow[i] = std::exp(xr[i] - mx);
            denom += orow[i];
        }
        for (int64_t i = 0; i < d; ++i) orow[i] /= denom;
    }
    g.record("softmax", {x}, out, [x = Tensor(x), out, rows, d]() mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const auto& og = out.grad();
        const scalar* O = out.data().data();
        for (int64_t r = 0; r < rows; ++r) {
            const scalar* orow = O + r * d;
            const scalar* grow = og.data() + r * d;
            scalar dot = 0;
            for (int64_t i = 0; i < d; ++i) dot += orow[i] * grow[i];
            scalar* gxr = gx.data() + r * d;
            for (int64_t i = 0; i < d; ++i) gxr[i] += orow[i] * (grow[i] - dot);
        }
    });
    return out;
}

// Layer normalization over one axis, then affine with gain/bias of that
// axis's extent. eps guards zero-variance inputs.
inline Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias, int64_t axis = -1,
                         scalar eps = scalar(1e-5)) {
    if (axis < 0) axis += x.ndim();
    if (axis < 0 || axis >= x.ndim()) detail::shape_fail("layer_norm", "axis out of range");
    const int64_t d = x.shape()[static_cast<size_t>(axis)];
    if (gain.numel() != d || bias.numel() != d)
        detail::shape_fail("layer_norm", "gain/bias length " + std::to_string(gain.numel()) + "/" +
                                             std::to_string(bias.numel()) + " != axis extent " + std::to_string(d));
    int64_t inner = 1;
    for (int64_t i = axis + 1; i < x.ndim(); ++i) inner *= x.shape()[static_cast<size_t>(i)];
    const int64_t outer = x.numel() / (d * inner);

    Tensor out = Tensor::zeros(x.shape());
    // saved context for backward: per-group mean and inverse stddev
    auto mean = std::make_shared<std::vector<scalar>>(static_cast<size_t>(outer * inner));
    auto istd = std::make_shared<std::vector<scalar>>(static_cast<size_t>(outer * inner));
    {
        const scalar* X = x.data().data();
        scalar* O = out.data().data();
        const scalar* gn = gain.data().data();
        const scalar* bs = bias.data().data();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * d * inner + in;
                scalar m = 0;
                for (int64_t i = 0; i < d; ++i) m += X[base + i * inner];
                m /= static_cast<scalar>(d);
                scalar v = 0;
                for (int64_t i = 0; i < d; ++i) {
                    const scalar dv = X[base + i * inner] - m;
                    v += dv * dv;
                }
                v /= static_cast<scalar>(d);
                const scalar is = scalar(1) / std::sqrt(v + eps);
                (*mean)[static_cast<size_t>(o * inner + in)] = m;
                (*istd)[static_cast<size_t>(o * inner + in)] = is;
                for (int64_t i = 0; i < d; ++i)
                    O[base + i * inner] = (X[base + i * inner] - m) * is * gn[i] + bs[i];
            }
    }
    g.record("layer_norm", {x, gain, bias}, out, [x = Tensor(x), gain = Tensor(gain), bias = Tensor(bias), out, mean, istd, d, inner, outer]() mutable {
        const auto& og = out.grad();
        const scalar* X = x.data().data();
        const scalar* gn = gain.data().data();
        const bool nx = x.requires_grad(), ngn = gain.requires_grad(), nb = bias.requires_grad();
        auto* gx = nx ? &x.grad() : nullptr;
        auto* gg = ngn ? &gain.grad() : nullptr;
        auto* gb = nb ? &bias.grad() : nullptr;
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * d * inner + in;
                const scalar m = (*mean)[static_cast<size_t>(o * inner + in)];
                const scalar is = (*istd)[static_cast<size_t>(o * inner + in)];
                // xhat_i = (x_i - m) * is;  y_i = xhat_i * gain_i + bias_i
                scalar sum_gy = 0, sum_gyx = 0;
                for (int64_t i = 0; i < d; ++i) {
                    const scalar xhat = (X[base + i * inner] - m) * is;
                    const scalar gy = og[base + i * inner];
                    if (ngn) (*gg)[static_cast<size_t>(i)] += gy * xhat;
                    if (nb) (*gb)[static_cast<size_t>(i)] += gy;
                    sum_gy += gy * gn[i];
                    sum_gyx += gy * gn[i] * xhat;
                }
                if (nx) {
                    const scalar inv_d = scalar(1) / static_cast<scalar>(d);
                    for (int64_t i = 0; i < d; ++i) {
                        const scalar xhat = (X[base + i * inner] - m) * is;
                        const scalar gy = og[base + i * inner] * gn[i];
                        (*gx)[static_cast<size_t>(base + i * inner)] +=
                            is * (gy - inv_d * sum_gy - xhat * inv_d * sum_gyx);
                    }
                }
            }
    });
    return out;
}

inline Tensor silu(Graph& g, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) {
        const scalar s = scalar(1) / (scalar(1) + std::exp(-xd[i]));
        od[i] = xd[i] * s;
    }
    g.record("silu", {x}, out, [x = Tensor(x), out]() mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const auto& og = out.grad();
        const auto& xd = x.data();
        for (size_t i = 0; i < gx.size(); ++i) {
            const scalar s = scalar(1) / (scalar(1) + std::exp(-xd[i]));
            gx[i] += og[i] * (s + xd[i] * s * (scalar(1) - s));
        }
    });
    return out;
}

inline Tensor sum_all(Graph& g, const Tensor& x) {
    scalar acc = 0;
    for (scalar v : x.data()) acc += v;  // left-to-right
    Tensor out = Tensor::from_data({}, {acc});
    g.record("sum", {x}, out, [x = Tensor(x), out]() mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const scalar go = out.grad()[0];
        for (auto& v : gx) v += go;
    });
    return out;
}

inline Tensor mean_all(Graph& g, const Tensor& x) {
    scalar acc = 0;
    for (scalar v : x.data()) acc += v;
    const scalar inv_n = scalar(1) / static_cast<scalar>(x.numel());
    Tensor out = Tensor::from_data({}, {acc * inv_n});
    g.record("mean", {x}, out, [x = Tensor(x), out, inv_n]() mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const scalar go = out.grad()[0] * inv_n;
        for (auto& v : gx) v += go;
    });
    return out;
}

inline Tensor reshape(Graph& g, const Tensor& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel())
        detail::shape_fail("reshape", shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
    Tensor out = Tensor::from_data(shape, x.data());
    g.record("reshape", {x}, out, [x = Tensor(x), out]() mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const auto& og = out.grad();
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += og[i];
    });
    return out;
}

inline Tensor permute(Graph& g, const Tensor& x, const std::vector<int64_t>& dims) {
    if (static_cast<int64_t>(dims.size()) != x.ndim())
        detail::shape_fail("permute", "dims size " + std::to_string(dims.size()) + " != ndim " +
                                          std::to_string(x.ndim()));
    Shape os(dims.size());
    for (size_t i = 0; i < dims.size(); ++i) os[i] = x.shape()[static_cast<size_t>(dims[i])];
    Tensor out = Tensor::zeros(os);

    // out[idx] = x[idx mapped through dims]
    const size_t nd = dims.size();
    std::vector<int64_t> xstr(nd, 1);
    for (int i = static_cast<int>(nd) - 2; i >= 0; --i)
        xstr[static_cast<size_t>(i)] = xstr[static_cast<size_t>(i) + 1] * x.shape()[static_cast<size_t>(i) + 1];
    std::vector<int64_t> ostr_in_x(nd);
    for (size_t i = 0; i < nd; ++i) ostr_in_x[i] = xstr[static_cast<size_t>(dims[i])];

    auto copy_perm = [os, ostr_in_x, nd](const scalar* src, scalar* dst, bool accumulate, int64_t n) {
        std::vector<int64_t> idx(nd, 0);
        int64_t xi = 0;
        for (int64_t flat = 0; flat < n; ++flat) {
            if (accumulate)
                dst[xi] += src[flat];
            else
                dst[flat] = src[xi];
            for (int d = static_cast<int>(nd) - 1; d >= 0; --d) {
                idx[static_cast<size_t>(d)]++;
                xi += ostr_in_x[static_cast<size_t>(d)];
                if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
                xi -= ostr_in_x[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
                idx[static_cast<size_t>(d)] = 0;
            }
        }
    };
    copy_perm(x.data().data(), out.data().data(), false, out.numel());

    g.record("permute", {x}, out, [x = Tensor(x), out, copy_perm]() mutable {
        if (!x.requires_grad()) return;
        copy_perm(out.grad().data(), x.grad().data(), true, out.numel());
    });
    return out;
}

inline Tensor concat(Graph& g, const std::vector<Tensor>& xs, int64_t axis) {
    if (xs.empty()) detail::shape_fail("concat", "no inputs");
    Shape os = xs[0].shape();
    if (axis < 0) axis += static_cast<int64_t>(os.size());
    if (axis < 0 || axis >= static_cast<int64_t>(os.size())) detail::shape_fail("concat", "axis out of range");
    int64_t total = 0;
    for (const auto& t : xs) {
        if (t.ndim() != static_cast<int64_t>(os.size()))
            detail::shape_fail("concat", "rank mismatch between inputs");
        for (int64_t d = 0; d < t.ndim(); ++d)
            if (d != axis && t.shape()[static_cast<size_t>(d)] != os[static_cast<size_t>(d)])
                detail::shape_fail("concat", "non-axis dims differ: " + shape_str(t.shape()) + " vs " +
                                                 shape_str(os));
        total += t.shape()[static_cast<size_t>(axis)];
    }
    os[static_cast<size_t>(axis)] = total;

    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= os[static_cast<size_t>(d)];
    for (int64_t d = axis + 1; d < static_cast<int64_t>(os.size()); ++d) inner *= os[static_cast<size_t>(d)];

    Tensor out = Tensor::zeros(os);
    {
        scalar* O = out.data().data();
        int64_t off = 0;
        for (const auto& t : xs) {
            const int64_t da = t.shape()[static_cast<size_t>(axis)];
            const scalar* X = t.data().data();
            for (int64_t o = 0; o < outer; ++o)
                std::copy(X + o * da * inner, X + (o + 1) * da * inner, O + (o * total + off) * inner);
            off += da;
        }
    }
    g.record("concat", xs, out, [xs = std::vector<Tensor>(xs), out, axis, outer, inner, total]() mutable {
        const auto& og = out.grad();
        int64_t off = 0;
        for (auto& t : xs) {
            const int64_t da = t.shape()[static_cast<size_t>(axis)];
            if (t.requires_grad()) {
                auto& gx = Tensor(t).grad();
                for (int64_t o = 0; o < outer; ++o) {
                    const scalar* src = og.data() + (o * total + off) * inner;
                    scalar* dst = gx.data() + o * da * inner;
                    for (int64_t i = 0; i < da * inner; ++i) dst[i] += src[i];
                }
            }
            off += da;
        }
    });
    return out;
}

// narrow along one axis: out = x[..., start:start+len, ...]
inline Tensor slice(Graph& g, const Tensor& x, int64_t axis, int64_t start, int64_t len) {
    Shape os = x.shape();
    if (axis < 0) axis += static_cast<int64_t>(os.size());
    if (axis < 0 || axis >= static_cast<int64_t>(os.size())) detail::shape_fail("slice", "axis out of range");
    const int64_t da = os[static_cast<size_t>(axis)];
    if (start < 0 || len <= 0 || start + len > da)
        detail::shape_fail("slice", "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                        ") outside axis extent " + std::to_string(da));
    os[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= x.shape()[static_cast<size_t>(d)];
    for (int64_t d = axis + 1; d < x.ndim(); ++d) inner *= x.shape()[static_cast<size_t>(d)];

    Tensor out = Tensor::zeros(os);
    {
        const scalar* X = x.data().data();
        scalar* O = out.data().data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(X + (o * da + start) * inner, X + (o * da + start + len) * inner, O + o * len * inner);
    }
    g.record("slice", {x}, out, [x = Tensor(x), out, da, start, len, outer, inner]() mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const auto& og = out.grad();
        for (int64_t o = 0; o < outer; ++o) {
            const scalar* src = og.data() + o * len * inner;
            scalar* dst = gx.data() + (o * da + start) * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
    return out;
}

// nearest-neighbour spatial upsample by an integer factor, NCHW
inline Tensor upsample_nearest(Graph& g, const Tensor& x, int64_t factor) {
    if (x.ndim() != 4) detail::shape_fail("upsample_nearest", "want 4-d input, got " + shape_str(x.shape()));
    if (factor < 1) detail::shape_fail("upsample_nearest", "factor must be >= 1");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out = Tensor::zeros({B, C, H * factor, W * factor});
    {
        const scalar* X = x.data().data();
        scalar* O = out.data().data();
        for (int64_t bc = 0; bc < B * C; ++bc)
            for (int64_t y = 0; y < H * factor; ++y) {
                const scalar* xrow = X + (bc * H + y / factor) * W;
                scalar* orow = O + (bc * H * factor + y) * W * factor;
                for (int64_t xo = 0; xo < W * factor; ++xo) orow[xo] = xrow[xo / factor];
            }
    }
    g.record("upsample_nearest", {x}, out, [x = Tensor(x), out, B, C, H, W, factor]() mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const auto& og = out.grad();
        for (int64_t bc = 0; bc < B * C; ++bc)
            for (int64_t y = 0; y < H * factor; ++y) {
                const scalar* grow = og.data() + (bc * H * factor + y) * W * factor;
                scalar* xgrow = gx.data() + (bc * H + y / factor) * W;
                for (int64_t xo = 0; xo < W * factor; ++xo) xgrow[xo / factor] += grow[xo];
            }
    });
    return out;
}

// average-pool spatial downsample by an integer factor, NCHW
inline Tensor avgpool(Graph& g, const Tensor& x, int64_t factor) {
    if (x.ndim() != 4) detail::shape_fail("avgpool", "want 4-d input, got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (factor < 1 || H % factor || W % factor)
        detail::shape_fail("avgpool", "factor " + std::to_string(factor) + " does not divide " + shape_str(x.shape()));
    const int64_t Ho = H / factor, Wo = W / factor;
    const scalar inv = scalar(1) / static_cast<scalar>(factor * factor);
    Tensor out = Tensor::zeros({B, C, Ho, Wo});
    {
        const scalar* X = x.data().data();
        scalar* O = out.data().data();
        for (int64_t bc = 0; bc < B * C; ++bc)
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    scalar acc = 0;
                    for (int64_t dy = 0; dy < factor; ++dy) {
                        const scalar* xrow = X + (bc * H + oy * factor + dy) * W + ox * factor;
                        for (int64_t dx = 0; dx < factor; ++dx) acc += xrow[dx];
                    }
                    O[(bc * Ho + oy) * Wo + ox] = acc * inv;
                }
    }
    g.record("avgpool", {x}, out, [x = Tensor(x), out, B, C, H, W, Ho, Wo, factor, inv]() mutable {
        if (!x.requires_grad()) return;
        auto& gx = x.grad();
        const auto& og = out.grad();
        for (int64_t bc = 0; bc < B * C; ++bc)
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    const scalar gv = og[(bc * Ho + oy) * Wo + ox] * inv;
                    for (int64_t dy = 0; dy < factor; ++dy) {
                        scalar* xgrow = gx.data() + (bc * H + oy * factor + dy) * W + ox * factor;
                        for (int64_t dx = 0; dx < factor; ++dx) xgrow[dx] += gv;
                    }
                }
    });
    return out;
}

// Row gather from an embedding table: table (V, d), ids -> (len(ids), d).
inline Tensor embed(Graph& g, const Tensor& table, const std::vector<int64_t>& ids) {
    if (table.ndim() != 2) detail::shape_fail("embed", "table must be 2-d, got " + shape_str(table.shape()));
    const int64_t V = table.dim(0), d = table.dim(1);
    for (int64_t id : ids)
        if (id < 0 || id >= V)
            detail::shape_fail("embed", "id " + std::to_string(id) + " outside table rows " + std::to_string(V));
    Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), d});
    {
        const scalar* T = table.data().data();
        scalar* O = out.data().data();
        for (size_t i = 0; i < ids.size(); ++i)
            std::copy(T + ids[i] * d, T + (ids[i] + 1) * d, O + static_cast<int64_t>(i) * d);
    }
    g.record("embed", {table}, out, [table = Tensor(table), out, ids, d]() mutable {
        if (!table.requires_grad()) return;
        auto& gt = table.grad();
        const auto& og = out.grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            const scalar* src = og.data() + static_cast<int64_t>(i) * d;
            scalar* dst = gt.data() + ids[i] * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// generic dispatch over the primitive set
// ---------------------------------------------------------------------------

inline Tensor forward_primitive(Graph& g, const std::string& op, const std::vector<Tensor>& inputs,
                                const Attrs& attrs = {}) {
    auto need = [&](size_t n) {
        if (inputs.size() != n)
            detail::shape_fail(op.c_str(), "expected " + std::to_string(n) + " inputs, got " +
                                               std::to_string(inputs.size()));
    };
    if (op == "add") {
        need(2);
        return add(g, inputs[0], inputs[1]);
    }
    if (op == "mul") {
        need(2);
        return mul(g, inputs[0], inputs[1]);
    }
    if (op == "affine") {
        need(1);
        return affine(g, inputs[0], attrs.getf("a", 1), attrs.getf("b", 0));
    }
    if (op == "scale_shift") {
        need(3);
        return scale_shift(g, inputs[0], inputs[1], inputs[2]);
    }
    if (op == "matmul") {
        need(2);
        return matmul(g, inputs[0], inputs[1], attrs.geti("trans_b", 0) != 0);
    }
    if (op == "conv2d") {
        need(2);
        return conv2d(g, inputs[0], inputs[1], attrs.geti("stride", 1), attrs.geti("pad", 0));
    }
    if (op == "softmax") {
        need(1);
        return softmax(g, inputs[0]);
    }
    if (op == "layer_norm") {
        need(3);
        return layer_norm(g, inputs[0], inputs[1], inputs[2], attrs.geti("axis", -1),
                          attrs.getf("eps", scalar(1e-5)));
    }
    if (op == "silu") {
        need(1);
        return silu(g, inputs[0]);
    }
    if (op == "sum") {
        need(1);
        return sum_all(g, inputs[0]);
    }
    if (op == "mean") {
        need(1);
        return mean_all(g, inputs[0]);
    }
    if (op == "reshape") {
        need(1);
        return reshape(g, inputs[0], attrs.getl("shape"));
    }
    if (op == "permute") {
        need(1);
        return permute(g, inputs[0], attrs.getl("dims"));
    }
    if (op == "concat") {
        return concat(g, inputs, attrs.geti("axis", 0));
    }
    if (op == "slice") {
        need(1);
        return slice(g, inputs[0], attrs.geti("axis", 0), attrs.geti("start", 0), attrs.geti("len", 1));
    }
    if (op == "upsample_nearest") {
        need(1);
        return upsample_nearest(g, inputs[0], attrs.geti("factor", 2));
    }
    if (op == "avgpool") {
        need(1);
        return avgpool(g, inputs[0], attrs.geti("factor", 2));
    }
    if (op == "embed") {
        need(1);
        return embed(g, inputs[0], attrs.getl("ids"));
    }
    detail::shape_fail(op.c_str(), "unknown primitive");
}

}  // namespace clora
