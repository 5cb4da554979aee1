#pragma once

// Dense row-major tensors with reverse-mode gradients. The tape is the
// implicit graph of nodes reachable from an output; Tensor::backward walks
// it once in reverse topological order. Tensors are immutable once produced
// by an op; parameters are mutated only between steps (see optimizer.hpp).

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "hire/common.hpp"

namespace hire {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

namespace detail {

// C = alpha * op(A) * op(B) (+ C if accumulate). Row-major, no aliasing.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, T alpha = T(1), bool accumulate = false) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            const T* ai = a + i * k;
            T* ci = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                T av = alpha * ai[p];
                const T* bp = b + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else if (trans_a && !trans_b) {  // A is k x m
        for (std::size_t p = 0; p < k; ++p) {
            const T* ap = a + p * m;
            const T* bp = b + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                T av = alpha * ap[i];
                T* ci = c + i * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else if (!trans_a && trans_b) {  // B is n x k
        for (std::size_t i = 0; i < m; ++i) {
            const T* ai = a + i * k;
            T* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const T* bj = b + j * k;
                T acc = T(0);
                for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
                ci[j] += alpha * acc;
            }
        }
    } else {  // A k x m, B n x k
        for (std::size_t i = 0; i < m; ++i) {
            T* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const T* bj = b + j * k;
                T acc = T(0);
                for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * bj[p];
                ci[j] += alpha * acc;
            }
        }
    }
}

}  // namespace detail

template <class T>
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;  // allocated lazily; always value.size() once allocated
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;

        T* grad_data() {
            if (grad.empty()) grad.assign(value.size(), T(0));
            return grad.data();
        }
    };

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from(std::move(shape), {}, requires_grad);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        std::vector<T> data(shape_numel(shape), v);
        return from(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        std::size_t count = shape_numel(shape);
        if (data.empty()) data.assign(count, T(0));
        if (data.size() != count)
            throw shape_error("tensor data size " + std::to_string(data.size()) +
                              " does not match shape " + shape_str(shape));
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    // Trainable parameter, Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
    static Tensor param(Shape shape, Rng& rng) {
        std::size_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape.back();
        T bound = T(1) / std::sqrt(static_cast<T>(fan_in));
        std::vector<T> data(shape_numel(shape));
        for (T& v : data) v = static_cast<T>(rand_real(rng, -bound, bound));
        return from(std::move(shape), std::move(data), true);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<T>& data() const { return node_->value; }
    std::vector<T>& mutable_data() { return node_->value; }
    T item() const {
        if (size() != 1) throw shape_error("item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }
    T at(std::size_t i) const { return node_->value.at(i); }
    T at2(std::size_t i, std::size_t j) const { return node_->value[i * dim(1) + j]; }

    const std::vector<T>& grad() const {
        static const std::vector<T> empty;
        return node_->grad.empty() ? empty : node_->grad;
    }
    std::vector<T>& mutable_grad() {
        node_->grad_data();
        return node_->grad;
    }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

    bool finite() const {
        for (T v : node_->value)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    // Reverse-mode pass from a scalar output. Gradients accumulate into the
    // grad buffers of every reachable tensor with requires_grad set; the
    // caller zeroes them between steps.
    void backward() {
        if (size() != 1) throw shape_error("backward requires a scalar output");
        node_->grad_data()[0] = T(1);
        std::vector<Node*> order = topo_order();
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        }
    }

    // Detach from the graph (shares the value buffer's contents by copy).
    Tensor detached(bool requires_grad = false) const {
        return from(shape(), data(), requires_grad);
    }

    std::shared_ptr<Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::vector<Node*> topo_order() const {
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        // Iterative post-order DFS; each node appears exactly once.
        std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node* p = n->parents[next++].get();
                if (seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        return order;
    }

    std::shared_ptr<Node> node_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

namespace detail {

template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  std::vector<Tensor<T>> parents,
                  std::function<void(typename Tensor<T>::Node&)> backward_fn) {
    auto n = std::make_shared<typename Tensor<T>::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    for (auto& p : parents) {
        if (p.requires_grad() || p.node()->backward_fn) n->requires_grad = true;
        n->parents.push_back(p.node());
    }
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Tensor<T>(std::move(n));
}

template <class T>
bool needs_grad(const Tensor<T>& t) {
    return t.requires_grad() || t.node()->backward_fn;
}

}  // namespace detail

// ---- core ops -------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw shape_error("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
    std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
    std::vector<T> out(p * r);
    detail::gemm<T>(false, false, p, r, q, a.data().data(), b.data().data(), out.data());
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(
        {p, r}, std::move(out), {a, b},
        [an, bn, p, q, r](typename Tensor<T>::Node& n) {
            // dA = dC * B^T, dB = A^T * dC
            if (an->requires_grad || an->backward_fn)
                detail::gemm<T>(false, true, p, q, r, n.grad.data(), bn->value.data(),
                                an->grad_data(), T(1), true);
            if (bn->requires_grad || bn->backward_fn)
                detail::gemm<T>(true, false, q, r, p, an->value.data(), n.grad.data(),
                                bn->grad_data(), T(1), true);
        });
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    if (x.rank() != 2) throw shape_error("softmax_rows: expected rank-2, got " + shape_str(x.shape()));
    std::size_t p = x.dim(0), q = x.dim(1);
    std::vector<T> out(p * q);
    for (std::size_t i = 0; i < p; ++i) {
        const T* xi = x.data().data() + i * q;
        T* oi = out.data() + i * q;
        T mx = xi[0];
        for (std::size_t j = 1; j < q; ++j) mx = std::max(mx, xi[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < q; ++j) {
            oi[j] = std::exp(xi[j] - mx);
            sum += oi[j];
        }
        for (std::size_t j = 0; j < q; ++j) oi[j] /= sum;
    }
    auto xn = x.node();
    return detail::make_op<T>(
        {p, q}, std::move(out), {x},
        [xn, p, q](typename Tensor<T>::Node& n) {
            T* dx = xn->grad_data();
            for (std::size_t i = 0; i < p; ++i) {
                const T* yi = n.value.data() + i * q;
                const T* gi = n.grad.data() + i * q;
                T dot = T(0);
                for (std::size_t j = 0; j < q; ++j) dot += yi[j] * gi[j];
                for (std::size_t j = 0; j < q; ++j) dx[i * q + j] += yi[j] * (gi[j] - dot);
            }
        });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias = nullptr) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
        throw shape_error("linear: incompatible shapes " + shape_str(x.shape()) + " and " +
                          shape_str(w.shape()));
    std::size_t rows = x.dim(0), din = x.dim(1), dout = w.dim(1);
    if (bias && (bias->rank() != 1 || bias->dim(0) != dout))
        throw shape_error("linear: bias shape " + shape_str(bias->shape()) + " vs dout " +
                          std::to_string(dout));
    std::vector<T> out(rows * dout);
    detail::gemm<T>(false, false, rows, dout, din, x.data().data(), w.data().data(), out.data());
    if (bias)
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < dout; ++j) out[i * dout + j] += bias->data()[j];
    auto xn = x.node(), wn = w.node();
    std::shared_ptr<typename Tensor<T>::Node> bn = bias ? bias->node() : nullptr;
    std::vector<Tensor<T>> parents{x, w};
    if (bias) parents.push_back(*bias);
    return detail::make_op<T>(
        {rows, dout}, std::move(out), std::move(parents),
        [xn, wn, bn, rows, din, dout](typename Tensor<T>::Node& n) {
            if (xn->requires_grad || xn->backward_fn)
                detail::gemm<T>(false, true, rows, din, dout, n.grad.data(), wn->value.data(),
                                xn->grad_data(), T(1), true);
            if (wn->requires_grad || wn->backward_fn)
                detail::gemm<T>(true, false, din, dout, rows, xn->value.data(), n.grad.data(),
                                wn->grad_data(), T(1), true);
            if (bn && (bn->requires_grad || bn->backward_fn)) {
                T* db = bn->grad_data();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < dout; ++j) db[j] += n.grad[i * dout + j];
            }
        });
}

template <class T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw shape_error("concat_last: no parts");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    std::size_t total_last = 0;
    for (const auto& p : parts) {
        Shape pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead)
            throw shape_error("concat_last: leading dims differ: " + shape_str(parts[0].shape()) +
                              " vs " + shape_str(p.shape()));
        total_last += p.shape().back();
    }
    std::size_t rows = shape_numel(lead);
    Shape out_shape = lead;
    out_shape.push_back(total_last);
    std::vector<T> out(rows * total_last);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::size_t w = p.shape().back();
        for (std::size_t i = 0; i < rows; ++i)
            std::copy_n(p.data().data() + i * w, w, out.data() + i * total_last + off);
        off += w;
    }
    std::vector<std::size_t> widths;
    for (const auto& p : parts) widths.push_back(p.shape().back());
    std::vector<std::shared_ptr<typename Tensor<T>::Node>> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    return detail::make_op<T>(
        std::move(out_shape), std::move(out), parts,
        [pnodes, widths, rows, total_last](typename Tensor<T>::Node& n) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < pnodes.size(); ++k) {
                auto& pn = pnodes[k];
                std::size_t w = widths[k];
                if (pn->requires_grad || pn->backward_fn) {
                    T* g = pn->grad_data();
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                            g[i * w + j] += n.grad[i * total_last + off + j];
                }
                off += w;
            }
        });
}

// Slice [begin, begin+len) of the last dimension.
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t len) {
    std::size_t last = x.shape().back();
    if (begin + len > last)
        throw shape_error("slice_last: range out of bounds for " + shape_str(x.shape()));
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    std::size_t rows = shape_numel(out_shape);
    out_shape.push_back(len);
    std::vector<T> out(rows * len);
    for (std::size_t i = 0; i < rows; ++i)
        std::copy_n(x.data().data() + i * last + begin, len, out.data() + i * len);
    auto xn = x.node();
    return detail::make_op<T>(
        std::move(out_shape), std::move(out), {x},
        [xn, begin, len, last, rows](typename Tensor<T>::Node& n) {
            T* g = xn->grad_data();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < len; ++j) g[i * last + begin + j] += n.grad[i * len + j];
        });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size())
        throw shape_error("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                          shape_str(new_shape));
    auto xn = x.node();
    return detail::make_op<T>(
        std::move(new_shape), std::vector<T>(x.data()), {x},
        [xn](typename Tensor<T>::Node& n) {
            T* g = xn->grad_data();
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
        });
}

// Stack equally-shaped tensors along a new leading axis `axis`.
template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts, std::size_t axis = 0) {
    if (parts.empty()) throw shape_error("stack: no parts");
    const Shape& s = parts[0].shape();
    for (const auto& p : parts)
        if (p.shape() != s)
            throw shape_error("stack: shapes differ: " + shape_str(s) + " vs " + shape_str(p.shape()));
    if (axis > s.size()) throw shape_error("stack: axis out of range");
    Shape out_shape = s;
    out_shape.insert(out_shape.begin() + axis, parts.size());
    // outer = product of dims before axis, inner = product after
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis; i < s.size(); ++i) inner *= s[i];
    std::size_t k = parts.size();
    std::vector<T> out(outer * k * inner);
    for (std::size_t pi = 0; pi < k; ++pi)
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(parts[pi].data().data() + o * inner, inner,
                        out.data() + (o * k + pi) * inner);
    std::vector<std::shared_ptr<typename Tensor<T>::Node>> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    return detail::make_op<T>(
        std::move(out_shape), std::move(out), parts,
        [pnodes, outer, inner, k](typename Tensor<T>::Node& n) {
            for (std::size_t pi = 0; pi < k; ++pi) {
                auto& pn = pnodes[pi];
                if (!(pn->requires_grad || pn->backward_fn)) continue;
                T* g = pn->grad_data();
                for (std::size_t o = 0; o < outer; ++o) {
                    const T* src = n.grad.data() + (o * k + pi) * inner;
                    T* dst = g + o * inner;
                    for (std::size_t j = 0; j < inner; ++j) dst[j] += src[j];
                }
            }
        });
}

// Select index `idx` along `axis`, removing that axis.
template <class T>
Tensor<T> slice_axis(const Tensor<T>& x, std::size_t axis, std::size_t idx) {
    const Shape& s = x.shape();
    if (axis >= s.size() || idx >= s[axis])
        throw shape_error("slice_axis: index out of range for " + shape_str(s));
    Shape out_shape;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i < axis) outer *= s[i];
        if (i > axis) inner *= s[i];
        if (i != axis) out_shape.push_back(s[i]);
    }
    std::size_t k = s[axis];
    std::vector<T> out(outer * inner);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.data().data() + (o * k + idx) * inner, inner, out.data() + o * inner);
    auto xn = x.node();
    return detail::make_op<T>(
        std::move(out_shape), std::move(out), {x},
        [xn, outer, inner, k, idx](typename Tensor<T>::Node& n) {
            T* g = xn->grad_data();
            for (std::size_t o = 0; o < outer; ++o) {
                const T* src = n.grad.data() + o * inner;
                T* dst = g + (o * k + idx) * inner;
                for (std::size_t j = 0; j < inner; ++j) dst[j] += src[j];
            }
        });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() != 2) throw shape_error("transpose: expected rank-2, got " + shape_str(x.shape()));
    std::size_t p = x.dim(0), q = x.dim(1);
    std::vector<T> out(p * q);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) out[j * p + i] = x.data()[i * q + j];
    auto xn = x.node();
    return detail::make_op<T>(
        {q, p}, std::move(out), {x},
        [xn, p, q](typename Tensor<T>::Node& n) {
            T* g = xn->grad_data();
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < q; ++j) g[i * q + j] += n.grad[j * p + i];
        });
}

// ---- elementwise ----------------------------------------------------------

namespace detail {

template <class T, class FwdF, class BwdF>
Tensor<T> binary_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* name, FwdF fwd,
                            BwdF bwd) {
    if (a.shape() != b.shape())
        throw shape_error(std::string(name) + ": shapes differ: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.data()[i], b.data()[i]);
    auto an = a.node(), bn = b.node();
    return make_op<T>(a.shape(), std::move(out), {a, b},
                      [an, bn, bwd](typename Tensor<T>::Node& n) {
                          bool ga = an->requires_grad || an->backward_fn;
                          bool gb = bn->requires_grad || bn->backward_fn;
                          T* da = ga ? an->grad_data() : nullptr;
                          T* db = gb ? bn->grad_data() : nullptr;
                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                              bwd(n.grad[i], an->value[i], bn->value[i], ga ? &da[i] : nullptr,
                                  gb ? &db[i] : nullptr);
                      });
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_same_shape<T>(
        a, b, "add", [](T x, T y) { return x + y; },
        [](T g, T, T, T* da, T* db) {
            if (da) *da += g;
            if (db) *db += g;
        });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_same_shape<T>(
        a, b, "sub", [](T x, T y) { return x - y; },
        [](T g, T, T, T* da, T* db) {
            if (da) *da += g;
            if (db) *db -= g;
        });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_same_shape<T>(
        a, b, "mul", [](T x, T y) { return x * y; },
        [](T g, T x, T y, T* da, T* db) {
            if (da) *da += g * y;
            if (db) *db += g * x;
        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * c;
    auto xn = x.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x},
                              [xn, c](typename Tensor<T>::Node& n) {
                                  T* g = xn->grad_data();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * c;
                              });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        T v = x.data()[i];
        out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    auto xn = x.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x},
                              [xn](typename Tensor<T>::Node& n) {
                                  T* g = xn->grad_data();
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                      T y = n.value[i];
                                      g[i] += n.grad[i] * y * (T(1) - y);
                                  }
                              });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = std::accumulate(x.data().begin(), x.data().end(), T(0));
    auto xn = x.node();
    return detail::make_op<T>({1}, {s}, {x},
                              [xn](typename Tensor<T>::Node& n) {
                                  T* g = xn->grad_data();
                                  for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += n.grad[0];
                              });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// Broadcast a length-c vector over the rows of an r x c matrix.
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.rank() != 2 || b.rank() != 1 || b.dim(0) != x.dim(1))
        throw shape_error("add_rowvec: shapes " + shape_str(x.shape()) + " and " +
                          shape_str(b.shape()));
    std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<T> out(x.data());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += b.data()[j];
    auto xn = x.node(), bn = b.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x, b},
        [xn, bn, rows, cols](typename Tensor<T>::Node& n) {
            if (xn->requires_grad || xn->backward_fn) {
                T* g = xn->grad_data();
                for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
            }
            if (bn->requires_grad || bn->backward_fn) {
                T* g = bn->grad_data();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) g[j] += n.grad[i * cols + j];
            }
        });
}

// Row lookup: out[i, :] = w[indices[i], :]; index -1 yields a zero row with
// no gradient contribution (used for masked rating states).
template <class T>
Tensor<T> take_rows(const Tensor<T>& w, const std::vector<std::ptrdiff_t>& indices) {
    if (w.rank() != 2) throw shape_error("take_rows: expected rank-2 table");
    std::size_t rows = indices.size(), width = w.dim(1), tbl = w.dim(0);
    std::vector<T> out(rows * width, T(0));
    for (std::size_t i = 0; i < rows; ++i) {
        std::ptrdiff_t r = indices[i];
        if (r < 0) continue;
        if (static_cast<std::size_t>(r) >= tbl)
            throw shape_error("take_rows: index " + std::to_string(r) + " out of range " +
                              std::to_string(tbl));
        std::copy_n(w.data().data() + r * width, width, out.data() + i * width);
    }
    auto wn = w.node();
    return detail::make_op<T>(
        {rows, width}, std::move(out), {w},
        [wn, indices, width](typename Tensor<T>::Node& n) {
            T* g = wn->grad_data();
            for (std::size_t i = 0; i < indices.size(); ++i) {
                std::ptrdiff_t r = indices[i];
                if (r < 0) continue;
                for (std::size_t j = 0; j < width; ++j)
                    g[r * width + j] += n.grad[i * width + j];
            }
        });
}

// ---- gradient checking ----------------------------------------------------

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` maps the current values of `inputs` to a scalar tensor.
template <class T, class F>
double grad_check(F f, std::vector<Tensor<T>*> inputs, double eps = 1e-5) {
    for (auto* t : inputs) t->zero_grad();
    Tensor<T> out = f();
    if (out.size() != 1) throw shape_error("grad_check: f must produce a scalar");
    out.backward();
    std::vector<std::vector<T>> analytic;
    for (auto* t : inputs) {
        t->mutable_grad();
        analytic.push_back(t->grad());
    }
    double worst = 0.0;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor<T>& t = *inputs[ti];
        for (std::size_t i = 0; i < t.size(); ++i) {
            T saved = t.mutable_data()[i];
            t.mutable_data()[i] = saved + static_cast<T>(eps);
            double fp = static_cast<double>(f().item());
            t.mutable_data()[i] = saved - static_cast<T>(eps);
            double fm = static_cast<double>(f().item());
            t.mutable_data()[i] = saved;
            double numeric = (fp - fm) / (2.0 * eps);
            double a = static_cast<double>(analytic[ti][i]);
            double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

template <class T, class F>
double grad_check(F f, Tensor<T>& x, double eps = 1e-5) {
    return grad_check<T>([&] { return f(x); }, std::vector<Tensor<T>*>{&x}, eps);
}

}  // namespace hire
