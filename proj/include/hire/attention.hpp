#pragma once

// Multi-head self-attention: per-head A = softmax(X Wq (X Wk)^T / sqrt(d_k)),
// head output A X Wv, heads concatenated and projected by W_O. Forward and
// backward are fused into a single tape node per call; attention weights can
// be captured for inspection.

#include <cmath>
#include <optional>
#include <vector>

#include "hire/tensor.hpp"

namespace hire {

template <class T>
struct HeadParams {
    Tensor<T> w_q, w_k, w_v;  // d x d_k, d x d_k, d x d_v
};

template <class T>
struct MhsaParams {
    std::vector<HeadParams<T>> heads;
    Tensor<T> w_o;  // (l_a * d_v) x d_o
    std::size_t d = 0, d_k = 0, d_v = 0, d_o = 0;

    static MhsaParams init(std::size_t d, std::size_t d_k, std::size_t d_v, std::size_t d_o,
                           std::size_t l_a, Rng& rng) {
        MhsaParams p;
        p.d = d;
        p.d_k = d_k;
        p.d_v = d_v;
        p.d_o = d_o;
        for (std::size_t h = 0; h < l_a; ++h)
            p.heads.push_back({Tensor<T>::param({d, d_k}, rng), Tensor<T>::param({d, d_k}, rng),
                               Tensor<T>::param({d, d_v}, rng)});
        p.w_o = Tensor<T>::param({l_a * d_v, d_o}, rng);
        return p;
    }

    std::size_t head_count() const { return heads.size(); }

    std::vector<Tensor<T>*> parameters() {
        std::vector<Tensor<T>*> out;
        for (auto& h : heads) {
            out.push_back(&h.w_q);
            out.push_back(&h.w_k);
            out.push_back(&h.w_v);
        }
        out.push_back(&w_o);
        return out;
    }

    void check_input(const Tensor<T>& x) const {
        if (x.rank() != 2 || x.dim(1) != d)
            throw shape_error("attention: input " + shape_str(x.shape()) + " does not match d=" +
                              std::to_string(d));
        if (w_o.dim(0) != head_count() * d_v)
            throw shape_error("attention: W_O input dim " + std::to_string(w_o.dim(0)) +
                              " != l_a*d_v");
    }
};

// Row-stochastic attention matrices captured during a forward pass. With a
// batched call each entry holds `batch` stacked t x t matrices.
template <class T>
struct AttnCapture {
    std::vector<std::vector<T>> per_head;
    std::size_t t = 0;
    std::size_t batch = 1;
};

// Single-head self-attention over `batch` independent sequences of length t
// sharing one set of weights: Tensor[batch*t x d] -> Tensor[batch*t x d_v].
// `capture`, when given, receives the stacked t x t attention matrices.
template <class T>
Tensor<T> self_attention(const Tensor<T>& x, const HeadParams<T>& head, std::size_t d_k,
                         std::size_t batch = 1, std::vector<T>* capture = nullptr) {
    if (x.rank() != 2 || x.dim(1) != head.w_q.dim(0))
        throw shape_error("self_attention: input " + shape_str(x.shape()) + " vs W_Q " +
                          shape_str(head.w_q.shape()));
    if (batch == 0 || x.dim(0) % batch != 0)
        throw shape_error("self_attention: rows " + std::to_string(x.dim(0)) +
                          " not divisible by batch " + std::to_string(batch));
    std::size_t rows = x.dim(0), t = rows / batch, d = x.dim(1), dv = head.w_v.dim(1);
    T inv_sqrt = T(1) / std::sqrt(static_cast<T>(d_k));

    std::vector<T> q(rows * d_k), k(rows * d_k), v(rows * dv), a(batch * t * t), out(rows * dv);
    detail::gemm<T>(false, false, rows, d_k, d, x.data().data(), head.w_q.data().data(), q.data());
    detail::gemm<T>(false, false, rows, d_k, d, x.data().data(), head.w_k.data().data(), k.data());
    detail::gemm<T>(false, false, rows, dv, d, x.data().data(), head.w_v.data().data(), v.data());
    for (std::size_t b = 0; b < batch; ++b) {
        T* ab = a.data() + b * t * t;
        detail::gemm<T>(false, true, t, t, d_k, q.data() + b * t * d_k, k.data() + b * t * d_k, ab,
                        inv_sqrt);
        for (std::size_t i = 0; i < t; ++i) {
            T* row = ab + i * t;
            T mx = row[0];
            for (std::size_t j = 1; j < t; ++j) mx = std::max(mx, row[j]);
            T sum = T(0);
            for (std::size_t j = 0; j < t; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (std::size_t j = 0; j < t; ++j) row[j] /= sum;
        }
        detail::gemm<T>(false, false, t, dv, t, ab, v.data() + b * t * dv, out.data() + b * t * dv);
    }
    if (capture) *capture = a;

    auto xn = x.node();
    auto qn = head.w_q.node(), kn = head.w_k.node(), vn = head.w_v.node();
    return detail::make_op<T>(
        {rows, dv}, std::move(out), {x, head.w_q, head.w_k, head.w_v},
        [xn, qn, kn, vn, q = std::move(q), k = std::move(k), v = std::move(v), a = std::move(a),
         batch, t, rows, d, d_k, dv, inv_sqrt](typename Tensor<T>::Node& n) {
            const T* g = n.grad.data();
            std::vector<T> da(t * t), ds(t * t), dv_buf(rows * dv), dq(rows * d_k), dk(rows * d_k);
            for (std::size_t b = 0; b < batch; ++b) {
                const T* ab = a.data() + b * t * t;
                const T* gb = g + b * t * dv;
                // dA = dO V^T ; dV = A^T dO
                detail::gemm<T>(false, true, t, t, dv, gb, v.data() + b * t * dv, da.data());
                detail::gemm<T>(true, false, t, dv, t, ab, gb, dv_buf.data() + b * t * dv);
                // softmax backward per row
                for (std::size_t i = 0; i < t; ++i) {
                    T dot = T(0);
                    for (std::size_t j = 0; j < t; ++j) dot += ab[i * t + j] * da[i * t + j];
                    for (std::size_t j = 0; j < t; ++j)
                        ds[i * t + j] = ab[i * t + j] * (da[i * t + j] - dot);
                }
                // dQ = dS K / sqrt(d_k) ; dK = dS^T Q / sqrt(d_k)
                detail::gemm<T>(false, false, t, d_k, t, ds.data(), k.data() + b * t * d_k,
                                dq.data() + b * t * d_k, inv_sqrt);
                detail::gemm<T>(true, false, t, d_k, t, ds.data(), q.data() + b * t * d_k,
                                dk.data() + b * t * d_k, inv_sqrt);
            }
            if (qn->requires_grad || qn->backward_fn)
                detail::gemm<T>(true, false, d, d_k, rows, xn->value.data(), dq.data(),
                                qn->grad_data(), T(1), true);
            if (kn->requires_grad || kn->backward_fn)
                detail::gemm<T>(true, false, d, d_k, rows, xn->value.data(), dk.data(),
                                kn->grad_data(), T(1), true);
            if (vn->requires_grad || vn->backward_fn)
                detail::gemm<T>(true, false, d, dv, rows, xn->value.data(), dv_buf.data(),
                                vn->grad_data(), T(1), true);
            if (xn->requires_grad || xn->backward_fn) {
                T* dx = xn->grad_data();
                detail::gemm<T>(false, true, rows, d, d_k, dq.data(), qn->value.data(), dx, T(1),
                                true);
                detail::gemm<T>(false, true, rows, d, d_k, dk.data(), kn->value.data(), dx, T(1),
                                true);
                detail::gemm<T>(false, true, rows, d, dv, dv_buf.data(), vn->value.data(), dx, T(1),
                                true);
            }
        });
}

// Multi-head self-attention, Tensor[batch*t x d] -> Tensor[batch*t x d_o].
template <class T>
Tensor<T> mhsa(const Tensor<T>& x, const MhsaParams<T>& params, std::size_t batch = 1,
               AttnCapture<T>* capture = nullptr) {
    params.check_input(x);
    if (capture) {
        capture->per_head.clear();
        capture->t = x.dim(0) / batch;
        capture->batch = batch;
    }
    std::vector<Tensor<T>> head_outs;
    head_outs.reserve(params.heads.size());
    for (const auto& h : params.heads) {
        std::vector<T>* slot = nullptr;
        if (capture) {
            capture->per_head.emplace_back();
            slot = &capture->per_head.back();
        }
        head_outs.push_back(self_attention(x, h, params.d_k, batch, slot));
    }
    return matmul(concat_last(head_outs), params.w_o);
}

}  // namespace hire
