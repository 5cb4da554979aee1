#pragma once

// Layerwise-adaptive optimizer with a slow-weights wrapper and a
// flat-then-cosine learning-rate schedule, plus the masked regression loss.

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "hire/context.hpp"
#include "hire/tensor.hpp"

namespace hire {

struct OptimizerConfig {
    double base_lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-6;
    double lookahead_alpha = 0.5;
    std::size_t lookahead_k = 6;
    double clip_norm = 1.0;
    double flat_fraction = 0.7;
    std::size_t total_steps = 1000;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;

    void validate() const {
        if (flat_fraction <= 0.0 || flat_fraction >= 1.0)
            throw std::invalid_argument("flat_fraction must lie in (0, 1)");
        if (clip_norm <= 0.0) throw std::invalid_argument("clip_norm must be positive");
        if (total_steps == 0 || batch_size == 0)
            throw std::invalid_argument("total_steps and batch_size must be positive");
    }
};

// Constant at base_lr through the flat fraction of the run, then cosine decay
// to zero at total_steps.
inline double lr_at(std::size_t step, const OptimizerConfig& cfg) {
    double flat_end = cfg.flat_fraction * static_cast<double>(cfg.total_steps);
    double s = static_cast<double>(step);
    if (s <= flat_end) return cfg.base_lr;
    double span = static_cast<double>(cfg.total_steps) - flat_end;
    double progress = (s - flat_end) / span;
    return cfg.base_lr * 0.5 * (1.0 + std::cos(progress * M_PI));
}

// Mean over query cells of squared prediction error for one context.
// Differentiable w.r.t. pred; throws when the context has no query cells.
template <class T>
Tensor<T> masked_mse(const Tensor<T>& pred, const PredictionContext& ctx) {
    if (pred.size() != ctx.state.size())
        throw shape_error("masked_mse: prediction shape " + shape_str(pred.shape()) +
                          " does not match context");
    std::size_t q = 0;
    T acc = T(0);
    for (std::size_t c = 0; c < ctx.state.size(); ++c) {
        if (!ctx.query_mask[c]) continue;
        T diff = pred.data()[c] - static_cast<T>(ctx.truth[c]);
        acc += diff * diff;
        ++q;
    }
    if (q == 0) throw std::invalid_argument("masked_mse: context has no query cells");
    auto pn = pred.node();
    std::vector<bool> mask = ctx.query_mask;
    std::vector<double> truth = ctx.truth;
    return detail::make_op<T>(
        {1}, {acc / static_cast<T>(q)}, {pred},
        [pn, mask = std::move(mask), truth = std::move(truth), q](typename Tensor<T>::Node& n) {
            T g = n.grad[0] * T(2) / static_cast<T>(q);
            T* dp = pn->grad_data();
            for (std::size_t c = 0; c < mask.size(); ++c)
                if (mask[c]) dp[c] += g * (pn->value[c] - static_cast<T>(truth[c]));
        });
}

// Scales all gradients so the global L2 norm does not exceed max_norm;
// returns the pre-clip norm.
template <class T>
double clip_global_norm(const std::vector<Tensor<T>*>& params, double max_norm) {
    double sq = 0.0;
    for (auto* p : params)
        for (T g : p->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        T s = static_cast<T>(max_norm / norm);
        for (auto* p : params)
            for (T& g : p->mutable_grad()) g *= s;
    }
    return norm;
}

// Per-tensor adaptive update: bias-corrected first/second moments, then the
// step is rescaled by trust = |w| / |update|, 0/0 treated as 1, clamped to
// [0, 10].
template <class T>
class LambOptimizer {
public:
    LambOptimizer(std::vector<Tensor<T>*> params, OptimizerConfig cfg)
        : params_(std::move(params)), cfg_(std::move(cfg)) {
        for (auto* p : params_) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }

    std::size_t step_count() const { return t_; }

    void step(double lr) {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        std::vector<double> update;
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Tensor<T>& p = *params_[pi];
            const std::vector<T>& grad = p.grad();
            update.assign(p.size(), 0.0);
            double w_sq = 0.0, u_sq = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
                if (!std::isfinite(g))
                    throw std::runtime_error("optimizer: non-finite gradient at step " +
                                             std::to_string(t_));
                m_[pi][i] = cfg_.beta1 * m_[pi][i] + (1.0 - cfg_.beta1) * g;
                v_[pi][i] = cfg_.beta2 * v_[pi][i] + (1.0 - cfg_.beta2) * g * g;
                double mh = m_[pi][i] / bc1;
                double vh = v_[pi][i] / bc2;
                update[i] = mh / (std::sqrt(vh) + cfg_.eps);
                double w = static_cast<double>(p.data()[i]);
                w_sq += w * w;
                u_sq += update[i] * update[i];
            }
            double w_norm = std::sqrt(w_sq), u_norm = std::sqrt(u_sq);
            double trust;
            if (w_norm == 0.0 && u_norm == 0.0)
                trust = 1.0;
            else if (u_norm == 0.0)
                trust = 10.0;
            else
                trust = std::min(w_norm / u_norm, 10.0);
            for (std::size_t i = 0; i < p.size(); ++i)
                p.mutable_data()[i] -= static_cast<T>(lr * trust * update[i]);
        }
    }

    void save_state(std::ostream& os) const {
        auto w64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
        auto wd = [&](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
        w64(t_);
        w64(m_.size());
        for (std::size_t pi = 0; pi < m_.size(); ++pi) {
            w64(m_[pi].size());
            for (double v : m_[pi]) wd(v);
            for (double v : v_[pi]) wd(v);
        }
    }

    void load_state(std::istream& is) {
        auto r64 = [&] {
            std::uint64_t v;
            is.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        auto rd = [&] {
            double v;
            is.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        t_ = r64();
        std::uint64_t count = r64();
        if (count != m_.size()) throw std::runtime_error("optimizer state: tensor count mismatch");
        for (std::size_t pi = 0; pi < m_.size(); ++pi) {
            std::uint64_t sz = r64();
            if (sz != m_[pi].size()) throw std::runtime_error("optimizer state: size mismatch");
            for (double& v : m_[pi]) v = rd();
            for (double& v : v_[pi]) v = rd();
        }
        if (!is) throw std::runtime_error("optimizer state: truncated stream");
    }

private:
    std::vector<Tensor<T>*> params_;
    OptimizerConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

// Slow-weights wrapper: every k fast steps, slow += alpha*(fast - slow) and
// the fast weights are reset onto the slow ones.
template <class T>
class Lookahead {
public:
    Lookahead(std::vector<Tensor<T>*> params, double alpha, std::size_t k)
        : params_(std::move(params)), alpha_(alpha), k_(k) {
        for (auto* p : params_) slow_.push_back(p->data());
    }

    // Call after each optimizer step with the 1-based step index; returns
    // whether a sync happened.
    bool maybe_sync(std::size_t step) {
        if (k_ == 0 || step % k_ != 0) return false;
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            std::vector<T>& fast = params_[pi]->mutable_data();
            std::vector<T>& slow = slow_[pi];
            for (std::size_t i = 0; i < fast.size(); ++i) {
                slow[i] += static_cast<T>(alpha_) * (fast[i] - slow[i]);
                fast[i] = slow[i];
            }
        }
        return true;
    }

    void save_state(std::ostream& os) const {
        for (const auto& s : slow_)
            for (T v : s) {
                double d = static_cast<double>(v);
                os.write(reinterpret_cast<const char*>(&d), 8);
            }
    }

    void load_state(std::istream& is) {
        for (auto& s : slow_)
            for (T& v : s) {
                double d;
                is.read(reinterpret_cast<char*>(&d), 8);
                v = static_cast<T>(d);
            }
        if (!is) throw std::runtime_error("lookahead state: truncated stream");
    }

private:
    std::vector<Tensor<T>*> params_;
    double alpha_;
    std::size_t k_;
    std::vector<std::vector<T>> slow_;
};

}  // namespace hire
