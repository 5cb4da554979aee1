#pragma once

// Training loop: sample a batch of prediction contexts around rated pairs,
// run the model, take the masked regression loss, clip, step, sync slow
// weights; stops at the step budget or once the smoothed loss flattens.

#include <fstream>
#include <thread>
#include <vector>

#include "hire/him.hpp"
#include "hire/optimizer.hpp"

namespace hire {

struct TrainOptions {
    std::size_t n = 32, m = 32;
    double p_support = 0.1;
    SamplerKind sampler = SamplerKind::Neighborhood;
    std::size_t workers = 1;
    bool stop_on_convergence = true;
};

struct TracePoint {
    std::size_t step = 0;  // 1-based
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    std::vector<TracePoint> trace;
    std::size_t steps_run = 0;
    bool diverged = false;
    bool converged = false;
};

inline void write_trace_csv(const std::string& path, const std::vector<TracePoint>& trace) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write trace to " + path);
    os << "step,lr,loss\n";
    os.precision(17);
    for (const auto& p : trace) os << p.step << ',' << p.lr << ',' << p.loss << '\n';
}

namespace detail {

// All rated (user, item) pairs in a stable order, for uniform seed draws.
inline std::vector<std::pair<EntityId, EntityId>> rated_pairs(const RatingGraph& g) {
    std::vector<std::pair<EntityId, EntityId>> out;
    out.reserve(g.rating_count());
    for (EntityId u = 0; u < g.user_count(); ++u)
        for (EntityId i : g.user_adj[u]) out.emplace_back(u, i);
    return out;
}

template <class T>
HireModel<T> clone_params(const HireModel<T>& model) {
    HireModel<T> copy = model;
    for (Tensor<T>* p : copy.parameters()) *p = p->detached(true);
    return copy;
}

// Mean masked loss over a span of contexts; builds one graph and runs one
// backward pass. `inv_batch` is 1/full-batch-size so partial spans compose.
template <class T>
double span_loss_backward(const HireModel<T>& model, const RatingGraph& g,
                          const std::vector<PredictionContext>& batch, std::size_t begin,
                          std::size_t end, T inv_batch) {
    Tensor<T> total;
    for (std::size_t b = begin; b < end; ++b) {
        Tensor<T> l = masked_mse(hire_forward(model, g, batch[b]), batch[b]);
        total = total.defined() ? add(total, l) : l;
    }
    total = scale(total, inv_batch);
    total.backward();
    return static_cast<double>(total.item());
}

}  // namespace detail

template <class T>
TrainResult train(HireModel<T>& model, const RatingGraph& g, const OptimizerConfig& cfg,
                  const TrainOptions& opt, LambOptimizer<T>* ext_opt = nullptr,
                  Lookahead<T>* ext_look = nullptr) {
    cfg.validate();
    auto pairs = detail::rated_pairs(g);
    if (pairs.empty()) throw std::invalid_argument("train: graph has no ratings");

    std::vector<Tensor<T>*> params = model.parameters();
    LambOptimizer<T> own_opt(params, cfg);
    Lookahead<T> own_look(params, cfg.lookahead_alpha, cfg.lookahead_k);
    LambOptimizer<T>& opt_state = ext_opt ? *ext_opt : own_opt;
    Lookahead<T>& look = ext_look ? *ext_look : own_look;

    Rng rng(cfg.seed);
    TrainResult result;
    std::vector<std::vector<T>> snapshot(params.size());

    for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
        // Batch of contexts, each grown around one rated seed pair.
        std::vector<PredictionContext> batch;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            auto seed = pairs[rand_index(rng, pairs.size())];
            PredictionContext ctx = sample_context(opt.sampler, g, {seed}, opt.n, opt.m, rng);
            assign_masks(ctx, opt.p_support, rng);
            bool any_query = false;
            for (std::size_t c = 0; c < ctx.state.size(); ++c) any_query |= bool(ctx.query_mask[c]);
            if (!any_query) {  // degenerate draw: train on every rated cell
                for (std::size_t c = 0; c < ctx.state.size(); ++c)
                    if (ctx.has_truth[c]) {
                        ctx.state[c] = RatingState::MaskedTarget;
                        ctx.support_mask[c] = false;
                        ctx.query_mask[c] = true;
                    }
            }
            batch.push_back(std::move(ctx));
        }

        for (std::size_t pi = 0; pi < params.size(); ++pi) snapshot[pi] = params[pi]->data();
        for (auto* p : params) p->zero_grad();
        T inv_batch = T(1) / static_cast<T>(cfg.batch_size);

        double loss = 0.0;
        std::size_t workers = std::min(std::max<std::size_t>(opt.workers, 1), cfg.batch_size);
        if (workers == 1) {
            loss = detail::span_loss_backward(model, g, batch, 0, batch.size(), inv_batch);
        } else {
            // Each worker runs its share on a private parameter copy; the
            // partial gradients are folded back in a fixed order.
            std::vector<HireModel<T>> replicas;
            for (std::size_t w = 0; w < workers; ++w) replicas.push_back(detail::clone_params(model));
            std::vector<double> partial(workers, 0.0);
            std::vector<std::thread> threads;
            std::size_t per = (batch.size() + workers - 1) / workers;
            for (std::size_t w = 0; w < workers; ++w) {
                std::size_t begin = w * per, end = std::min(batch.size(), begin + per);
                threads.emplace_back([&, w, begin, end] {
                    if (begin < end)
                        partial[w] =
                            detail::span_loss_backward(replicas[w], g, batch, begin, end, inv_batch);
                });
            }
            for (auto& t : threads) t.join();
            for (std::size_t w = 0; w < workers; ++w) {
                loss += partial[w];
                std::vector<Tensor<T>*> rp = replicas[w].parameters();
                for (std::size_t pi = 0; pi < params.size(); ++pi) {
                    const std::vector<T>& src = rp[pi]->grad();
                    if (src.empty()) continue;
                    std::vector<T>& dst = params[pi]->mutable_grad();
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
                }
            }
        }

        double lr = lr_at(step - 1, cfg);
        bool bad = !std::isfinite(loss);
        if (!bad) {
            clip_global_norm(params, cfg.clip_norm);
            try {
                opt_state.step(lr);
            } catch (const std::runtime_error&) {
                bad = true;
            }
        }
        if (bad || [&] {
                for (auto* p : params)
                    if (!p->finite()) return true;
                return false;
            }()) {
            for (std::size_t pi = 0; pi < params.size(); ++pi)
                params[pi]->mutable_data() = snapshot[pi];
            result.diverged = true;
            break;
        }
        look.maybe_sync(step);
        result.trace.push_back({step, lr, loss});
        result.steps_run = step;

        // Converged when the 100-step moving average stops moving.
        if (opt.stop_on_convergence && result.trace.size() >= 200) {
            double recent = 0.0, prior = 0.0;
            std::size_t s = result.trace.size();
            for (std::size_t i = s - 100; i < s; ++i) recent += result.trace[i].loss;
            for (std::size_t i = s - 200; i < s - 100; ++i) prior += result.trace[i].loss;
            recent /= 100.0;
            prior /= 100.0;
            if (std::abs(recent - prior) / std::max(prior, 1e-12) < 1e-4) {
                result.converged = true;
                break;
            }
        }
    }
    return result;
}

}  // namespace hire
