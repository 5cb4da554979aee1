#pragma once

// Top-k ranking metrics, the interaction-count baseline, and the scenario
// evaluation loop over sampled test contexts.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hire/context.hpp"
#include "hire/him.hpp"

namespace hire {

struct RankMetrics {
    double precision = 0.0;
    double ndcg = 0.0;
    double map = 0.0;
    bool truncated = false;  // k exceeded the candidate list
};

// Candidates are ranked by descending pred score, ties broken by ascending
// list position. Relevance for precision/MAP is truth >= threshold; NDCG uses
// the raw rating as gain with a 1/log2(1+rank) discount.
RankMetrics rank_metrics(const std::vector<double>& truth, const std::vector<double>& pred,
                         std::size_t k, double threshold);

// Default binary relevance cutoff: ceil(0.8 * r_max).
inline double default_relevance_threshold(double r_max) { return std::ceil(0.8 * r_max); }

// Per-item score = interaction count / max interaction count.
std::vector<double> popularity_scores(const RatingGraph& g);

struct EvalReport {
    Scenario scenario = Scenario::UC;
    std::vector<std::size_t> ks;
    struct Stat {
        double mean = 0.0, stddev = 0.0;
    };
    std::vector<Stat> precision, ndcg, map;  // parallel to ks
    std::size_t contexts = 0;
    double relevance_threshold = 4.0;
};

// Scores for every cell of a context, row-major n x m.
using Predictor = std::function<std::vector<double>(const RatingGraph&, const PredictionContext&)>;

struct EvalOptions {
    std::vector<std::size_t> ks{5, 7, 10};
    std::size_t n_contexts = 50;
    std::size_t n = 32, m = 32;
    SamplerKind sampler = SamplerKind::Neighborhood;
    std::uint64_t seed = 0;
    double relevance_threshold = 4.0;
};

EvalReport evaluate(const Predictor& predict, const RatingGraph& g, const ScenarioSplit& split,
                    const EvalOptions& opt);

std::string report_table(const EvalReport& report, const std::string& label);
void write_report_csv(const std::string& path,
                      const std::vector<std::pair<std::string, EvalReport>>& rows);

template <class T>
Predictor model_predictor(const HireModel<T>& model) {
    return [&model](const RatingGraph& g, const PredictionContext& ctx) {
        Tensor<T> pred = hire_forward(model, g, ctx);
        std::vector<double> out(pred.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(pred.data()[i]);
        return out;
    };
}

inline Predictor popularity_predictor(const RatingGraph& g_full) {
    auto scores = popularity_scores(g_full);
    return [scores](const RatingGraph&, const PredictionContext& ctx) {
        std::vector<double> out(ctx.n() * ctx.m());
        for (std::size_t k = 0; k < ctx.n(); ++k)
            for (std::size_t j = 0; j < ctx.m(); ++j)
                out[ctx.idx(k, j)] = scores[ctx.item_ids[j]];
        return out;
    };
}

}  // namespace hire
