#include "hire/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hire {

RankMetrics rank_metrics(const std::vector<double>& truth, const std::vector<double>& pred,
                         std::size_t k, double threshold) {
    if (truth.empty() || truth.size() != pred.size())
        throw std::invalid_argument("rank_metrics: need equal non-empty lists");
    RankMetrics out;
    std::size_t len = truth.size();
    std::size_t kk = std::min(k, len);
    out.truncated = k > len;

    std::vector<std::size_t> order(len);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pred[a] != pred[b]) return pred[a] > pred[b];
        return a < b;
    });

    std::size_t total_relevant = 0;
    for (double t : truth) total_relevant += t >= threshold;

    std::size_t hits = 0;
    double dcg = 0.0, ap_sum = 0.0;
    for (std::size_t r = 1; r <= kk; ++r) {
        double t = truth[order[r - 1]];
        dcg += t / std::log2(1.0 + static_cast<double>(r));
        if (t >= threshold) {
            ++hits;
            ap_sum += static_cast<double>(hits) / static_cast<double>(r);
        }
    }
    out.precision = static_cast<double>(hits) / static_cast<double>(kk);

    std::vector<double> ideal = truth;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t r = 1; r <= kk; ++r) idcg += ideal[r - 1] / std::log2(1.0 + static_cast<double>(r));
    out.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;

    std::size_t ap_denom = std::min(total_relevant, kk);
    out.map = ap_denom > 0 ? ap_sum / static_cast<double>(ap_denom) : 0.0;
    return out;
}

std::vector<double> popularity_scores(const RatingGraph& g) {
    if (g.item_count() == 0) throw std::invalid_argument("popularity: no items");
    std::vector<double> scores(g.item_count());
    std::size_t max_deg = 0;
    for (const auto& adj : g.item_adj) max_deg = std::max(max_deg, adj.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        scores[i] = max_deg ? static_cast<double>(g.item_adj[i].size()) / static_cast<double>(max_deg)
                            : 0.0;
    return scores;
}

namespace {

// Eligible seed pairs for a scenario: pairs whose cold side(s) come from the
// test pool and which carry a rating.
std::vector<std::pair<EntityId, EntityId>> eval_seed_pairs(const RatingGraph& g,
                                                           const ScenarioSplit& split) {
    std::vector<std::pair<EntityId, EntityId>> out;
    switch (split.scenario) {
        case Scenario::UC:
            for (EntityId u : split.test_users)
                for (EntityId i : g.user_adj[u]) out.emplace_back(u, i);
            break;
        case Scenario::IC:
            for (EntityId i : split.test_items)
                for (EntityId u : g.item_adj[i]) out.emplace_back(u, i);
            break;
        case Scenario::UIC: {
            std::vector<bool> cold_item(g.item_count(), false);
            for (EntityId i : split.test_items) cold_item[i] = true;
            for (EntityId u : split.test_users)
                for (EntityId i : g.user_adj[u])
                    if (cold_item[i]) out.emplace_back(u, i);
            break;
        }
        case Scenario::WARM:
            // Warm evaluation still centers contexts on entities whose
            // held-out pairs were withheld from training.
            for (EntityId u : split.test_users)
                for (EntityId i : g.user_adj[u]) out.emplace_back(u, i);
            break;
    }
    return out;
}

void apply_eval_masks(PredictionContext& ctx, const ScenarioSplit& split) {
    for (std::size_t k = 0; k < ctx.n(); ++k)
        for (std::size_t j = 0; j < ctx.m(); ++j) {
            std::size_t c = ctx.idx(k, j);
            if (!ctx.has_truth[c]) continue;
            bool query = split.is_eval_only(ctx.user_ids[k], ctx.item_ids[j]);
            ctx.support_mask[c] = !query;
            ctx.query_mask[c] = query;
            ctx.state[c] = query ? RatingState::MaskedTarget : RatingState::Observed;
        }
}

}  // namespace

EvalReport evaluate(const Predictor& predict, const RatingGraph& g, const ScenarioSplit& split,
                    const EvalOptions& opt) {
    auto seeds = eval_seed_pairs(g, split);
    if (seeds.empty())
        throw std::invalid_argument("evaluate: no eligible test pairs for scenario " +
                                    scenario_name(split.scenario));
    Rng rng(opt.seed);
    EvalReport report;
    report.scenario = split.scenario;
    report.ks = opt.ks;
    report.relevance_threshold = opt.relevance_threshold;

    // per k: metric values, one entry per context that produced any ranking
    std::vector<std::vector<double>> prec(opt.ks.size()), ndcg(opt.ks.size()), map(opt.ks.size());
    for (std::size_t ci = 0; ci < opt.n_contexts; ++ci) {
        auto seed = seeds[rand_index(rng, seeds.size())];
        PredictionContext ctx =
            sample_context(opt.sampler, g, {seed}, opt.n, opt.m, rng);
        apply_eval_masks(ctx, split);
        std::vector<double> scores = predict(g, ctx);

        // Candidate columns per user, ordered by ascending item id so the
        // ranking tie-break is stable under column shuffles.
        std::vector<std::size_t> cols(ctx.m());
        std::iota(cols.begin(), cols.end(), 0);
        std::sort(cols.begin(), cols.end(),
                  [&](std::size_t a, std::size_t b) { return ctx.item_ids[a] < ctx.item_ids[b]; });

        for (std::size_t ki = 0; ki < opt.ks.size(); ++ki) {
            double p_sum = 0, n_sum = 0, m_sum = 0;
            std::size_t users = 0;
            for (std::size_t k = 0; k < ctx.n(); ++k) {
                std::vector<double> t, s;
                for (std::size_t j : cols) {
                    std::size_t c = ctx.idx(k, j);
                    if (!ctx.query_mask[c]) continue;
                    t.push_back(ctx.truth[c]);
                    s.push_back(scores[c]);
                }
                if (t.empty()) continue;
                RankMetrics rm = rank_metrics(t, s, opt.ks[ki], opt.relevance_threshold);
                p_sum += rm.precision;
                n_sum += rm.ndcg;
                m_sum += rm.map;
                ++users;
            }
            if (users == 0) continue;
            prec[ki].push_back(p_sum / users);
            ndcg[ki].push_back(n_sum / users);
            map[ki].push_back(m_sum / users);
        }
        ++report.contexts;
    }

    auto summarize = [](const std::vector<double>& xs) {
        EvalReport::Stat s;
        if (xs.empty()) return s;
        for (double x : xs) s.mean += x;
        s.mean /= static_cast<double>(xs.size());
        double sq = 0;
        for (double x : xs) sq += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(sq / static_cast<double>(xs.size()));
        return s;
    };
    for (std::size_t ki = 0; ki < opt.ks.size(); ++ki) {
        report.precision.push_back(summarize(prec[ki]));
        report.ndcg.push_back(summarize(ndcg[ki]));
        report.map.push_back(summarize(map[ki]));
    }
    return report;
}

std::string report_table(const EvalReport& report, const std::string& label) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << std::left << std::setw(14) << label;
    for (std::size_t k : report.ks)
        for (const char* m : {"P@", "NDCG@", "MAP@"})
            os << std::right << std::setw(6 + 5) << (m + std::to_string(k));
    os << '\n' << std::left << std::setw(14) << (scenario_name(report.scenario) + " mean");
    auto row = [&](auto get) {
        for (std::size_t ki = 0; ki < report.ks.size(); ++ki) {
            os << std::right << std::setw(11) << get(report.precision[ki]);
            os << std::right << std::setw(11) << get(report.ndcg[ki]);
            os << std::right << std::setw(11) << get(report.map[ki]);
        }
        os << '\n';
    };
    row([](const EvalReport::Stat& s) { return s.mean; });
    os << std::left << std::setw(14) << "std";
    row([](const EvalReport::Stat& s) { return s.stddev; });
    return os.str();
}

void write_report_csv(const std::string& path,
                      const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write report to " + path);
    os << "model,scenario,k,precision_mean,precision_std,ndcg_mean,ndcg_std,map_mean,map_std,"
          "contexts\n";
    os.precision(10);
    for (const auto& [label, r] : rows)
        for (std::size_t ki = 0; ki < r.ks.size(); ++ki)
            os << label << ',' << scenario_name(r.scenario) << ',' << r.ks[ki] << ','
               << r.precision[ki].mean << ',' << r.precision[ki].stddev << ',' << r.ndcg[ki].mean
               << ',' << r.ndcg[ki].stddev << ',' << r.map[ki].mean << ',' << r.map[ki].stddev
               << ',' << r.contexts << '\n';
}

}  // namespace hire
