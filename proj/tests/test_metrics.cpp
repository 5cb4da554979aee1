#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "hire/metrics.hpp"

using namespace hire;

namespace {

// Plain-order reference for the ranking metrics, written from the definitions
// with no shared code: sort indices by score descending (stable on position),
// then walk ranks 1..k.
RankMetrics reference_metrics(const std::vector<double>& truth, const std::vector<double>& pred,
                              std::size_t k, double thr) {
    std::vector<std::size_t> order(truth.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pred[a] > pred[b]; });
    std::size_t kk = std::min<std::size_t>(k, truth.size());
    RankMetrics out;
    out.truncated = k > truth.size();
    std::size_t hits = 0, total_rel = 0;
    for (double t : truth) total_rel += t >= thr;
    double dcg = 0, ap = 0;
    for (std::size_t r = 1; r <= kk; ++r) {
        double t = truth[order[r - 1]];
        dcg += t / std::log2(1.0 + double(r));
        if (t >= thr) {
            ++hits;
            ap += double(hits) / double(r);
        }
    }
    std::vector<double> best = truth;
    std::sort(best.begin(), best.end(), std::greater<>());
    double idcg = 0;
    for (std::size_t r = 1; r <= kk; ++r) idcg += best[r - 1] / std::log2(1.0 + double(r));
    out.precision = kk ? double(hits) / double(kk) : 0.0;
    out.ndcg = idcg > 0 ? dcg / idcg : 0.0;
    std::size_t denom = std::min<std::size_t>(total_rel, kk);
    out.map = denom ? ap / double(denom) : 0.0;
    return out;
}

RatingGraph eval_graph() {
    RatingGraph g;
    g.user_slots.resize(1);
    g.item_slots.resize(1);
    for (int u = 0; u < 12; ++u)
        g.add_user("u" + std::to_string(u), {g.user_slots[0].intern(std::to_string(u % 3))});
    for (int i = 0; i < 10; ++i)
        g.add_item("i" + std::to_string(i), {g.item_slots[0].intern(std::to_string(i % 2))});
    std::mt19937_64 rng(99);
    for (int u = 0; u < 12; ++u)
        for (int i = 0; i < 10; ++i)
            if (rng() % 4 != 0) g.set_rating(u, i, 1.0 + double(rng() % 5));
    return g;
}

}  // namespace

TEST_CASE("worked ranking example") {
    // truths {5,3,4} scored {0.1,0.9,0.5}: ranked truths are 3,4,5; with k=2
    // and threshold 4 only the item at rank 2 is relevant
    auto m = rank_metrics({5, 3, 4}, {0.1, 0.9, 0.5}, 2, 4.0);
    CHECK(m.precision == doctest::Approx(0.5));
    CHECK(m.ndcg == doctest::Approx(0.7341740173706042).epsilon(1e-15));
    CHECK(m.map == doctest::Approx(0.25));
    CHECK(!m.truncated);
}

TEST_CASE("edge cases return zeros rather than NaN") {
    auto none = rank_metrics({1, 2, 1}, {0.5, 0.4, 0.3}, 3, 4.0);
    CHECK(none.precision == 0.0);
    CHECK(none.map == 0.0);
    CHECK(std::isfinite(none.ndcg));

    auto zeros = rank_metrics({0, 0}, {0.3, 0.7}, 2, 1.0);
    CHECK(zeros.ndcg == 0.0);

    auto trunc = rank_metrics({5, 4}, {0.9, 0.1}, 10, 4.0);
    CHECK(trunc.truncated);
    CHECK(trunc.precision == doctest::Approx(1.0));
}

TEST_CASE("a perfect ranking scores full NDCG and MAP") {
    auto m = rank_metrics({5, 4, 3, 2}, {0.9, 0.8, 0.7, 0.6}, 4, 4.0);
    CHECK(m.ndcg == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.map == doctest::Approx(1.0));
}

TEST_CASE("ties break by list position") {
    auto m = rank_metrics({1, 5}, {0.5, 0.5}, 1, 4.0);
    CHECK(m.precision == 0.0);  // the earlier (irrelevant) item wins the tie
}

TEST_CASE("ranking metrics match an independent reference on random instances") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t len = 1 + rng() % 8;
        std::vector<double> truth(len), pred(len);
        for (auto& t : truth) t = double(rng() % 6);
        for (auto& p : pred) p = double(rng() % 5) / 4.0;  // coarse grid: many ties
        std::size_t k = 1 + rng() % 10;
        double thr = 1.0 + double(rng() % 5);
        auto got = rank_metrics(truth, pred, k, thr);
        auto want = reference_metrics(truth, pred, k, thr);
        CHECK(got.precision == want.precision);
        CHECK(got.ndcg == want.ndcg);
        CHECK(got.map == want.map);
        CHECK(got.truncated == want.truncated);
    }
    // all orderings of a fixed length-4 instance
    std::vector<double> pred{0.1, 0.2, 0.3, 0.4};
    std::sort(pred.begin(), pred.end());
    do {
        auto got = rank_metrics({5, 2, 4, 1}, pred, 3, 4.0);
        auto want = reference_metrics({5, 2, 4, 1}, pred, 3, 4.0);
        CHECK(got.ndcg == want.ndcg);
        CHECK(got.map == want.map);
    } while (std::next_permutation(pred.begin(), pred.end()));
}

TEST_CASE("relevance cutoff scales with the rating ceiling") {
    CHECK(default_relevance_threshold(5.0) == 4.0);
    CHECK(default_relevance_threshold(10.0) == 8.0);
    CHECK(default_relevance_threshold(4.0) == 4.0);
}

TEST_CASE("popularity scores normalize interaction counts") {
    RatingGraph g;
    g.add_user("a", {});
    g.add_user("b", {});
    g.add_user("c", {});
    g.add_user("d", {});
    g.add_item("x", {});
    g.add_item("y", {});
    g.set_rating(0, 0, 3);
    g.set_rating(1, 0, 4);
    g.set_rating(0, 1, 5);
    g.set_rating(1, 1, 2);
    g.set_rating(2, 1, 1);
    g.set_rating(3, 1, 4);
    auto s = popularity_scores(g);
    CHECK(s == std::vector<double>{0.5, 1.0});

    RatingGraph one;
    one.add_user("a", {});
    one.add_item("x", {});
    one.set_rating(0, 0, 5);
    CHECK(popularity_scores(one) == std::vector<double>{1.0});
}

TEST_CASE("an oracle predictor earns perfect NDCG in every scenario") {
    RatingGraph g = eval_graph();
    Predictor oracle = [](const RatingGraph&, const PredictionContext& ctx) {
        std::vector<double> out(ctx.n() * ctx.m());
        for (std::size_t c = 0; c < out.size(); ++c)
            out[c] = ctx.has_truth[c] ? ctx.truth[c] : 0.0;
        return out;
    };
    for (Scenario sc : {Scenario::UC, Scenario::IC, Scenario::UIC, Scenario::WARM}) {
        auto split = make_split(g, sc, {0.5, 0.0}, 5);
        EvalOptions opt;
        opt.n = 6;
        opt.m = 6;
        opt.n_contexts = 8;
        opt.seed = 17;
        auto rep = evaluate(oracle, g, split, opt);
        REQUIRE(rep.contexts > 0);
        for (const auto& st : rep.ndcg) CHECK(st.mean == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("evaluation is reproducible from its seed") {
    RatingGraph g = eval_graph();
    auto split = make_split(g, Scenario::UC, {0.5, 0.0}, 5);
    auto pop = popularity_predictor(g);
    EvalOptions opt;
    opt.n = 6;
    opt.m = 6;
    opt.n_contexts = 10;
    opt.seed = 23;
    auto a = evaluate(pop, g, split, opt);
    auto b = evaluate(pop, g, split, opt);
    REQUIRE(a.ks == b.ks);
    for (std::size_t i = 0; i < a.ks.size(); ++i) {
        CHECK(a.ndcg[i].mean == b.ndcg[i].mean);
        CHECK(a.ndcg[i].stddev == b.ndcg[i].stddev);
        CHECK(a.precision[i].mean == b.precision[i].mean);
        CHECK(a.map[i].mean == b.map[i].mean);
    }
    opt.seed = 24;
    auto c = evaluate(pop, g, split, opt);
    bool differs = false;
    for (std::size_t i = 0; i < a.ks.size(); ++i) differs |= a.ndcg[i].mean != c.ndcg[i].mean;
    CHECK(differs);
}

TEST_CASE("report formatting lists one row per cutoff") {
    EvalReport rep;
    rep.ks = {5, 10};
    rep.precision = {{0.5, 0.1}, {0.4, 0.1}};
    rep.ndcg = {{0.8, 0.05}, {0.75, 0.05}};
    rep.map = {{0.3, 0.2}, {0.25, 0.2}};
    rep.contexts = 50;
    auto text = report_table(rep, "model");
    CHECK(text.find("model") != std::string::npos);
    CHECK(text.find("5") != std::string::npos);
    CHECK(text.find("10") != std::string::npos);

    auto path = (std::filesystem::temp_directory_path() / "hire_test_eval.csv").string();
    write_report_csv(path, {{"model", rep}});
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header.find("model") != std::string::npos);
    CHECK(header.find("ndcg") != std::string::npos);
    std::string row;
    std::getline(is, row);
    CHECK(row.substr(0, 6) == "model,");
}
