#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "hire/trainer.hpp"

using namespace hire;

namespace {

PredictionContext toy_context(std::vector<double> truth, std::vector<bool> query,
                              std::size_t n, std::size_t m) {
    PredictionContext ctx;
    ctx.user_ids.resize(n);
    ctx.item_ids.resize(m);
    ctx.state.assign(n * m, RatingState::MaskedTarget);
    ctx.truth = std::move(truth);
    ctx.has_truth.assign(n * m, true);
    ctx.support_mask.assign(n * m, false);
    ctx.query_mask = std::move(query);
    return ctx;
}

RatingGraph train_graph() {
    RatingGraph g;
    g.user_slots.resize(1);
    g.item_slots.resize(1);
    for (int u = 0; u < 6; ++u)
        g.add_user("u" + std::to_string(u), {g.user_slots[0].intern(std::to_string(u % 2))});
    for (int i = 0; i < 6; ++i)
        g.add_item("i" + std::to_string(i), {g.item_slots[0].intern(std::to_string(i % 3))});
    for (int u = 0; u < 6; ++u)
        for (int i = 0; i < 6; ++i)
            // rank-1-ish pattern: easy to overfit
            g.set_rating(u, i, 1.0 + ((u % 2) * 2 + (i % 3)));
    return g;
}

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.head_dim = 4;
    cfg.feat_dim = 4;
    return cfg;
}

}  // namespace

TEST_CASE("masked loss averages squared error over query cells only") {
    auto exact = toy_context({2, 3, 4, 5}, {true, true, true, true}, 2, 2);
    Tensord pred = Tensord::from({2, 2}, {2, 3, 4, 5});
    CHECK(masked_mse(pred, exact).item() == 0.0);

    auto one = toy_context({2, 3, 4, 5}, {false, true, false, false}, 2, 2);
    Tensord off = Tensord::from({2, 2}, {9, 5, 9, 9});  // error 2 on the only query cell
    CHECK(masked_mse(off, one).item() == doctest::Approx(4.0));

    auto two = toy_context({1, 1, 1, 1}, {true, false, false, true}, 2, 2);
    Tensord p2 = Tensord::from({2, 2}, {2, 7, 7, 4});  // errors 1 and 3
    CHECK(masked_mse(p2, two).item() == doctest::Approx(5.0));

    auto none = toy_context({1, 1, 1, 1}, {false, false, false, false}, 2, 2);
    CHECK_THROWS_AS(masked_mse(p2, none), std::invalid_argument);
}

TEST_CASE("masked loss gradient is zero outside query cells") {
    auto ctx = toy_context({1, 2, 3, 4}, {true, false, true, false}, 2, 2);
    Tensord pred = Tensord::from({2, 2}, {3, 3, 3, 3}, true);
    masked_mse(pred, ctx).backward();
    const auto& grad = pred.grad();
    CHECK(grad[0] == doctest::Approx(2.0 / 2 * (3 - 1)));
    CHECK(grad[1] == 0.0);
    CHECK(grad[2] == doctest::Approx(2.0 / 2 * (3 - 3)));
    CHECK(grad[3] == 0.0);
}

TEST_CASE("learning rate stays flat then decays along a cosine to zero") {
    OptimizerConfig cfg;
    cfg.base_lr = 1e-3;
    cfg.total_steps = 1000;
    CHECK(lr_at(0, cfg) == 1e-3);
    CHECK(lr_at(350, cfg) == 1e-3);
    CHECK(lr_at(700, cfg) == 1e-3);
    CHECK(lr_at(850, cfg) == doctest::Approx(1e-3 * 0.5).epsilon(1e-12));
    CHECK(lr_at(1000, cfg) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lr_at(701, cfg) < 1e-3);
    // monotone decrease past the flat region
    for (std::size_t s = 701; s < 1000; ++s) CHECK(lr_at(s + 1, cfg) < lr_at(s, cfg));
}

TEST_CASE("gradient clipping rescales to the target global norm") {
    Tensord a = Tensord::from({2}, {0, 0}, true);
    Tensord b = Tensord::from({2}, {0, 0}, true);
    a.mutable_grad() = {6, 0};
    b.mutable_grad() = {0, 8};  // global norm 10
    double pre = clip_global_norm<double>({&a, &b}, 1.0);
    CHECK(pre == doctest::Approx(10.0));
    double post = std::sqrt(a.grad()[0] * a.grad()[0] + b.grad()[1] * b.grad()[1]);
    CHECK(post == doctest::Approx(1.0));

    Tensord c = Tensord::from({1}, {0}, true);
    c.mutable_grad() = {0.5};
    clip_global_norm<double>({&c}, 1.0);  // under the cap: untouched
    CHECK(c.grad()[0] == 0.5);
}

TEST_CASE("optimizer leaves weights alone on a zero gradient") {
    Tensord w = Tensord::from({2}, {1.5, -2.0}, true);
    OptimizerConfig cfg;
    LambOptimizer<double> opt({&w}, cfg);
    w.zero_grad();
    opt.step(0.1);
    CHECK(w.at(0) == 1.5);
    CHECK(w.at(1) == -2.0);
}

TEST_CASE("optimizer minimizes a quadratic bowl") {
    Tensord w = Tensord::from({1}, {0.5}, true);
    OptimizerConfig cfg;
    LambOptimizer<double> opt({&w}, cfg);
    for (int s = 0; s < 500; ++s) {
        w.zero_grad();
        auto loss = mul(sub(w, Tensord::from({1}, {3.0})), sub(w, Tensord::from({1}, {3.0})));
        loss.backward();
        opt.step(0.05);
    }
    CHECK(w.at(0) == doctest::Approx(3.0).epsilon(1e-2));
}

TEST_CASE("optimizer rejects non-finite gradients") {
    Tensord w = Tensord::from({1}, {1.0}, true);
    OptimizerConfig cfg;
    LambOptimizer<double> opt({&w}, cfg);
    w.mutable_grad() = {std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS(opt.step(0.1));
}

TEST_CASE("slow weights interpolate toward fast weights at the sync period") {
    Tensord w = Tensord::from({1}, {0.0}, true);

    SUBCASE("syncs only at multiples of the period") {
        Lookahead<double> look({&w}, 0.5, 6);
        for (std::size_t step = 1; step <= 12; ++step) {
            w.mutable_data()[0] = double(step);
            bool synced = look.maybe_sync(step);
            CHECK(synced == (step % 6 == 0));
        }
        // after step 6: slow = 3, fast reset to 3; after step 12: slow = 0.5*(3+12)=7.5
        CHECK(w.at(0) == doctest::Approx(7.5));
    }
    SUBCASE("alpha one jumps fully to fast weights") {
        Lookahead<double> look({&w}, 1.0, 2);
        w.mutable_data()[0] = 4.0;
        look.maybe_sync(2);
        CHECK(w.at(0) == 4.0);
    }
    SUBCASE("alpha zero resets fast weights to the slow copy") {
        Lookahead<double> look({&w}, 0.0, 2);
        w.mutable_data()[0] = 4.0;
        look.maybe_sync(2);
        CHECK(w.at(0) == 0.0);
    }
}

TEST_CASE("training a tiny model drives the loss down and is deterministic") {
    RatingGraph g = train_graph();
    OptimizerConfig cfg;
    cfg.total_steps = 200;
    cfg.batch_size = 2;
    cfg.base_lr = 5e-3;
    cfg.seed = 7;
    TrainOptions opt;
    opt.n = 4;
    opt.m = 4;
    opt.p_support = 0.3;
    opt.stop_on_convergence = false;

    Rng r1(1);
    auto m1 = HireModel<double>::init(g, tiny_cfg(), r1);
    auto res1 = train(m1, g, cfg, opt);
    REQUIRE(res1.trace.size() == 200);
    CHECK(!res1.diverged);
    CHECK(res1.trace.front().step == 1);
    CHECK(res1.trace.front().lr == cfg.base_lr);

    double head = 0, tail = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        head += res1.trace[i].loss;
        tail += res1.trace[180 + i].loss;
    }
    CHECK(tail < head);

    Rng r2(1);
    auto m2 = HireModel<double>::init(g, tiny_cfg(), r2);
    auto res2 = train(m2, g, cfg, opt);
    for (std::size_t i = 0; i < res1.trace.size(); ++i) {
        CHECK(res1.trace[i].loss == res2.trace[i].loss);
        CHECK(res1.trace[i].lr == res2.trace[i].lr);
    }
    auto p1 = m1.parameters(), p2 = m2.parameters();
    for (std::size_t i = 0; i < p1.size(); ++i)
        for (std::size_t j = 0; j < p1[i]->size(); ++j)
            CHECK(p1[i]->at(j) == p2[i]->at(j));
}

TEST_CASE("worker count does not change the training trajectory") {
    RatingGraph g = train_graph();
    OptimizerConfig cfg;
    cfg.total_steps = 10;
    cfg.batch_size = 4;
    cfg.seed = 3;
    TrainOptions opt;
    opt.n = 4;
    opt.m = 4;
    opt.p_support = 0.3;
    opt.stop_on_convergence = false;

    Rng r1(2);
    auto m1 = HireModel<double>::init(g, tiny_cfg(), r1);
    auto res1 = train(m1, g, cfg, opt);
    opt.workers = 4;
    Rng r2(2);
    auto m2 = HireModel<double>::init(g, tiny_cfg(), r2);
    auto res2 = train(m2, g, cfg, opt);
    REQUIRE(res1.trace.size() == res2.trace.size());
    for (std::size_t i = 0; i < res1.trace.size(); ++i)
        CHECK(res1.trace[i].loss == doctest::Approx(res2.trace[i].loss).epsilon(1e-12));
}

TEST_CASE("optimizer and slow-weight state round-trip through streams") {
    RatingGraph g = train_graph();
    OptimizerConfig cfg;
    cfg.total_steps = 20;
    cfg.batch_size = 2;
    cfg.seed = 5;
    TrainOptions opt;
    opt.n = 4;
    opt.m = 4;
    opt.p_support = 0.3;
    opt.stop_on_convergence = false;

    // reference: one uninterrupted 20-step run
    Rng r1(4);
    auto ref = HireModel<double>::init(g, tiny_cfg(), r1);
    auto params_ref = ref.parameters();
    LambOptimizer<double> opt_ref(params_ref, cfg);
    Lookahead<double> look_ref(params_ref, cfg.lookahead_alpha, cfg.lookahead_k);
    train(ref, g, cfg, opt, &opt_ref, &look_ref);

    // same run but with optimizer state serialized and restored mid-way;
    // the sampling stream restarts with the run, so split at the seed reset
    Rng r2(4);
    auto m = HireModel<double>::init(g, tiny_cfg(), r2);
    auto params = m.parameters();
    LambOptimizer<double> opt_a(params, cfg);
    Lookahead<double> look_a(params, cfg.lookahead_alpha, cfg.lookahead_k);
    train(m, g, cfg, opt, &opt_a, &look_a);

    std::stringstream so, sl;
    opt_a.save_state(so);
    look_a.save_state(sl);
    LambOptimizer<double> opt_b(params, cfg);
    Lookahead<double> look_b(params, cfg.lookahead_alpha, cfg.lookahead_k);
    opt_b.load_state(so);
    look_b.load_state(sl);

    // both copies now take the same extra run; trajectories must agree
    OptimizerConfig cfg2 = cfg;
    cfg2.seed = 11;
    auto ref2 = detail::clone_params(ref);
    auto params_ref2 = ref2.parameters();
    LambOptimizer<double> opt_ref2(params_ref2, cfg2);
    std::stringstream so2, sl2;
    opt_ref.save_state(so2);
    look_ref.save_state(sl2);
    opt_ref2.load_state(so2);
    Lookahead<double> look_ref2(params_ref2, cfg2.lookahead_alpha, cfg2.lookahead_k);
    look_ref2.load_state(sl2);
    auto res_ref = train(ref2, g, cfg2, opt, &opt_ref2, &look_ref2);
    auto res_m = train(m, g, cfg2, opt, &opt_b, &look_b);
    REQUIRE(res_ref.trace.size() == res_m.trace.size());
    for (std::size_t i = 0; i < res_ref.trace.size(); ++i)
        CHECK(res_ref.trace[i].loss == res_m.trace[i].loss);
}

TEST_CASE("trace files list step, learning rate, and loss") {
    std::vector<TracePoint> trace{{1, 1e-3, 2.5}, {2, 1e-3, 2.25}};
    auto path = (std::filesystem::temp_directory_path() / "hire_test_trace.csv").string();
    write_trace_csv(path, trace);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "step,lr,loss");
    std::getline(is, line);
    CHECK(line.substr(0, 2) == "1,");
    std::getline(is, line);
    CHECK(line.substr(0, 2) == "2,");
}
