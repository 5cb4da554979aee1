#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hire/embedding.hpp"

using namespace hire;

namespace {

// Two attribute slots per side, ratings on a 1..5 scale.
RatingGraph two_slot_graph() {
    RatingGraph g;
    g.user_slots.resize(2);
    g.item_slots.resize(2);
    auto ua = [&](const std::string& a, const std::string& b) {
        return std::vector<std::uint32_t>{g.user_slots[0].intern(a), g.user_slots[1].intern(b)};
    };
    auto ia = [&](const std::string& a, const std::string& b) {
        return std::vector<std::uint32_t>{g.item_slots[0].intern(a), g.item_slots[1].intern(b)};
    };
    g.add_user("u1", ua("young", "artist"));
    g.add_user("u2", ua("old", "teacher"));
    g.add_item("i1", ia("drama", "long"));
    g.add_item("i2", ia("comedy", "long"));
    g.set_rating(1, 0, 4);  // u2-i1 observed
    g.set_rating(1, 1, 5);  // u2-i2 observed
    return g;
}

// 2x2 context over the whole graph with the masking pattern: (u1,i2) is the
// target, (u1,i1) has no rating at all.
PredictionContext example_context(const RatingGraph& g) {
    PredictionContext ctx;
    ctx.user_ids = {0, 1};
    ctx.item_ids = {0, 1};
    ctx.state = {RatingState::Unobserved, RatingState::MaskedTarget, RatingState::Observed,
                 RatingState::Observed};
    ctx.truth = {0, 5, 4, 5};
    ctx.has_truth = {false, true, true, true};
    ctx.support_mask = {false, false, true, true};
    ctx.query_mask = {false, true, false, false};
    return ctx;
}

}  // namespace

TEST_CASE("encoder dimensions follow the slot counts") {
    RatingGraph g = two_slot_graph();
    Rng rng(1);
    auto enc = EncoderParams<double>::init(g, 16, rng);
    CHECK(enc.h_u() == 2);
    CHECK(enc.h_i() == 2);
    CHECK(enc.h() == 5);
    CHECK(enc.e() == 80);
    CHECK(enc.rating_levels == 5);
    CHECK(enc.rating_w.shape() == Shape{6, 16});  // 5 bins + placeholder row
    CHECK(encode_user(enc, g, 0).shape() == Shape{32});
    CHECK(encode_item(enc, g, 1).shape() == Shape{32});
}

TEST_CASE("a 2x2 context with 2+2 attribute slots embeds as 2x2x80") {
    RatingGraph g = two_slot_graph();
    Rng rng(2);
    auto enc = EncoderParams<double>::init(g, 16, rng);
    auto h = build_context_tensor(enc, g, example_context(g));
    CHECK(h.shape() == Shape{2, 2, 80});
}

TEST_CASE("zero weights give zero embeddings") {
    RatingGraph g = two_slot_graph();
    Rng rng(3);
    auto enc = EncoderParams<double>::init(g, 4, rng);
    for (auto* p : enc.parameters())
        for (double& v : p->mutable_data()) v = 0.0;
    auto x = encode_user(enc, g, 1);
    for (double v : x.data()) CHECK(v == 0.0);
}

TEST_CASE("a one-hot slot selects its weight row plus the slot bias") {
    RatingGraph g = two_slot_graph();
    Rng rng(4);
    auto enc = EncoderParams<double>::init(g, 4, rng);
    auto x = encode_user(enc, g, 1);  // u2: categories (1, 1)
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(x.at(j) == doctest::Approx(enc.user_w[0].at2(1, j) + enc.user_b[0].at(j)));
        CHECK(x.at(4 + j) == doctest::Approx(enc.user_w[1].at2(1, j) + enc.user_b[1].at(j)));
    }
    CHECK_THROWS_AS(encode_user(enc, g, 7), shape_error);
}

TEST_CASE("rating states select distinct rows of the rating table") {
    RatingGraph g = two_slot_graph();
    Rng rng(5);
    auto enc = EncoderParams<double>::init(g, 4, rng);
    CHECK(enc.rating_row(RatingState::Observed, 4.0) == 3);
    CHECK(enc.rating_row(RatingState::Observed, 1.0) == 0);
    CHECK(enc.rating_row(RatingState::Observed, 3.6) == 3);   // rounds to bin 4
    CHECK(enc.rating_row(RatingState::Observed, 17.0) == 4);  // clamped to top bin
    CHECK(enc.rating_row(RatingState::Unobserved, 0.0) == 5);
    CHECK(enc.rating_row(RatingState::MaskedTarget, 0.0) == -1);
}

TEST_CASE("the target cell carries an exactly zero rating block") {
    RatingGraph g = two_slot_graph();
    Rng rng(6);
    std::size_t f = 8;
    auto enc = EncoderParams<double>::init(g, f, rng);
    auto ctx = example_context(g);
    auto h = build_context_tensor(enc, g, ctx);
    std::size_t e = enc.e();
    auto rating_block = [&](std::size_t k, std::size_t j) {
        std::vector<double> out;
        for (std::size_t c = e - f; c < e; ++c) out.push_back(h.data()[(k * 2 + j) * e + c]);
        return out;
    };
    for (double v : rating_block(0, 1)) CHECK(v == 0.0);  // masked target
    // unobserved cell carries the learned placeholder row, not zero
    auto unobs = rating_block(0, 0);
    bool any_nonzero = false;
    for (std::size_t j = 0; j < f; ++j) {
        CHECK(unobs[j] == enc.rating_w.at2(5, j));
        any_nonzero |= unobs[j] != 0.0;
    }
    CHECK(any_nonzero);
    // observed cells carry their bin's row
    auto obs = rating_block(1, 0);
    for (std::size_t j = 0; j < f; ++j) CHECK(obs[j] == enc.rating_w.at2(3, j));
}

TEST_CASE("identical attributes and states give identical blocks") {
    RatingGraph g = two_slot_graph();
    // a third item that clones i1's attributes
    g.add_item("i3", {g.item_attrs[0][0], g.item_attrs[0][1]});
    Rng rng(7);
    auto enc = EncoderParams<double>::init(g, 4, rng);
    auto a = encode_item(enc, g, 0);
    auto b = encode_item(enc, g, 2);
    CHECK(a.data() == b.data());
}

TEST_CASE("user and item order only permutes rows and columns of the tensor") {
    RatingGraph g = two_slot_graph();
    Rng rng(8);
    auto enc = EncoderParams<double>::init(g, 4, rng);
    auto ctx = example_context(g);
    auto h = build_context_tensor(enc, g, ctx);

    PredictionContext swapped = ctx;
    std::swap(swapped.user_ids[0], swapped.user_ids[1]);
    for (std::size_t j = 0; j < 2; ++j) {
        std::swap(swapped.state[j], swapped.state[2 + j]);
        std::swap(swapped.truth[j], swapped.truth[2 + j]);
        // std::vector<bool> proxies: read then write
        bool t0 = swapped.has_truth[j], t1 = swapped.has_truth[2 + j];
        swapped.has_truth[j] = t1;
        swapped.has_truth[2 + j] = t0;
    }
    auto h2 = build_context_tensor(enc, g, swapped);
    std::size_t e = enc.e();
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t c = 0; c < e; ++c) {
            CHECK(h2.data()[(0 * 2 + j) * e + c] == h.data()[(1 * 2 + j) * e + c]);
            CHECK(h2.data()[(1 * 2 + j) * e + c] == h.data()[(0 * 2 + j) * e + c]);
        }
}

TEST_CASE("gradients flow through the whole embedding") {
    RatingGraph g = two_slot_graph();
    Rng rng(9);
    auto enc = EncoderParams<double>::init(g, 3, rng);
    auto ctx = example_context(g);
    double err = grad_check<double>(
        [&] {
            auto h = build_context_tensor(enc, g, ctx);
            return mean(mul(h, h));
        },
        enc.parameters(), 1e-6);
    CHECK(err < 1e-7);
}
