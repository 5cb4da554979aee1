#pragma once

// Shared per-slot encoders mapping categorical attributes and rating states
// into the initial context tensor H. Every entity goes through the same slot
// maps; a cell of H is [user block || item block || rating block].

#include <cmath>
#include <cstddef>
#include <vector>

#include "hire/context.hpp"
#include "hire/rating_graph.hpp"
#include "hire/tensor.hpp"

namespace hire {

template <class T>
struct EncoderParams {
    // One affine map per attribute slot: weights vocab x f, bias f.
    std::vector<Tensor<T>> user_w, user_b;
    std::vector<Tensor<T>> item_w, item_b;
    // Rating map has no bias: a masked-target cell embeds to exactly zero.
    // Rows 0..levels-1 are the integer rating bins, row `levels` is the
    // learned placeholder for cells with no rating at all.
    Tensor<T> rating_w;
    std::size_t f = 0;
    std::size_t rating_levels = 0;

    static EncoderParams init(const RatingGraph& g, std::size_t f, Rng& rng) {
        EncoderParams p;
        p.f = f;
        p.rating_levels = static_cast<std::size_t>(std::lround(g.r_max));
        if (p.rating_levels == 0) p.rating_levels = 1;
        for (const auto& slot : g.user_slots) {
            p.user_w.push_back(Tensor<T>::param({std::max<std::size_t>(slot.cardinality(), 1), f}, rng));
            p.user_b.push_back(Tensor<T>::param({f}, rng));
        }
        for (const auto& slot : g.item_slots) {
            p.item_w.push_back(Tensor<T>::param({std::max<std::size_t>(slot.cardinality(), 1), f}, rng));
            p.item_b.push_back(Tensor<T>::param({f}, rng));
        }
        p.rating_w = Tensor<T>::param({p.rating_levels + 1, f}, rng);
        return p;
    }

    std::size_t h_u() const { return user_w.size(); }
    std::size_t h_i() const { return item_w.size(); }
    std::size_t h() const { return h_u() + h_i() + 1; }
    std::size_t e() const { return h() * f; }

    std::vector<Tensor<T>*> parameters() {
        std::vector<Tensor<T>*> out;
        for (std::size_t s = 0; s < user_w.size(); ++s) {
            out.push_back(&user_w[s]);
            out.push_back(&user_b[s]);
        }
        for (std::size_t s = 0; s < item_w.size(); ++s) {
            out.push_back(&item_w[s]);
            out.push_back(&item_b[s]);
        }
        out.push_back(&rating_w);
        return out;
    }

    // Row of rating_w feeding a cell; -1 selects the all-zero block.
    std::ptrdiff_t rating_row(RatingState st, double truth) const {
        switch (st) {
            case RatingState::MaskedTarget: return -1;
            case RatingState::Unobserved: return static_cast<std::ptrdiff_t>(rating_levels);
            case RatingState::Observed: {
                long bin = std::lround(truth);
                if (bin < 1) bin = 1;
                if (bin > static_cast<long>(rating_levels)) bin = static_cast<long>(rating_levels);
                return bin - 1;
            }
        }
        return -1;
    }
};

namespace detail {

template <class T>
Tensor<T> encode_entities(const std::vector<Tensor<T>>& slot_w, const std::vector<Tensor<T>>& slot_b,
                          const std::vector<std::vector<std::uint32_t>>& attrs,
                          const std::vector<EntityId>& ids) {
    std::vector<Tensor<T>> blocks;
    for (std::size_t s = 0; s < slot_w.size(); ++s) {
        std::vector<std::ptrdiff_t> rows;
        rows.reserve(ids.size());
        for (EntityId ent : ids) {
            if (ent >= attrs.size() || s >= attrs[ent].size())
                throw shape_error("encode: entity missing attribute slot");
            std::uint32_t cat = attrs[ent][s];
            if (cat >= slot_w[s].dim(0))
                throw shape_error("encode: category index out of range");
            rows.push_back(static_cast<std::ptrdiff_t>(cat));
        }
        blocks.push_back(add_rowvec(take_rows(slot_w[s], rows), slot_b[s]));
    }
    return concat_last(blocks);
}

}  // namespace detail

// All user (item) embeddings of a context at once: Tensor[count x h_u*f].
template <class T>
Tensor<T> encode_users(const EncoderParams<T>& enc, const RatingGraph& g,
                       const std::vector<EntityId>& ids) {
    return detail::encode_entities(enc.user_w, enc.user_b, g.user_attrs, ids);
}

template <class T>
Tensor<T> encode_items(const EncoderParams<T>& enc, const RatingGraph& g,
                       const std::vector<EntityId>& ids) {
    return detail::encode_entities(enc.item_w, enc.item_b, g.item_attrs, ids);
}

template <class T>
Tensor<T> encode_user(const EncoderParams<T>& enc, const RatingGraph& g, EntityId u) {
    return reshape(encode_users(enc, g, {u}), {enc.h_u() * enc.f});
}

template <class T>
Tensor<T> encode_item(const EncoderParams<T>& enc, const RatingGraph& g, EntityId i) {
    return reshape(encode_items(enc, g, {i}), {enc.h_i() * enc.f});
}

// Initial context tensor, Tensor[n x m x e], cell (k,j) =
// [user_k block || item_j block || rating-state block].
template <class T>
Tensor<T> build_context_tensor(const EncoderParams<T>& enc, const RatingGraph& g,
                               const PredictionContext& ctx) {
    std::size_t n = ctx.n(), m = ctx.m();
    Tensor<T> users = encode_users(enc, g, ctx.user_ids);
    Tensor<T> items = encode_items(enc, g, ctx.item_ids);
    std::vector<std::ptrdiff_t> cell_user(n * m), cell_item(n * m), cell_rating(n * m);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < m; ++j) {
            std::size_t c = ctx.idx(k, j);
            cell_user[c] = static_cast<std::ptrdiff_t>(k);
            cell_item[c] = static_cast<std::ptrdiff_t>(j);
            cell_rating[c] = enc.rating_row(ctx.state[c], ctx.truth[c]);
        }
    Tensor<T> h = concat_last<T>({take_rows(users, cell_user), take_rows(items, cell_item),
                                  take_rows(enc.rating_w, cell_rating)});
    return reshape(h, {n, m, enc.e()});
}

}  // namespace hire
