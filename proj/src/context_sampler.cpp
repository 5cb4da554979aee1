#include "hire/context.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace hire {

SamplerKind parse_sampler(const std::string& s) {
    if (s == "neighborhood") return SamplerKind::Neighborhood;
    if (s == "random") return SamplerKind::Random;
    if (s == "featsim") return SamplerKind::FeatSim;
    throw std::invalid_argument("unknown sampler: " + s);
}

std::string sampler_name(SamplerKind k) {
    switch (k) {
        case SamplerKind::Neighborhood: return "neighborhood";
        case SamplerKind::Random: return "random";
        case SamplerKind::FeatSim: return "featsim";
    }
    return "?";
}

namespace {

struct Picker {
    std::vector<EntityId> chosen;
    std::unordered_set<EntityId> in;
    std::size_t budget;

    explicit Picker(std::size_t budget) : budget(budget) {}
    bool full() const { return chosen.size() >= budget; }
    std::size_t remaining() const { return budget - chosen.size(); }
    bool add(EntityId e) {
        if (full() || in.count(e)) return false;
        in.insert(e);
        chosen.push_back(e);
        return true;
    }
};

// Add a frontier to the picker: all of it when it fits the remaining budget,
// otherwise a uniform subset. Candidates are deduplicated and sorted so the
// draw depends only on the rng state.
void add_frontier(Picker& p, std::vector<EntityId> candidates, Rng& rng) {
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::erase_if(candidates, [&](EntityId e) { return p.in.count(e) > 0; });
    if (candidates.size() <= p.remaining()) {
        for (EntityId e : candidates) p.add(e);
    } else {
        for (std::size_t k : sample_without_replacement(rng, candidates.size(), p.remaining()))
            p.add(candidates[k]);
    }
}

void fill_uniform(Picker& p, std::size_t population, Rng& rng) {
    if (p.full()) return;
    std::vector<EntityId> rest;
    for (EntityId e = 0; e < population; ++e)
        if (!p.in.count(e)) rest.push_back(e);
    add_frontier(p, std::move(rest), rng);
}

PredictionContext finish(const RatingGraph& g, Picker& users, Picker& items) {
    PredictionContext ctx;
    ctx.user_ids = users.chosen;
    ctx.item_ids = items.chosen;
    std::size_t n = ctx.user_ids.size(), m = ctx.item_ids.size();
    ctx.state.assign(n * m, RatingState::Unobserved);
    ctx.truth.assign(n * m, 0.0);
    ctx.has_truth.assign(n * m, false);
    ctx.support_mask.assign(n * m, false);
    ctx.query_mask.assign(n * m, false);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < m; ++j)
            if (auto r = g.rating(ctx.user_ids[k], ctx.item_ids[j])) {
                std::size_t c = ctx.idx(k, j);
                ctx.state[c] = RatingState::Observed;
                ctx.truth[c] = *r;
                ctx.has_truth[c] = true;
            }
    return ctx;
}

void seed_pickers(const RatingGraph& g, const std::vector<std::pair<EntityId, EntityId>>& seeds,
                  std::size_t n, std::size_t m, Picker& users, Picker& items) {
    if (seeds.empty()) throw std::invalid_argument("sampler: empty seed set");
    if (g.user_count() == 0 || g.item_count() == 0)
        throw std::invalid_argument("sampler: empty graph");
    for (auto [u, i] : seeds) {
        if (u >= g.user_count() || i >= g.item_count())
            throw std::invalid_argument("sampler: seed entity outside graph");
        // add() refuses once the budget is full; a refused new entity means
        // the seed set itself does not fit the requested context
        if (!users.add(u) && !users.in.count(u))
            throw std::invalid_argument("sampler: seeds exceed context budget");
        if (!items.add(i) && !items.in.count(i))
            throw std::invalid_argument("sampler: seeds exceed context budget");
    }
    (void)n;
    (void)m;
}

}  // namespace

PredictionContext sample_neighborhood(const RatingGraph& g,
                                      const std::vector<std::pair<EntityId, EntityId>>& seeds,
                                      std::size_t n, std::size_t m, Rng& rng) {
    Picker users(n), items(m);
    seed_pickers(g, seeds, n, m, users, items);
    // Hop-by-hop expansion; users reached via the items selected so far and
    // vice versa. Stops when both budgets are full or a round adds nothing.
    std::size_t user_hop_start = 0, item_hop_start = 0;
    while (!users.full() || !items.full()) {
        std::size_t before_u = users.chosen.size(), before_i = items.chosen.size();
        if (!users.full()) {
            std::vector<EntityId> frontier;
            for (std::size_t k = 0; k < before_i; ++k)
                for (EntityId u : g.item_adj[items.chosen[k]]) frontier.push_back(u);
            add_frontier(users, std::move(frontier), rng);
        }
        if (!items.full()) {
            std::vector<EntityId> frontier;
            for (std::size_t k = 0; k < users.chosen.size(); ++k)
                for (EntityId i : g.user_adj[users.chosen[k]]) frontier.push_back(i);
            add_frontier(items, std::move(frontier), rng);
        }
        if (users.chosen.size() == before_u && items.chosen.size() == before_i) break;
        user_hop_start = before_u;
        item_hop_start = before_i;
    }
    (void)user_hop_start;
    (void)item_hop_start;
    // Reachable component exhausted below budget: uniform fill.
    fill_uniform(users, g.user_count(), rng);
    fill_uniform(items, g.item_count(), rng);
    return finish(g, users, items);
}

PredictionContext sample_random(const RatingGraph& g,
                                const std::vector<std::pair<EntityId, EntityId>>& seeds,
                                std::size_t n, std::size_t m, Rng& rng) {
    Picker users(n), items(m);
    seed_pickers(g, seeds, n, m, users, items);
    fill_uniform(users, g.user_count(), rng);
    fill_uniform(items, g.item_count(), rng);
    return finish(g, users, items);
}

namespace {

double attr_cosine(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    if (a.empty() || a.size() != b.size()) return 0.0;
    // One-hot blocks per slot: dot = number of matching slots, norms = sqrt(#slots).
    std::size_t match = 0;
    for (std::size_t s = 0; s < a.size(); ++s)
        if (a[s] == b[s]) ++match;
    return static_cast<double>(match) / static_cast<double>(a.size());
}

void fill_by_similarity(Picker& p, const std::vector<std::vector<std::uint32_t>>& attrs,
                        EntityId anchor) {
    if (p.full()) return;
    std::vector<std::pair<double, EntityId>> scored;
    for (EntityId e = 0; e < attrs.size(); ++e)
        if (!p.in.count(e)) scored.emplace_back(attr_cosine(attrs[anchor], attrs[e]), e);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;  // ties by ascending entity id
    });
    for (const auto& [score, e] : scored) {
        if (p.full()) break;
        p.add(e);
    }
}

}  // namespace

PredictionContext sample_featsim(const RatingGraph& g,
                                 const std::vector<std::pair<EntityId, EntityId>>& seeds,
                                 std::size_t n, std::size_t m, Rng& rng) {
    Picker users(n), items(m);
    seed_pickers(g, seeds, n, m, users, items);
    fill_by_similarity(users, g.user_attrs, seeds.front().first);
    fill_by_similarity(items, g.item_attrs, seeds.front().second);
    // Attribute-less graphs may leave slack; fall back to uniform.
    fill_uniform(users, g.user_count(), rng);
    fill_uniform(items, g.item_count(), rng);
    return finish(g, users, items);
}

PredictionContext sample_context(SamplerKind kind, const RatingGraph& g,
                                 const std::vector<std::pair<EntityId, EntityId>>& seeds,
                                 std::size_t n, std::size_t m, Rng& rng) {
    switch (kind) {
        case SamplerKind::Neighborhood: return sample_neighborhood(g, seeds, n, m, rng);
        case SamplerKind::Random: return sample_random(g, seeds, n, m, rng);
        case SamplerKind::FeatSim: return sample_featsim(g, seeds, n, m, rng);
    }
    throw std::logic_error("unreachable");
}

void assign_masks(PredictionContext& ctx, double p_support, Rng& rng) {
    if (p_support < 0.0 || p_support > 1.0)
        throw std::invalid_argument("assign_masks: p_support outside [0,1]");
    for (std::size_t c = 0; c < ctx.state.size(); ++c) {
        if (!ctx.has_truth[c]) {
            ctx.state[c] = RatingState::Unobserved;
            ctx.support_mask[c] = ctx.query_mask[c] = false;
            continue;
        }
        bool support = rand_real(rng) < p_support;
        ctx.support_mask[c] = support;
        ctx.query_mask[c] = !support;
        ctx.state[c] = support ? RatingState::Observed : RatingState::MaskedTarget;
    }
}

}  // namespace hire
