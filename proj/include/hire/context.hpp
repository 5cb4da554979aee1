#pragma once

// Prediction contexts: an n x m block of users and items with a three-state
// rating matrix and support/query masks.

#include <cstdint>
#include <vector>

#include "hire/common.hpp"
#include "hire/rating_graph.hpp"

namespace hire {

enum class RatingState : std::uint8_t { Unobserved, Observed, MaskedTarget };

struct PredictionContext {
    std::vector<EntityId> user_ids, item_ids;
    // Row-major n x m
    std::vector<RatingState> state;
    std::vector<double> truth;      // valid where has_truth
    std::vector<bool> has_truth;
    std::vector<bool> support_mask, query_mask;

    std::size_t n() const { return user_ids.size(); }
    std::size_t m() const { return item_ids.size(); }
    std::size_t idx(std::size_t k, std::size_t j) const { return k * m() + j; }

    RatingState state_at(std::size_t k, std::size_t j) const { return state[idx(k, j)]; }
    double truth_at(std::size_t k, std::size_t j) const { return truth[idx(k, j)]; }
};

enum class SamplerKind { Neighborhood, Random, FeatSim };

SamplerKind parse_sampler(const std::string& s);
std::string sampler_name(SamplerKind k);

// Hop-by-hop neighborhood sampling from the seed pairs over the bipartite
// graph; frontier overflow is resolved by a uniform subset, and budget left
// unreachable from the seeds is filled uniformly from the whole graph.
// Every cell with a ground-truth rating starts Observed; call assign_masks
// (training) or apply split flags (evaluation) to mask targets.
PredictionContext sample_neighborhood(const RatingGraph& g,
                                      const std::vector<std::pair<EntityId, EntityId>>& seeds,
                                      std::size_t n, std::size_t m, Rng& rng);

PredictionContext sample_random(const RatingGraph& g,
                                const std::vector<std::pair<EntityId, EntityId>>& seeds,
                                std::size_t n, std::size_t m, Rng& rng);

// Ranks non-seed entities by cosine similarity of attribute one-hot vectors
// to the first seed entity of the same kind; ties broken by ascending id.
PredictionContext sample_featsim(const RatingGraph& g,
                                 const std::vector<std::pair<EntityId, EntityId>>& seeds,
                                 std::size_t n, std::size_t m, Rng& rng);

PredictionContext sample_context(SamplerKind kind, const RatingGraph& g,
                                 const std::vector<std::pair<EntityId, EntityId>>& seeds,
                                 std::size_t n, std::size_t m, Rng& rng);

// Bernoulli support/query split over cells holding ground truth: support
// with probability p_support, otherwise query (presented as MaskedTarget).
void assign_masks(PredictionContext& ctx, double p_support, Rng& rng);

}  // namespace hire
