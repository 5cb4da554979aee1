#pragma once

// Bipartite user-item rating structure with per-entity categorical
// attributes, plus cold-start train/test splits.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hire/common.hpp"

namespace hire {

// Dense index of a user or item within a RatingGraph.
using EntityId = std::uint32_t;

struct AttributeVocab {
    std::string name;
    std::unordered_map<std::string, std::uint32_t> index;
    std::vector<std::string> values;

    std::uint32_t intern(const std::string& v) {
        auto it = index.find(v);
        if (it != index.end()) return it->second;
        std::uint32_t id = static_cast<std::uint32_t>(values.size());
        index.emplace(v, id);
        values.push_back(v);
        return id;
    }
    std::size_t cardinality() const { return values.size(); }
};

struct RatingGraph {
    std::vector<std::string> user_names, item_names;
    std::unordered_map<std::string, EntityId> user_index, item_index;
    // attrs[entity][slot] = category index into slot vocab
    std::vector<std::vector<std::uint32_t>> user_attrs, item_attrs;
    std::vector<AttributeVocab> user_slots, item_slots;
    double r_max = 5.0;

    std::unordered_map<std::uint64_t, double> ratings;  // key = user<<32 | item
    std::vector<std::vector<EntityId>> user_adj;        // items per user, insertion order
    std::vector<std::vector<EntityId>> item_adj;        // users per item

    static std::uint64_t key(EntityId u, EntityId i) {
        return (static_cast<std::uint64_t>(u) << 32) | i;
    }

    std::size_t user_count() const { return user_names.size(); }
    std::size_t item_count() const { return item_names.size(); }
    std::size_t rating_count() const { return ratings.size(); }

    EntityId add_user(const std::string& name, std::vector<std::uint32_t> attrs = {});
    EntityId add_item(const std::string& name, std::vector<std::uint32_t> attrs = {});
    // Returns true if the pair was new, false if overwritten.
    bool set_rating(EntityId u, EntityId i, double r);
    std::optional<double> rating(EntityId u, EntityId i) const {
        auto it = ratings.find(key(u, i));
        if (it == ratings.end()) return std::nullopt;
        return it->second;
    }

    void validate() const;  // checks invariants, throws on violation

    // Subgraph restricted to the given entities (ratings whose endpoints are
    // both kept). Attribute vocabularies are shared unchanged so category
    // indices remain compatible with an encoder built on the full graph.
    RatingGraph filtered(const std::vector<EntityId>& users,
                         const std::vector<EntityId>& items) const;

    void save(const std::string& path) const;  // "HIRG" binary cache
    static RatingGraph load(const std::string& path);
};

enum class Scenario { UC, IC, UIC, WARM };

std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& s);

struct SplitRatios {
    double train = 0.8;
    double val = 0.0;
};

// Per-test-entity interaction flags: `observable` pairs may appear in a test
// context as given ratings, the rest are evaluation-only targets.
struct ScenarioSplit {
    Scenario scenario = Scenario::UC;
    std::vector<EntityId> train_users, test_users;
    std::vector<EntityId> train_items, test_items;
    // key(u,i) -> true when the pair is observable at test time
    std::unordered_map<std::uint64_t, bool> test_pair_observable;

    bool is_observable(EntityId u, EntityId i) const {
        auto it = test_pair_observable.find(RatingGraph::key(u, i));
        return it != test_pair_observable.end() && it->second;
    }
    bool is_eval_only(EntityId u, EntityId i) const {
        auto it = test_pair_observable.find(RatingGraph::key(u, i));
        return it != test_pair_observable.end() && !it->second;
    }
};

// Cold-start split. Test entities get floor(10% of their interactions),
// capped at 3, flagged observable; the remainder is evaluation-only.
ScenarioSplit make_split(const RatingGraph& g, Scenario scenario, SplitRatios ratios,
                         std::uint64_t seed);

struct ParseStats {
    std::size_t malformed_lines = 0;
    std::size_t duplicate_pairs = 0;
};

// MovieLens "::"-delimited directory (ratings.dat, users.dat, movies.dat).
RatingGraph parse_movielens(const std::string& dir, ParseStats* stats = nullptr);

// Generic CSV with header: user,item,rating plus optional "user:<slot>" /
// "item:<slot>" attribute columns. Entities without attribute columns get a
// single ID slot. Duplicate (user,item) pairs: last occurrence wins.
RatingGraph parse_csv(const std::string& path, ParseStats* stats = nullptr);

}  // namespace hire
