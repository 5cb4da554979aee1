#include "hire/rating_graph.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hire {

EntityId RatingGraph::add_user(const std::string& name, std::vector<std::uint32_t> attrs) {
    auto it = user_index.find(name);
    if (it != user_index.end()) return it->second;
    EntityId id = static_cast<EntityId>(user_names.size());
    user_index.emplace(name, id);
    user_names.push_back(name);
    user_attrs.push_back(std::move(attrs));
    user_adj.emplace_back();
    return id;
}

EntityId RatingGraph::add_item(const std::string& name, std::vector<std::uint32_t> attrs) {
    auto it = item_index.find(name);
    if (it != item_index.end()) return it->second;
    EntityId id = static_cast<EntityId>(item_names.size());
    item_index.emplace(name, id);
    item_names.push_back(name);
    item_attrs.push_back(std::move(attrs));
    item_adj.emplace_back();
    return id;
}

bool RatingGraph::set_rating(EntityId u, EntityId i, double r) {
    if (u >= user_count() || i >= item_count())
        throw std::invalid_argument("set_rating: endpoint not in graph");
    auto [it, inserted] = ratings.insert_or_assign(key(u, i), r);
    (void)it;
    if (inserted) {
        user_adj[u].push_back(i);
        item_adj[i].push_back(u);
    }
    return inserted;
}

void RatingGraph::validate() const {
    std::size_t adj_edges = 0;
    for (EntityId u = 0; u < user_count(); ++u) {
        for (EntityId i : user_adj[u]) {
            if (!ratings.count(key(u, i)))
                throw std::logic_error("adjacency edge without rating");
            ++adj_edges;
        }
        if (user_attrs[u].size() != user_slots.size())
            throw std::logic_error("user attribute arity mismatch");
        for (std::size_t s = 0; s < user_slots.size(); ++s)
            if (user_attrs[u][s] >= user_slots[s].cardinality())
                throw std::logic_error("user attribute index out of range");
    }
    if (adj_edges != ratings.size()) throw std::logic_error("adjacency is not the rating support");
    for (EntityId i = 0; i < item_count(); ++i) {
        if (item_attrs[i].size() != item_slots.size())
            throw std::logic_error("item attribute arity mismatch");
        for (std::size_t s = 0; s < item_slots.size(); ++s)
            if (item_attrs[i][s] >= item_slots[s].cardinality())
                throw std::logic_error("item attribute index out of range");
    }
    for (const auto& [k, r] : ratings)
        if (r < 1.0 || r > r_max) throw std::logic_error("rating outside [1, r_max]");
}

RatingGraph RatingGraph::filtered(const std::vector<EntityId>& users,
                                  const std::vector<EntityId>& items) const {
    RatingGraph out;
    out.user_slots = user_slots;
    out.item_slots = item_slots;
    out.r_max = r_max;
    std::vector<bool> keep_item(item_count(), false);
    std::unordered_map<EntityId, EntityId> item_map;
    for (EntityId i : items) {
        keep_item[i] = true;
        item_map.emplace(i, out.add_item(item_names[i], item_attrs[i]));
    }
    for (EntityId u : users) {
        EntityId nu = out.add_user(user_names[u], user_attrs[u]);
        for (EntityId i : user_adj[u])
            if (keep_item[i]) out.set_rating(nu, item_map[i], ratings.at(key(u, i)));
    }
    return out;
}

// ---- binary cache ("HIRG") ------------------------------------------------
// All integers little-endian; this code assumes a little-endian host.

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::ofstream& f, std::uint64_t v) { f.write(reinterpret_cast<char*>(&v), 8); }
void put_f64(std::ofstream& f, double v) { f.write(reinterpret_cast<char*>(&v), 8); }
void put_str(std::ofstream& f, const std::string& s) {
    put_u32(f, static_cast<std::uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::ifstream& f) {
    std::uint32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t get_u64(std::ifstream& f) {
    std::uint64_t v;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double get_f64(std::ifstream& f) {
    double v;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string get_str(std::ifstream& f) {
    std::uint32_t n = get_u32(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    return s;
}

void put_slots(std::ofstream& f, const std::vector<AttributeVocab>& slots) {
    put_u32(f, static_cast<std::uint32_t>(slots.size()));
    for (const auto& s : slots) {
        put_str(f, s.name);
        put_u32(f, static_cast<std::uint32_t>(s.values.size()));
        for (const auto& v : s.values) put_str(f, v);
    }
}

std::vector<AttributeVocab> get_slots(std::ifstream& f) {
    std::vector<AttributeVocab> slots(get_u32(f));
    for (auto& s : slots) {
        s.name = get_str(f);
        std::uint32_t n = get_u32(f);
        for (std::uint32_t i = 0; i < n; ++i) s.intern(get_str(f));
    }
    return slots;
}

void put_entities(std::ofstream& f, const std::vector<std::string>& names,
                  const std::vector<std::vector<std::uint32_t>>& attrs) {
    put_u32(f, static_cast<std::uint32_t>(names.size()));
    for (std::size_t i = 0; i < names.size(); ++i) {
        put_str(f, names[i]);
        put_u32(f, static_cast<std::uint32_t>(attrs[i].size()));
        for (std::uint32_t a : attrs[i]) put_u32(f, a);
    }
}

}  // namespace

void RatingGraph::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write graph cache: " + path);
    f.write("HIRG", 4);
    put_u32(f, 1);  // format version
    put_f64(f, r_max);
    put_slots(f, user_slots);
    put_slots(f, item_slots);
    put_entities(f, user_names, user_attrs);
    put_entities(f, item_names, item_attrs);
    put_u64(f, ratings.size());
    // deterministic order: by user then insertion order of that user's items
    for (EntityId u = 0; u < user_count(); ++u)
        for (EntityId i : user_adj[u]) {
            put_u32(f, u);
            put_u32(f, i);
            put_f64(f, ratings.at(key(u, i)));
        }
}

RatingGraph RatingGraph::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read graph cache: " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "HIRG", 4) != 0)
        throw std::runtime_error("bad graph cache magic in " + path);
    std::uint32_t version = get_u32(f);
    if (version != 1) throw std::runtime_error("unsupported graph cache version");
    RatingGraph g;
    g.r_max = get_f64(f);
    g.user_slots = get_slots(f);
    g.item_slots = get_slots(f);
    std::uint32_t nu = get_u32(f);
    for (std::uint32_t i = 0; i < nu; ++i) {
        std::string name = get_str(f);
        std::vector<std::uint32_t> attrs(get_u32(f));
        for (auto& a : attrs) a = get_u32(f);
        g.add_user(name, std::move(attrs));
    }
    std::uint32_t ni = get_u32(f);
    for (std::uint32_t i = 0; i < ni; ++i) {
        std::string name = get_str(f);
        std::vector<std::uint32_t> attrs(get_u32(f));
        for (auto& a : attrs) a = get_u32(f);
        g.add_item(name, std::move(attrs));
    }
    std::uint64_t nr = get_u64(f);
    for (std::uint64_t r = 0; r < nr; ++r) {
        EntityId u = get_u32(f), i = get_u32(f);
        g.set_rating(u, i, get_f64(f));
    }
    if (!f) throw std::runtime_error("truncated graph cache: " + path);
    return g;
}

// ---- splits ---------------------------------------------------------------

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::UC: return "uc";
        case Scenario::IC: return "ic";
        case Scenario::UIC: return "uic";
        case Scenario::WARM: return "warm";
    }
    return "?";
}

Scenario parse_scenario(const std::string& s) {
    if (s == "uc") return Scenario::UC;
    if (s == "ic") return Scenario::IC;
    if (s == "uic") return Scenario::UIC;
    if (s == "warm") return Scenario::WARM;
    throw std::invalid_argument("unknown scenario: " + s);
}

namespace {

void flag_test_pairs(const RatingGraph& g, const std::vector<EntityId>& entities, bool user_side,
                     ScenarioSplit& split, Rng& rng) {
    for (EntityId e : entities) {
        const auto& adj = user_side ? g.user_adj[e] : g.item_adj[e];
        std::size_t n_obs = std::min<std::size_t>(3, adj.size() / 10);
        auto order = sample_without_replacement(rng, adj.size(), adj.size());
        for (std::size_t k = 0; k < order.size(); ++k) {
            EntityId other = adj[order[k]];
            EntityId u = user_side ? e : other;
            EntityId i = user_side ? other : e;
            // In UIC a pair may involve two test entities; observable only if
            // both sides agree, so insert-and-AND.
            bool obs = k < n_obs;
            auto key = RatingGraph::key(u, i);
            auto it = split.test_pair_observable.find(key);
            if (it == split.test_pair_observable.end())
                split.test_pair_observable.emplace(key, obs);
            else
                it->second = it->second && obs;
        }
    }
}

std::pair<std::vector<EntityId>, std::vector<EntityId>> split_entities(std::size_t count,
                                                                      double train_frac, Rng& rng) {
    auto order = sample_without_replacement(rng, count, count);
    std::size_t n_train = static_cast<std::size_t>(train_frac * static_cast<double>(count) + 0.5);
    std::vector<EntityId> train, test;
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < n_train ? train : test).push_back(static_cast<EntityId>(order[k]));
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

std::vector<EntityId> all_entities(std::size_t count) {
    std::vector<EntityId> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = static_cast<EntityId>(i);
    return v;
}

}  // namespace

ScenarioSplit make_split(const RatingGraph& g, Scenario scenario, SplitRatios ratios,
                         std::uint64_t seed) {
    if (ratios.train + ratios.val > 1.0 + 1e-12)
        throw std::invalid_argument("make_split: ratios sum exceeds 1");
    if (g.rating_count() == 0 && scenario == Scenario::WARM)
        throw std::invalid_argument("make_split: warm split needs observed ratings");
    Rng rng(seed);
    ScenarioSplit split;
    split.scenario = scenario;
    double train_frac = ratios.train + ratios.val;
    switch (scenario) {
        case Scenario::UC: {
            std::tie(split.train_users, split.test_users) =
                split_entities(g.user_count(), train_frac, rng);
            split.train_items = split.test_items = all_entities(g.item_count());
            flag_test_pairs(g, split.test_users, true, split, rng);
            break;
        }
        case Scenario::IC: {
            std::tie(split.train_items, split.test_items) =
                split_entities(g.item_count(), train_frac, rng);
            split.train_users = split.test_users = all_entities(g.user_count());
            flag_test_pairs(g, split.test_items, false, split, rng);
            break;
        }
        case Scenario::UIC: {
            std::tie(split.train_users, split.test_users) =
                split_entities(g.user_count(), train_frac, rng);
            std::tie(split.train_items, split.test_items) =
                split_entities(g.item_count(), train_frac, rng);
            flag_test_pairs(g, split.test_users, true, split, rng);
            flag_test_pairs(g, split.test_items, false, split, rng);
            break;
        }
        case Scenario::WARM: {
            // Test entities remain in the training pool; only their flagged
            // evaluation pairs are withheld from the trainer.
            split.train_users = all_entities(g.user_count());
            split.train_items = all_entities(g.item_count());
            auto [tr, te] = split_entities(g.user_count(), train_frac, rng);
            (void)tr;
            split.test_users = te;
            split.test_items = all_entities(g.item_count());
            flag_test_pairs(g, split.test_users, true, split, rng);
            break;
        }
    }
    return split;
}

}  // namespace hire
