// Command-line driver: train a model, evaluate it against the interaction
// count baseline, or dump attention matrices for one context.
//
// Exit codes: 0 ok, 1 configuration error, 2 data error, 3 training
// divergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "hire/metrics.hpp"
#include "hire/trainer.hpp"

namespace fs = std::filesystem;
using namespace hire;

namespace {

struct Options {
    std::string data, format = "movielens", scenario = "uc", sampler = "neighborhood";
    std::string out = "out", checkpoint;
    std::size_t n = 32, m = 32, blocks = 3, heads = 8, head_dim = 16, feat_dim = 16;
    double support = 0.1, lr = 1e-3;
    std::size_t steps = 1000, batch = 4, contexts = 50;
    std::uint64_t seed = 0;
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    bool with_baseline = false;
    bool baseline_only = false;
};

struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->set_config("--config")->configurable(false);
    cmd->add_option("--data", o.data, "dataset path (directory or csv file)");
    cmd->add_option("--format", o.format)->check(CLI::IsMember({"movielens", "csv"}));
    cmd->add_option("--scenario", o.scenario)->check(CLI::IsMember({"uc", "ic", "uic", "warm"}));
    cmd->add_option("--sampler", o.sampler)
        ->check(CLI::IsMember({"neighborhood", "random", "featsim"}));
    cmd->add_option("--n", o.n, "users per context");
    cmd->add_option("--m", o.m, "items per context");
    cmd->add_option("--blocks", o.blocks)->check(CLI::PositiveNumber);
    cmd->add_option("--heads", o.heads)->check(CLI::PositiveNumber);
    cmd->add_option("--head-dim", o.head_dim)->check(CLI::PositiveNumber);
    cmd->add_option("--feat-dim", o.feat_dim)->check(CLI::PositiveNumber);
    cmd->add_option("--support", o.support, "support fraction of observed cells")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--lr", o.lr)->check(CLI::PositiveNumber);
    cmd->add_option("--steps", o.steps)->check(CLI::PositiveNumber);
    cmd->add_option("--batch", o.batch)->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed);
    cmd->add_option("--workers", o.workers)->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out, "output directory");
}

RatingGraph load_graph(const Options& o) {
    if (o.data.empty()) throw data_error("no dataset given (--data)");
    try {
        if (o.data.size() > 5 && o.data.substr(o.data.size() - 5) == ".hirg")
            return RatingGraph::load(o.data);
        return o.format == "movielens" ? parse_movielens(o.data) : parse_csv(o.data);
    } catch (const std::exception& e) {
        throw data_error(e.what());
    }
}

// Training sees only the warm side of the split; vocabularies stay shared
// with the full graph so cold entities remain encodable.
RatingGraph train_subgraph(const RatingGraph& g, const ScenarioSplit& split) {
    std::vector<EntityId> all_users(g.user_count()), all_items(g.item_count());
    for (EntityId u = 0; u < g.user_count(); ++u) all_users[u] = u;
    for (EntityId i = 0; i < g.item_count(); ++i) all_items[i] = i;
    switch (split.scenario) {
        case Scenario::UC: return g.filtered(split.train_users, all_items);
        case Scenario::IC: return g.filtered(all_users, split.train_items);
        case Scenario::UIC: return g.filtered(split.train_users, split.train_items);
        case Scenario::WARM: {
            // Same entities, minus the held-out evaluation pairs.
            RatingGraph out;
            out.user_slots = g.user_slots;
            out.item_slots = g.item_slots;
            out.r_max = g.r_max;
            for (EntityId u = 0; u < g.user_count(); ++u) out.add_user(g.user_names[u], g.user_attrs[u]);
            for (EntityId i = 0; i < g.item_count(); ++i) out.add_item(g.item_names[i], g.item_attrs[i]);
            for (EntityId u = 0; u < g.user_count(); ++u)
                for (EntityId i : g.user_adj[u])
                    if (!split.is_eval_only(u, i)) out.set_rating(u, i, *g.rating(u, i));
            return out;
        }
    }
    throw std::logic_error("unreachable");
}

void write_resolved_config(const Options& o, const std::string& path) {
    std::ofstream os(path);
    os << "data=" << o.data << "\nformat=" << o.format << "\nscenario=" << o.scenario
       << "\nsampler=" << o.sampler << "\nn=" << o.n << "\nm=" << o.m << "\nblocks=" << o.blocks
       << "\nheads=" << o.heads << "\nhead-dim=" << o.head_dim << "\nfeat-dim=" << o.feat_dim
       << "\nsupport=" << o.support << "\nlr=" << o.lr << "\nsteps=" << o.steps
       << "\nbatch=" << o.batch << "\nseed=" << o.seed << "\nworkers=" << o.workers
       << "\nout=" << o.out << "\n";
}

void check_compatible(const HireModel<float>& model, const RatingGraph& g) {
    auto check_slots = [](const std::vector<Tensor<float>>& ws,
                          const std::vector<AttributeVocab>& slots, const char* kind) {
        if (ws.size() != slots.size())
            throw std::invalid_argument(std::string("checkpoint expects ") +
                                        std::to_string(ws.size()) + " " + kind +
                                        " attribute slots, dataset has " +
                                        std::to_string(slots.size()));
        for (std::size_t s = 0; s < ws.size(); ++s)
            if (slots[s].cardinality() > ws[s].dim(0))
                throw std::invalid_argument(std::string(kind) + " slot " + std::to_string(s) +
                                            " has more categories than the checkpoint knows");
    };
    check_slots(model.enc.user_w, g.user_slots, "user");
    check_slots(model.enc.item_w, g.item_slots, "item");
}

int cmd_train(const Options& o) {
    RatingGraph g = load_graph(o);
    ScenarioSplit split = make_split(g, parse_scenario(o.scenario), {}, o.seed);
    RatingGraph train_g = train_subgraph(g, split);
    if (train_g.rating_count() == 0) throw data_error("train split has no ratings");

    ModelConfig mc{o.blocks, o.heads, o.head_dim, o.feat_dim};
    Rng init_rng(o.seed + 1);
    HireModel<float> model = HireModel<float>::init(g, mc, init_rng);

    OptimizerConfig oc;
    oc.base_lr = o.lr;
    oc.total_steps = o.steps;
    oc.batch_size = o.batch;
    oc.seed = o.seed + 2;
    TrainOptions to;
    to.n = o.n;
    to.m = o.m;
    to.p_support = o.support;
    to.sampler = parse_sampler(o.sampler);
    to.workers = o.workers;

    fs::create_directories(o.out);
    TrainResult res = train(model, train_g, oc, to);
    save_checkpoint(model, o.out + "/model.ckpt");
    write_trace_csv(o.out + "/trace.csv", res.trace);
    write_resolved_config(o, o.out + "/config.resolved");
    std::cout << "steps " << res.steps_run
              << (res.converged ? " (converged)" : "")
              << ", final loss "
              << (res.trace.empty() ? 0.0 : res.trace.back().loss) << "\n";
    if (res.diverged) {
        std::cerr << "training diverged; checkpoint holds the last finite state\n";
        return 3;
    }
    return 0;
}

int cmd_eval(const Options& o) {
    RatingGraph g = load_graph(o);
    ScenarioSplit split = make_split(g, parse_scenario(o.scenario), {}, o.seed);

    EvalOptions eo;
    eo.n = o.n;
    eo.m = o.m;
    eo.sampler = parse_sampler(o.sampler);
    eo.seed = o.seed + 3;
    eo.n_contexts = o.contexts;
    eo.relevance_threshold = default_relevance_threshold(g.r_max);

    fs::create_directories(o.out);
    std::vector<std::pair<std::string, EvalReport>> rows;
    HireModel<float> model;
    if (!o.baseline_only) {
        if (o.checkpoint.empty()) throw std::invalid_argument("eval needs --checkpoint");
        model = load_checkpoint<float>(o.checkpoint);
        check_compatible(model, g);
        rows.emplace_back("hire", evaluate(model_predictor(model), g, split, eo));
    }
    if (o.with_baseline || o.baseline_only)
        rows.emplace_back("popularity", evaluate(popularity_predictor(g), g, split, eo));
    for (const auto& [label, r] : rows) std::cout << report_table(r, label) << "\n";
    write_report_csv(o.out + "/eval.csv", rows);
    write_resolved_config(o, o.out + "/config.resolved");
    return 0;
}

int cmd_dump_attention(const Options& o) {
    RatingGraph g = load_graph(o);
    if (o.checkpoint.empty()) throw std::invalid_argument("dump-attention needs --checkpoint");
    HireModel<float> model = load_checkpoint<float>(o.checkpoint);
    check_compatible(model, g);

    Rng rng(o.seed + 4);
    auto pairs = [&] {
        std::vector<std::pair<EntityId, EntityId>> ps;
        for (EntityId u = 0; u < g.user_count(); ++u)
            for (EntityId i : g.user_adj[u]) ps.emplace_back(u, i);
        return ps;
    }();
    if (pairs.empty()) throw data_error("dataset has no ratings to build a context from");
    PredictionContext ctx = sample_context(parse_sampler(o.sampler), g, {pairs[rand_index(rng, pairs.size())]},
                                           o.n, o.m, rng);
    assign_masks(ctx, o.support, rng);

    AttentionDump<float> dump;
    hire_forward(model, g, ctx, &dump);

    fs::create_directories(o.out);
    std::ofstream manifest(o.out + "/manifest.csv");
    manifest << "file,block,layer,head,slice,rows,cols,row_stochastic\n";
    const char* layer_names[3] = {"mbu", "mbi", "mba"};
    for (std::size_t l = 0; l < dump.blocks.size(); ++l) {
        const AttnCapture<float>* layers[3] = {&dump.blocks[l].mbu, &dump.blocks[l].mbi,
                                               &dump.blocks[l].mba};
        for (int li = 0; li < 3; ++li) {
            const AttnCapture<float>& cap = *layers[li];
            std::size_t t = cap.t;
            for (std::size_t hd = 0; hd < cap.per_head.size(); ++hd)
                for (std::size_t b = 0; b < cap.batch; ++b) {
                    std::string name = "block" + std::to_string(l) + "_" + layer_names[li] +
                                       "_head" + std::to_string(hd) + "_slice" + std::to_string(b) +
                                       ".csv";
                    std::ofstream mf(o.out + "/" + name);
                    const float* a = cap.per_head[hd].data() + b * t * t;
                    bool stochastic = true;
                    for (std::size_t r = 0; r < t; ++r) {
                        double sum = 0;
                        for (std::size_t c = 0; c < t; ++c) {
                            mf << a[r * t + c] << (c + 1 < t ? ',' : '\n');
                            sum += a[r * t + c];
                        }
                        stochastic &= std::abs(sum - 1.0) < 1e-6;
                    }
                    manifest << name << ',' << l << ',' << layer_names[li] << ',' << hd << ',' << b
                             << ',' << t << ',' << t << ',' << (stochastic ? "yes" : "NO") << '\n';
                }
        }
    }
    std::cout << "wrote attention matrices for a " << ctx.n() << "x" << ctx.m() << " context to "
              << o.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cold-start rating prediction over sampled user-item contexts"};
    app.require_subcommand(1);
    Options o;

    CLI::App* t = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(t, o);

    CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint with ranking metrics");
    add_common(e, o);
    e->add_option("--checkpoint", o.checkpoint);
    e->add_option("--contexts", o.contexts, "number of test contexts")->check(CLI::PositiveNumber);
    e->add_flag("--with-baseline", o.with_baseline, "also report the popularity baseline");
    e->add_flag("--baseline-only", o.baseline_only, "skip the model, report only the baseline");

    CLI::App* d = app.add_subcommand("dump-attention", "write attention matrices for one context");
    add_common(d, o);
    d->add_option("--checkpoint", o.checkpoint);

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed()) return cmd_train(o);
        if (e->parsed()) return cmd_eval(o);
        return cmd_dump_attention(o);
    } catch (const data_error& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
