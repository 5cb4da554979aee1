#pragma once

// The full model: stacked interaction blocks over the context tensor, then a
// cellwise decoder squashed to the rating range. Each block attends across
// users (per item), across items (per user), then across the attribute
// tokens inside each cell.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hire/attention.hpp"
#include "hire/embedding.hpp"

namespace hire {

struct ModelConfig {
    std::size_t blocks = 3;
    std::size_t heads = 8;
    std::size_t head_dim = 16;
    std::size_t feat_dim = 16;  // per-attribute embedding width f
};

// Attribute-token attention is f wide, too narrow for the full head geometry;
// use the largest divisor of f up to min(heads, sqrt(f)) as the head count so
// the heads tile f exactly (4 heads x 4 dims at f=16).
inline std::pair<std::size_t, std::size_t> mba_geometry(std::size_t f, std::size_t heads) {
    std::size_t cap = 1;
    while ((cap + 1) * (cap + 1) <= f) ++cap;
    if (cap > heads) cap = heads;
    std::size_t h = 1;
    for (std::size_t d = 1; d <= cap; ++d)
        if (f % d == 0) h = d;
    return {h, f / h};
}

template <class T>
struct HimBlock {
    MhsaParams<T> mbu, mbi, mba;
};

template <class T>
struct AttentionDump {
    struct Block {
        AttnCapture<T> mbu, mbi, mba;
    };
    std::vector<Block> blocks;
};

template <class T>
struct HireModel {
    EncoderParams<T> enc;
    std::vector<HimBlock<T>> blocks;
    Tensor<T> dec_w, dec_b;  // e x 1, 1
    T alpha = T(5);
    ModelConfig cfg;

    static HireModel init(const RatingGraph& g, const ModelConfig& cfg, Rng& rng) {
        HireModel m;
        m.cfg = cfg;
        m.enc = EncoderParams<T>::init(g, cfg.feat_dim, rng);
        m.alpha = static_cast<T>(g.r_max);
        std::size_t e = m.enc.e(), f = cfg.feat_dim;
        auto [mba_heads, mba_dim] = mba_geometry(f, cfg.heads);
        for (std::size_t l = 0; l < cfg.blocks; ++l) {
            HimBlock<T> b;
            b.mbu = MhsaParams<T>::init(e, cfg.head_dim, cfg.head_dim, e, cfg.heads, rng);
            b.mbi = MhsaParams<T>::init(e, cfg.head_dim, cfg.head_dim, e, cfg.heads, rng);
            b.mba = MhsaParams<T>::init(f, mba_dim, mba_dim, f, mba_heads, rng);
            m.blocks.push_back(std::move(b));
        }
        m.dec_w = Tensor<T>::param({e, 1}, rng);
        m.dec_b = Tensor<T>::param({1}, rng);
        return m;
    }

    std::vector<Tensor<T>*> parameters() {
        std::vector<Tensor<T>*> out = enc.parameters();
        for (auto& b : blocks)
            for (auto* layer : {&b.mbu, &b.mbi, &b.mba})
                for (auto* t : layer->parameters()) out.push_back(t);
        out.push_back(&dec_w);
        out.push_back(&dec_b);
        return out;
    }
};

namespace detail {

// Row permutation mapping cell order (k*m+j) to column order (j*n+k).
inline std::vector<std::ptrdiff_t> column_major_perm(std::size_t n, std::size_t m) {
    std::vector<std::ptrdiff_t> perm(n * m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < n; ++k) perm[j * n + k] = static_cast<std::ptrdiff_t>(k * m + j);
    return perm;
}

inline std::vector<std::ptrdiff_t> row_major_perm(std::size_t n, std::size_t m) {
    std::vector<std::ptrdiff_t> perm(n * m);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < m; ++j) perm[k * m + j] = static_cast<std::ptrdiff_t>(j * n + k);
    return perm;
}

}  // namespace detail

// The three block layers operate on H flattened to [n*m x e], cells in row
// (user) major order.

// Attention across the n users of each item column, shared weights.
template <class T>
Tensor<T> mbu_forward(const Tensor<T>& h, std::size_t n, std::size_t m, const MhsaParams<T>& p,
                      AttnCapture<T>* capture = nullptr) {
    Tensor<T> cols = take_rows(h, detail::column_major_perm(n, m));
    Tensor<T> out = mhsa(cols, p, m, capture);
    return take_rows(out, detail::row_major_perm(n, m));
}

// Attention across the m items of each user row.
template <class T>
Tensor<T> mbi_forward(const Tensor<T>& h, std::size_t n, std::size_t m, const MhsaParams<T>& p,
                      AttnCapture<T>* capture = nullptr) {
    return mhsa(h, p, n, capture);
}

// Attention across the h attribute tokens inside each cell.
template <class T>
Tensor<T> mba_forward(const Tensor<T>& h, std::size_t n, std::size_t m, const MhsaParams<T>& p,
                      AttnCapture<T>* capture = nullptr) {
    std::size_t e = h.dim(1), f = p.d;
    if (e % f != 0)
        throw shape_error("mba: width " + std::to_string(e) + " not divisible by token width " +
                          std::to_string(f));
    std::size_t tokens = e / f;
    Tensor<T> flat = reshape(h, {n * m * tokens, f});
    Tensor<T> out = mhsa(flat, p, n * m, capture);
    return reshape(out, {n * m, e});
}

// Full forward pass: Tensor[n x m] of predicted ratings in (0, alpha).
template <class T>
Tensor<T> hire_forward(const HireModel<T>& model, const RatingGraph& g,
                       const PredictionContext& ctx, AttentionDump<T>* dump = nullptr) {
    std::size_t n = ctx.n(), m = ctx.m();
    Tensor<T> h = reshape(build_context_tensor(model.enc, g, ctx), {n * m, model.enc.e()});
    if (dump) dump->blocks.assign(model.blocks.size(), {});
    for (std::size_t l = 0; l < model.blocks.size(); ++l) {
        const auto& b = model.blocks[l];
        auto* d = dump ? &dump->blocks[l] : nullptr;
        h = mbu_forward(h, n, m, b.mbu, d ? &d->mbu : nullptr);
        h = mbi_forward(h, n, m, b.mbi, d ? &d->mbi : nullptr);
        h = mba_forward(h, n, m, b.mba, d ? &d->mba : nullptr);
    }
    Tensor<T> logits = linear(h, model.dec_w, &model.dec_b);
    return reshape(scale(sigmoid(logits), model.alpha), {n, m});
}

// ---- checkpoint -----------------------------------------------------------

namespace detail {

inline void io_fail(const std::string& what) { throw std::runtime_error("checkpoint: " + what); }

template <class V>
void write_pod(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class V>
V read_pod(std::istream& is) {
    V v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) io_fail("truncated file");
    return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is) {
    auto len = read_pod<std::uint32_t>(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) io_fail("truncated string");
    return s;
}

template <class T>
void write_tensor(std::ostream& os, const std::string& name, const Tensor<T>& t) {
    write_str(os, name);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_pod<std::uint64_t>(os, d);
    for (T v : t.data()) write_pod<float>(os, static_cast<float>(v));
}

template <class T>
void read_tensor(std::istream& is, const std::string& want_name, Tensor<T>& dst) {
    std::string name = read_str(is);
    if (name != want_name) io_fail("expected tensor " + want_name + ", found " + name);
    auto rank = read_pod<std::uint32_t>(is);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i)
        shape.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(is)));
    if (shape != dst.shape())
        io_fail("tensor " + name + " has shape " + shape_str(shape) + ", model expects " +
                shape_str(dst.shape()));
    for (T& v : dst.mutable_data()) v = static_cast<T>(read_pod<float>(is));
}

template <class T, class Fn>
void walk_named_tensors(HireModel<T>& m, Fn&& fn) {
    for (std::size_t s = 0; s < m.enc.user_w.size(); ++s) {
        fn("enc.user_w." + std::to_string(s), m.enc.user_w[s]);
        fn("enc.user_b." + std::to_string(s), m.enc.user_b[s]);
    }
    for (std::size_t s = 0; s < m.enc.item_w.size(); ++s) {
        fn("enc.item_w." + std::to_string(s), m.enc.item_w[s]);
        fn("enc.item_b." + std::to_string(s), m.enc.item_b[s]);
    }
    fn("enc.rating_w", m.enc.rating_w);
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        const char* names[3] = {"mbu", "mbi", "mba"};
        MhsaParams<T>* layers[3] = {&m.blocks[l].mbu, &m.blocks[l].mbi, &m.blocks[l].mba};
        for (int li = 0; li < 3; ++li) {
            std::string base = "block." + std::to_string(l) + "." + names[li];
            for (std::size_t hd = 0; hd < layers[li]->heads.size(); ++hd) {
                std::string hb = base + ".head." + std::to_string(hd);
                fn(hb + ".wq", layers[li]->heads[hd].w_q);
                fn(hb + ".wk", layers[li]->heads[hd].w_k);
                fn(hb + ".wv", layers[li]->heads[hd].w_v);
            }
            fn(base + ".wo", layers[li]->w_o);
        }
    }
    fn("dec.w", m.dec_w);
    fn("dec.b", m.dec_b);
}

}  // namespace detail

template <class T>
void save_checkpoint(const HireModel<T>& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) detail::io_fail("cannot open " + path + " for writing");
    os.write("HIRE", 4);
    detail::write_pod<std::uint32_t>(os, 1);  // format version
    detail::write_pod<double>(os, static_cast<double>(model.alpha));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.cfg.blocks));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.cfg.heads));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.cfg.head_dim));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.cfg.feat_dim));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.enc.rating_levels));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.enc.user_w.size()));
    for (const auto& w : model.enc.user_w)
        detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(w.dim(0)));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.enc.item_w.size()));
    for (const auto& w : model.enc.item_w)
        detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(w.dim(0)));
    std::size_t count = 0;
    detail::walk_named_tensors(const_cast<HireModel<T>&>(model),
                               [&](const std::string&, Tensor<T>&) { ++count; });
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(count));
    detail::walk_named_tensors(const_cast<HireModel<T>&>(model),
                               [&](const std::string& name, Tensor<T>& t) {
                                   detail::write_tensor(os, name, t);
                               });
    if (!os) detail::io_fail("write failure on " + path);
}

template <class T>
HireModel<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) detail::io_fail("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "HIRE") detail::io_fail("bad magic in " + path);
    auto version = detail::read_pod<std::uint32_t>(is);
    if (version != 1) detail::io_fail("unsupported format version " + std::to_string(version));
    double alpha = detail::read_pod<double>(is);
    ModelConfig cfg;
    cfg.blocks = detail::read_pod<std::uint32_t>(is);
    cfg.heads = detail::read_pod<std::uint32_t>(is);
    cfg.head_dim = detail::read_pod<std::uint32_t>(is);
    cfg.feat_dim = detail::read_pod<std::uint32_t>(is);
    auto rating_levels = detail::read_pod<std::uint32_t>(is);
    std::vector<std::size_t> user_cards(detail::read_pod<std::uint32_t>(is));
    for (auto& c : user_cards) c = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is));
    std::vector<std::size_t> item_cards(detail::read_pod<std::uint32_t>(is));
    for (auto& c : item_cards) c = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is));

    // Rebuild the parameter skeleton, then overwrite every value.
    RatingGraph skeleton;
    skeleton.r_max = static_cast<double>(rating_levels);
    for (std::size_t c : user_cards) {
        AttributeVocab v;
        for (std::size_t k = 0; k < c; ++k) v.intern(std::to_string(k));
        skeleton.user_slots.push_back(std::move(v));
    }
    for (std::size_t c : item_cards) {
        AttributeVocab v;
        for (std::size_t k = 0; k < c; ++k) v.intern(std::to_string(k));
        skeleton.item_slots.push_back(std::move(v));
    }
    Rng rng(0);
    HireModel<T> m = HireModel<T>::init(skeleton, cfg, rng);
    m.alpha = static_cast<T>(alpha);
    auto count = detail::read_pod<std::uint32_t>(is);
    std::size_t expect = 0;
    detail::walk_named_tensors(m, [&](const std::string&, Tensor<T>&) { ++expect; });
    if (count != expect) detail::io_fail("tensor count mismatch");
    detail::walk_named_tensors(m, [&](const std::string& name, Tensor<T>& t) {
        detail::read_tensor(is, name, t);
    });
    return m;
}

}  // namespace hire
