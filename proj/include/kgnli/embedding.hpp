// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// Token embeddings: TransE vectors for KG entities and relations, word
// vectors (loaded, or seeded random fallback) for template tokens, and the
// affine map used to carry one KG's embedding space onto another's.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kgnli/entity_linker.hpp"
#include "kgnli/error.hpp"
#include "kgnli/kg_store.hpp"
#include "kgnli/rng.hpp"

namespace kgnli {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Norm { L1, L2 };

class EmbeddingTable {
  public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t dim, std::size_t n_entities, std::size_t n_relations, std::uint64_t oov_seed = 0)
        : dim_(dim), entities_(Mat::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n_entities))),
          relations_(Mat::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n_relations))),
          oov_seed_(oov_seed) {}

    std::size_t dim() const { return dim_; }
    std::uint64_t oov_seed() const { return oov_seed_; }

    // One column per entity / relation id.
    Mat& entities() { return entities_; }
    const Mat& entities() const { return entities_; }
    Mat& relations() { return relations_; }
    const Mat& relations() const { return relations_; }

    auto entity(EntityId e) const {
        if (e >= static_cast<std::size_t>(entities_.cols()))
            throw DataError("entity id " + std::to_string(e) + " absent from embedding table");
        return entities_.col(e);
    }
    auto relation(RelationId r) const {
        if (r >= static_cast<std::size_t>(relations_.cols()))
            throw DataError("relation id " + std::to_string(r) + " absent from embedding table");
        return relations_.col(r);
    }

    const std::unordered_map<std::string, Vec>& words() const { return words_; }

    void set_word(const std::string& w, Vec v) {
        if (static_cast<std::size_t>(v.size()) != dim_) throw DataError("word vector for '" + w + "' has wrong dimension");
        words_[to_lower(w)] = std::move(v);
    }
    void set_words(std::unordered_map<std::string, Vec> words) {
        for (auto& [w, v] : words) set_word(w, std::move(v));
    }

    // Loaded vector, else a seeded random unit vector cached per word.
    const Vec& word(const std::string& w) const {
        const std::string key = to_lower(w);
        if (auto it = words_.find(key); it != words_.end()) return it->second;
        std::lock_guard lock(oov_->mu);
        auto [it, inserted] = oov_->vecs.try_emplace(key);
        if (inserted) it->second = random_unit(dim_, fnv1a(key) ^ (oov_seed_ * 0x9E3779B97F4A7C15ULL));
        return it->second;
    }

    static Vec random_unit(std::size_t dim, std::uint64_t seed) {
        Rng rng(seed);
        Vec v(static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
        const double n = v.norm();
        return n > 0 ? Vec(v / n) : v;
    }

  private:
    struct OovCache {
        std::mutex mu;
        std::unordered_map<std::string, Vec> vecs;
    };

    std::size_t dim_ = 0;
    Mat entities_;
    Mat relations_;
    std::unordered_map<std::string, Vec> words_;
    std::uint64_t oov_seed_ = 0;
    std::shared_ptr<OovCache> oov_ = std::make_shared<OovCache>();
};

template <class A, class B, class C>
double transe_score(const A& h, const B& r, const C& t, Norm norm = Norm::L1) {
    if (h.size() != r.size() || h.size() != t.size()) throw DataError("transe_score: dimension mismatch");
    const Vec d = h + r - t;
    return norm == Norm::L1 ? d.template lpNorm<1>() : d.norm();
}

inline double margin_loss(double margin, double d_pos, double d_neg) { return std::max(0.0, margin + d_pos - d_neg); }

struct TransEConfig {
    std::size_t dim = 300;
    double margin = 1.0;
    double lr = 0.01;
    std::size_t epochs = 100;
    std::size_t batch = 100;
    Norm norm = Norm::L1;
    std::uint64_t seed = 7;
    // Trace the exact expected loss over every single-entity corruption
    // instead of the sampled one. O(triples * entities) per epoch; meant for
    // small graphs where sampling noise would swamp the trend.
    bool exact_loss = false;
};

struct TransEResult {
    EmbeddingTable table;
    std::vector<double> loss_trace; // mean per-pair margin loss per epoch
};

// Mean margin loss of each triple against all of its head and tail
// corruptions (the quantity the sampled objective estimates).
inline double expected_margin_loss(const EmbeddingTable& table, const std::vector<Triple>& triples, double margin,
                                   Norm norm) {
    const auto n_ent = static_cast<EntityId>(table.entities().cols());
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& t : triples) {
        const double sp = transe_score(table.entity(t.head), table.relation(t.relation), table.entity(t.tail), norm);
        for (EntityId e = 0; e < n_ent; ++e) {
            if (e != t.head) {
                sum += margin_loss(margin, sp, transe_score(table.entity(e), table.relation(t.relation), table.entity(t.tail), norm));
                ++count;
            }
            if (e != t.tail) {
                sum += margin_loss(margin, sp, transe_score(table.entity(t.head), table.relation(t.relation), table.entity(e), norm));
                ++count;
            }
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

namespace detail {

inline void normalize_columns(Mat& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double n = m.col(c).norm();
        if (n > 0) m.col(c) /= n;
    }
}

// d/dx of ||x||_1 or ||x||_2 at x.
inline Vec norm_grad(const Vec& x, Norm norm) {
    if (norm == Norm::L1) return x.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    const double n = x.norm();
    return n > 0 ? Vec(x / n) : Vec(Vec::Zero(x.size()));
}

} // namespace detail

// Margin-ranking TransE with uniform head-or-tail corruption and minibatch
// SGD. Entity vectors are L2-normalized at init and after every epoch.
inline TransEResult train_transe(const KnowledgeGraph& kg, const TransEConfig& cfg) {
    if (cfg.dim == 0) throw ConfigError("train_transe: dim must be positive");
    if (cfg.epochs == 0) throw ConfigError("train_transe: epochs must be positive");
    if (cfg.batch == 0) throw ConfigError("train_transe: batch must be positive");
    if (kg.num_triples() == 0) throw DataError("train_transe: empty knowledge graph");

    const auto dim = static_cast<Eigen::Index>(cfg.dim);
    const auto n_ent = static_cast<Eigen::Index>(kg.num_entities());
    const auto n_rel = static_cast<Eigen::Index>(kg.num_relations());
    Rng rng(cfg.seed);
    const double bound = 6.0 / std::sqrt(static_cast<double>(cfg.dim));

    TransEResult res{EmbeddingTable(cfg.dim, kg.num_entities(), kg.num_relations(), cfg.seed), {}};
    Mat& E = res.table.entities();
    Mat& R = res.table.relations();
    for (Eigen::Index c = 0; c < n_ent; ++c)
        for (Eigen::Index i = 0; i < dim; ++i) E(i, c) = rng.uniform(-bound, bound);
    for (Eigen::Index c = 0; c < n_rel; ++c)
        for (Eigen::Index i = 0; i < dim; ++i) R(i, c) = rng.uniform(-bound, bound);
    detail::normalize_columns(E);
    detail::normalize_columns(R);

    const auto& triples = kg.triples();
    std::vector<std::size_t> order(triples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Mat gE(dim, n_ent), gR(dim, n_rel);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
            gE.setZero();
            gR.setZero();
            const std::size_t end = std::min(order.size(), b + cfg.batch);
            for (std::size_t k = b; k < end; ++k) {
                const Triple& t = triples[order[k]];
                Triple neg = t;
                const bool corrupt_head = rng.below(2) == 0;
                if (n_ent > 1) {
                    EntityId& slot = corrupt_head ? neg.head : neg.tail;
                    const EntityId orig = slot;
                    EntityId e = static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(n_ent - 1)));
                    slot = e >= orig ? e + 1 : e;
                }
                const Vec dp = E.col(t.head) + R.col(t.relation) - E.col(t.tail);
                const Vec dn = E.col(neg.head) + R.col(neg.relation) - E.col(neg.tail);
                const double sp = cfg.norm == Norm::L1 ? dp.lpNorm<1>() : dp.norm();
                const double sn = cfg.norm == Norm::L1 ? dn.lpNorm<1>() : dn.norm();
                const double l = margin_loss(cfg.margin, sp, sn);
                epoch_loss += l;
                if (l <= 0.0) continue;
                const Vec gp = detail::norm_grad(dp, cfg.norm);
                const Vec gn = detail::norm_grad(dn, cfg.norm);
                gE.col(t.head) += gp;
                gR.col(t.relation) += gp;
                gE.col(t.tail) -= gp;
                gE.col(neg.head) -= gn;
                gR.col(neg.relation) -= gn;
                gE.col(neg.tail) += gn;
            }
            E -= cfg.lr * gE;
            R -= cfg.lr * gR;
        }
        detail::normalize_columns(E);
        res.loss_trace.push_back(cfg.exact_loss ? expected_margin_loss(res.table, triples, cfg.margin, cfg.norm)
                                                : epoch_loss / static_cast<double>(triples.size()));
    }
    return res;
}

// Rank (1-based) of the true tail among all entities under transe_score.
inline std::size_t tail_rank(const EmbeddingTable& table, const Triple& t, Norm norm = Norm::L1) {
    const double truth = transe_score(table.entity(t.head), table.relation(t.relation), table.entity(t.tail), norm);
    std::size_t rank = 1;
    for (Eigen::Index e = 0; e < table.entities().cols(); ++e) {
        if (static_cast<EntityId>(e) == t.tail) continue;
        if (transe_score(table.entity(t.head), table.relation(t.relation), table.entities().col(e), norm) < truth)
            ++rank;
    }
    return rank;
}

// `word v1 ... v_dim` per line; words are stored lowercased.
inline std::unordered_map<std::string, Vec> load_word_vectors(std::istream& in, std::size_t dim) {
    std::unordered_map<std::string, Vec> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        std::vector<double> vals;
        std::string tok;
        while (ss >> tok) {
            char* endp = nullptr;
            const double v = std::strtod(tok.c_str(), &endp);
            if (endp == tok.c_str() || *endp != '\0')
                throw DataError("word vectors line " + std::to_string(lineno) + ": bad number '" + tok + "'");
            vals.push_back(v);
        }
        if (vals.size() != dim)
            throw DataError("word vectors line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                            " values, got " + std::to_string(vals.size()));
        out[to_lower(word)] = Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(dim));
    }
    return out;
}

namespace detail {

inline void write_vec_line(std::ostream& out, const std::string& token, const Eigen::Ref<const Vec>& v) {
    out << token;
    char buf[40];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, " %.17g", v[i]);
        out << buf;
    }
    out << '\n';
}

// Splits `token with spaces v1 ... v_dim` from the right.
inline std::pair<std::string, Vec> read_vec_line(const std::string& line, std::size_t dim, std::size_t lineno) {
    std::string_view sv(line);
    std::size_t pos = sv.size();
    Vec v(static_cast<Eigen::Index>(dim));
    for (std::size_t k = dim; k-- > 0;) {
        const auto sp = pos == 0 ? std::string_view::npos : sv.rfind(' ', pos - 1);
        if (sp == std::string_view::npos)
            throw DataError("embeddings line " + std::to_string(lineno) + ": too few values");
        const std::string num(sv.substr(sp + 1, pos - sp - 1));
        char* endp = nullptr;
        v[static_cast<Eigen::Index>(k)] = std::strtod(num.c_str(), &endp);
        if (num.empty() || *endp != '\0')
            throw DataError("embeddings line " + std::to_string(lineno) + ": bad number '" + num + "'");
        pos = sp;
    }
    if (pos == 0) throw DataError("embeddings line " + std::to_string(lineno) + ": missing token");
    return {std::string(sv.substr(0, pos)), v};
}

} // namespace detail

// Text container: `#dim`, `#oov_seed`, then `#entities`, `#relations` and
// `#words` sections of `token <dim floats>` lines.
inline void save_embeddings(std::ostream& out, const EmbeddingTable& table, const KnowledgeGraph& kg) {
    out << "#dim " << table.dim() << '\n' << "#oov_seed " << table.oov_seed() << '\n' << "#entities\n";
    for (EntityId e = 0; e < kg.num_entities(); ++e) detail::write_vec_line(out, kg.entity_name(e), table.entity(e));
    out << "#relations\n";
    for (RelationId r = 0; r < kg.num_relations(); ++r)
        detail::write_vec_line(out, kg.relation_name(r), table.relation(r));
    out << "#words\n";
    std::vector<std::string> words;
    for (const auto& [w, v] : table.words()) words.push_back(w);
    std::sort(words.begin(), words.end());
    for (const auto& w : words) detail::write_vec_line(out, w, table.words().at(w));
}

inline EmbeddingTable load_embeddings(std::istream& in, const KnowledgeGraph& kg) {
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    std::uint64_t oov_seed = 0;
    enum { None, Ents, Rels, Words } section = None;
    std::optional<EmbeddingTable> table;
    std::vector<char> seen_e(kg.num_entities(), 0), seen_r(kg.num_relations(), 0);
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("#dim ", 0) == 0) {
            dim = std::stoul(line.substr(5));
            continue;
        }
        if (line.rfind("#oov_seed ", 0) == 0) {
            oov_seed = std::stoull(line.substr(10));
            continue;
        }
        if (line == "#entities" || line == "#relations" || line == "#words") {
            if (dim == 0) throw DataError("embeddings: section before #dim header");
            if (!table) table.emplace(dim, kg.num_entities(), kg.num_relations(), oov_seed);
            section = line == "#entities" ? Ents : line == "#relations" ? Rels : Words;
            continue;
        }
        if (section == None) throw DataError("embeddings line " + std::to_string(lineno) + ": data outside a section");
        auto [tok, v] = detail::read_vec_line(line, dim, lineno);
        if (section == Ents) {
            auto id = kg.entity(tok);
            if (!id) throw DataError("embeddings line " + std::to_string(lineno) + ": unknown entity '" + tok + "'");
            table->entities().col(*id) = v;
            seen_e[*id] = 1;
        } else if (section == Rels) {
            auto id = kg.relation(tok);
            if (!id) throw DataError("embeddings line " + std::to_string(lineno) + ": unknown relation '" + tok + "'");
            table->relations().col(*id) = v;
            seen_r[*id] = 1;
        } else {
            table->set_word(tok, std::move(v));
        }
    }
    if (!table) throw DataError("embeddings: no sections found");
    for (EntityId e = 0; e < seen_e.size(); ++e)
        if (!seen_e[e]) throw DataError("embeddings: missing vector for entity '" + kg.entity_name(e) + "'");
    for (RelationId r = 0; r < seen_r.size(); ++r)
        if (!seen_r[r]) throw DataError("embeddings: missing vector for relation '" + kg.relation_name(r) + "'");
    return std::move(*table);
}

struct DomainMap {
    Mat W;
    std::optional<Vec> bias;
};

struct Anchor {
    Vec source;
    Vec target;
};

// Regularized least squares for W minimizing sum ||W src + b - tgt||^2 +
// ridge ||W||_F^2. The bias, when fitted, is not regularized.
inline DomainMap fit_domain_map(const std::vector<Anchor>& anchors, double ridge, bool fit_bias = false) {
    if (anchors.empty()) throw DataError("fit_domain_map: no anchors");
    if (ridge < 0) throw ConfigError("fit_domain_map: ridge must be non-negative");
    const auto dim = anchors.front().source.size();
    const auto n = static_cast<Eigen::Index>(anchors.size());
    const Eigen::Index rows = dim + (fit_bias ? 1 : 0);
    Mat S(rows, n), T(dim, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& a = anchors[static_cast<std::size_t>(k)];
        if (a.source.size() != dim || a.target.size() != dim)
            throw DataError("fit_domain_map: anchor dimension mismatch");
        S.col(k).head(dim) = a.source;
        if (fit_bias) S(dim, k) = 1.0;
        T.col(k) = a.target;
    }
    Mat Waug; // dim x rows
    if (ridge == 0.0) {
        Eigen::ColPivHouseholderQR<Mat> qr(S.transpose());
        if (qr.rank() < rows)
            throw DataError("fit_domain_map: under-determined system (rank " + std::to_string(qr.rank()) + " < " +
                            std::to_string(rows) + "); add anchors or use ridge > 0");
        Waug = qr.solve(T.transpose()).transpose();
    } else {
        Mat G = S * S.transpose();
        for (Eigen::Index i = 0; i < dim; ++i) G(i, i) += ridge;
        Waug = G.ldlt().solve(S * T.transpose()).transpose();
    }
    DomainMap m;
    m.W = Waug.leftCols(dim);
    if (fit_bias) m.bias = Waug.col(dim);
    if (!m.W.allFinite() || (m.bias && !m.bias->allFinite())) throw DataError("fit_domain_map: non-finite solution");
    return m;
}

// Entities map affinely (W e + b); relations are translations and map
// linearly (W r), which keeps h + r = t intact. Word vectors are untouched.
inline EmbeddingTable apply_domain_map(const DomainMap& map, const EmbeddingTable& table) {
    const auto dim = static_cast<Eigen::Index>(table.dim());
    if (map.W.rows() != dim || map.W.cols() != dim) throw DataError("apply_domain_map: dimension mismatch");
    if (map.bias && map.bias->size() != dim) throw DataError("apply_domain_map: bias dimension mismatch");
    EmbeddingTable out = table;
    out.entities() = map.W * table.entities();
    if (map.bias) out.entities().colwise() += *map.bias;
    out.relations() = map.W * table.relations();
    return out;
}

} // namespace kgnli
