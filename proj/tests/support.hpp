// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// Fixtures and independent oracles shared by the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kgnli/embedding.hpp"
#include "kgnli/hrpe.hpp"
#include "kgnli/kg_store.hpp"
#include "kgnli/phl.hpp"
#include "kgnli/rng.hpp"

namespace kgnli::testing {

inline KnowledgeGraph make_kg(const std::vector<std::array<std::string, 3>>& triples) {
    KnowledgeGraph::Builder b;
    for (const auto& t : triples) b.add(t[0], t[1], t[2]);
    return std::move(b).build();
}

// The premise facts behind the four example rows of the movie question.
inline KnowledgeGraph kid_millions_kg() {
    return make_kg({
        {"Kid Millions", "starred_actors", "Eddie Cantor"},
        {"Thank Your Lucky Stars", "starred_actors", "Eddie Cantor"},
        {"Thank Your Lucky Stars", "directed_by", "David Butler"},
        {"Kid Millions", "release_year", "1934"},
        {"Imitation of Life", "release_year", "1934"},
        {"Imitation of Life", "directed_by", "Douglas Sirk"},
        {"Les Miserables", "release_year", "1934"},
        {"Les Miserables", "directed_by", "Tom Hooper"},
        {"Maniac", "release_year", "1934"},
        {"Maniac", "directed_by", "Franck Khalfoun"},
    });
}

inline Question kid_millions_question() {
    Question q;
    q.id = "q0000001";
    q.text = "Which person directed the films acted by the actors in [Kid Millions]?";
    q.answers = {"David Butler"};
    q.hop = 3;
    return q;
}

inline KnowledgeGraph triangle_kg() { return make_kg({{"a", "r1", "b"}, {"b", "r2", "c"}, {"a", "r3", "c"}}); }

inline KnowledgeGraph random_kg(Rng& rng, std::size_t max_entities = 50, std::size_t max_triples = 150,
                                std::size_t relations = 4) {
    const std::size_t n = 2 + rng.below(max_entities - 1);
    const std::size_t m = 1 + rng.below(max_triples);
    KnowledgeGraph::Builder b;
    for (std::size_t k = 0; k < m; ++k) {
        const auto h = rng.below(n), t = rng.below(n);
        b.add("e" + std::to_string(h), "r" + std::to_string(rng.below(relations)), "e" + std::to_string(t));
    }
    return std::move(b).build();
}

// Step sequences as plain tuples so the oracle does not reuse Path.
using StepKey = std::vector<std::tuple<RelationId, int, EntityId>>;

inline StepKey key_of(const Path& p) {
    StepKey k;
    for (const auto& s : p.steps) k.emplace_back(s.relation, static_cast<int>(s.direction), s.neighbor);
    return k;
}

// Brute force over the raw triple list: every walk of 1..max_len triples
// from src that never revisits an entity and ends at dst.
inline std::set<StepKey> brute_force_paths(const KnowledgeGraph& kg, EntityId src, EntityId dst, std::size_t max_len) {
    std::set<StepKey> out;
    if (src == dst) return out;
    StepKey cur;
    std::vector<EntityId> visited{src};
    auto rec = [&](auto&& self, EntityId u) -> void {
        if (cur.size() == max_len) return;
        for (const auto& t : kg.triples()) {
            for (int dir = 0; dir < 2; ++dir) {
                const EntityId from = dir == 0 ? t.head : t.tail;
                const EntityId to = dir == 0 ? t.tail : t.head;
                if (from != u) continue;
                if (std::find(visited.begin(), visited.end(), to) != visited.end()) continue;
                cur.emplace_back(t.relation, dir, to);
                if (to == dst) {
                    out.insert(cur);
                } else {
                    visited.push_back(to);
                    self(self, to);
                    visited.pop_back();
                }
                cur.pop_back();
            }
        }
    };
    rec(rec, src);
    return out;
}

// Same oracle, all destinations at once: dst -> simple walks of 1..max_len.
inline std::map<EntityId, std::set<StepKey>> brute_force_from(const KnowledgeGraph& kg, EntityId src,
                                                              std::size_t max_len) {
    std::map<EntityId, std::set<StepKey>> out;
    StepKey cur;
    std::vector<EntityId> visited{src};
    auto rec = [&](auto&& self, EntityId u) -> void {
        if (cur.size() == max_len) return;
        for (const auto& t : kg.triples()) {
            for (int dir = 0; dir < 2; ++dir) {
                const EntityId from = dir == 0 ? t.head : t.tail;
                const EntityId to = dir == 0 ? t.tail : t.head;
                if (from != u || std::find(visited.begin(), visited.end(), to) != visited.end()) continue;
                cur.emplace_back(t.relation, dir, to);
                out[to].insert(cur);
                visited.push_back(to);
                self(self, to);
                visited.pop_back();
                cur.pop_back();
            }
        }
    };
    rec(rec, src);
    return out;
}

inline KnowledgeGraph chain_kg(std::size_t n = 20) {
    KnowledgeGraph::Builder b;
    for (std::size_t i = 0; i + 1 < n; ++i) b.add("n" + std::to_string(i), "next", "n" + std::to_string(i + 1));
    return std::move(b).build();
}

// Countries with capitals, continents and languages; 1-hop capital questions.
struct Geography {
    std::vector<std::array<std::string, 3>> triples;
    std::vector<Question> train;
    Question italy;
};

inline Geography geography() {
    const std::vector<std::array<std::string, 4>> rows = {
        {"Italy", "Rome", "Europe", "Italian"},        {"France", "Paris", "Europe", "French"},
        {"Spain", "Madrid", "Europe", "Spanish"},      {"Germany", "Berlin", "Europe", "German"},
        {"Austria", "Vienna", "Europe", "German"},     {"Portugal", "Lisbon", "Europe", "Portuguese"},
        {"Japan", "Tokyo", "Asia", "Japanese"},        {"China", "Beijing", "Asia", "Mandarin"},
        {"India", "New Delhi", "Asia", "Hindi"},       {"Egypt", "Cairo", "Africa", "Arabic"},
        {"Kenya", "Nairobi", "Africa", "Swahili"},     {"Peru", "Lima", "South America", "Spanish"},
        {"Chile", "Santiago", "South America", "Spanish"}, {"Canada", "Ottawa", "North America", "English"},
        {"Mexico", "Mexico City", "North America", "Spanish"}, {"Norway", "Oslo", "Europe", "Norwegian"},
        {"Sweden", "Stockholm", "Europe", "Swedish"},  {"Greece", "Athens", "Europe", "Greek"},
        {"Brazil", "Brasilia", "South America", "Portuguese"}, {"Nigeria", "Abuja", "Africa", "English"},
    };
    Geography g;
    std::size_t k = 0;
    for (const auto& r : rows) {
        g.triples.push_back({r[0], "capital", r[1]});
        g.triples.push_back({r[0], "continent", r[2]});
        g.triples.push_back({r[0], "official_language", r[3]});
        Question q;
        q.id = "geo" + std::to_string(1000 + k++);
        q.text = "what is the capital of [" + r[0] + "]";
        q.answers = {r[1]};
        q.hop = 1;
        if (r[0] == "Italy")
            g.italy = q;
        else
            g.train.push_back(q);
    }
    return g;
}

// Word-only instance with `paths` premise paths of `len` tokens each over a
// tiny vocabulary; words embed through the table's seeded OOV vectors.
inline PHLInstance random_instance(Rng& rng, std::size_t paths, std::size_t len, std::size_t hyp_len, int label) {
    static const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"};
    PHLInstance inst;
    inst.question_id = "r";
    inst.label = label;
    for (std::size_t j = 0; j < paths; ++j) {
        TokenSeq p;
        for (std::size_t k = 0; k < len; ++k) p.push_back(Token::word(vocab[rng.below(vocab.size())]));
        inst.premise_paths.push_back(std::move(p));
    }
    for (std::size_t k = 0; k < hyp_len; ++k) inst.hypothesis.push_back(Token::word(vocab[rng.below(vocab.size())]));
    return inst;
}

// Parameters drawn N(0, scale^2) everywhere, biases included, so no gate
// sits in a degenerate regime during gradient checks.
inline HRPEParams random_params(Rng& rng, Eigen::Index dim, Eigen::Index hidden, double scale = 0.5) {
    auto p = HRPEParams::zeros(dim, hidden);
    for (auto& t : p.tensors())
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = scale * rng.normal();
    return p;
}

struct GradCheck {
    std::string worst_tensor;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

// Central differences with step h for every scalar of every tensor; relative
// error |a - n| / max(|a|, |n|, floor).
inline GradCheck gradient_check(const HRPEParams& params, const EmbeddedInstance& e, int label, double h = 1e-5,
                                double floor = 1e-6) {
    HRPEParams grad = HRPEParams::zeros_like(params);
    const auto tr = forward(params, e, label);
    backward(params, e, tr, 1.0, grad);
    HRPEParams probe = params;
    auto pt = probe.tensors();
    const auto gt = grad.tensors();
    GradCheck out;
    for (std::size_t k = 0; k < pt.size(); ++k) {
        for (Eigen::Index i = 0; i < pt[k].size(); ++i) {
            const double orig = pt[k].data[i];
            pt[k].data[i] = orig + h;
            const double up = forward(probe, e, label).loss;
            pt[k].data[i] = orig - h;
            const double down = forward(probe, e, label).loss;
            pt[k].data[i] = orig;
            const double numeric = (up - down) / (2 * h);
            const double analytic = gt[k].data[i];
            const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
            if (rel > out.max_rel_err) {
                out.max_rel_err = rel;
                out.worst_tensor = pt[k].name;
            }
            ++out.checked;
        }
    }
    return out;
}

// Separable by construction: label-0 premises mention "yes", label-1
// premises mention "no"; every other token is noise.
inline std::vector<PHLInstance> separable_instances(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<PHLInstance> out;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        auto inst = random_instance(rng, 1 + rng.below(3), 3, 3, label);
        inst.question_id = "s" + std::to_string(i);
        inst.premise_paths[rng.below(inst.premise_paths.size())][1] = Token::word(label == 0 ? "yes" : "no");
        out.push_back(std::move(inst));
    }
    return out;
}

} // namespace kgnli::testing
