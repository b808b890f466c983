// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// In-memory knowledge graph: interned entity/relation tables, a deduplicated
// triple set and forward/inverse adjacency. Immutable once built, so any
// number of threads may traverse it concurrently.

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kgnli/error.hpp"
#include "kgnli/rng.hpp"

namespace kgnli {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

enum class Direction : std::uint8_t { Forward = 0, Inverse = 1 };

struct Triple {
    EntityId head;
    RelationId relation;
    EntityId tail;

    friend auto operator<=>(const Triple&, const Triple&) = default;
};

// One traversal unit. A forward step from u reaches neighbor v through
// (u, relation, v); an inverse step reaches v through (v, relation, u).
struct Step {
    RelationId relation;
    EntityId neighbor;
    Direction direction;

    friend bool operator==(const Step&, const Step&) = default;
};

class StringTable {
  public:
    std::uint32_t intern(std::string_view name) {
        auto it = ids_.find(std::string(name));
        if (it != ids_.end()) return it->second;
        auto id = static_cast<std::uint32_t>(names_.size());
        names_.emplace_back(name);
        ids_.emplace(names_.back(), id);
        return id;
    }

    std::optional<std::uint32_t> find(std::string_view name) const {
        auto it = ids_.find(std::string(name));
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& name(std::uint32_t id) const { return names_.at(id); }
    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

  private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

class KnowledgeGraph;

struct Path {
    EntityId origin = 0;
    std::vector<Step> steps;

    std::size_t length() const { return steps.size(); }
    EntityId end() const { return steps.empty() ? origin : steps.back().neighbor; }

    // Entity sequence origin, n1, ..., end.
    std::vector<EntityId> entities() const {
        std::vector<EntityId> out{origin};
        for (const auto& s : steps) out.push_back(s.neighbor);
        return out;
    }

    // The underlying KG triple of step i, in stored orientation.
    Triple triple(std::size_t i) const {
        const EntityId from = i == 0 ? origin : steps[i - 1].neighbor;
        const Step& s = steps[i];
        if (s.direction == Direction::Forward) return {from, s.relation, s.neighbor};
        return {s.neighbor, s.relation, from};
    }

    friend bool operator==(const Path&, const Path&) = default;
};

// Canonical path order: length ascending, then lexicographic over
// (relation, direction, neighbor) per step.
inline bool canonical_less(const Path& a, const Path& b) {
    if (a.steps.size() != b.steps.size()) return a.steps.size() < b.steps.size();
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        const auto ka = std::tuple(a.steps[i].relation, a.steps[i].direction, a.steps[i].neighbor);
        const auto kb = std::tuple(b.steps[i].relation, b.steps[i].direction, b.steps[i].neighbor);
        if (ka != kb) return ka < kb;
    }
    return false;
}

class KnowledgeGraph {
  public:
    class Builder {
      public:
        void add(std::string_view head, std::string_view relation, std::string_view tail) {
            const EntityId h = entities_.intern(head);
            const RelationId r = relations_.intern(relation);
            const EntityId t = entities_.intern(tail);
            triples_.push_back({h, r, t});
        }

        KnowledgeGraph build() && {
            KnowledgeGraph kg;
            kg.entities_ = std::move(entities_);
            kg.relations_ = std::move(relations_);
            std::sort(triples_.begin(), triples_.end());
            triples_.erase(std::unique(triples_.begin(), triples_.end()), triples_.end());
            kg.triples_ = std::move(triples_);
            kg.fwd_.resize(kg.entities_.size());
            kg.inv_.resize(kg.entities_.size());
            for (const auto& t : kg.triples_) {
                kg.fwd_[t.head].emplace_back(t.relation, t.tail);
                kg.inv_[t.tail].emplace_back(t.relation, t.head);
            }
            for (auto& v : kg.fwd_) std::sort(v.begin(), v.end());
            for (auto& v : kg.inv_) std::sort(v.begin(), v.end());
            return kg;
        }

      private:
        StringTable entities_;
        StringTable relations_;
        std::vector<Triple> triples_;
    };

    std::size_t num_entities() const { return entities_.size(); }
    std::size_t num_relations() const { return relations_.size(); }
    std::size_t num_triples() const { return triples_.size(); }

    const std::string& entity_name(EntityId e) const {
        if (e >= entities_.size()) throw DataError("unknown entity id " + std::to_string(e));
        return entities_.name(e);
    }
    const std::string& relation_name(RelationId r) const {
        if (r >= relations_.size()) throw DataError("unknown relation id " + std::to_string(r));
        return relations_.name(r);
    }
    std::optional<EntityId> entity(std::string_view name) const { return entities_.find(name); }
    std::optional<RelationId> relation(std::string_view name) const { return relations_.find(name); }

    const std::vector<std::string>& entity_names() const { return entities_.names(); }
    const std::vector<std::string>& relation_names() const { return relations_.names(); }
    const std::vector<Triple>& triples() const { return triples_; }

    bool contains(const Triple& t) const { return std::binary_search(triples_.begin(), triples_.end(), t); }

    // (relation, tail) pairs with e as head, sorted.
    const std::vector<std::pair<RelationId, EntityId>>& out_edges(EntityId e) const { return fwd_.at(e); }
    // (relation, head) pairs with e as tail, sorted.
    const std::vector<std::pair<RelationId, EntityId>>& in_edges(EntityId e) const { return inv_.at(e); }

    // Forward and inverse adjacency of e, ordered by (relation, neighbor, direction).
    std::vector<Step> neighbors(EntityId e) const {
        check_entity(e);
        std::vector<Step> out;
        out.reserve(fwd_[e].size() + inv_[e].size());
        for (auto [r, v] : fwd_[e]) out.push_back({r, v, Direction::Forward});
        for (auto [r, v] : inv_[e]) out.push_back({r, v, Direction::Inverse});
        std::sort(out.begin(), out.end(), [](const Step& a, const Step& b) {
            return std::tuple(a.relation, a.neighbor, a.direction) < std::tuple(b.relation, b.neighbor, b.direction);
        });
        return out;
    }

    // Consecutive steps chain, every step is backed by a triple, no entity repeats.
    bool validates(const Path& p) const {
        if (p.origin >= num_entities()) return false;
        auto ents = p.entities();
        for (std::size_t i = 0; i < p.steps.size(); ++i) {
            if (p.steps[i].neighbor >= num_entities()) return false;
            if (!contains(p.triple(i))) return false;
        }
        std::sort(ents.begin(), ents.end());
        return std::adjacent_find(ents.begin(), ents.end()) == ents.end();
    }

    // Undirected shortest-path distances from a source set, up to max_depth.
    // Entities farther than max_depth are absent from the map.
    std::unordered_map<EntityId, std::size_t> distances(const std::vector<EntityId>& sources,
                                                        std::size_t max_depth) const {
        std::unordered_map<EntityId, std::size_t> dist;
        std::deque<EntityId> queue;
        for (EntityId s : sources) {
            check_entity(s);
            if (dist.emplace(s, 0).second) queue.push_back(s);
        }
        while (!queue.empty()) {
            const EntityId u = queue.front();
            queue.pop_front();
            const std::size_t d = dist[u];
            if (d == max_depth) continue;
            auto visit = [&](EntityId v) {
                if (dist.emplace(v, d + 1).second) queue.push_back(v);
            };
            for (auto [r, v] : fwd_[u]) visit(v);
            for (auto [r, v] : inv_[u]) visit(v);
        }
        return dist;
    }

    // All simple paths src -> dst of 1..max_len steps, both traversal
    // directions allowed, in canonical order, truncated to max_paths.
    std::vector<Path> enumerate_paths(EntityId src, EntityId dst, std::size_t max_len,
                                      std::size_t max_paths = 250) const {
        check_entity(src);
        check_entity(dst);
        std::vector<Path> out;
        if (src == dst || max_len == 0) return out;
        // Prune with distance-to-dst so hubs are not expanded blindly.
        const auto to_dst = distances({dst}, max_len - 1);
        std::vector<char> on_path(num_entities(), 0);
        Path cur{src, {}};
        on_path[src] = 1;
        dfs(cur, dst, max_len, to_dst, on_path, out);
        std::sort(out.begin(), out.end(), canonical_less);
        if (out.size() > max_paths) out.resize(max_paths);
        return out;
    }

    void check_entity(EntityId e) const {
        if (e >= entities_.size()) throw DataError("unknown entity id " + std::to_string(e));
    }

  private:
    void dfs(Path& cur, EntityId dst, std::size_t max_len,
             const std::unordered_map<EntityId, std::size_t>& to_dst, std::vector<char>& on_path,
             std::vector<Path>& out) const {
        const EntityId u = cur.end();
        const std::size_t remaining = max_len - cur.steps.size();
        auto extend = [&](RelationId r, EntityId v, Direction d) {
            if (on_path[v]) return;
            if (v == dst) {
                cur.steps.push_back({r, v, d});
                out.push_back(cur);
                cur.steps.pop_back();
                return;
            }
            if (remaining < 2) return;
            auto it = to_dst.find(v);
            if (it == to_dst.end() || it->second > remaining - 1) return;
            cur.steps.push_back({r, v, d});
            on_path[v] = 1;
            dfs(cur, dst, max_len, to_dst, on_path, out);
            on_path[v] = 0;
            cur.steps.pop_back();
        };
        for (auto [r, v] : fwd_[u]) extend(r, v, Direction::Forward);
        for (auto [r, v] : inv_[u]) extend(r, v, Direction::Inverse);
    }

    StringTable entities_;
    StringTable relations_;
    std::vector<Triple> triples_;
    std::vector<std::vector<std::pair<RelationId, EntityId>>> fwd_;
    std::vector<std::vector<std::pair<RelationId, EntityId>>> inv_;
};

struct KGFormat {
    char delimiter = '|';
    char comment = '#';
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace detail

// Parses one `head|relation|tail` triple per line. Blank lines and lines
// starting with the comment character are skipped; duplicates collapse.
inline KnowledgeGraph load_triples(std::istream& in, const KGFormat& fmt = {}) {
    KnowledgeGraph::Builder builder;
    std::string line;
    std::size_t lineno = 0;
    std::size_t added = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == fmt.comment) continue;
        const auto fields = detail::split(body, fmt.delimiter);
        if (fields.size() != 3)
            throw DataError("line " + std::to_string(lineno) + ": expected 3 fields, got " +
                            std::to_string(fields.size()));
        const auto h = detail::trim(fields[0]), r = detail::trim(fields[1]), t = detail::trim(fields[2]);
        if (h.empty() || r.empty() || t.empty())
            throw DataError("line " + std::to_string(lineno) + ": empty field");
        builder.add(h, r, t);
        ++added;
    }
    if (added == 0) throw DataError("knowledge graph input contains no triples");
    return std::move(builder).build();
}

inline KnowledgeGraph load_triples_file(const std::string& path, const KGFormat& fmt = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open knowledge graph file: " + path);
    return load_triples(in, fmt);
}

inline std::string summary_line(const KnowledgeGraph& kg) {
    return "entities=" + std::to_string(kg.num_entities()) + " relations=" + std::to_string(kg.num_relations()) +
           " triples=" + std::to_string(kg.num_triples());
}

// Thrown when a question has no gold answer within reach; callers skip it.
class UnanswerableQuestion : public DataError {
  public:
    explicit UnanswerableQuestion(const std::string& what) : DataError(what) {}
};

// Gold answers reachable within `hop` steps of any query entity, padded with
// uniformly sampled non-gold entities at exactly `hop` distance. Result is
// sorted by entity id and never contains a query entity.
inline std::vector<EntityId> candidate_answers(const KnowledgeGraph& kg, const std::vector<EntityId>& query_entities,
                                               std::size_t hop, std::size_t n, const std::vector<EntityId>& gold,
                                               std::uint64_t rng_seed) {
    if (hop == 0) throw DataError("candidate_answers: hop must be >= 1");
    const auto dist = kg.distances(query_entities, hop);
    auto is_query = [&](EntityId e) {
        return std::find(query_entities.begin(), query_entities.end(), e) != query_entities.end();
    };
    std::vector<EntityId> reachable_gold;
    for (EntityId g : gold) {
        if (is_query(g)) continue;
        auto it = dist.find(g);
        if (it != dist.end() && it->second >= 1) reachable_gold.push_back(g);
    }
    std::sort(reachable_gold.begin(), reachable_gold.end());
    reachable_gold.erase(std::unique(reachable_gold.begin(), reachable_gold.end()), reachable_gold.end());
    if (reachable_gold.empty()) throw UnanswerableQuestion("no gold answer within " + std::to_string(hop) + " hops");
    if (reachable_gold.size() > n)
        throw DataError("candidate_answers: " + std::to_string(reachable_gold.size()) +
                        " reachable gold answers exceed n=" + std::to_string(n));

    std::vector<EntityId> pool;
    for (const auto& [e, d] : dist) {
        if (d != hop || is_query(e)) continue;
        if (std::binary_search(reachable_gold.begin(), reachable_gold.end(), e)) continue;
        if (std::find(gold.begin(), gold.end(), e) != gold.end()) continue;
        pool.push_back(e);
    }
    std::sort(pool.begin(), pool.end());

    // Partial Fisher-Yates over the sorted pool.
    const std::size_t want = std::min(n - reachable_gold.size(), pool.size());
    Rng rng(rng_seed);
    for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<EntityId> out = reachable_gold;
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
    std::sort(out.begin(), out.end());
    return out;
}

// Every non-query entity exactly `hop` steps away, the same ring training
// distractors are drawn from; used when no gold set exists.
inline std::vector<EntityId> reachable_candidates(const KnowledgeGraph& kg, const std::vector<EntityId>& query_entities,
                                                  std::size_t hop) {
    if (hop == 0) throw DataError("reachable_candidates: hop must be >= 1");
    std::vector<EntityId> out;
    for (const auto& [e, d] : kg.distances(query_entities, hop))
        if (d == hop && std::find(query_entities.begin(), query_entities.end(), e) == query_entities.end()) out.push_back(e);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace kgnli
