// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// Mention detection (bracketed spans or gazetteer longest-match) and
// Jaro-Winkler linking of mentions to KG entities.

#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgnli/error.hpp"
#include "kgnli/kg_store.hpp"

namespace kgnli {

inline double jaro(std::string_view s1, std::string_view s2) {
    if (s1 == s2) return 1.0;
    const std::size_t n1 = s1.size(), n2 = s2.size();
    if (n1 == 0 || n2 == 0) return 0.0;
    const std::size_t half = std::max(n1, n2) / 2;
    const std::size_t window = half > 0 ? half - 1 : 0;

    std::vector<char> m1(n1, 0), m2(n2, 0);
    std::size_t matches = 0;
    for (std::size_t i = 0; i < n1; ++i) {
        const std::size_t lo = i > window ? i - window : 0;
        const std::size_t hi = std::min(n2, i + window + 1);
        for (std::size_t j = lo; j < hi; ++j) {
            if (!m2[j] && s1[i] == s2[j]) {
                m1[i] = m2[j] = 1;
                ++matches;
                break;
            }
        }
    }
    if (matches == 0) return 0.0;

    std::size_t half_transpositions = 0;
    for (std::size_t i = 0, k = 0; i < n1; ++i) {
        if (!m1[i]) continue;
        while (!m2[k]) ++k;
        if (s1[i] != s2[k]) ++half_transpositions;
        ++k;
    }
    const double m = static_cast<double>(matches);
    const double t = static_cast<double>(half_transpositions) / 2.0;
    return (m / static_cast<double>(n1) + m / static_cast<double>(n2) + (m - t) / m) / 3.0;
}

inline double jaro_winkler(std::string_view s1, std::string_view s2, double prefix_scale = 0.1,
                           std::size_t max_prefix = 4) {
    if (prefix_scale < 0.0 || prefix_scale > 0.25)
        throw ConfigError("jaro_winkler: prefix_scale must lie in [0, 0.25]");
    const double j = jaro(s1, s2);
    std::size_t prefix = 0;
    const std::size_t limit = std::min({max_prefix, s1.size(), s2.size()});
    while (prefix < limit && s1[prefix] == s2[prefix]) ++prefix;
    return std::min(1.0, j + static_cast<double>(prefix) * prefix_scale * (1.0 - j));
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

struct Mention {
    std::string surface;
    std::size_t start = 0;
    std::size_t end = 0;
    std::optional<EntityId> linked;
    std::optional<double> score;
};

struct LinkerConfig {
    double threshold = 0.85;
    double prefix_scale = 0.1;
    std::size_t max_prefix = 4;
};

struct Link {
    EntityId entity;
    double score;
};

// Case-insensitive lexicon over KG entity names.
class Gazetteer {
  public:
    explicit Gazetteer(const KnowledgeGraph& kg) : kg_(&kg) {
        const auto& names = kg.entity_names();
        lowered_.reserve(names.size());
        for (EntityId e = 0; e < names.size(); ++e) {
            lowered_.push_back(to_lower(names[e]));
            exact_.emplace(lowered_.back(), e); // keeps the lowest id on collisions
            max_words_ = std::max(max_words_, word_count(lowered_.back()));
        }
    }

    const KnowledgeGraph& kg() const { return *kg_; }

    std::optional<EntityId> exact(std::string_view lowered) const {
        auto it = exact_.find(std::string(lowered));
        if (it == exact_.end()) return std::nullopt;
        return it->second;
    }

    // Argmax Jaro-Winkler over all entity names; ties go to the lower id.
    std::optional<Link> link(std::string_view mention, const LinkerConfig& cfg = {}) const {
        const std::string q = to_lower(mention);
        if (auto e = exact(q)) return Link{*e, 1.0};
        std::optional<Link> best;
        for (EntityId e = 0; e < lowered_.size(); ++e) {
            const double s = jaro_winkler(q, lowered_[e], cfg.prefix_scale, cfg.max_prefix);
            if (!best || s > best->score) best = Link{e, s};
        }
        if (!best || best->score < cfg.threshold) return std::nullopt;
        return best;
    }

    // Bracketed `[...]` spans are taken verbatim when present; otherwise the
    // leftmost-longest gazetteer matches on word boundaries.
    std::vector<Mention> extract(std::string_view question, const LinkerConfig& cfg = {}) const {
        std::vector<Mention> out;
        for (std::size_t pos = 0; pos < question.size();) {
            const auto open = question.find('[', pos);
            if (open == std::string_view::npos) break;
            const auto close = question.find(']', open + 1);
            if (close == std::string_view::npos) break;
            const auto inner = question.substr(open + 1, close - open - 1);
            const auto t = detail::trim(inner);
            if (!t.empty()) {
                Mention m;
                m.surface = std::string(t);
                m.start = static_cast<std::size_t>(t.data() - question.data());
                m.end = m.start + t.size();
                if (auto l = link(t, cfg)) {
                    m.linked = l->entity;
                    m.score = l->score;
                }
                out.push_back(std::move(m));
            }
            pos = close + 1;
        }
        if (!out.empty()) return out;

        const std::string lowered = to_lower(question);
        std::vector<std::size_t> starts, ends;
        for (std::size_t i = 0; i < lowered.size(); ++i) {
            if (!is_word(lowered[i])) continue;
            if (i == 0 || !is_word(lowered[i - 1])) starts.push_back(i);
            if (i + 1 == lowered.size() || !is_word(lowered[i + 1])) ends.push_back(i + 1);
        }
        std::size_t next_free = 0;
        for (std::size_t si = 0; si < starts.size(); ++si) {
            const std::size_t s = starts[si];
            if (s < next_free) continue;
            const std::size_t last = std::min(ends.size(), si + max_words_);
            for (std::size_t ei = last; ei-- > si;) {
                const std::size_t e = ends[ei];
                auto id = exact(std::string_view(lowered).substr(s, e - s));
                if (!id) continue;
                Mention m;
                m.surface = std::string(question.substr(s, e - s));
                m.start = s;
                m.end = e;
                m.linked = *id;
                m.score = 1.0;
                out.push_back(std::move(m));
                next_free = e;
                break;
            }
        }
        return out;
    }

  private:
    static bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-'; }

    static std::size_t word_count(std::string_view s) {
        std::size_t n = 0;
        bool in = false;
        for (char c : s) {
            const bool w = is_word(c);
            if (w && !in) ++n;
            in = w;
        }
        return std::max<std::size_t>(n, 1);
    }

    const KnowledgeGraph* kg_;
    std::vector<std::string> lowered_;
    std::unordered_map<std::string, EntityId> exact_;
    std::size_t max_words_ = 1;
};

inline std::vector<Mention> extract_entities(std::string_view question, const KnowledgeGraph& kg,
                                             const LinkerConfig& cfg = {}) {
    return Gazetteer(kg).extract(question, cfg);
}

inline std::optional<Link> link_entity(std::string_view mention, const KnowledgeGraph& kg,
                                       const LinkerConfig& cfg = {}) {
    return Gazetteer(kg).link(mention, cfg);
}

} // namespace kgnli
