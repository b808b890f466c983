// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// Seeded movie-style knowledge graph with templated 1-, 2- and 3-hop
// questions whose answers are computed by following each template's
// relation chain.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kgnli/error.hpp"
#include "kgnli/kg_store.hpp"
#include "kgnli/phl.hpp"
#include "kgnli/rng.hpp"

namespace kgnli::synthetic {

enum class Kind { Movie, Actor, Director, Writer, Year, Language, Genre };

struct ChainStep {
    const char* relation;
    Direction direction;
};

struct QuestionTemplate {
    Kind start;
    const char* text; // "{e}" marks the bracketed topic entity
    std::vector<ChainStep> chain;
};

inline const std::vector<QuestionTemplate>& one_hop_templates() {
    constexpr auto F = Direction::Forward;
    constexpr auto I = Direction::Inverse;
    static const std::vector<QuestionTemplate> t = {
        {Kind::Movie, "who directed [{e}]", {{"directed_by", F}}},
        {Kind::Movie, "who wrote [{e}]", {{"written_by", F}}},
        {Kind::Movie, "who acted in [{e}]", {{"starred_actors", F}}},
        {Kind::Movie, "when was [{e}] released", {{"release_year", F}}},
        {Kind::Movie, "what genre is [{e}]", {{"has_genre", F}}},
        {Kind::Actor, "which films star [{e}]", {{"starred_actors", I}}},
        {Kind::Director, "which films were directed by [{e}]", {{"directed_by", I}}},
        {Kind::Writer, "which films were written by [{e}]", {{"written_by", I}}},
    };
    return t;
}

inline const std::vector<QuestionTemplate>& two_hop_templates() {
    constexpr auto F = Direction::Forward;
    constexpr auto I = Direction::Inverse;
    static const std::vector<QuestionTemplate> t = {
        {Kind::Actor, "which person directed the films starred by [{e}]", {{"starred_actors", I}, {"directed_by", F}}},
        {Kind::Actor, "who wrote the films starred by [{e}]", {{"starred_actors", I}, {"written_by", F}}},
        {Kind::Actor, "what genres are the films starred by [{e}]", {{"starred_actors", I}, {"has_genre", F}}},
        {Kind::Actor, "when were the films starred by [{e}] released", {{"starred_actors", I}, {"release_year", F}}},
        {Kind::Actor, "what languages are the films starred by [{e}] in", {{"starred_actors", I}, {"in_language", F}}},
        {Kind::Actor, "who co-starred with [{e}]", {{"starred_actors", I}, {"starred_actors", F}}},
        {Kind::Director, "who acted in the films directed by [{e}]", {{"directed_by", I}, {"starred_actors", F}}},
        {Kind::Director, "who wrote the films directed by [{e}]", {{"directed_by", I}, {"written_by", F}}},
        {Kind::Director, "what genres are the films directed by [{e}]", {{"directed_by", I}, {"has_genre", F}}},
        {Kind::Writer, "who acted in the films written by [{e}]", {{"written_by", I}, {"starred_actors", F}}},
        {Kind::Writer, "which person directed the films written by [{e}]", {{"written_by", I}, {"directed_by", F}}},
        {Kind::Movie, "which films share actors with [{e}]", {{"starred_actors", F}, {"starred_actors", I}}},
        {Kind::Movie, "which films have the same director as [{e}]", {{"directed_by", F}, {"directed_by", I}}},
        {Kind::Movie, "which films have the same writer as [{e}]", {{"written_by", F}, {"written_by", I}}},
    };
    return t;
}

inline const std::vector<QuestionTemplate>& three_hop_templates() {
    constexpr auto F = Direction::Forward;
    constexpr auto I = Direction::Inverse;
    static const std::vector<QuestionTemplate> t = {
        {Kind::Movie, "which person directed the films acted by the actors in [{e}]",
         {{"starred_actors", F}, {"starred_actors", I}, {"directed_by", F}}},
        {Kind::Movie, "who wrote the films acted by the actors in [{e}]",
         {{"starred_actors", F}, {"starred_actors", I}, {"written_by", F}}},
        {Kind::Movie, "what genres are the films acted by the actors in [{e}]",
         {{"starred_actors", F}, {"starred_actors", I}, {"has_genre", F}}},
        {Kind::Movie, "when were the films acted by the actors in [{e}] released",
         {{"starred_actors", F}, {"starred_actors", I}, {"release_year", F}}},
        {Kind::Movie, "who acted in the films directed by the director of [{e}]",
         {{"directed_by", F}, {"directed_by", I}, {"starred_actors", F}}},
        {Kind::Movie, "who wrote the films directed by the director of [{e}]",
         {{"directed_by", F}, {"directed_by", I}, {"written_by", F}}},
        {Kind::Movie, "who directed the films written by the writer of [{e}]",
         {{"written_by", F}, {"written_by", I}, {"directed_by", F}}},
        {Kind::Movie, "who acted in the films written by the writer of [{e}]",
         {{"written_by", F}, {"written_by", I}, {"starred_actors", F}}},
        {Kind::Actor, "which films were directed by the directors of the films starred by [{e}]",
         {{"starred_actors", I}, {"directed_by", F}, {"directed_by", I}}},
        {Kind::Actor, "which films feature the co-stars of [{e}]",
         {{"starred_actors", I}, {"starred_actors", F}, {"starred_actors", I}}},
    };
    return t;
}

struct Config {
    std::size_t entities = 200;
    std::size_t one_hop = 0;
    std::size_t two_hop = 300;
    std::size_t three_hop = 300;
    std::size_t max_gold = 3;
    double test_fraction = 0.2;
    std::uint64_t seed = 7;
};

struct Fixture {
    std::vector<std::array<std::string, 3>> triples;
    std::vector<Question> train;
    std::vector<Question> test;

    KnowledgeGraph graph() const {
        KnowledgeGraph::Builder b;
        for (const auto& t : triples) b.add(t[0], t[1], t[2]);
        return std::move(b).build();
    }
};

namespace detail {

inline const std::vector<std::string>& first_names() {
    static const std::vector<std::string> v = {
        "Ada",    "Boris", "Clara", "Dmitri", "Elena",  "Felix", "Greta",  "Hugo",   "Ingrid", "Jonas",
        "Karin",  "Lucas", "Mira",  "Nils",   "Olga",   "Pavel", "Quinn",  "Rosa",   "Stefan", "Tilda",
        "Ulrich", "Vera",  "Walt",  "Xenia",  "Yusuf",  "Zora",  "Anton",  "Bianca", "Cyril",  "Dora",
        "Emil",   "Flora", "Gideon", "Hanna", "Igor",   "Julia", "Kasper", "Lena",   "Marek",  "Nora"};
    return v;
}

inline const std::vector<std::string>& last_names() {
    static const std::vector<std::string> v = {
        "Abbott",  "Brandt", "Castell", "Dorsey", "Eckert",  "Falk",   "Gruber", "Halloway", "Ibsen",
        "Jansen",  "Kovac",  "Lindqvist", "Moreau", "Novak", "Olsen",  "Petrov", "Quill",    "Reyes",
        "Sorensen", "Tanaka", "Ulman",  "Varga",  "Weller",  "Xiong",  "Yilmaz", "Zeller",   "Arden",
        "Bishop",  "Crane",  "Delacroix", "Ellis", "Fontaine", "Garnier", "Holt", "Ivers",   "Jaeger"};
    return v;
}

inline const std::vector<std::string>& title_adjectives() {
    static const std::vector<std::string> v = {
        "Silent",  "Crimson", "Distant", "Golden", "Hidden", "Broken",  "Frozen",  "Burning", "Quiet",
        "Endless", "Fallen",  "Hollow",  "Iron",   "Lonely", "Midnight", "Northern", "Pale",   "Restless",
        "Scarlet", "Secret",  "Shattered", "Stolen", "Sunken", "Twisted", "Velvet",  "Wandering", "Wild"};
    return v;
}

inline const std::vector<std::string>& title_nouns() {
    static const std::vector<std::string> v = {
        "Harbor", "Garden", "Empire", "Horizon", "Letter", "Mirror",  "Orchard", "Passage", "River",
        "Signal", "Summer", "Tower",  "Valley",  "Voyage", "Witness", "Winter",  "Bridge",  "Crossing",
        "Desert", "Echo",   "Frontier", "Harvest", "Island", "Journey", "Lantern", "Meadow", "Storm"};
    return v;
}

inline const std::vector<std::string>& languages() {
    static const std::vector<std::string> v = {"English", "French",  "German", "Italian", "Spanish",
                                               "Japanese", "Swedish", "Hindi",  "Russian", "Korean"};
    return v;
}

inline const std::vector<std::string>& genres() {
    static const std::vector<std::string> v = {"Drama",   "Comedy",  "Thriller", "Western", "Horror",  "Musical",
                                               "Romance", "Mystery", "Fantasy",  "Crime",   "Adventure", "Noir",
                                               "Satire",  "Biography", "War",    "Sport"};
    return v;
}

inline std::vector<std::string> unique_names(Rng& rng, std::size_t n, const std::vector<std::string>& a,
                                             const std::vector<std::string>& b, std::set<std::string>& used) {
    std::vector<std::string> out;
    if (n > a.size() * b.size()) throw ConfigError("synthetic: name pool too small");
    while (out.size() < n) {
        std::string s = a[rng.below(a.size())] + " " + b[rng.below(b.size())];
        if (used.insert(s).second) out.push_back(std::move(s));
    }
    return out;
}

// Entities reachable from start by following chain over simple paths.
inline std::vector<EntityId> follow_chain(const KnowledgeGraph& kg, EntityId start, const std::vector<ChainStep>& chain) {
    std::set<EntityId> out;
    std::vector<EntityId> path{start};
    auto rec = [&](auto&& self, std::size_t depth) -> void {
        if (depth == chain.size()) {
            out.insert(path.back());
            return;
        }
        auto r = kg.relation(chain[depth].relation);
        if (!r) return;
        const auto& edges = chain[depth].direction == Direction::Forward ? kg.out_edges(path.back()) : kg.in_edges(path.back());
        for (auto [rel, v] : edges) {
            if (rel != *r || std::find(path.begin(), path.end(), v) != path.end()) continue;
            path.push_back(v);
            self(self, depth + 1);
            path.pop_back();
        }
    };
    rec(rec, 0);
    return {out.begin(), out.end()};
}

} // namespace detail

inline Fixture generate(const Config& cfg) {
    if (cfg.entities < 40) throw ConfigError("synthetic: need at least 40 entities");
    if (cfg.test_fraction < 0 || cfg.test_fraction >= 1) throw ConfigError("synthetic: test_fraction must lie in [0,1)");
    Rng rng(cfg.seed);
    const std::size_t n = cfg.entities;
    const std::size_t n_lang = std::max<std::size_t>(2, n / 40);
    const std::size_t n_genre = std::max<std::size_t>(3, n / 20);
    const std::size_t n_year = std::max<std::size_t>(3, n / 20);
    const std::size_t n_dir = n / 8;
    const std::size_t n_wri = n / 10;
    const std::size_t n_act = (3 * n) / 10;
    const std::size_t n_mov = n - n_lang - n_genre - n_year - n_dir - n_wri - n_act;
    if (n_lang > detail::languages().size() || n_genre > detail::genres().size())
        throw ConfigError("synthetic: too many entities for the attribute pools");

    std::set<std::string> used;
    const auto movies = detail::unique_names(rng, n_mov, detail::title_adjectives(), detail::title_nouns(), used);
    auto people = detail::unique_names(rng, n_act + n_dir + n_wri, detail::first_names(), detail::last_names(), used);
    const std::vector<std::string> actors(people.begin(), people.begin() + static_cast<std::ptrdiff_t>(n_act));
    const std::vector<std::string> directors(people.begin() + static_cast<std::ptrdiff_t>(n_act),
                                             people.begin() + static_cast<std::ptrdiff_t>(n_act + n_dir));
    const std::vector<std::string> writers(people.begin() + static_cast<std::ptrdiff_t>(n_act + n_dir), people.end());
    std::vector<std::string> years, langs, gens;
    for (std::size_t i = 0; i < n_year; ++i) years.push_back(std::to_string(1930 + 2 * i));
    for (std::size_t i = 0; i < n_lang; ++i) langs.push_back(detail::languages()[i]);
    for (std::size_t i = 0; i < n_genre; ++i) gens.push_back(detail::genres()[i]);

    // Round-robin over shuffled pools guarantees every entity is used.
    auto dealer = [&rng](const std::vector<std::string>& pool) {
        std::vector<std::string> deck = pool;
        rng.shuffle(deck);
        return deck;
    };
    const auto d_deck = dealer(directors), w_deck = dealer(writers), a_deck = dealer(actors);
    const auto y_deck = dealer(years), l_deck = dealer(langs), g_deck = dealer(gens);

    Fixture fx;
    std::size_t ai = 0;
    for (std::size_t m = 0; m < n_mov; ++m) {
        const auto& title = movies[m];
        fx.triples.push_back({title, "directed_by", d_deck[m % d_deck.size()]});
        fx.triples.push_back({title, "written_by", w_deck[m % w_deck.size()]});
        std::set<std::string> cast;
        while (cast.size() < 2) {
            cast.insert(ai < a_deck.size() ? a_deck[ai] : actors[rng.below(actors.size())]);
            ++ai;
        }
        for (const auto& a : cast) fx.triples.push_back({title, "starred_actors", a});
        fx.triples.push_back({title, "release_year", y_deck[m % y_deck.size()]});
        fx.triples.push_back({title, "in_language", l_deck[m % l_deck.size()]});
        fx.triples.push_back({title, "has_genre", g_deck[m % g_deck.size()]});
    }

    const KnowledgeGraph kg = fx.graph();
    auto entities_of = [&](Kind k) -> const std::vector<std::string>& {
        switch (k) {
        case Kind::Movie: return movies;
        case Kind::Actor: return actors;
        case Kind::Director: return directors;
        case Kind::Writer: return writers;
        case Kind::Year: return years;
        case Kind::Language: return langs;
        case Kind::Genre: return gens;
        }
        return movies;
    };

    std::vector<Question> all;
    std::set<std::pair<std::string, std::string>> asked;
    auto make = [&](const std::vector<QuestionTemplate>& templates, std::size_t count, std::size_t hop) {
        std::size_t made = 0, attempts = 0;
        while (made < count) {
            if (++attempts > count * 200) throw ConfigError("synthetic: cannot generate enough distinct questions");
            const auto& t = templates[rng.below(templates.size())];
            const auto& pool = entities_of(t.start);
            const std::string& topic = pool[rng.below(pool.size())];
            if (!asked.insert({t.text, topic}).second) continue;
            const auto gold = detail::follow_chain(kg, *kg.entity(topic), t.chain);
            if (gold.empty() || gold.size() > cfg.max_gold) continue;
            Question q;
            std::string text = t.text;
            text.replace(text.find("{e}"), 3, topic);
            q.text = std::move(text);
            for (auto g : gold) q.answers.push_back(kg.entity_name(g));
            q.hop = hop;
            all.push_back(std::move(q));
            ++made;
        }
    };
    make(one_hop_templates(), cfg.one_hop, 1);
    make(two_hop_templates(), cfg.two_hop, 2);
    make(three_hop_templates(), cfg.three_hop, 3);
    rng.shuffle(all);

    const auto n_test = static_cast<std::size_t>(static_cast<double>(all.size()) * cfg.test_fraction + 0.5);
    char buf[32];
    for (std::size_t i = 0; i < all.size(); ++i) {
        const bool is_test = i >= all.size() - n_test;
        std::snprintf(buf, sizeof buf, "%s%07zu", is_test ? "test" : "train", i + 1);
        all[i].id = buf;
        (is_test ? fx.test : fx.train).push_back(all[i]);
    }
    return fx;
}

inline void write_kg(std::ostream& out, const Fixture& fx) {
    for (const auto& t : fx.triples) out << t[0] << '|' << t[1] << '|' << t[2] << '\n';
}

inline void write_questions(std::ostream& out, const std::vector<Question>& qs) {
    for (const auto& q : qs) {
        out << q.text << '\t';
        for (std::size_t i = 0; i < q.answers.size(); ++i) out << (i ? "|" : "") << q.answers[i];
        if (q.hop) out << '\t' << *q.hop;
        out << '\n';
    }
}

} // namespace kgnli::synthetic
