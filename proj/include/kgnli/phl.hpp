// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// Question -> premise/hypothesis/label conversion.
//
// Tokens keep the mixed alphabet end to end: entity and relation tokens carry
// their KG ids (they embed through TransE), template and question words stay
// as text. Rendering to plain text is only done for display and export.

#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgnli/entity_linker.hpp"
#include "kgnli/error.hpp"
#include "kgnli/kg_store.hpp"

namespace kgnli {

struct Token {
    enum class Kind : std::uint8_t { Entity = 0, Relation = 1, Word = 2 };

    Kind kind = Kind::Word;
    std::uint32_t id = 0;
    std::string text;

    static Token entity(EntityId e) { return {Kind::Entity, e, {}}; }
    static Token relation(RelationId r) { return {Kind::Relation, r, {}}; }
    static Token word(std::string w) { return {Kind::Word, 0, std::move(w)}; }

    friend auto operator<=>(const Token&, const Token&) = default;
    friend bool operator==(const Token&, const Token&) = default;
};

using TokenSeq = std::vector<Token>;

inline std::string relation_words(std::string_view relation) {
    std::string s(relation);
    std::replace(s.begin(), s.end(), '_', ' ');
    return s;
}

inline std::string render(const TokenSeq& seq, const KnowledgeGraph& kg) {
    std::string out;
    for (const auto& t : seq) {
        if (!out.empty()) out += ' ';
        switch (t.kind) {
        case Token::Kind::Entity: out += kg.entity_name(t.id); break;
        case Token::Kind::Relation: out += relation_words(kg.relation_name(t.id)); break;
        case Token::Kind::Word: out += t.text; break;
        }
    }
    return out;
}

// Patterns per (relation, direction). Placeholders {head} and {tail} refer to
// the stored triple's head and tail; {relation} emits a relation token.
class TemplateTable {
  public:
    static constexpr std::string_view kFallback = "{head} {relation} {tail}";

    // Fallback pattern for every relation of kg.
    static TemplateTable defaults(const KnowledgeGraph& kg) {
        TemplateTable t;
        for (RelationId r = 0; r < kg.num_relations(); ++r) {
            t.set(r, Direction::Forward, std::string(kFallback));
            t.set(r, Direction::Inverse, std::string(kFallback));
        }
        return t;
    }

    void set(RelationId r, Direction d, std::string pattern) { patterns_[{r, d}] = std::move(pattern); }

    const std::string* find(RelationId r, Direction d) const {
        auto it = patterns_.find({r, d});
        return it == patterns_.end() ? nullptr : &it->second;
    }

    bool covers(const KnowledgeGraph& kg) const {
        for (RelationId r = 0; r < kg.num_relations(); ++r)
            if (!find(r, Direction::Forward) || !find(r, Direction::Inverse)) return false;
        return true;
    }

  private:
    std::map<std::pair<RelationId, Direction>, std::string> patterns_;
};

// Lines of `relation<TAB>forward|inverse|both<TAB>pattern` override the
// defaults for relations that exist in kg.
inline TemplateTable load_templates(std::istream& in, const KnowledgeGraph& kg) {
    TemplateTable t = TemplateTable::defaults(kg);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto f = detail::split(body, '\t');
        if (f.size() != 3) throw DataError("templates line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
        auto r = kg.relation(detail::trim(f[0]));
        if (!r) throw DataError("templates line " + std::to_string(lineno) + ": unknown relation '" + std::string(f[0]) + "'");
        const auto dir = detail::trim(f[1]);
        const std::string pattern(detail::trim(f[2]));
        if (dir == "forward" || dir == "both") t.set(*r, Direction::Forward, pattern);
        if (dir == "inverse" || dir == "both") t.set(*r, Direction::Inverse, pattern);
        if (dir != "forward" && dir != "inverse" && dir != "both")
            throw DataError("templates line " + std::to_string(lineno) + ": direction must be forward, inverse or both");
    }
    return t;
}

inline TokenSeq verbalize_triple(const KnowledgeGraph& kg, const Triple& triple, Direction direction,
                                 const TemplateTable& templates) {
    const std::string* pattern = templates.find(triple.relation, direction);
    if (!pattern) throw DataError("no template for relation '" + kg.relation_name(triple.relation) + "'");
    TokenSeq out;
    std::istringstream ss(*pattern);
    std::string w;
    while (ss >> w) {
        if (w == "{head}")
            out.push_back(Token::entity(triple.head));
        else if (w == "{tail}")
            out.push_back(Token::entity(triple.tail));
        else if (w == "{relation}")
            out.push_back(Token::relation(triple.relation));
        else
            out.push_back(Token::word(w));
    }
    return out;
}

struct Verbalized {
    TokenSeq tokens;
    bool truncated = false;
};

// Per-triple sentences joined by "and", cut at inner_cap tokens.
inline Verbalized verbalize_path(const KnowledgeGraph& kg, const Path& path, const TemplateTable& templates,
                                 std::size_t inner_cap = 20) {
    Verbalized v;
    for (std::size_t i = 0; i < path.steps.size(); ++i) {
        if (i > 0) v.tokens.push_back(Token::word("and"));
        auto part = verbalize_triple(kg, path.triple(i), path.steps[i].direction, templates);
        v.tokens.insert(v.tokens.end(), part.begin(), part.end());
    }
    if (v.tokens.size() > inner_cap) {
        v.tokens.resize(inner_cap);
        v.truncated = true;
    }
    return v;
}

class UnsupportedQuestion : public DataError {
  public:
    explicit UnsupportedQuestion(const std::string& what) : DataError(what) {}
};

class UnlinkableQuestion : public DataError {
  public:
    explicit UnlinkableQuestion(const std::string& what) : DataError(what) {}
};

namespace detail {

inline bool is_wh_word(std::string_view lw) {
    return lw == "who" || lw == "what" || lw == "which" || lw == "whom" || lw == "where" || lw == "when";
}

// Nouns swallowed together with a preceding which/what.
inline bool is_generic_noun(std::string_view lw) {
    static const std::set<std::string, std::less<>> nouns = {
        "person", "people", "film", "films", "movie", "movies", "actor", "actors", "actress", "director",
        "directors", "writer", "writers", "screenwriter", "screenwriters", "genre", "genres", "language",
        "languages", "year", "years", "country", "countries", "city", "cities"};
    return nouns.count(lw) > 0;
}

inline std::string_view strip_punct(std::string_view w) {
    auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) && c != '\'' && c != '-'; };
    while (!w.empty() && punct(w.front())) w.remove_prefix(1);
    while (!w.empty() && punct(w.back())) w.remove_suffix(1);
    return w;
}

} // namespace detail

// Replaces the first WH-word (plus a generic noun after which/what) with the
// candidate token. Linked mention spans become entity tokens; the question
// mark and other edge punctuation are dropped.
inline TokenSeq build_hypothesis(std::string_view question, const std::vector<Mention>& mentions, EntityId candidate) {
    struct Piece {
        bool mention;
        Token token;
    };
    std::vector<Mention> spans;
    for (const auto& m : mentions)
        if (m.linked) spans.push_back(m);
    std::sort(spans.begin(), spans.end(), [](const Mention& a, const Mention& b) { return a.start < b.start; });

    std::vector<Piece> pieces;
    std::size_t pos = 0, si = 0;
    auto emit_words = [&](std::string_view text) {
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            const auto w = detail::strip_punct(text.substr(i, j - i));
            if (!w.empty()) pieces.push_back({false, Token::word(std::string(w))});
            i = j;
        }
    };
    while (pos < question.size()) {
        if (si < spans.size() && spans[si].start >= pos) {
            emit_words(question.substr(pos, spans[si].start - pos));
            pieces.push_back({true, Token::entity(*spans[si].linked)});
            pos = spans[si].end;
            ++si;
            continue;
        }
        emit_words(question.substr(pos));
        break;
    }

    for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (pieces[i].mention) continue;
        const std::string lw = to_lower(pieces[i].token.text);
        if (!detail::is_wh_word(lw)) continue;
        std::size_t drop = 1;
        if ((lw == "which" || lw == "what") && i + 1 < pieces.size() && !pieces[i + 1].mention &&
            detail::is_generic_noun(to_lower(pieces[i + 1].token.text)))
            drop = 2;
        TokenSeq out;
        for (std::size_t k = 0; k < i; ++k) out.push_back(pieces[k].token);
        out.push_back(Token::entity(candidate));
        for (std::size_t k = i + drop; k < pieces.size(); ++k) out.push_back(pieces[k].token);
        return out;
    }
    throw UnsupportedQuestion("no WH-word in question: " + std::string(question));
}

struct PHLInstance {
    std::string question_id;
    EntityId candidate = 0;
    std::vector<TokenSeq> premise_paths;
    TokenSeq hypothesis;
    int label = 1; // 0 = entail, 1 = contradict

    friend bool operator==(const PHLInstance&, const PHLInstance&) = default;
};

// Canonical premise order used everywhere downstream: token count, then
// lexicographic token order.
inline bool premise_less(const TokenSeq& a, const TokenSeq& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

inline void canonicalize_premise(std::vector<TokenSeq>& paths) { std::sort(paths.begin(), paths.end(), premise_less); }

struct PHLConfig {
    std::size_t n_candidates = 4;
    std::size_t max_len = 3;
    std::size_t max_paths = 250;
    std::size_t hop = 2;
    std::size_t inner_cap = 20;
    std::size_t outer_cap = 250;
    std::uint64_t seed = 7;
};

struct Question {
    std::string id;
    std::string text;
    std::vector<std::string> answers;
    std::optional<std::size_t> hop;
};

inline std::uint64_t question_seed(std::uint64_t seed, std::string_view qid) { return fnv1a(qid, seed ^ 0xC0FFEEULL); }

// One instance per surviving candidate, ordered by candidate id. Returns an
// empty list when every gold candidate drops out for lack of paths.
namespace detail {

inline std::vector<EntityId> linked_entities(const std::vector<Mention>& mentions, const std::string& text) {
    std::vector<EntityId> query;
    for (const auto& m : mentions)
        if (m.linked && std::find(query.begin(), query.end(), *m.linked) == query.end()) query.push_back(*m.linked);
    if (query.empty()) throw UnlinkableQuestion("no entities linked in question: " + text);
    return query;
}

inline std::optional<PHLInstance> build_instance(const KnowledgeGraph& kg, const std::string& qid, const std::string& text,
                                                 const std::vector<Mention>& mentions,
                                                 const std::vector<EntityId>& query, EntityId c,
                                                 const TemplateTable& templates, const PHLConfig& cfg) {
    PHLInstance inst;
    inst.question_id = qid;
    inst.candidate = c;
    for (EntityId qe : query) {
        for (const auto& p : kg.enumerate_paths(qe, c, cfg.max_len, cfg.max_paths))
            inst.premise_paths.push_back(verbalize_path(kg, p, templates, cfg.inner_cap).tokens);
    }
    if (inst.premise_paths.empty()) return std::nullopt;
    canonicalize_premise(inst.premise_paths);
    if (inst.premise_paths.size() > cfg.outer_cap) inst.premise_paths.resize(cfg.outer_cap);
    inst.hypothesis = build_hypothesis(text, mentions, c);
    return inst;
}

} // namespace detail

inline std::vector<PHLInstance> generate_phl(const Question& q, const std::vector<EntityId>& gold,
                                             const Gazetteer& gaz, const TemplateTable& templates,
                                             const PHLConfig& cfg, const LinkerConfig& link_cfg = {}) {
    const KnowledgeGraph& kg = gaz.kg();
    const auto mentions = gaz.extract(q.text, link_cfg);
    const auto query = detail::linked_entities(mentions, q.text);

    // Validate the question shape once before enumerating anything.
    (void)build_hypothesis(q.text, mentions, query.front());

    const std::size_t hop = q.hop.value_or(cfg.hop);
    const auto candidates =
        candidate_answers(kg, query, hop, cfg.n_candidates, gold, question_seed(cfg.seed, q.id));

    std::vector<PHLInstance> out;
    bool any_gold = false;
    for (EntityId c : candidates) {
        auto inst = detail::build_instance(kg, q.id, q.text, mentions, query, c, templates, cfg);
        if (!inst) continue;
        inst->label = std::find(gold.begin(), gold.end(), c) != gold.end() ? 0 : 1;
        any_gold = any_gold || inst->label == 0;
        out.push_back(std::move(*inst));
    }
    if (!any_gold) out.clear();
    return out;
}

// Unlabeled instances for every entity `hop` steps from the question's
// entities (label is left at 1 and carries no meaning).
inline std::vector<PHLInstance> generate_query_phl(const std::string& text, const Gazetteer& gaz,
                                                   const TemplateTable& templates, const PHLConfig& cfg,
                                                   const LinkerConfig& link_cfg = {}) {
    const KnowledgeGraph& kg = gaz.kg();
    const auto mentions = gaz.extract(text, link_cfg);
    const auto query = detail::linked_entities(mentions, text);
    (void)build_hypothesis(text, mentions, query.front());
    std::vector<PHLInstance> out;
    for (EntityId c : reachable_candidates(kg, query, cfg.hop)) {
        auto inst = detail::build_instance(kg, "query", text, mentions, query, c, templates, cfg);
        if (inst) out.push_back(std::move(*inst));
    }
    return out;
}

// `question<TAB>answer1|answer2|...[<TAB>hop]`; ids are the 1-based line
// number, zero-padded so lexicographic order matches file order.
inline std::vector<Question> read_questions(std::istream& in, std::string_view id_prefix = "q") {
    std::vector<Question> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto f = detail::split(body, '\t');
        if (f.size() < 2 || f.size() > 3)
            throw DataError("questions line " + std::to_string(lineno) + ": expected question<TAB>answers[<TAB>hop]");
        Question q;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%07zu", lineno);
        q.id = std::string(id_prefix) + buf;
        q.text = std::string(detail::trim(f[0]));
        for (auto a : detail::split(f[1], '|')) {
            const auto t = detail::trim(a);
            if (!t.empty()) q.answers.emplace_back(t);
        }
        if (f.size() == 3) {
            const std::string h(detail::trim(f[2]));
            char* endp = nullptr;
            const unsigned long v = std::strtoul(h.c_str(), &endp, 10);
            if (h.empty() || *endp != '\0' || v == 0)
                throw DataError("questions line " + std::to_string(lineno) + ": bad hop '" + h + "'");
            q.hop = v;
        }
        if (q.text.empty() || q.answers.empty())
            throw DataError("questions line " + std::to_string(lineno) + ": empty question or answer list");
        out.push_back(std::move(q));
    }
    return out;
}

inline std::vector<Question> read_questions_file(const std::string& path, std::string_view id_prefix = "q") {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open questions file: " + path);
    return read_questions(in, id_prefix);
}

// Answer names resolved exactly, then case-insensitively; unknown names skipped.
inline std::vector<EntityId> resolve_answers(const Question& q, const Gazetteer& gaz) {
    std::vector<EntityId> out;
    for (const auto& a : q.answers) {
        auto id = gaz.kg().entity(a);
        if (!id) id = gaz.exact(to_lower(a));
        if (id && std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct ConversionStats {
    std::size_t questions_in = 0;
    std::size_t questions_kept = 0;
    std::size_t dropped_unlinkable = 0;
    std::size_t dropped_unsupported = 0;
    std::size_t dropped_unanswerable = 0;
    std::size_t instances = 0;
};

struct Conversion {
    std::vector<PHLInstance> instances;
    std::vector<std::vector<EntityId>> gold; // per kept question, aligned with question order
    ConversionStats stats;
};

inline Conversion convert_questions(const std::vector<Question>& questions, const Gazetteer& gaz,
                                    const TemplateTable& templates, const PHLConfig& cfg,
                                    const LinkerConfig& link_cfg = {}) {
    Conversion conv;
    conv.stats.questions_in = questions.size();
    for (const auto& q : questions) {
        try {
            const auto gold = resolve_answers(q, gaz);
            if (gold.empty()) throw UnanswerableQuestion("no answer resolves in the KG");
            auto inst = generate_phl(q, gold, gaz, templates, cfg, link_cfg);
            if (inst.empty()) throw UnanswerableQuestion("every gold candidate dropped");
            ++conv.stats.questions_kept;
            conv.gold.push_back(gold);
            for (auto& i : inst) conv.instances.push_back(std::move(i));
        } catch (const UnlinkableQuestion&) {
            ++conv.stats.dropped_unlinkable;
        } catch (const UnsupportedQuestion&) {
            ++conv.stats.dropped_unsupported;
        } catch (const UnanswerableQuestion&) {
            ++conv.stats.dropped_unanswerable;
        }
    }
    conv.stats.instances = conv.instances.size();
    return conv;
}

namespace detail {

inline std::string encode_token(const Token& t) {
    switch (t.kind) {
    case Token::Kind::Entity: return "e:" + std::to_string(t.id);
    case Token::Kind::Relation: return "r:" + std::to_string(t.id);
    case Token::Kind::Word: return "w:" + t.text;
    }
    return {};
}

inline Token decode_token(const std::string& s) {
    if (s.size() < 2 || s[1] != ':') throw DataError("bad token '" + s + "'");
    if (s[0] == 'w') return Token::word(s.substr(2));
    if (s[0] != 'e' && s[0] != 'r') throw DataError("bad token kind in '" + s + "'");
    const std::string num = s.substr(2);
    char* endp = nullptr;
    const unsigned long v = std::strtoul(num.c_str(), &endp, 10);
    if (num.empty() || *endp != '\0') throw DataError("bad token id in '" + s + "'");
    return s[0] == 'e' ? Token::entity(static_cast<EntityId>(v)) : Token::relation(static_cast<RelationId>(v));
}

} // namespace detail

// One JSON object per line with fields in the order
// qid, candidate, premise_paths, hypothesis, label.
inline void write_phl(std::ostream& out, const std::vector<PHLInstance>& instances) {
    for (const auto& inst : instances) {
        nlohmann::ordered_json j;
        j["qid"] = inst.question_id;
        j["candidate"] = inst.candidate;
        auto paths = nlohmann::ordered_json::array();
        for (const auto& p : inst.premise_paths) {
            auto arr = nlohmann::ordered_json::array();
            for (const auto& t : p) arr.push_back(detail::encode_token(t));
            paths.push_back(std::move(arr));
        }
        j["premise_paths"] = std::move(paths);
        auto hyp = nlohmann::ordered_json::array();
        for (const auto& t : inst.hypothesis) hyp.push_back(detail::encode_token(t));
        j["hypothesis"] = std::move(hyp);
        j["label"] = inst.label;
        out << j.dump() << '\n';
    }
}

inline std::vector<PHLInstance> read_phl(std::istream& in) {
    std::vector<PHLInstance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            PHLInstance inst;
            inst.question_id = j.at("qid").get<std::string>();
            inst.candidate = j.at("candidate").get<EntityId>();
            for (const auto& p : j.at("premise_paths")) {
                TokenSeq seq;
                for (const auto& t : p) seq.push_back(detail::decode_token(t.get<std::string>()));
                inst.premise_paths.push_back(std::move(seq));
            }
            for (const auto& t : j.at("hypothesis")) inst.hypothesis.push_back(detail::decode_token(t.get<std::string>()));
            inst.label = j.at("label").get<int>();
            if (inst.label != 0 && inst.label != 1) throw DataError("label must be 0 or 1");
            if (inst.premise_paths.empty()) throw DataError("empty premise");
            out.push_back(std::move(inst));
        } catch (const std::exception& e) {
            throw DataError("phl line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<PHLInstance> read_phl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open PHL file: " + path);
    return read_phl(in);
}

// `premise<TAB>hypothesis<TAB>label` plain-text export for external NLI
// models; premise sentences of separate paths are joined with " . ".
inline void write_phl_text(std::ostream& out, const std::vector<PHLInstance>& instances, const KnowledgeGraph& kg) {
    for (const auto& inst : instances) {
        std::string premise;
        for (const auto& p : inst.premise_paths) {
            if (!premise.empty()) premise += " . ";
            premise += render(p, kg);
        }
        out << premise << '\t' << render(inst.hypothesis, kg) << '\t' << inst.label << '\n';
    }
}

} // namespace kgnli
