// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// Flat key=value run configuration shared by every CLI subcommand. Each key
// is a typed field; unknown keys and malformed values are rejected on load.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kgnli/embedding.hpp"
#include "kgnli/entity_linker.hpp"
#include "kgnli/error.hpp"
#include "kgnli/eval.hpp"
#include "kgnli/hrpe.hpp"
#include "kgnli/kg_store.hpp"
#include "kgnli/phl.hpp"
#include "kgnli/synthetic.hpp"

namespace kgnli {

struct RunConfig {
    // Files.
    std::string kg, qa_train, qa_test, embeddings, word_vectors, templates, anchors;
    std::string phl_train, phl_test, checkpoint, source_checkpoint, tuned_embeddings, report, out;
    std::string target_kg, target_embeddings, target_phl_train, target_phl_test;
    char delimiter = '|';

    // Model.
    std::size_t dim = 300;
    std::size_t hidden = 150;
    std::size_t inner_cap = 20;
    std::size_t outer_cap = 250;

    // PHL conversion and linking.
    std::size_t n_candidates = 4;
    std::size_t max_len = 3;
    std::size_t max_paths = 250;
    std::size_t hop = 2;
    double threshold = 0.85;
    double prefix_scale = 0.1;
    bool export_text = false;

    // TransE.
    double margin = 1.0;
    double transe_lr = 0.01;
    std::size_t transe_epochs = 100;
    std::size_t transe_batch = 100;
    Norm norm = Norm::L1;

    // HRPE training.
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::size_t batch = 32;
    double dropout = 0.2;
    bool freeze_embeddings = true;
    std::size_t seed = 7;
    std::size_t threads = 1;

    // Ablation and adaptation.
    std::vector<std::size_t> n_values{4, 8, 16, 24};
    bool reuse_model = false;
    double ridge = 0.0;
    bool fit_bias = false;

    // Synthetic fixture.
    std::size_t synth_entities = 200;
    std::size_t synth_one_hop = 0;
    std::size_t synth_two_hop = 300;
    std::size_t synth_three_hop = 300;
    double synth_test_fraction = 0.2;

    using Slot = std::variant<std::string*, char*, std::size_t*, double*, bool*, Norm*,
                              std::vector<std::size_t>*>;
    struct Field {
        const char* name;
        const char* help;
        Slot slot;
    };

    std::vector<Field> fields() {
        return {
            {"kg", "knowledge graph triples file", &kg},
            {"qa_train", "training questions file", &qa_train},
            {"qa_test", "test questions file", &qa_test},
            {"embeddings", "embedding table file", &embeddings},
            {"word_vectors", "pretrained word vectors (word then dim floats per line)", &word_vectors},
            {"templates", "relation verbalization templates", &templates},
            {"anchors", "anchor pairs: source entity<TAB>target entity", &anchors},
            {"phl_train", "training PHL file", &phl_train},
            {"phl_test", "test PHL file", &phl_test},
            {"checkpoint", "model checkpoint file", &checkpoint},
            {"source_checkpoint", "pretrained source model for adapt (trained when empty)", &source_checkpoint},
            {"tuned_embeddings", "where train writes fine-tuned embeddings", &tuned_embeddings},
            {"report", "CSV report output", &report},
            {"out", "output directory or file", &out},
            {"target_kg", "target-domain knowledge graph", &target_kg},
            {"target_embeddings", "target-domain embedding table", &target_embeddings},
            {"target_phl_train", "target-domain training PHL file", &target_phl_train},
            {"target_phl_test", "target-domain test PHL file", &target_phl_test},
            {"delimiter", "triple field delimiter (single character)", &delimiter},
            {"dim", "embedding dimension", &dim},
            {"hidden", "LSTM hidden size", &hidden},
            {"inner_cap", "max tokens per premise path", &inner_cap},
            {"outer_cap", "max premise paths per instance", &outer_cap},
            {"n_candidates", "candidate answers per question", &n_candidates},
            {"max_len", "max premise path length in triples", &max_len},
            {"max_paths", "max enumerated paths per entity pair", &max_paths},
            {"hop", "default question hop count", &hop},
            {"threshold", "entity linking Jaro-Winkler threshold", &threshold},
            {"prefix_scale", "Jaro-Winkler prefix scale", &prefix_scale},
            {"export_text", "also write a readable .tsv next to each PHL file", &export_text},
            {"margin", "TransE margin", &margin},
            {"transe_lr", "TransE learning rate", &transe_lr},
            {"transe_epochs", "TransE epochs", &transe_epochs},
            {"transe_batch", "TransE minibatch size", &transe_batch},
            {"norm", "TransE distance norm (l1 or l2)", &norm},
            {"lr", "Adam learning rate", &lr},
            {"epochs", "training epochs", &epochs},
            {"batch", "training minibatch size", &batch},
            {"dropout", "dropout rate on the aggregate vector", &dropout},
            {"freeze_embeddings", "keep embeddings fixed while training", &freeze_embeddings},
            {"seed", "random seed", &seed},
            {"threads", "worker thread cap", &threads},
            {"n_values", "ablation candidate counts, comma separated", &n_values},
            {"reuse_model", "ablation trains once and reuses the model", &reuse_model},
            {"ridge", "domain map ridge penalty", &ridge},
            {"fit_bias", "domain map fits a bias for entities", &fit_bias},
            {"synth_entities", "synthetic fixture entity count", &synth_entities},
            {"synth_one_hop", "synthetic 1-hop question count", &synth_one_hop},
            {"synth_two_hop", "synthetic 2-hop question count", &synth_two_hop},
            {"synth_three_hop", "synthetic 3-hop question count", &synth_three_hop},
            {"synth_test_fraction", "synthetic held-out question fraction", &synth_test_fraction},
        };
    }

    Field field(std::string_view key) {
        for (auto& f : fields())
            if (key == f.name) return f;
        throw ConfigError("unknown config key '" + std::string(key) + "'");
    }

    void set(std::string_view key, std::string_view value) {
        auto f = field(key);
        const std::string v(detail::trim(value));
        auto bad = [&](const char* what) {
            return ConfigError("config key '" + std::string(key) + "': " + what + ", got '" + v + "'");
        };
        auto parse_size = [&](std::string_view s) {
            std::size_t out = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) throw bad("expected a non-negative integer");
            return out;
        };
        std::visit(
            [&](auto* slot) {
                using T = std::remove_pointer_t<decltype(slot)>;
                if constexpr (std::is_same_v<T, std::string>) {
                    *slot = v;
                } else if constexpr (std::is_same_v<T, char>) {
                    if (v.size() != 1) throw bad("expected a single character");
                    *slot = v[0];
                } else if constexpr (std::is_same_v<T, std::size_t>) {
                    *slot = parse_size(v);
                } else if constexpr (std::is_same_v<T, double>) {
                    char* end = nullptr;
                    const double d = v.empty() ? NAN : std::strtod(v.c_str(), &end);
                    if (v.empty() || *end != '\0' || !std::isfinite(d)) throw bad("expected a finite number");
                    *slot = d;
                } else if constexpr (std::is_same_v<T, bool>) {
                    if (v == "true" || v == "1") *slot = true;
                    else if (v == "false" || v == "0") *slot = false;
                    else throw bad("expected true or false");
                } else if constexpr (std::is_same_v<T, Norm>) {
                    if (v == "l1") *slot = Norm::L1;
                    else if (v == "l2") *slot = Norm::L2;
                    else throw bad("expected l1 or l2");
                } else {
                    slot->clear();
                    for (auto part : detail::split(v, ','))
                        if (!detail::trim(part).empty()) slot->push_back(parse_size(detail::trim(part)));
                    if (slot->empty()) throw bad("expected a comma-separated list");
                }
            },
            f.slot);
    }

    std::string get(std::string_view key) {
        auto f = field(key);
        return std::visit(
            [](auto* slot) -> std::string {
                using T = std::remove_pointer_t<decltype(slot)>;
                if constexpr (std::is_same_v<T, std::string>) return *slot;
                else if constexpr (std::is_same_v<T, char>) return std::string(1, *slot);
                else if constexpr (std::is_same_v<T, double>) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%g", *slot);
                    return buf;
                } else if constexpr (std::is_same_v<T, bool>) return *slot ? "true" : "false";
                else if constexpr (std::is_same_v<T, Norm>) return *slot == Norm::L1 ? "l1" : "l2";
                else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
                    std::string s;
                    for (auto n : *slot) s += (s.empty() ? "" : ",") + std::to_string(n);
                    return s;
                } else return std::to_string(*slot);
            },
            f.slot);
    }

    // Range checks across all fields.
    void validate() const {
        auto need = [](bool ok, const char* msg) {
            if (!ok) throw ConfigError(msg);
        };
        need(dim > 0, "dim must be positive");
        need(hidden > 0, "hidden must be positive");
        need(inner_cap > 0 && outer_cap > 0, "inner_cap and outer_cap must be positive");
        need(n_candidates >= 1, "n_candidates must be at least 1");
        need(max_len >= 1 && max_paths >= 1, "max_len and max_paths must be positive");
        need(hop >= 1, "hop must be at least 1");
        need(threshold >= 0 && threshold <= 1, "threshold must lie in [0, 1]");
        need(prefix_scale >= 0 && prefix_scale <= 0.25, "prefix_scale must lie in [0, 0.25]");
        need(margin > 0, "margin must be positive");
        need(transe_lr > 0 && transe_batch > 0, "transe_lr and transe_batch must be positive");
        need(lr >= 0, "lr must be non-negative");
        need(batch > 0, "batch must be positive");
        need(dropout >= 0 && dropout < 1, "dropout must lie in [0, 1)");
        need(threads >= 1, "threads must be at least 1");
        for (auto n : n_values) need(n >= 2, "n_values entries must be at least 2");
        need(ridge >= 0, "ridge must be non-negative");
        need(delimiter != '\n' && delimiter != '#', "delimiter must not be a newline or '#'");
        need(synth_test_fraction >= 0 && synth_test_fraction < 1, "synth_test_fraction must lie in [0, 1)");
    }

    KGFormat kg_format() const { return {delimiter, '#'}; }

    ModelConfig model() const { return {dim, hidden, inner_cap, outer_cap}; }

    LinkerConfig linker() const {
        LinkerConfig c;
        c.threshold = threshold;
        c.prefix_scale = prefix_scale;
        return c;
    }

    PHLConfig phl() const {
        PHLConfig c;
        c.n_candidates = n_candidates;
        c.max_len = max_len;
        c.max_paths = max_paths;
        c.hop = hop;
        c.inner_cap = inner_cap;
        c.outer_cap = outer_cap;
        c.seed = seed;
        return c;
    }

    TransEConfig transe() const {
        TransEConfig c;
        c.dim = dim;
        c.margin = margin;
        c.lr = transe_lr;
        c.epochs = transe_epochs;
        c.batch = transe_batch;
        c.norm = norm;
        c.seed = seed;
        return c;
    }

    TrainConfig training() const {
        TrainConfig c;
        c.lr = lr;
        c.batch = batch;
        c.epochs = epochs;
        c.dropout = dropout;
        c.seed = seed;
        c.freeze_embeddings = freeze_embeddings;
        c.threads = threads;
        return c;
    }

    synthetic::Config synthetic() const {
        synthetic::Config c;
        c.entities = synth_entities;
        c.one_hop = synth_one_hop;
        c.two_hop = synth_two_hop;
        c.three_hop = synth_three_hop;
        c.test_fraction = synth_test_fraction;
        c.seed = seed;
        return c;
    }
};

// `key = value` lines; `#` starts a comment line. Later lines win.
inline void load_config(std::istream& in, RunConfig& cfg) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            cfg.set(detail::trim(t.substr(0, eq)), t.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    RunConfig cfg;
    load_config(in, cfg);
    return cfg;
}

} // namespace kgnli
