// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// kgnli: single executable wiring the pipeline stages as subcommands.
// Settings come from an optional --config file, then command-line flags
// (flags win). Exit codes: 0 ok, 2 config, 3 data, 4 model.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kgnli/config.hpp"
#include "kgnli/embedding.hpp"
#include "kgnli/entity_linker.hpp"
#include "kgnli/error.hpp"
#include "kgnli/eval.hpp"
#include "kgnli/hrpe.hpp"
#include "kgnli/kg_store.hpp"
#include "kgnli/phl.hpp"
#include "kgnli/synthetic.hpp"

namespace {

using namespace kgnli;

enum Exit { kOk = 0, kConfig = 2, kData = 3, kModel = 4 };

// Flags registered on one subcommand, applied over the config file.
struct Overrides {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    RunConfig resolve() {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config_file(config_path);
        for (const auto& [key, opt] : options)
            if (opt->count() > 0) cfg.set(key, values[key]);
        cfg.validate();
        return cfg;
    }
};

std::string flag_name(std::string key) {
    for (auto& c : key)
        if (c == '_') c = '-';
    return "--" + key;
}

void add_keys(CLI::App* cmd, Overrides& ov, const std::vector<std::string>& keys) {
    cmd->add_option("--config", ov.config_path, "key = value config file; flags override it");
    RunConfig defaults;
    for (const auto& key : keys) {
        const auto f = defaults.field(key);
        const std::string dflt = defaults.get(key);
        std::string help = f.help;
        if (!dflt.empty()) help += " [" + dflt + "]";
        if (std::holds_alternative<bool*>(f.slot))
            ov.options[key] = cmd->add_flag(flag_name(key) + "{true}", ov.values[key], help);
        else
            ov.options[key] = cmd->add_option(flag_name(key), ov.values[key], help);
    }
}

void require(const std::string& value, const std::string& key) {
    if (value.empty()) throw ConfigError("missing required setting " + flag_name(key));
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    return out;
}

KnowledgeGraph load_kg(const std::string& path, const RunConfig& cfg) {
    require(path, "kg");
    auto in = open_in(path);
    return load_triples(in, cfg.kg_format());
}

EmbeddingTable load_table(const std::string& path, const KnowledgeGraph& kg, const std::string& key = "embeddings") {
    require(path, key);
    auto in = open_in(path);
    return load_embeddings(in, kg);
}

TemplateTable load_template_table(const RunConfig& cfg, const KnowledgeGraph& kg) {
    if (cfg.templates.empty()) return TemplateTable::defaults(kg);
    auto in = open_in(cfg.templates);
    return load_templates(in, kg);
}

Checkpoint load_model(const std::string& path, const std::string& key = "checkpoint") {
    require(path, key);
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return load_checkpoint(in);
}

std::vector<PHLInstance> load_phl(const std::string& path, const std::string& key) {
    require(path, key);
    auto in = open_in(path);
    return read_phl(in);
}

std::string fmt(const char* f, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::size_t max_group(const std::vector<PHLInstance>& instances) {
    std::size_t n = 0;
    for (const auto& g : group_by_question(instances)) n = std::max(n, g.members.size());
    return n;
}

void write_report(const std::string& path, const std::vector<ReportRow>& rows) {
    if (path.empty()) return;
    auto csv = open_out(path);
    write_report_csv(csv, rows);
    auto table = open_out(path + ".txt");
    write_report_table(table, rows);
}

// ---- subcommands ----

int cmd_build_kg(Overrides& ov) {
    auto cfg = ov.resolve();
    const auto kg = load_kg(cfg.kg, cfg);
    const auto line = summary_line(kg);
    if (!cfg.out.empty()) open_out(cfg.out) << line << '\n';
    std::cout << line << '\n';
    return kOk;
}

int cmd_train_embeddings(Overrides& ov) {
    auto cfg = ov.resolve();
    require(cfg.embeddings, "embeddings");
    const auto kg = load_kg(cfg.kg, cfg);
    auto res = train_transe(kg, cfg.transe());
    if (!cfg.word_vectors.empty()) {
        auto in = open_in(cfg.word_vectors);
        res.table.set_words(load_word_vectors(in, cfg.dim));
    }
    auto out = open_out(cfg.embeddings);
    save_embeddings(out, res.table, kg);
    std::cout << "embeddings dim=" << cfg.dim << " entities=" << kg.num_entities()
              << " relations=" << kg.num_relations() << " words=" << res.table.words().size()
              << " epochs=" << cfg.transe_epochs << " loss=" << fmt("%.6f", res.loss_trace.back()) << '\n';
    return kOk;
}

int cmd_gen_phl(Overrides& ov) {
    auto cfg = ov.resolve();
    if (cfg.qa_train.empty() && cfg.qa_test.empty()) throw ConfigError("gen-phl needs --qa-train and/or --qa-test");
    const auto kg = load_kg(cfg.kg, cfg);
    const Gazetteer gaz(kg);
    const auto templates = load_template_table(cfg, kg);
    ConversionStats total;
    auto run = [&](const std::string& qa, const std::string& phl, const std::string& phl_key, const char* prefix) {
        if (qa.empty()) return;
        require(phl, phl_key);
        auto in = open_in(qa);
        const auto conv = convert_questions(read_questions(in, prefix), gaz, templates, cfg.phl(), cfg.linker());
        auto out = open_out(phl);
        write_phl(out, conv.instances);
        if (cfg.export_text) {
            auto txt = open_out(phl + ".tsv");
            write_phl_text(txt, conv.instances, kg);
        }
        total.questions_in += conv.stats.questions_in;
        total.questions_kept += conv.stats.questions_kept;
        total.dropped_unlinkable += conv.stats.dropped_unlinkable;
        total.dropped_unsupported += conv.stats.dropped_unsupported;
        total.dropped_unanswerable += conv.stats.dropped_unanswerable;
        total.instances += conv.stats.instances;
    };
    run(cfg.qa_train, cfg.phl_train, "phl_train", "train");
    run(cfg.qa_test, cfg.phl_test, "phl_test", "test");
    std::cout << "phl questions=" << total.questions_in << " kept=" << total.questions_kept
              << " instances=" << total.instances << " unlinkable=" << total.dropped_unlinkable
              << " unsupported=" << total.dropped_unsupported << " unanswerable=" << total.dropped_unanswerable
              << '\n';
    return kOk;
}

int cmd_train(Overrides& ov) {
    auto cfg = ov.resolve();
    require(cfg.checkpoint, "checkpoint");
    const auto kg = load_kg(cfg.kg, cfg);
    const auto table = load_table(cfg.embeddings, kg);
    const auto data = load_phl(cfg.phl_train, "phl_train");
    ModelConfig mc = cfg.model();
    mc.dim = table.dim();
    const auto res = train(data, table, mc, cfg.training());
    auto out = open_out(cfg.checkpoint);
    save_checkpoint(out, res.params, mc, cfg.seed);
    if (!cfg.tuned_embeddings.empty()) {
        auto eo = open_out(cfg.tuned_embeddings);
        save_embeddings(eo, res.table, kg);
    }
    std::cout << "train instances=" << data.size() << " epochs=" << cfg.epochs << " dim=" << mc.dim
              << " hidden=" << mc.hidden << " loss=" << fmt("%.6f", res.loss_trace.empty() ? 0.0 : res.loss_trace.back())
              << '\n';
    return kOk;
}

int cmd_eval(Overrides& ov) {
    auto cfg = ov.resolve();
    const auto kg = load_kg(cfg.kg, cfg);
    const auto table = load_table(cfg.embeddings, kg);
    const auto ck = load_model(cfg.checkpoint);
    const auto data = load_phl(cfg.phl_test, "phl_test");
    if (data.empty()) throw DataError("eval: PHL file has no instances");
    const auto rep = evaluate(data, ck.params, table, ck.config, cfg.threads);
    write_report(cfg.report, {{"test", max_group(data), rep.cls_acc, rep.qa_acc, rep.n_questions, rep.n_instances}});
    std::cout << "eval cls_acc=" << fmt("%.6f", rep.cls_acc) << " qa_acc=" << fmt("%.6f", rep.qa_acc)
              << " hit1_acc=" << fmt("%.6f", rep.hit1_acc) << " questions=" << rep.n_questions
              << " instances=" << rep.n_instances << '\n';
    return kOk;
}

int cmd_ablate(Overrides& ov) {
    auto cfg = ov.resolve();
    require(cfg.qa_train, "qa_train");
    require(cfg.qa_test, "qa_test");
    const auto kg = load_kg(cfg.kg, cfg);
    const auto table = load_table(cfg.embeddings, kg);
    const Gazetteer gaz(kg);
    const auto templates = load_template_table(cfg, kg);
    AblationSetup s;
    s.gazetteer = &gaz;
    s.templates = &templates;
    s.table = &table;
    {
        auto in = open_in(cfg.qa_train);
        s.train = read_questions(in, "train");
    }
    {
        auto in = open_in(cfg.qa_test);
        s.test = read_questions(in, "test");
    }
    s.phl = cfg.phl();
    s.model = cfg.model();
    s.model.dim = table.dim();
    s.training = cfg.training();
    s.reuse_model = cfg.reuse_model;
    const auto points = ablation_sweep(s, cfg.n_values);
    std::vector<ReportRow> rows;
    for (const auto& p : points)
        rows.push_back({"ablation", p.n_candidates, p.classification_accuracy, p.qa_accuracy, p.n_questions,
                        p.n_instances});
    write_report(cfg.report, rows);
    std::cout << "ablate points=" << points.size();
    for (const auto& p : points) std::cout << " n" << p.n_candidates << ":qa=" << fmt("%.4f", p.qa_accuracy);
    std::cout << '\n';
    return kOk;
}

int cmd_adapt(Overrides& ov) {
    auto cfg = ov.resolve();
    require(cfg.anchors, "anchors");
    const auto src_kg = load_kg(cfg.kg, cfg);
    const auto tgt_kg = load_kg(cfg.target_kg, cfg);
    DomainAdaptSetup s;
    s.source_table = load_table(cfg.embeddings, src_kg);
    s.target_table = load_table(cfg.target_embeddings, tgt_kg, "target_embeddings");
    if (s.source_table.dim() != s.target_table.dim()) throw DataError("adapt: source and target embedding dims differ");
    s.target_train = load_phl(cfg.target_phl_train, "target_phl_train");
    s.target_test = load_phl(cfg.target_phl_test, "target_phl_test");
    s.model = cfg.model();
    s.model.dim = s.source_table.dim();
    if (!cfg.source_checkpoint.empty()) {
        const auto ck = load_model(cfg.source_checkpoint, "source_checkpoint");
        if (ck.config.dim != s.model.dim || ck.config.hidden != s.model.hidden)
            throw ModelError("adapt: source checkpoint does not match dim/hidden");
        s.model = ck.config;
        s.source_model = ck.params;
    } else {
        s.source_train = load_phl(cfg.phl_train, "phl_train");
    }
    {
        auto in = open_in(cfg.anchors);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto t = detail::trim(line);
            if (t.empty() || t.front() == '#') continue;
            const auto parts = detail::split(t, '\t');
            if (parts.size() != 2)
                throw DataError("anchors line " + std::to_string(lineno) + ": expected source<TAB>target");
            const auto se = src_kg.entity(std::string(detail::trim(parts[0])));
            const auto te = tgt_kg.entity(std::string(detail::trim(parts[1])));
            if (!te || !se) throw DataError("anchors line " + std::to_string(lineno) + ": unknown entity");
            // The map carries target vectors into the source space.
            s.anchors.push_back({s.target_table.entity(*te), s.source_table.entity(*se)});
        }
    }
    s.ridge = cfg.ridge;
    s.fit_bias = cfg.fit_bias;
    s.source_training = cfg.training();
    s.target_training = cfg.training();
    const auto r = domain_adapt(s);
    if (!cfg.checkpoint.empty()) {
        auto out = open_out(cfg.checkpoint);
        save_checkpoint(out, r.adapted, s.model, cfg.seed);
    }
    const std::size_t n = max_group(s.target_test);
    write_report(cfg.report, {{"adapt-warm", n, r.warm.cls_acc, r.warm.qa_acc, r.warm.n_questions, r.warm.n_instances},
                              {"adapt-cold", n, r.cold_report.cls_acc, r.cold_report.qa_acc,
                               r.cold_report.n_questions, r.cold_report.n_instances}});
    std::cout << "adapt anchors=" << s.anchors.size() << " warm_cls=" << fmt("%.6f", r.warm.cls_acc)
              << " cold_cls=" << fmt("%.6f", r.cold_report.cls_acc) << " warm_plateau=" << plateau_epoch(r.warm_curve)
              << " cold_plateau=" << plateau_epoch(r.cold_curve) << '\n';
    return kOk;
}

int cmd_answer(Overrides& ov, const std::string& question) {
    auto cfg = ov.resolve();
    const auto kg = load_kg(cfg.kg, cfg);
    const auto table = load_table(cfg.embeddings, kg);
    const auto ck = load_model(cfg.checkpoint);
    if (ck.config.dim != table.dim()) throw ModelError("answer: checkpoint dim does not match embeddings");
    const Gazetteer gaz(kg);
    const auto templates = load_template_table(cfg, kg);
    PHLConfig pc = cfg.phl();
    pc.inner_cap = ck.config.inner_cap;
    pc.outer_cap = ck.config.outer_cap;
    const auto names = answer_question(question, gaz, templates, ck.params, table, ck.config, pc, cfg.linker(),
                                       cfg.threads);
    if (names.empty()) {
        std::cout << "no answer\n";
    } else {
        for (std::size_t i = 0; i < names.size(); ++i) std::cout << (i ? "|" : "") << names[i];
        std::cout << '\n';
    }
    return kOk;
}

int cmd_gen_synthetic(Overrides& ov) {
    auto cfg = ov.resolve();
    require(cfg.out, "out");
    const auto fx = synthetic::generate(cfg.synthetic());
    std::filesystem::create_directories(cfg.out);
    const std::filesystem::path dir(cfg.out);
    {
        auto o = open_out((dir / "kg.txt").string());
        synthetic::write_kg(o, fx);
    }
    {
        auto o = open_out((dir / "train.txt").string());
        synthetic::write_questions(o, fx.train);
    }
    {
        auto o = open_out((dir / "test.txt").string());
        synthetic::write_questions(o, fx.test);
    }
    std::cout << "synthetic triples=" << fx.triples.size() << " train=" << fx.train.size()
              << " test=" << fx.test.size() << " out=" << cfg.out << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kgnli: multi-hop question answering over a knowledge graph as entailment"};
    app.require_subcommand(1);

    const std::vector<std::string> phl_keys = {"templates", "n_candidates", "max_len", "max_paths", "hop",
                                               "inner_cap", "outer_cap",    "threshold", "prefix_scale", "seed"};
    const std::vector<std::string> train_keys = {"hidden", "inner_cap", "outer_cap", "lr",     "epochs",
                                                 "batch",  "dropout",   "freeze_embeddings", "seed", "threads"};
    auto cat = [](std::vector<std::string> a, const std::vector<std::string>& b) {
        for (const auto& k : b)
            if (std::find(a.begin(), a.end(), k) == a.end()) a.push_back(k);
        return a;
    };

    Overrides o_kg, o_emb, o_phl, o_train, o_eval, o_ablate, o_adapt, o_answer, o_synth;
    std::string question;

    auto* build_kg = app.add_subcommand("build-kg", "load and index a triple file, print its statistics");
    add_keys(build_kg, o_kg, {"kg", "delimiter", "out"});

    auto* train_emb = app.add_subcommand("train-embeddings", "train TransE entity/relation embeddings");
    add_keys(train_emb, o_emb,
             {"kg", "delimiter", "word_vectors", "embeddings", "dim", "margin", "transe_lr", "transe_epochs",
              "transe_batch", "norm", "seed"});

    auto* gen_phl = app.add_subcommand("gen-phl", "convert question files into premise-hypothesis-label files");
    add_keys(gen_phl, o_phl,
             cat({"kg", "delimiter", "qa_train", "qa_test", "phl_train", "phl_test", "export_text"}, phl_keys));

    auto* train_cmd = app.add_subcommand("train", "train the path encoder on a PHL file");
    add_keys(train_cmd, o_train,
             cat({"kg", "delimiter", "embeddings", "phl_train", "checkpoint", "tuned_embeddings"}, train_keys));

    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a PHL file");
    add_keys(eval_cmd, o_eval, {"kg", "delimiter", "embeddings", "checkpoint", "phl_test", "report", "threads"});

    auto* ablate = app.add_subcommand("ablate", "sweep the candidate count and report both metrics");
    add_keys(ablate, o_ablate,
             cat(cat({"kg", "delimiter", "embeddings", "qa_train", "qa_test", "n_values", "reuse_model", "report"},
                     phl_keys),
                 train_keys));

    auto* adapt = app.add_subcommand("adapt", "map a target KG into the source embedding space and fine-tune");
    add_keys(adapt, o_adapt,
             cat({"kg", "delimiter", "embeddings", "phl_train", "source_checkpoint", "target_kg", "target_embeddings",
                  "target_phl_train", "target_phl_test", "anchors", "ridge", "fit_bias", "checkpoint", "report"},
                 train_keys));

    auto* answer = app.add_subcommand("answer", "answer one question with a trained checkpoint");
    answer->add_option("question", question, "question text; bracket the topic entity, e.g. [Italy]")->required();
    add_keys(answer, o_answer,
             {"kg", "delimiter", "embeddings", "checkpoint", "templates", "hop", "max_len", "max_paths", "threshold",
              "prefix_scale", "seed", "threads"});

    auto* fixtures = app.add_subcommand("fixtures", "generate test fixtures");
    fixtures->require_subcommand(1);
    auto* gen_synth = fixtures->add_subcommand("gen-synthetic", "write a seeded movie-style KG and question files");
    add_keys(gen_synth, o_synth,
             {"out", "synth_entities", "synth_one_hop", "synth_two_hop", "synth_three_hop", "synth_test_fraction",
              "seed"});

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*build_kg) return cmd_build_kg(o_kg);
        if (*train_emb) return cmd_train_embeddings(o_emb);
        if (*gen_phl) return cmd_gen_phl(o_phl);
        if (*train_cmd) return cmd_train(o_train);
        if (*eval_cmd) return cmd_eval(o_eval);
        if (*ablate) return cmd_ablate(o_ablate);
        if (*adapt) return cmd_adapt(o_adapt);
        if (*answer) return cmd_answer(o_answer, question);
        if (*gen_synth) return cmd_gen_synthetic(o_synth);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << '\n';
        return kModel;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kConfig;
}
