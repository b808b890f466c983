// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// Metrics (per-instance classification accuracy and exact answer-set QA
// accuracy), the candidate-count sweep, the domain adaptation protocol and a
// mean-embedding logistic baseline.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kgnli/embedding.hpp"
#include "kgnli/error.hpp"
#include "kgnli/hrpe.hpp"
#include "kgnli/phl.hpp"

namespace kgnli {

inline double classification_accuracy(const std::vector<int>& predicted, const std::vector<int>& gold) {
    if (predicted.size() != gold.size()) throw DataError("classification_accuracy: length mismatch");
    if (predicted.empty()) throw DataError("classification_accuracy: empty input");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) hit += predicted[i] == gold[i];
    return static_cast<double>(hit) / static_cast<double>(gold.size());
}

struct QAResult {
    std::string question_id;
    std::set<EntityId> predicted_set;
    std::set<EntityId> gold_set;
    bool correct = false;
};

enum class QAMetric { ExactSet, Hit1 };

struct QuestionGroup {
    std::string question_id;
    std::vector<std::size_t> members; // indices into the instance list
};

// Groups by question id, ordered by id; every instance lands in exactly one group.
inline std::vector<QuestionGroup> group_by_question(const std::vector<PHLInstance>& instances) {
    std::map<std::string, std::vector<std::size_t>> m;
    for (std::size_t i = 0; i < instances.size(); ++i) m[instances[i].question_id].push_back(i);
    std::vector<QuestionGroup> out;
    out.reserve(m.size());
    for (auto& [q, idx] : m) out.push_back({q, std::move(idx)});
    return out;
}

// Exact-set mode: predicted set = candidates predicted entail, correct iff it
// equals the gold set (candidates labeled entail). Hit@1 mode: the entailed
// candidate with the highest entail probability must be gold.
inline QAResult score_question(const std::string& qid, const std::vector<const PHLInstance*>& members,
                               const std::vector<Prediction>& preds, QAMetric metric = QAMetric::ExactSet) {
    if (members.empty()) throw DataError("qa_accuracy: empty question group " + qid);
    QAResult r;
    r.question_id = qid;
    std::optional<std::pair<double, EntityId>> top;
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (members[k]->label == 0) r.gold_set.insert(members[k]->candidate);
        if (preds[k].label == 0) {
            r.predicted_set.insert(members[k]->candidate);
            const double pe = preds[k].probs.size() ? preds[k].probs[0] : 1.0;
            if (!top || pe > top->first) top = std::make_pair(pe, members[k]->candidate);
        }
    }
    if (metric == QAMetric::ExactSet)
        r.correct = r.predicted_set == r.gold_set;
    else
        r.correct = top && r.gold_set.count(top->second) > 0;
    return r;
}

struct EvalReport {
    double cls_acc = 0.0;
    double qa_acc = 0.0;
    double hit1_acc = 0.0;
    std::size_t n_questions = 0;
    std::size_t n_instances = 0;
    std::vector<QAResult> results; // exact-set results, ordered by question id
};

inline EvalReport evaluate_predictions(const std::vector<PHLInstance>& instances, const std::vector<Prediction>& preds) {
    if (instances.empty()) throw DataError("evaluate: no instances");
    if (instances.size() != preds.size()) throw DataError("evaluate: prediction count mismatch");
    EvalReport rep;
    rep.n_instances = instances.size();
    std::vector<int> p, g;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        p.push_back(preds[i].label);
        g.push_back(instances[i].label);
    }
    rep.cls_acc = classification_accuracy(p, g);
    std::size_t exact = 0, hit = 0;
    for (const auto& grp : group_by_question(instances)) {
        std::vector<const PHLInstance*> members;
        std::vector<Prediction> mp;
        for (auto i : grp.members) {
            members.push_back(&instances[i]);
            mp.push_back(preds[i]);
        }
        auto r = score_question(grp.question_id, members, mp, QAMetric::ExactSet);
        exact += r.correct;
        hit += score_question(grp.question_id, members, mp, QAMetric::Hit1).correct;
        rep.results.push_back(std::move(r));
    }
    rep.n_questions = rep.results.size();
    rep.qa_acc = static_cast<double>(exact) / static_cast<double>(rep.n_questions);
    rep.hit1_acc = static_cast<double>(hit) / static_cast<double>(rep.n_questions);
    return rep;
}

inline std::vector<Prediction> predict_all(const std::vector<PHLInstance>& instances, const HRPEParams& params,
                                           const EmbeddingTable& table, const ModelConfig& mcfg,
                                           std::size_t threads = 1) {
    std::vector<Prediction> preds(instances.size());
    detail::parallel_for(instances.size(), threads,
                         [&](std::size_t i) { preds[i] = predict(instances[i], params, table, mcfg); });
    return preds;
}

inline EvalReport evaluate(const std::vector<PHLInstance>& instances, const HRPEParams& params,
                           const EmbeddingTable& table, const ModelConfig& mcfg, std::size_t threads = 1) {
    return evaluate_predictions(instances, predict_all(instances, params, table, mcfg, threads));
}

// Names of the candidates predicted entailed, sorted; empty means no answer.
inline std::vector<std::string> answer_question(const std::string& question, const Gazetteer& gaz,
                                                const TemplateTable& templates, const HRPEParams& params,
                                                const EmbeddingTable& table, const ModelConfig& mcfg,
                                                const PHLConfig& pcfg, const LinkerConfig& lcfg = {},
                                                std::size_t threads = 1) {
    const auto instances = generate_query_phl(question, gaz, templates, pcfg, lcfg);
    const auto preds = predict_all(instances, params, table, mcfg, threads);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < instances.size(); ++i)
        if (preds[i].label == 0) out.push_back(gaz.kg().entity_name(instances[i].candidate));
    std::sort(out.begin(), out.end());
    return out;
}

struct ReportRow {
    std::string split;
    std::size_t n_candidates = 0;
    double cls_acc = 0.0;
    double qa_acc = 0.0;
    std::size_t n_questions = 0;
    std::size_t n_instances = 0;
};

inline void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
    out << "split,n_candidates,cls_acc,qa_acc,n_questions,n_instances\n";
    char buf[64];
    for (const auto& r : rows) {
        out << r.split << ',' << r.n_candidates << ',';
        std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.cls_acc, r.qa_acc);
        out << buf << ',' << r.n_questions << ',' << r.n_instances << '\n';
    }
}

inline void write_report_table(std::ostream& out, const std::vector<ReportRow>& rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %6s %9s %9s %10s %10s\n", "split", "n", "cls_acc", "qa_acc", "questions",
                  "instances");
    out << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-14s %6zu %9.4f %9.4f %10zu %10zu\n", r.split.c_str(), r.n_candidates,
                      r.cls_acc, r.qa_acc, r.n_questions, r.n_instances);
        out << buf;
    }
}

struct AblationPoint {
    std::size_t n_candidates = 0;
    double classification_accuracy = 0.0;
    double qa_accuracy = 0.0;
    std::size_t n_questions = 0;
    std::size_t n_instances = 0;
};

struct AblationSetup {
    const Gazetteer* gazetteer = nullptr;
    const TemplateTable* templates = nullptr;
    const EmbeddingTable* table = nullptr;
    std::vector<Question> train;
    std::vector<Question> test;
    PHLConfig phl;
    ModelConfig model;
    TrainConfig training;
    bool reuse_model = false; // train once at the first n and reuse it
};

// For every n: regenerate train/test PHL with n candidates, train (or reuse),
// evaluate on test.
inline std::vector<AblationPoint> ablation_sweep(const AblationSetup& s, const std::vector<std::size_t>& n_values) {
    if (n_values.empty()) throw ConfigError("ablation: no candidate counts given");
    for (auto n : n_values)
        if (n < 2) throw ConfigError("ablation: candidate counts must be >= 2");
    std::vector<AblationPoint> out;
    std::optional<HRPEParams> reused;
    for (auto n : n_values) {
        PHLConfig pc = s.phl;
        pc.n_candidates = n;
        const auto tr = convert_questions(s.train, *s.gazetteer, *s.templates, pc);
        const auto te = convert_questions(s.test, *s.gazetteer, *s.templates, pc);
        if (te.instances.empty()) throw DataError("ablation: no test instances at n=" + std::to_string(n));
        HRPEParams params;
        if (s.reuse_model && reused) {
            params = *reused;
        } else {
            params = train(tr.instances, *s.table, s.model, s.training).params;
            if (s.reuse_model) reused = params;
        }
        const auto rep = evaluate(te.instances, params, *s.table, s.model, s.training.threads);
        out.push_back({n, rep.cls_acc, rep.qa_acc, rep.n_questions, rep.n_instances});
    }
    return out;
}

// First epoch from which accuracy stays within tol of its final value.
inline std::size_t plateau_epoch(const std::vector<double>& curve, double tol = 0.02) {
    if (curve.empty()) return 0;
    const double final_acc = curve.back();
    std::size_t e = curve.size() - 1;
    while (e > 0 && curve[e - 1] >= final_acc - tol) --e;
    return e;
}

struct DomainAdaptSetup {
    std::vector<PHLInstance> source_train;
    EmbeddingTable source_table;
    std::vector<PHLInstance> target_train;
    std::vector<PHLInstance> target_test;
    EmbeddingTable target_table;
    std::vector<Anchor> anchors; // source = target-space vector, target = source-space vector
    double ridge = 0.0;
    bool fit_bias = false;
    ModelConfig model;
    TrainConfig source_training;
    TrainConfig target_training;
    std::optional<HRPEParams> source_model; // skip source training when given
};

struct DomainAdaptResult {
    DomainMap map;
    EmbeddingTable mapped_target;
    HRPEParams source_model;
    HRPEParams adapted;
    HRPEParams cold;
    // Target test classification accuracy after each epoch; index 0 is the
    // starting point before any target update.
    std::vector<double> warm_curve;
    std::vector<double> cold_curve;
    EvalReport warm;
    EvalReport cold_report;
};

// Trains the source model, fits the map carrying target embeddings into the
// source space, then fine-tunes from the source model on target data and
// compares against training from scratch on the same target data.
inline DomainAdaptResult domain_adapt(const DomainAdaptSetup& s) {
    if (s.anchors.empty()) throw DataError("domain_adapt: no anchors");
    DomainAdaptResult r;
    r.source_model =
        s.source_model ? *s.source_model : train(s.source_train, s.source_table, s.model, s.source_training).params;
    r.map = fit_domain_map(s.anchors, s.ridge, s.fit_bias);
    r.mapped_target = apply_domain_map(r.map, s.target_table);

    const std::size_t threads = s.target_training.threads;
    auto acc = [&](const HRPEParams& p, const EmbeddingTable& t) {
        return evaluate(s.target_test, p, t, s.model, threads).cls_acc;
    };

    TrainConfig warm = s.target_training;
    warm.init_params = r.source_model;
    r.warm_curve.push_back(acc(r.source_model, r.mapped_target));
    warm.on_epoch = [&](std::size_t, const HRPEParams& p, const EmbeddingTable& t) { r.warm_curve.push_back(acc(p, t)); };
    if (warm.epochs > 0) {
        auto res = train(s.target_train, r.mapped_target, s.model, warm);
        r.adapted = std::move(res.params);
    } else {
        r.adapted = r.source_model;
    }

    TrainConfig cold = s.target_training;
    cold.init_params.reset();
    const HRPEParams init = HRPEParams::init(s.model.dim, s.model.hidden, cold.seed);
    r.cold_curve.push_back(acc(init, r.mapped_target));
    cold.on_epoch = [&](std::size_t, const HRPEParams& p, const EmbeddingTable& t) { r.cold_curve.push_back(acc(p, t)); };
    if (cold.epochs > 0) {
        auto res = train(s.target_train, r.mapped_target, s.model, cold);
        r.cold = std::move(res.params);
    } else {
        r.cold = init;
    }
    r.warm = evaluate(s.target_test, r.adapted, r.mapped_target, s.model, threads);
    r.cold_report = evaluate(s.target_test, r.cold, r.mapped_target, s.model, threads);
    return r;
}

// Logistic regression on [mean premise token vector ; mean hypothesis token
// vector]; the logit is the contradict score.
struct BaselineModel {
    Vec w;
    Vec b = Vec::Zero(1);

    std::vector<TensorRef> tensors() { return {{"w", w.data(), w.rows(), 1}, {"b", b.data(), 1, 1}}; }
};

inline Vec baseline_features(const PHLInstance& inst, const EmbeddingTable& table) {
    const auto d = static_cast<Eigen::Index>(table.dim());
    Vec f = Vec::Zero(2 * d);
    std::size_t n = 0;
    for (const auto& p : inst.premise_paths)
        for (const auto& t : p) {
            f.head(d) += token_vector(t, table);
            ++n;
        }
    if (n) f.head(d) /= static_cast<double>(n);
    for (const auto& t : inst.hypothesis) f.tail(d) += token_vector(t, table);
    if (!inst.hypothesis.empty()) f.tail(d) /= static_cast<double>(inst.hypothesis.size());
    return f;
}

inline int baseline_classify(const PHLInstance& inst, const BaselineModel& m, const EmbeddingTable& table) {
    const double z = m.w.dot(baseline_features(inst, table)) + m.b[0];
    return z > 0 ? 1 : 0;
}

inline BaselineModel train_baseline(const std::vector<PHLInstance>& data, const EmbeddingTable& table,
                                    const TrainConfig& cfg) {
    if (data.empty()) throw DataError("train_baseline: empty training set");
    if (cfg.batch == 0) throw ConfigError("train_baseline: batch must be positive");
    BaselineModel m;
    m.w = Vec::Zero(static_cast<Eigen::Index>(2 * table.dim()));
    std::vector<Vec> feats;
    for (const auto& inst : data) feats.push_back(baseline_features(inst, table));
    Adam adam;
    Rng order_rng(cfg.seed ^ 0x5DEECE66DULL);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
            const std::size_t end = std::min(order.size(), b + cfg.batch);
            BaselineModel g;
            g.w = Vec::Zero(m.w.size());
            for (std::size_t k = b; k < end; ++k) {
                const auto& x = feats[order[k]];
                const double p = detail::sigmoid(m.w.dot(x) + m.b[0]);
                const double dz = (p - static_cast<double>(data[order[k]].label)) / static_cast<double>(end - b);
                g.w += dz * x;
                g.b[0] += dz;
            }
            adam.step(m.tensors(), g.tensors(), cfg.lr);
        }
    }
    return m;
}

} // namespace kgnli
