// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: builds balance scenarios, runs every
// (method x upsampling x seed) cell, and renders result tables.
//
// Each cell derives its RNG stream from (run seed, scenario index, method
// index, mode), so any execution order produces identical results.  The
// test split is built once per scenario+seed and never touched by
// upsampling.  A failed cell is recorded and the grid continues.
//
// Persisted outputs (results.csv, results.md, manifest.json, model files)
// are a pure function of the config file and input CSVs; wall-clock cell
// runtimes are kept in memory and printed to the console only.
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "threatbench/classifiers.hpp"
#include "threatbench/config.hpp"
#include "threatbench/corpus.hpp"
#include "threatbench/embeddings.hpp"
#include "threatbench/features.hpp"
#include "threatbench/metrics.hpp"
#include "threatbench/neural.hpp"
#include "threatbench/tokenizer.hpp"
#include "threatbench/topics.hpp"

namespace tb {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class UpsamplingMode { off, on, both };

struct MethodHyperparams {
    // word2vec (cbow / skipgram)
    int emb_dim = 64, emb_window = 5, emb_neg_k = 5, emb_epochs = 5;
    double emb_lr = 0.05;
    // glove
    int glove_dim = 64, glove_window = 5, glove_epochs = 30;
    double glove_lr = 0.05, glove_x_max = 100.0, glove_alpha_w = 0.75;
    // lda
    int lda_topics = 20, lda_iters = 200, lda_infer_iters = 32;
    double lda_alpha = -1.0;  // <0: Griffiths-Steyvers 50/K
    double lda_beta = 0.01;
    // lsi
    int lsi_rank = 100;  // clamped to min(T, N)
    // ensemble members
    double logistic_l2 = 1e-3, logistic_lr = 0.5;
    int logistic_epochs = 200;
    double svm_c = 1.0, svm_lr = 0.1;
    int svm_epochs = 200;
    int forest_trees = 100, forest_depth = 12;
    // transformer
    TransformerConfig tconf;
    int lora_rank = 8;
    float lora_alpha = 16.0f;
    std::vector<std::string> lora_targets = {"wq", "wk", "wv", "wo"};
    bool use_lora = true;  // false: full fine-tune, reported as transformer_full
    float t_lr = 2e-5f;
    int t_epochs = 10, t_batch = 16;
    std::string t_class_weights = "ones";  // "ones" or "inverse"
};

struct ExperimentConfig {
    // data source
    std::string source = "synth";  // "synth" or "csv"
    std::string threat_csv, nonthreat_csv;
    int synth_n_threat = 915, synth_pool_size = 10000;
    SynthParams synth;
    std::uint64_t synth_seed = 20240401;

    std::vector<std::size_t> scenarios = {1000, 5000, 10000};
    std::vector<std::string> methods = {"tfidf", "glove",       "cbow", "skipgram",
                                        "lda",   "lsi",         "transformer_lora"};
    UpsamplingMode upsampling = UpsamplingMode::both;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    double test_fraction = 0.1;
    std::string output_dir = "out";
    bool save_models = true;

    MethodHyperparams hp;
    std::string config_text;  // raw bytes, hashed into the manifest
};

inline const std::set<std::string>& known_methods() {
    static const std::set<std::string> k = {"tfidf", "glove", "cbow",   "skipgram",
                                            "lda",   "lsi",   "transformer_lora"};
    return k;
}

inline ExperimentConfig parse_experiment_config(const ConfigFile& f) {
    ExperimentConfig c;
    c.config_text = f.raw_text();
    c.source = f.get_string("data.source", c.source);
    c.threat_csv = f.get_string("data.threat_csv", "");
    c.nonthreat_csv = f.get_string("data.nonthreat_csv", "");
    c.synth_n_threat = static_cast<int>(f.get_int("data.synth_n_threat", c.synth_n_threat));
    c.synth_pool_size = static_cast<int>(f.get_int("data.synth_pool_size", c.synth_pool_size));
    c.synth.overlap = f.get_double("data.synth_overlap", c.synth.overlap);
    c.synth.vocab_shared = static_cast<int>(f.get_int("data.synth_vocab_shared", c.synth.vocab_shared));
    c.synth.vocab_per_class =
        static_cast<int>(f.get_int("data.synth_vocab_per_class", c.synth.vocab_per_class));
    c.synth.len_min = static_cast<int>(f.get_int("data.synth_len_min", c.synth.len_min));
    c.synth.len_max = static_cast<int>(f.get_int("data.synth_len_max", c.synth.len_max));
    c.synth_seed = static_cast<std::uint64_t>(f.get_int("data.synth_seed", static_cast<long long>(c.synth_seed)));
    if (c.source != "synth" && c.source != "csv") {
        throw std::runtime_error("config: data.source must be \"synth\" or \"csv\"");
    }
    if (c.source == "csv" && (c.threat_csv.empty() || c.nonthreat_csv.empty())) {
        throw std::runtime_error("config: csv source needs data.threat_csv and data.nonthreat_csv");
    }

    c.scenarios.clear();
    for (long long n : f.get_int_list("run.scenarios", {1000, 5000, 10000})) {
        if (n < 1) throw std::runtime_error("config: scenario sizes must be positive");
        c.scenarios.push_back(static_cast<std::size_t>(n));
    }
    c.methods = f.get_string_list("run.methods", c.methods);
    if (c.methods.empty()) throw std::runtime_error("config: run.methods must be non-empty");
    for (const auto& m : c.methods) {
        if (!known_methods().count(m)) throw std::runtime_error("config: unknown method " + m);
    }
    const std::string ups = f.get_string("run.upsampling", "both");
    if (ups == "off") c.upsampling = UpsamplingMode::off;
    else if (ups == "on") c.upsampling = UpsamplingMode::on;
    else if (ups == "both") c.upsampling = UpsamplingMode::both;
    else throw std::runtime_error("config: run.upsampling must be off/on/both");
    c.seeds.clear();
    for (long long s : f.get_int_list("run.seeds", {1, 2, 3})) {
        c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (c.seeds.empty()) throw std::runtime_error("config: run.seeds must be non-empty");
    c.test_fraction = f.get_double("run.test_fraction", c.test_fraction);
    c.output_dir = f.get_string("run.output_dir", c.output_dir);
    c.save_models = f.get_bool("run.save_models", c.save_models);

    MethodHyperparams& h = c.hp;
    h.emb_dim = static_cast<int>(f.get_int("embeddings.dim", h.emb_dim));
    h.emb_window = static_cast<int>(f.get_int("embeddings.window", h.emb_window));
    h.emb_neg_k = static_cast<int>(f.get_int("embeddings.neg_k", h.emb_neg_k));
    h.emb_epochs = static_cast<int>(f.get_int("embeddings.epochs", h.emb_epochs));
    h.emb_lr = f.get_double("embeddings.lr", h.emb_lr);
    h.glove_dim = static_cast<int>(f.get_int("glove.dim", h.glove_dim));
    h.glove_window = static_cast<int>(f.get_int("glove.window", h.glove_window));
    h.glove_epochs = static_cast<int>(f.get_int("glove.epochs", h.glove_epochs));
    h.glove_lr = f.get_double("glove.lr", h.glove_lr);
    h.glove_x_max = f.get_double("glove.x_max", h.glove_x_max);
    h.glove_alpha_w = f.get_double("glove.alpha_w", h.glove_alpha_w);
    h.lda_topics = static_cast<int>(f.get_int("lda.topics", h.lda_topics));
    h.lda_alpha = f.get_double("lda.alpha", h.lda_alpha);
    h.lda_beta = f.get_double("lda.beta", h.lda_beta);
    h.lda_iters = static_cast<int>(f.get_int("lda.iters", h.lda_iters));
    h.lda_infer_iters = static_cast<int>(f.get_int("lda.infer_iters", h.lda_infer_iters));
    h.lsi_rank = static_cast<int>(f.get_int("lsi.rank", h.lsi_rank));
    h.logistic_l2 = f.get_double("classifiers.logistic_l2", h.logistic_l2);
    h.logistic_lr = f.get_double("classifiers.logistic_lr", h.logistic_lr);
    h.logistic_epochs = static_cast<int>(f.get_int("classifiers.logistic_epochs", h.logistic_epochs));
    h.svm_c = f.get_double("classifiers.svm_c", h.svm_c);
    h.svm_lr = f.get_double("classifiers.svm_lr", h.svm_lr);
    h.svm_epochs = static_cast<int>(f.get_int("classifiers.svm_epochs", h.svm_epochs));
    h.forest_trees = static_cast<int>(f.get_int("classifiers.forest_trees", h.forest_trees));
    h.forest_depth = static_cast<int>(f.get_int("classifiers.forest_depth", h.forest_depth));
    h.tconf.d_model = static_cast<int>(f.get_int("transformer.d_model", h.tconf.d_model));
    h.tconf.n_layers = static_cast<int>(f.get_int("transformer.n_layers", h.tconf.n_layers));
    h.tconf.n_heads = static_cast<int>(f.get_int("transformer.n_heads", h.tconf.n_heads));
    h.tconf.n_kv_heads = static_cast<int>(f.get_int("transformer.n_kv_heads", h.tconf.n_kv_heads));
    h.tconf.swa_window = static_cast<int>(f.get_int("transformer.window", h.tconf.swa_window));
    h.tconf.max_len = static_cast<int>(f.get_int("transformer.max_len", h.tconf.max_len));
    h.tconf.vocab_size = static_cast<int>(f.get_int("transformer.vocab_size", h.tconf.vocab_size));
    h.tconf.rope_base = static_cast<float>(f.get_double("transformer.rope_base", h.tconf.rope_base));
    h.lora_rank = static_cast<int>(f.get_int("transformer.lora_rank", h.lora_rank));
    h.lora_alpha = static_cast<float>(f.get_double("transformer.lora_alpha", h.lora_alpha));
    h.lora_targets = f.get_string_list("transformer.lora_targets", h.lora_targets);
    h.use_lora = f.get_bool("transformer.use_lora", h.use_lora);
    h.t_lr = static_cast<float>(f.get_double("transformer.lr", h.t_lr));
    h.t_epochs = static_cast<int>(f.get_int("transformer.epochs", h.t_epochs));
    h.t_batch = static_cast<int>(f.get_int("transformer.batch_size", h.t_batch));
    h.t_class_weights = f.get_string("transformer.class_weights", h.t_class_weights);
    return c;
}

// ---------------------------------------------------------------------------
// Trained pipelines: one per grid cell, scoreable and serializable
// ---------------------------------------------------------------------------

struct TrainedPipeline {
    std::string method;  // report label ("transformer_full" when LoRA is off)
    std::optional<TfidfModel> tfidf;
    std::optional<EmbeddingTable> embedding;
    std::optional<LdaModel> lda;
    int lda_infer_iters = 32;
    std::optional<LsiModel> lsi;
    std::vector<ClassicalModel> ensemble;
    std::optional<BpeVocab> vocab;
    std::optional<Checkpoint> checkpoint;  // merged transformer
    std::vector<double> train_loss_trace;
    std::int64_t trainable_params = 0;  // transformer runs: adapter + head tensors
    std::int64_t total_params = 0;
};

namespace detail {

inline DocVector pipeline_features(const TrainedPipeline& p, const Document& doc) {
    if (p.tfidf && !p.lsi) return tfidf_transform(*p.tfidf, doc);
    if (p.embedding) return embed_document(*p.embedding, doc);
    if (p.lda) return lda_infer(*p.lda, doc, p.lda_infer_iters, 0x1da1da);
    if (p.lsi) {
        // cosine-space LSI: the whitened coordinates carry a 1/sigma scale,
        // so document vectors are length-normalized before classification
        DocVector v = lsi_transform(*p.lsi, doc);
        double norm_sq = 0.0;
        for (double e : v.values) norm_sq += e * e;
        if (norm_sq > 0.0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (double& e : v.values) e *= inv;
        }
        return v;
    }
    throw std::runtime_error("pipeline: no feature model present");
}

inline std::vector<ClassicalModel> train_ensemble(const std::vector<DocVector>& x,
                                                  const std::vector<int>& y,
                                                  const MethodHyperparams& hp, std::uint64_t seed) {
    std::vector<ClassicalModel> members;
    members.push_back(
        train_logistic(x, y, hp.logistic_l2, hp.logistic_epochs, hp.logistic_lr, derive_seed(seed, {1})));
    members.push_back(train_svm(x, y, hp.svm_c, hp.svm_epochs, hp.svm_lr, derive_seed(seed, {2})));
    members.push_back(
        train_forest(x, y, hp.forest_trees, hp.forest_depth, derive_seed(seed, {3})));
    return members;
}

}  // namespace detail

inline TrainedPipeline train_pipeline(const std::string& method, const ExperimentConfig& cfg,
                                      const LabeledDataset& train, std::uint64_t seed) {
    const MethodHyperparams& hp = cfg.hp;
    TrainedPipeline p;
    p.method = method;

    if (method == "transformer_lora") {
        TransformerConfig tc = hp.tconf;
        tc.validate();
        p.method = hp.use_lora ? "transformer_lora" : "transformer_full";
        p.vocab = train_bpe(train, tc.vocab_size);
        TokenizedDataset data;
        for (const Document& d : train.docs) {
            data.seqs.push_back(encode(*p.vocab, d.text, tc.max_len));
            data.labels.push_back(d.label);
        }
        BaseWeights base = init_base(tc, derive_seed(seed, {10}));
        std::vector<LoraAdapter> adapters;
        if (hp.use_lora) {
            LoraOptions opts;
            opts.rank = hp.lora_rank;
            opts.alpha = hp.lora_alpha;
            opts.targets = hp.lora_targets;
            adapters = attach_adapters(base, opts, derive_seed(seed, {11}));
        }
        TrainState st;
        st.lr = hp.t_lr;
        st.epochs = hp.t_epochs;
        st.batch_size = hp.t_batch;
        st.seed = derive_seed(seed, {12});
        if (hp.t_class_weights == "inverse") {
            st.class_weights.assign(2, 1.0);
            const double n0 = static_cast<double>(train.count(0));
            const double n1 = static_cast<double>(train.count(1));
            st.class_weights[0] = (n0 + n1) / (2.0 * std::max(1.0, n0));
            st.class_weights[1] = (n0 + n1) / (2.0 * std::max(1.0, n1));
        }
        p.total_params = base_parameter_count(base);
        p.trainable_params =
            hp.use_lora ? trainable_parameter_count(adapters, base) : p.total_params;
        const FinetuneResult result =
            finetune(base, adapters, data, st, hp.use_lora ? TrainScope::lora : TrainScope::full);
        p.train_loss_trace = result.epoch_loss;
        Checkpoint ck;
        ck.base = hp.use_lora ? lora_merge(base, adapters) : base;
        ck.seed = seed;
        p.checkpoint = std::move(ck);
        return p;
    }

    // classical feature pipeline feeding the soft-voting ensemble
    if (method == "tfidf") {
        p.tfidf = tfidf_fit(train);
    } else if (method == "cbow") {
        p.embedding = train_cbow(train, hp.emb_dim, hp.emb_window, hp.emb_neg_k, hp.emb_epochs,
                                 hp.emb_lr, derive_seed(seed, {20}));
    } else if (method == "skipgram") {
        p.embedding = train_skipgram(train, hp.emb_dim, hp.emb_window, hp.emb_neg_k, hp.emb_epochs,
                                     hp.emb_lr, derive_seed(seed, {21}));
    } else if (method == "glove") {
        const CooccurrenceMatrix cooc = build_cooccurrence(train, hp.glove_window);
        p.embedding = train_glove(cooc, hp.glove_dim, hp.glove_epochs, hp.glove_lr, hp.glove_x_max,
                                  hp.glove_alpha_w, derive_seed(seed, {22}));
    } else if (method == "lda") {
        const double alpha = hp.lda_alpha > 0 ? hp.lda_alpha : 50.0 / hp.lda_topics;
        p.lda = lda_fit(train, hp.lda_topics, alpha, hp.lda_beta, hp.lda_iters, derive_seed(seed, {23}));
        p.lda_infer_iters = hp.lda_infer_iters;
    } else if (method == "lsi") {
        TfidfModel probe = tfidf_fit(train);
        const int k = std::min(hp.lsi_rank,
                               std::min(probe.dim(), static_cast<int>(train.docs.size())));
        p.lsi = lsi_fit(train, k);
    } else {
        throw std::runtime_error("train_pipeline: unknown method " + method);
    }

    std::vector<DocVector> x;
    std::vector<int> y;
    x.reserve(train.docs.size());
    for (const Document& d : train.docs) {
        x.push_back(detail::pipeline_features(p, d));
        y.push_back(d.label);
    }
    p.ensemble = detail::train_ensemble(x, y, hp, derive_seed(seed, {30}));
    return p;
}

// probability of the threat class
inline double pipeline_score(const TrainedPipeline& p, const Document& doc) {
    if (p.checkpoint) {
        const TokenSequence seq = encode(*p.vocab, doc.text, p.checkpoint->base.cfg.max_len);
        const auto logits = forward(p.checkpoint->base, p.checkpoint->adapters, seq);
        return softmax_probs(logits)[1];
    }
    return ensemble_predict_proba(p.ensemble, detail::pipeline_features(p, doc)).p[1];
}

inline std::vector<double> pipeline_scores(const TrainedPipeline& p, const LabeledDataset& ds) {
    std::vector<double> out;
    out.reserve(ds.docs.size());
    for (const Document& d : ds.docs) out.push_back(pipeline_score(p, d));
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline serialization: classical pipelines in one text container,
// transformer pipelines as a binary checkpoint plus the tokenizer vocab.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string hexd_str(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

inline void save_tfidf_block(const TfidfModel& m, std::ostream& os) {
    os << "tfidf " << m.dim() << ' ' << m.n_docs_fit << '\n';
    for (int t = 0; t < m.dim(); ++t) {
        os << m.terms[static_cast<std::size_t>(t)] << '\t'
           << hexd_str(m.idf[static_cast<std::size_t>(t)]) << '\n';
    }
}

// expects the leading "tfidf" tag to be consumed already
inline TfidfModel load_tfidf_block(std::istream& is) {
    int dim;
    TfidfModel m;
    is >> dim >> m.n_docs_fit;
    is.ignore();
    for (int t = 0; t < dim; ++t) {
        std::string line;
        std::getline(is, line);
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("pipeline: bad tfidf line");
        m.term_to_index[line.substr(0, tab)] = t;
        m.terms.push_back(line.substr(0, tab));
        m.idf.push_back(std::strtod(line.c_str() + tab + 1, nullptr));
    }
    return m;
}

}  // namespace detail

inline void save_pipeline(const TrainedPipeline& p, const std::string& prefix) {
    if (p.checkpoint) {
        save_checkpoint(*p.checkpoint, prefix + ".ckpt");
        save_bpe_vocab(*p.vocab, prefix + ".vocab");
        std::ofstream meta(prefix + ".model", std::ios::binary);
        meta << "threatbench-pipeline v1\nmethod " << p.method << "\ntransformer\n";
        return;
    }
    std::ofstream os(prefix + ".model", std::ios::binary);
    if (!os) throw std::runtime_error("save_pipeline: cannot open " + prefix + ".model");
    os << "threatbench-pipeline v1\nmethod " << p.method << '\n';
    if (p.tfidf && !p.lsi) {
        detail::save_tfidf_block(*p.tfidf, os);
    } else if (p.embedding) {
        os << "embedding " << p.embedding->trainer_tag << ' ' << p.embedding->dim << ' '
           << p.embedding->terms.size() << '\n';
        save_embeddings(*p.embedding, os);
    } else if (p.lda) {
        const LdaModel& m = *p.lda;
        os << "lda " << m.n_topics << ' ' << detail::hexd_str(m.alpha) << ' '
           << detail::hexd_str(m.beta) << ' ' << m.terms.size() << ' ' << p.lda_infer_iters << '\n';
        for (const auto& t : m.terms) os << t << '\n';
        for (const auto c : m.topic_word) os << c << ' ';
        os << '\n';
        for (const auto c : m.topic_total) os << c << ' ';
        os << '\n';
    } else if (p.lsi) {
        const LsiModel& m = *p.lsi;
        os << "lsi " << m.rank << '\n';
        detail::save_tfidf_block(m.tfidf, os);
        for (double s : m.sigma) os << detail::hexd_str(s) << ' ';
        os << '\n';
        for (double u : m.u_k) os << detail::hexd_str(u) << ' ';
        os << '\n';
    }
    os << "ensemble " << p.ensemble.size() << '\n';
    for (const auto& m : p.ensemble) save_model(m, os);
}

inline TrainedPipeline load_pipeline(const std::string& prefix) {
    std::ifstream is(prefix + ".model", std::ios::binary);
    if (!is) throw std::runtime_error("load_pipeline: cannot open " + prefix + ".model");
    std::string header, version, tag;
    std::getline(is, header);
    if (header != "threatbench-pipeline v1") throw std::runtime_error("load_pipeline: bad header");
    TrainedPipeline p;
    is >> tag >> p.method;
    is >> tag;
    if (tag == "transformer") {
        p.checkpoint = load_checkpoint(prefix + ".ckpt");
        p.vocab = load_bpe_vocab(prefix + ".vocab");
        return p;
    }
    if (tag == "tfidf") {
        p.tfidf = detail::load_tfidf_block(is);
    } else if (tag == "embedding") {
        std::string trainer;
        int dim;
        std::size_t n_terms;
        is >> trainer >> dim >> n_terms;
        is.ignore();
        std::string lines, line;
        for (std::size_t t = 0; t < n_terms; ++t) {
            std::getline(is, line);
            lines += line + '\n';
        }
        std::istringstream emb(lines);
        p.embedding = load_embeddings(emb, trainer);
    } else if (tag == "lda") {
        LdaModel m;
        std::string alpha, beta;
        std::size_t v;
        is >> m.n_topics >> alpha >> beta >> v >> p.lda_infer_iters;
        m.alpha = std::strtod(alpha.c_str(), nullptr);
        m.beta = std::strtod(beta.c_str(), nullptr);
        m.terms.resize(v);
        for (std::size_t t = 0; t < v; ++t) {
            is >> m.terms[t];
            m.term_to_index[m.terms[t]] = static_cast<int>(t);
        }
        m.topic_word.resize(static_cast<std::size_t>(m.n_topics) * v);
        for (auto& c : m.topic_word) is >> c;
        m.topic_total.resize(static_cast<std::size_t>(m.n_topics));
        for (auto& c : m.topic_total) is >> c;
        p.lda = std::move(m);
    } else if (tag == "lsi") {
        LsiModel m;
        is >> m.rank;
        is >> tag;  // inner "tfidf" tag
        m.tfidf = detail::load_tfidf_block(is);
        m.sigma.resize(static_cast<std::size_t>(m.rank));
        for (auto& s : m.sigma) {
            std::string h;
            is >> h;
            s = std::strtod(h.c_str(), nullptr);
        }
        m.u_k.resize(static_cast<std::size_t>(m.tfidf.dim()) * m.rank);
        for (auto& u : m.u_k) {
            std::string h;
            is >> h;
            u = std::strtod(h.c_str(), nullptr);
        }
        p.lsi = std::move(m);
    } else {
        throw std::runtime_error("load_pipeline: unknown feature block " + tag);
    }
    std::size_t n_members;
    is >> tag >> n_members;
    for (std::size_t i = 0; i < n_members; ++i) p.ensemble.push_back(load_model(is));
    return p;
}

// ---------------------------------------------------------------------------
// The experiment grid
// ---------------------------------------------------------------------------

struct ResultRow {
    std::string method;
    std::string scenario_id;
    bool upsampled = false;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricReport report;
    double runtime_seconds = 0.0;  // in-memory only, never persisted
};

struct ResultTable {
    std::vector<ResultRow> rows;
    std::vector<std::string> method_order;
    std::vector<std::string> scenario_order;
    bool has_both_modes = false;
};

inline std::string scenario_id_for(std::size_t n_nonthreat) {
    return "n" + std::to_string(n_nonthreat);
}

inline ResultTable run_experiment(const ExperimentConfig& cfg,
                                  std::ostream* progress = nullptr) {
    LabeledDataset threat, pool;
    if (cfg.source == "csv") {
        threat = load_csv(cfg.threat_csv);
        pool = load_csv(cfg.nonthreat_csv);
    } else {
        threat = synth_class(cfg.synth_n_threat, 1, cfg.synth, cfg.synth_seed);
        pool = synth_class(cfg.synth_pool_size, 0, cfg.synth, cfg.synth_seed);
    }

    ResultTable table;
    table.scenario_order.reserve(cfg.scenarios.size());
    for (std::size_t n : cfg.scenarios) table.scenario_order.push_back(scenario_id_for(n));
    table.has_both_modes = cfg.upsampling == UpsamplingMode::both;

    const std::string pool_id = cfg.source == "csv" ? cfg.nonthreat_csv : "synth";
    if (cfg.save_models) {
        std::filesystem::create_directories(std::filesystem::path(cfg.output_dir) / "models");
    }

    for (std::size_t si = 0; si < cfg.scenarios.size(); ++si) {
        for (std::uint64_t seed : cfg.seeds) {
            const ScenarioSpec spec{cfg.scenarios[si], pool_id, derive_seed(seed, {si, 1})};
            const LabeledDataset scenario = build_scenario(threat, pool, spec);
            const SplitPair split =
                stratified_split(scenario, cfg.test_fraction, derive_seed(seed, {si, 2}));
            std::optional<LabeledDataset> upsampled;
            if (cfg.upsampling != UpsamplingMode::off) {
                upsampled = upsample_minority(split.train, derive_seed(seed, {si, 3}));
            }
            std::vector<int> test_labels;
            for (const Document& d : split.test.docs) test_labels.push_back(d.label);

            for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
                std::vector<int> modes;
                if (cfg.upsampling == UpsamplingMode::off) modes = {0};
                else if (cfg.upsampling == UpsamplingMode::on) modes = {1};
                else modes = {0, 1};

                for (int mode : modes) {
                    ResultRow row;
                    row.scenario_id = table.scenario_order[si];
                    row.upsampled = mode == 1;
                    row.seed = seed;
                    row.method = cfg.methods[mi];
                    const auto t0 = std::chrono::steady_clock::now();
                    try {
                        const LabeledDataset& train = mode == 1 ? *upsampled : split.train;
                        const std::uint64_t cell_seed =
                            derive_seed(seed, {si, mi, static_cast<std::uint64_t>(mode), 4});
                        const TrainedPipeline pipeline =
                            train_pipeline(cfg.methods[mi], cfg, train, cell_seed);
                        row.method = pipeline.method;  // transformer_full when LoRA is off
                        row.report = report(pipeline_scores(pipeline, split.test), test_labels);
                        row.ok = true;
                        if (cfg.save_models) {
                            const std::string prefix =
                                (std::filesystem::path(cfg.output_dir) / "models" /
                                 (row.scenario_id + "_seed" + std::to_string(seed) + "_" +
                                  row.method + (row.upsampled ? "_up" : "_plain")))
                                    .string();
                            save_pipeline(pipeline, prefix);
                        }
                    } catch (const std::exception& e) {
                        row.ok = false;
                        row.error = e.what();
                    }
                    row.runtime_seconds =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    if (progress != nullptr) {
                        (*progress) << row.scenario_id << " seed=" << seed << " " << row.method
                                    << (row.upsampled ? " (upsampled)" : "") << ": "
                                    << (row.ok ? "f1=" + format_pct(row.report.f_1) + " auc=" +
                                                     format_pct(row.report.auc)
                                               : "FAILED " + row.error)
                                    << "  [" << format_pct(row.runtime_seconds) << "s]\n";
                    }
                    // track the actual report label order
                    bool seen = false;
                    for (const auto& m : table.method_order) {
                        if (m == row.method) seen = true;
                    }
                    if (!seen) table.method_order.push_back(row.method);
                    table.rows.push_back(std::move(row));
                }
            }
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string results_csv_header() {
    return "method,scenario,upsampled,seed,status," + metric_csv_header();
}

inline std::string results_csv(const ResultTable& table) {
    std::ostringstream os;
    os << results_csv_header() << '\n';
    for (const ResultRow& r : table.rows) {
        os << r.method << ',' << r.scenario_id << ',' << (r.upsampled ? 1 : 0) << ',' << r.seed
           << ',';
        if (r.ok) {
            os << "ok," << metric_csv_row(r.report);
        } else {
            std::string msg = r.error;
            for (char& c : msg) {
                if (c == ',' || c == '\n' || c == '\r') c = ';';
            }
            os << "failed:" << msg << ",,,,,,,,,";
        }
        os << '\n';
    }
    return os.str();
}

inline ResultTable parse_results_csv(std::istream& is) {
    ResultTable table;
    std::string line;
    if (!std::getline(is, line) || line != results_csv_header()) {
        throw std::runtime_error("results.csv: unexpected header");
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() < 5) throw std::runtime_error("results.csv: short row");
        ResultRow r;
        r.method = fields[0];
        r.scenario_id = fields[1];
        r.upsampled = fields[2] == "1";
        r.seed = std::stoull(fields[3]);
        r.ok = fields[4] == "ok";
        if (r.ok) {
            if (fields.size() != 14) throw std::runtime_error("results.csv: bad metric row");
            std::string joined = fields[5];
            for (std::size_t i = 6; i < 14; ++i) joined += "," + fields[i];
            r.report = metric_from_csv_row(joined);
        } else {
            r.error = fields[4].rfind("failed:", 0) == 0 ? fields[4].substr(7) : fields[4];
        }
        if (r.upsampled) table.has_both_modes = true;
        bool seen_m = false;
        for (const auto& m : table.method_order) {
            if (m == r.method) seen_m = true;
        }
        if (!seen_m) table.method_order.push_back(r.method);
        bool seen_s = false;
        for (const auto& s : table.scenario_order) {
            if (s == r.scenario_id) seen_s = true;
        }
        if (!seen_s) table.scenario_order.push_back(r.scenario_id);
        table.rows.push_back(std::move(r));
    }
    return table;
}

namespace detail {

struct CellAggregate {
    double acc = 0, f1 = 0, f05 = 0, f2 = 0, auc = 0;
    int n = 0;
    void add(const MetricReport& r) {
        acc += r.accuracy;
        f1 += r.f_1;
        f05 += r.f_05;
        f2 += r.f_2;
        auc += r.auc;
        ++n;
    }
    double mean(double CellAggregate::*field) const {
        return n == 0 ? 0.0 : this->*field / n;
    }
};

}  // namespace detail

// Renders the mean-over-seeds table.  With both upsampling modes present,
// cells use the "plain (upsampled)" bracket style; the csv format instead
// emits separate plain/upsampled columns so numbers re-parse exactly.
inline std::string emit_table(const ResultTable& table, const std::string& format) {
    if (format != "markdown" && format != "csv") {
        throw std::invalid_argument("emit_table: format must be markdown or csv");
    }
    if (table.rows.empty()) throw std::invalid_argument("emit_table: empty table");

    // aggregate means over seeds per (scenario, method, mode)
    std::map<std::string, detail::CellAggregate> agg;  // key scenario|method|mode
    auto key = [](const std::string& s, const std::string& m, bool up) {
        return s + "|" + m + "|" + (up ? "1" : "0");
    };
    for (const ResultRow& r : table.rows) {
        if (r.ok) agg[key(r.scenario_id, r.method, r.upsampled)].add(r.report);
    }

    std::ostringstream os;
    const std::vector<std::pair<std::string, double detail::CellAggregate::*>> metrics = {
        {"Acc", &detail::CellAggregate::acc}, {"F1", &detail::CellAggregate::f1},
        {"F0.5", &detail::CellAggregate::f05}, {"F2", &detail::CellAggregate::f2},
        {"AUC", &detail::CellAggregate::auc}};

    if (format == "csv") {
        os << "scenario,method";
        for (const auto& [name, _] : metrics) {
            os << ',' << name;
            if (table.has_both_modes) os << ',' << name << "_up";
        }
        os << '\n';
        for (const auto& sc : table.scenario_order) {
            for (const auto& m : table.method_order) {
                const auto plain = agg.find(key(sc, m, false));
                const auto up = agg.find(key(sc, m, true));
                if (plain == agg.end() && up == agg.end()) continue;
                os << sc << ',' << m;
                for (const auto& [name, field] : metrics) {
                    os << ',';
                    if (plain != agg.end() && plain->second.n) os << format_pct(plain->second.mean(field));
                    else if (!table.has_both_modes && up != agg.end() && up->second.n)
                        os << format_pct(up->second.mean(field));
                    if (table.has_both_modes) {
                        os << ',';
                        if (up != agg.end() && up->second.n) os << format_pct(up->second.mean(field));
                    }
                }
                os << '\n';
            }
        }
        return os.str();
    }

    for (const auto& sc : table.scenario_order) {
        os << "### Scenario " << sc << "\n\n";
        os << "| Method |";
        for (const auto& [name, _] : metrics) os << ' ' << name << " |";
        os << "\n|---|";
        for (std::size_t i = 0; i < metrics.size(); ++i) os << "---|";
        os << '\n';
        for (const auto& m : table.method_order) {
            const auto plain = agg.find(key(sc, m, false));
            const auto up = agg.find(key(sc, m, true));
            if (plain == agg.end() && up == agg.end()) {
                bool attempted = false;
                for (const ResultRow& r : table.rows) {
                    if (r.scenario_id == sc && r.method == m) attempted = true;
                }
                if (attempted) {
                    os << "| " << m << " | FAILED |";
                    for (std::size_t i = 1; i < metrics.size(); ++i) os << " |";
                    os << '\n';
                }
                continue;
            }
            os << "| " << m << " |";
            for (const auto& [name, field] : metrics) {
                os << ' ';
                if (plain != agg.end() && plain->second.n) {
                    os << format_pct(plain->second.mean(field));
                    if (table.has_both_modes && up != agg.end() && up->second.n) {
                        os << " (" << format_pct(up->second.mean(field)) << ")";
                    }
                } else if (up != agg.end() && up->second.n) {
                    os << format_pct(up->second.mean(field));
                }
                os << " |";
            }
            os << '\n';
        }
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Output directory: results.csv, results.md, manifest.json
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h = (h ^ c) * 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("hash: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

inline std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline void write_output_dir(const ExperimentConfig& cfg, const ResultTable& table) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    const std::string csv = results_csv(table);
    {
        std::ofstream out(fs::path(cfg.output_dir) / "results.csv", std::ios::binary);
        out << csv;
    }
    // render the markdown from the parsed csv so `report` reproduces it exactly
    std::istringstream csv_in(csv);
    const ResultTable reparsed = parse_results_csv(csv_in);
    {
        std::ofstream out(fs::path(cfg.output_dir) / "results.md", std::ios::binary);
        out << emit_table(reparsed, "markdown");
    }

    nlohmann::ordered_json manifest;
    manifest["format"] = "threatbench-manifest-v1";
    manifest["config_hash"] = hex64(fnv1a64(cfg.config_text));
    nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
    for (auto s : cfg.seeds) seeds.push_back(s);
    manifest["seeds"] = seeds;
    nlohmann::ordered_json scenarios = nlohmann::ordered_json::array();
    for (auto n : cfg.scenarios) scenarios.push_back(n);
    manifest["scenarios"] = scenarios;
    manifest["methods"] = cfg.methods;
    manifest["upsampling"] = cfg.upsampling == UpsamplingMode::both
                                 ? "both"
                                 : (cfg.upsampling == UpsamplingMode::on ? "on" : "off");
    manifest["test_fraction"] = cfg.test_fraction;
    if (cfg.source == "csv") {
        manifest["inputs"] = {
            {"threat_csv", {{"path", cfg.threat_csv}, {"fnv1a64", hex64(fnv1a64_file(cfg.threat_csv))}}},
            {"nonthreat_csv",
             {{"path", cfg.nonthreat_csv}, {"fnv1a64", hex64(fnv1a64_file(cfg.nonthreat_csv))}}}};
    } else {
        manifest["inputs"] = {{"synth",
                               {{"n_threat", cfg.synth_n_threat},
                                {"pool_size", cfg.synth_pool_size},
                                {"overlap", cfg.synth.overlap},
                                {"vocab_shared", cfg.synth.vocab_shared},
                                {"vocab_per_class", cfg.synth.vocab_per_class},
                                {"len_min", cfg.synth.len_min},
                                {"len_max", cfg.synth.len_max},
                                {"seed", cfg.synth_seed}}}};
    }
    std::size_t failures = 0;
    for (const auto& r : table.rows) {
        if (!r.ok) ++failures;
    }
    manifest["rows"] = table.rows.size();
    manifest["failures"] = failures;
    {
        std::ofstream out(fs::path(cfg.output_dir) / "manifest.json", std::ios::binary);
        out << manifest.dump(2) << '\n';
    }
}

}  // namespace tb
