// SPDX-License-Identifier: Apache-2.0
//
// Word embeddings trained on the corpus itself: CBOW and skip-gram with
// negative sampling, and a GloVe-style weighted least-squares objective
// over a distance-weighted co-occurrence matrix.  Documents are pooled by
// an unweighted mean of input vectors.
//
// Negatives are drawn from the unigram distribution raised to 3/4.  All
// trainers are single-threaded and deterministic per seed.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "threatbench/features.hpp"
#include "threatbench/rng.hpp"
#include "threatbench/tokenizer.hpp"

namespace tb {

struct EmbeddingTable {
    std::unordered_map<std::string, int> term_to_index;
    std::vector<std::string> terms;
    std::vector<std::vector<double>> input_vectors;
    std::vector<std::vector<double>> output_vectors;
    int dim = 0;
    std::string trainer_tag;
    std::vector<double> epoch_loss;  // mean per-example loss, one entry per epoch
};

struct CooccurrenceMatrix {
    std::unordered_map<std::uint64_t, double> counts;  // packed (i,j) -> weight
    std::unordered_map<std::string, int> term_to_index;
    std::vector<std::string> terms;
    int window = 0;
    double x_max = 100.0;
    double alpha_w = 0.75;

    static std::uint64_t pack(int i, int j) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
               static_cast<std::uint32_t>(j);
    }
    double at(int i, int j) const {
        auto it = counts.find(pack(i, j));
        return it == counts.end() ? 0.0 : it->second;
    }
};

namespace detail {

struct IndexedCorpus {
    std::unordered_map<std::string, int> term_to_index;
    std::vector<std::string> terms;
    std::vector<std::vector<int>> docs;
    std::vector<std::int64_t> term_count;
};

inline IndexedCorpus index_corpus(const LabeledDataset& corpus) {
    IndexedCorpus ic;
    for (const Document& d : corpus.docs) {
        std::vector<int> ids;
        for (const std::string& tok : whitespace_tokens(d.text)) {
            auto [it, inserted] = ic.term_to_index.try_emplace(tok, static_cast<int>(ic.terms.size()));
            if (inserted) {
                ic.terms.push_back(tok);
                ic.term_count.push_back(0);
            }
            ++ic.term_count[static_cast<std::size_t>(it->second)];
            ids.push_back(it->second);
        }
        ic.docs.push_back(std::move(ids));
    }
    if (ic.terms.empty()) throw std::invalid_argument("embeddings: corpus has no tokens");
    return ic;
}

// cumulative unigram^{3/4} table for negative sampling
struct NoiseTable {
    std::vector<double> cumulative;

    explicit NoiseTable(const std::vector<std::int64_t>& counts) {
        cumulative.resize(counts.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            acc += std::pow(static_cast<double>(counts[i]), 0.75);
            cumulative[i] = acc;
        }
    }
    int sample(Rng& rng) const {
        const double u = rng.uniform01() * cumulative.back();
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
        return static_cast<int>(it - cumulative.begin());
    }
};

inline std::vector<std::vector<double>> small_random_vectors(std::size_t n, int dim, Rng& rng) {
    std::vector<std::vector<double>> v(n, std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& row : v) {
        for (auto& e : row) e = rng.uniform(-0.5, 0.5) / dim;
    }
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One negative-sampling example: hidden vector h against a positive output
// vector and neg_k negative output vectors.
//   loss = -ln s(u_pos . h) - sum_k ln s(-u_k . h)
// The same form serves skip-gram (h = input[target], u = output[context])
// and CBOW (h = mean of context inputs, u = output[target]).
// ---------------------------------------------------------------------------

inline double sgns_example_loss(const std::vector<double>& h, const std::vector<double>& u_pos,
                                const std::vector<std::vector<double>>& u_negs) {
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    auto log_sigmoid = [](double z) {
        return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
    };
    double loss = -log_sigmoid(dot(u_pos, h));
    for (const auto& u : u_negs) loss -= log_sigmoid(-dot(u, h));
    return loss;
}

// Gradients of sgns_example_loss; g_negs[k] pairs with u_negs[k].
inline void sgns_example_grad(const std::vector<double>& h, const std::vector<double>& u_pos,
                              const std::vector<std::vector<double>>& u_negs,
                              std::vector<double>& g_h, std::vector<double>& g_pos,
                              std::vector<std::vector<double>>& g_negs) {
    const std::size_t dim = h.size();
    g_h.assign(dim, 0.0);
    g_pos.assign(dim, 0.0);
    g_negs.assign(u_negs.size(), std::vector<double>(dim, 0.0));

    double z = 0.0;
    for (std::size_t i = 0; i < dim; ++i) z += u_pos[i] * h[i];
    const double coeff_pos = sigmoid(z) - 1.0;
    for (std::size_t i = 0; i < dim; ++i) {
        g_h[i] += coeff_pos * u_pos[i];
        g_pos[i] = coeff_pos * h[i];
    }
    for (std::size_t k = 0; k < u_negs.size(); ++k) {
        double zn = 0.0;
        for (std::size_t i = 0; i < dim; ++i) zn += u_negs[k][i] * h[i];
        const double coeff = sigmoid(zn);
        for (std::size_t i = 0; i < dim; ++i) {
            g_h[i] += coeff * u_negs[k][i];
            g_negs[k][i] = coeff * h[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Skip-gram and CBOW trainers
// ---------------------------------------------------------------------------

namespace detail {

inline EmbeddingTable train_word2vec(const LabeledDataset& corpus, int dim, int window, int neg_k,
                                     int epochs, double lr, std::uint64_t seed, bool skipgram) {
    if (dim <= 0) throw std::invalid_argument("word2vec: dim must be > 0");
    if (window <= 0) throw std::invalid_argument("word2vec: window must be > 0");
    if (neg_k < 1) throw std::invalid_argument("word2vec: neg_k must be >= 1");

    IndexedCorpus ic = index_corpus(corpus);
    NoiseTable noise(ic.term_count);
    Rng rng(seed);

    EmbeddingTable table;
    table.term_to_index = ic.term_to_index;
    table.terms = ic.terms;
    table.dim = dim;
    table.trainer_tag = skipgram ? "skipgram" : "cbow";
    table.input_vectors = small_random_vectors(ic.terms.size(), dim, rng);
    table.output_vectors.assign(ic.terms.size(), std::vector<double>(static_cast<std::size_t>(dim), 0.0));

    std::vector<double> h(static_cast<std::size_t>(dim));
    std::vector<double> g_h, g_pos;
    std::vector<std::vector<double>> u_negs, g_negs;
    std::vector<int> negs(static_cast<std::size_t>(neg_k));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::int64_t n_examples = 0;
        for (const auto& doc : ic.docs) {
            const int len = static_cast<int>(doc.size());
            for (int pos = 0; pos < len; ++pos) {
                const int lo = std::max(0, pos - window);
                const int hi = std::min(len - 1, pos + window);

                if (skipgram) {
                    // one example per (target, context) pair
                    for (int c = lo; c <= hi; ++c) {
                        if (c == pos) continue;
                        for (auto& n : negs) n = noise.sample(rng);
                        auto& v_t = table.input_vectors[static_cast<std::size_t>(doc[static_cast<std::size_t>(pos)])];
                        auto& u_c = table.output_vectors[static_cast<std::size_t>(doc[static_cast<std::size_t>(c)])];
                        u_negs.clear();
                        for (int n : negs) u_negs.push_back(table.output_vectors[static_cast<std::size_t>(n)]);
                        epoch_loss += sgns_example_loss(v_t, u_c, u_negs);
                        ++n_examples;
                        sgns_example_grad(v_t, u_c, u_negs, g_h, g_pos, g_negs);
                        for (int i = 0; i < dim; ++i) {
                            v_t[static_cast<std::size_t>(i)] -= lr * g_h[static_cast<std::size_t>(i)];
                            u_c[static_cast<std::size_t>(i)] -= lr * g_pos[static_cast<std::size_t>(i)];
                        }
                        for (std::size_t k = 0; k < negs.size(); ++k) {
                            auto& u_n = table.output_vectors[static_cast<std::size_t>(negs[k])];
                            for (int i = 0; i < dim; ++i) {
                                u_n[static_cast<std::size_t>(i)] -= lr * g_negs[k][static_cast<std::size_t>(i)];
                            }
                        }
                    }
                } else {
                    // one example per position: mean context predicts target
                    const int n_ctx = hi - lo;  // window minus the target itself
                    if (n_ctx <= 0) continue;
                    std::fill(h.begin(), h.end(), 0.0);
                    for (int c = lo; c <= hi; ++c) {
                        if (c == pos) continue;
                        const auto& v = table.input_vectors[static_cast<std::size_t>(doc[static_cast<std::size_t>(c)])];
                        for (int i = 0; i < dim; ++i) h[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
                    }
                    for (auto& e : h) e /= n_ctx;
                    for (auto& n : negs) n = noise.sample(rng);
                    auto& u_t = table.output_vectors[static_cast<std::size_t>(doc[static_cast<std::size_t>(pos)])];
                    u_negs.clear();
                    for (int n : negs) u_negs.push_back(table.output_vectors[static_cast<std::size_t>(n)]);
                    epoch_loss += sgns_example_loss(h, u_t, u_negs);
                    ++n_examples;
                    sgns_example_grad(h, u_t, u_negs, g_h, g_pos, g_negs);
                    for (int i = 0; i < dim; ++i) {
                        u_t[static_cast<std::size_t>(i)] -= lr * g_pos[static_cast<std::size_t>(i)];
                    }
                    for (std::size_t k = 0; k < negs.size(); ++k) {
                        auto& u_n = table.output_vectors[static_cast<std::size_t>(negs[k])];
                        for (int i = 0; i < dim; ++i) {
                            u_n[static_cast<std::size_t>(i)] -= lr * g_negs[k][static_cast<std::size_t>(i)];
                        }
                    }
                    const double share = lr / n_ctx;
                    for (int c = lo; c <= hi; ++c) {
                        if (c == pos) continue;
                        auto& v = table.input_vectors[static_cast<std::size_t>(doc[static_cast<std::size_t>(c)])];
                        for (int i = 0; i < dim; ++i) {
                            v[static_cast<std::size_t>(i)] -= share * g_h[static_cast<std::size_t>(i)];
                        }
                    }
                }
            }
        }
        table.epoch_loss.push_back(n_examples ? epoch_loss / static_cast<double>(n_examples) : 0.0);
    }
    return table;
}

}  // namespace detail

inline EmbeddingTable train_skipgram(const LabeledDataset& corpus, int dim, int window, int neg_k,
                                     int epochs, double lr, std::uint64_t seed) {
    return detail::train_word2vec(corpus, dim, window, neg_k, epochs, lr, seed, true);
}

inline EmbeddingTable train_cbow(const LabeledDataset& corpus, int dim, int window, int neg_k,
                                 int epochs, double lr, std::uint64_t seed) {
    return detail::train_word2vec(corpus, dim, window, neg_k, epochs, lr, seed, false);
}

// ---------------------------------------------------------------------------
// GloVe: distance-weighted co-occurrence counts plus AdaGrad on
//   f(X_ij) (w_i . wt_j + b_i + bt_j - ln X_ij)^2,  f(x) = min(1, (x/x_max)^a)
// ---------------------------------------------------------------------------

inline CooccurrenceMatrix build_cooccurrence(const LabeledDataset& corpus, int window) {
    if (window < 1) throw std::invalid_argument("build_cooccurrence: window must be >= 1");
    detail::IndexedCorpus ic = detail::index_corpus(corpus);
    CooccurrenceMatrix m;
    m.term_to_index = std::move(ic.term_to_index);
    m.terms = std::move(ic.terms);
    m.window = window;
    for (const auto& doc : ic.docs) {
        const int len = static_cast<int>(doc.size());
        for (int i = 0; i < len; ++i) {
            for (int d = 1; d <= window && i + d < len; ++d) {
                const double w = 1.0 / d;
                m.counts[CooccurrenceMatrix::pack(doc[static_cast<std::size_t>(i)],
                                                  doc[static_cast<std::size_t>(i + d)])] += w;
                m.counts[CooccurrenceMatrix::pack(doc[static_cast<std::size_t>(i + d)],
                                                  doc[static_cast<std::size_t>(i)])] += w;
            }
        }
    }
    return m;
}

inline double glove_weight(double x, double x_max, double alpha_w) {
    return x < x_max ? std::pow(x / x_max, alpha_w) : 1.0;
}

inline double glove_entry_loss(const std::vector<double>& w_i, const std::vector<double>& wt_j,
                               double b_i, double bt_j, double x, double x_max, double alpha_w) {
    double d = b_i + bt_j - std::log(x);
    for (std::size_t k = 0; k < w_i.size(); ++k) d += w_i[k] * wt_j[k];
    return glove_weight(x, x_max, alpha_w) * d * d;
}

inline void glove_entry_grad(const std::vector<double>& w_i, const std::vector<double>& wt_j,
                             double b_i, double bt_j, double x, double x_max, double alpha_w,
                             std::vector<double>& g_wi, std::vector<double>& g_wtj, double& g_bi,
                             double& g_btj) {
    double d = b_i + bt_j - std::log(x);
    for (std::size_t k = 0; k < w_i.size(); ++k) d += w_i[k] * wt_j[k];
    const double g = 2.0 * glove_weight(x, x_max, alpha_w) * d;
    g_wi.resize(w_i.size());
    g_wtj.resize(w_i.size());
    for (std::size_t k = 0; k < w_i.size(); ++k) {
        g_wi[k] = g * wt_j[k];
        g_wtj[k] = g * w_i[k];
    }
    g_bi = g;
    g_btj = g;
}

inline EmbeddingTable train_glove(const CooccurrenceMatrix& cooc, int dim, int epochs, double lr,
                                  double x_max, double alpha_w, std::uint64_t seed) {
    if (dim <= 0) throw std::invalid_argument("train_glove: dim must be > 0");
    if (cooc.counts.empty()) throw std::invalid_argument("train_glove: empty co-occurrence matrix");

    // deterministic entry ordering regardless of hash map internals
    std::vector<std::pair<std::uint64_t, double>> entries;
    entries.reserve(cooc.counts.size());
    for (const auto& [key, x] : cooc.counts) {
        if (x > 0.0) entries.emplace_back(key, x);
    }
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    Rng rng(seed);
    const std::size_t v = cooc.terms.size();
    EmbeddingTable table;
    table.term_to_index = cooc.term_to_index;
    table.terms = cooc.terms;
    table.dim = dim;
    table.trainer_tag = "glove";
    table.input_vectors = detail::small_random_vectors(v, dim, rng);
    table.output_vectors = detail::small_random_vectors(v, dim, rng);
    std::vector<double> b(v, 0.0), bt(v, 0.0);

    // AdaGrad accumulators
    const double ada_eps = 1e-8;
    std::vector<std::vector<double>> acc_w(v, std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    std::vector<std::vector<double>> acc_wt(v, std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    std::vector<double> acc_b(v, 0.0), acc_bt(v, 0.0);

    std::vector<double> g_wi, g_wtj;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(entries);
        double epoch_loss = 0.0;
        for (const auto& [key, x] : entries) {
            const auto i = static_cast<std::size_t>(key >> 32);
            const auto j = static_cast<std::size_t>(key & 0xffffffff);
            double g_bi, g_btj;
            epoch_loss += glove_entry_loss(table.input_vectors[i], table.output_vectors[j], b[i],
                                           bt[j], x, x_max, alpha_w);
            glove_entry_grad(table.input_vectors[i], table.output_vectors[j], b[i], bt[j], x, x_max,
                             alpha_w, g_wi, g_wtj, g_bi, g_btj);
            for (int k = 0; k < dim; ++k) {
                const auto ks = static_cast<std::size_t>(k);
                acc_w[i][ks] += g_wi[ks] * g_wi[ks];
                table.input_vectors[i][ks] -= lr * g_wi[ks] / std::sqrt(acc_w[i][ks] + ada_eps);
                acc_wt[j][ks] += g_wtj[ks] * g_wtj[ks];
                table.output_vectors[j][ks] -= lr * g_wtj[ks] / std::sqrt(acc_wt[j][ks] + ada_eps);
            }
            acc_b[i] += g_bi * g_bi;
            b[i] -= lr * g_bi / std::sqrt(acc_b[i] + ada_eps);
            acc_bt[j] += g_btj * g_btj;
            bt[j] -= lr * g_btj / std::sqrt(acc_bt[j] + ada_eps);
        }
        table.epoch_loss.push_back(epoch_loss / static_cast<double>(entries.size()));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Pooling and serialization
// ---------------------------------------------------------------------------

inline DocVector embed_document(const EmbeddingTable& table, const Document& doc) {
    DocVector out;
    out.producer_id = "embed:" + table.trainer_tag;
    out.values.assign(static_cast<std::size_t>(table.dim), 0.0);
    int n = 0;
    for (const std::string& tok : whitespace_tokens(doc.text)) {
        auto it = table.term_to_index.find(tok);
        if (it == table.term_to_index.end()) continue;
        const auto& v = table.input_vectors[static_cast<std::size_t>(it->second)];
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += v[i];
        ++n;
    }
    if (n > 0) {
        for (double& e : out.values) e /= n;
    }
    return out;
}

// One `term<TAB>v1 v2 ... vD` line per term (input vectors).
inline void save_embeddings(const EmbeddingTable& table, std::ostream& os) {
    char buf[32];
    for (std::size_t t = 0; t < table.terms.size(); ++t) {
        os << table.terms[t];
        const auto& row = table.input_vectors[t];
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
            os << (i == 0 ? '\t' : ' ') << buf;
        }
        os << '\n';
    }
}

inline EmbeddingTable load_embeddings(std::istream& is, const std::string& trainer_tag = "loaded") {
    EmbeddingTable table;
    table.trainer_tag = trainer_tag;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("load_embeddings: malformed line");
        const std::string term = line.substr(0, tab);
        std::istringstream vals(line.substr(tab + 1));
        std::vector<double> v;
        double e;
        while (vals >> e) v.push_back(e);
        if (table.dim == 0) table.dim = static_cast<int>(v.size());
        if (static_cast<int>(v.size()) != table.dim) {
            throw std::runtime_error("load_embeddings: inconsistent dimensions");
        }
        table.term_to_index[term] = static_cast<int>(table.terms.size());
        table.terms.push_back(term);
        table.input_vectors.push_back(std::move(v));
    }
    table.output_vectors.assign(table.terms.size(),
                                std::vector<double>(static_cast<std::size_t>(table.dim), 0.0));
    return table;
}

}  // namespace tb
