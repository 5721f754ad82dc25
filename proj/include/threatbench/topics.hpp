// SPDX-License-Identifier: Apache-2.0
//
// Topic models: LDA fitted by collapsed Gibbs sampling, and LSI as a
// rank-k truncated SVD of the TF-IDF term-document matrix, computed with
// a randomized range finder (4 power iterations, oversampling 8) and a
// Jacobi eigensolver on the small projected Gram matrix.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "threatbench/features.hpp"
#include "threatbench/rng.hpp"
#include "threatbench/tokenizer.hpp"

namespace tb {

// ---------------------------------------------------------------------------
// LDA
// ---------------------------------------------------------------------------

struct LdaModel {
    int n_topics = 0;
    double alpha = 0.0;  // document-topic prior
    double beta = 0.0;   // topic-word prior
    std::unordered_map<std::string, int> term_to_index;
    std::vector<std::string> terms;
    std::vector<std::int64_t> topic_word;   // n_topics x V, row-major
    std::vector<std::int64_t> topic_total;  // n_topics

    std::int64_t word_count(int k, int w) const {
        return topic_word[static_cast<std::size_t>(k) * terms.size() + static_cast<std::size_t>(w)];
    }
};

// Collapsed Gibbs conditional for one token of word w, with all counts
// already excluding that token:
//   p(k) ~ (doc_topic[k] + alpha) * (topic_word_w[k] + beta) / (topic_total[k] + V beta)
inline std::vector<double> gibbs_conditional(const std::vector<double>& doc_topic,
                                             const std::vector<double>& topic_word_w,
                                             const std::vector<double>& topic_total, double alpha,
                                             double beta, std::size_t vocab_size) {
    const std::size_t k_topics = doc_topic.size();
    std::vector<double> p(k_topics);
    double total = 0.0;
    const double vb = static_cast<double>(vocab_size) * beta;
    for (std::size_t k = 0; k < k_topics; ++k) {
        p[k] = (doc_topic[k] + alpha) * (topic_word_w[k] + beta) / (topic_total[k] + vb);
        total += p[k];
    }
    for (double& v : p) v /= total;
    return p;
}

namespace detail {

// unnormalized conditional straight from integer count tables
inline void lda_site_weights(const LdaModel& m, const std::vector<std::int64_t>& doc_topic, int w,
                             std::vector<double>& weights) {
    const double vb = static_cast<double>(m.terms.size()) * m.beta;
    weights.resize(static_cast<std::size_t>(m.n_topics));
    for (int k = 0; k < m.n_topics; ++k) {
        weights[static_cast<std::size_t>(k)] =
            (static_cast<double>(doc_topic[static_cast<std::size_t>(k)]) + m.alpha) *
            (static_cast<double>(m.word_count(k, w)) + m.beta) /
            (static_cast<double>(m.topic_total[static_cast<std::size_t>(k)]) + vb);
    }
}

inline int sample_from_weights(const std::vector<double>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform01() * total;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        u -= weights[k];
        if (u <= 0.0) return static_cast<int>(k);
    }
    return static_cast<int>(weights.size()) - 1;
}

}  // namespace detail

inline LdaModel lda_fit(const LabeledDataset& corpus, int n_topics, double alpha, double beta,
                        int iters, std::uint64_t seed) {
    if (n_topics < 1) throw std::invalid_argument("lda_fit: n_topics must be >= 1");
    if (iters < 1) throw std::invalid_argument("lda_fit: iters must be >= 1");

    LdaModel m;
    m.n_topics = n_topics;
    m.alpha = alpha;
    m.beta = beta;

    std::vector<std::vector<int>> docs;
    for (const Document& d : corpus.docs) {
        std::vector<int> ids;
        for (const std::string& tok : whitespace_tokens(d.text)) {
            auto [it, inserted] = m.term_to_index.try_emplace(tok, static_cast<int>(m.terms.size()));
            if (inserted) m.terms.push_back(tok);
            ids.push_back(it->second);
        }
        docs.push_back(std::move(ids));
    }
    if (m.terms.empty()) throw std::invalid_argument("lda_fit: corpus has no tokens");

    const std::size_t v = m.terms.size();
    m.topic_word.assign(static_cast<std::size_t>(n_topics) * v, 0);
    m.topic_total.assign(static_cast<std::size_t>(n_topics), 0);
    std::vector<std::vector<std::int64_t>> doc_topic(docs.size());
    std::vector<std::vector<int>> z(docs.size());

    Rng rng(seed);
    for (std::size_t d = 0; d < docs.size(); ++d) {
        doc_topic[d].assign(static_cast<std::size_t>(n_topics), 0);
        z[d].resize(docs[d].size());
        for (std::size_t i = 0; i < docs[d].size(); ++i) {
            const int k = static_cast<int>(rng.uniform_below(static_cast<std::size_t>(n_topics)));
            z[d][i] = k;
            ++doc_topic[d][static_cast<std::size_t>(k)];
            ++m.topic_word[static_cast<std::size_t>(k) * v + static_cast<std::size_t>(docs[d][i])];
            ++m.topic_total[static_cast<std::size_t>(k)];
        }
    }

    std::vector<double> weights;
    for (int sweep = 0; sweep < iters; ++sweep) {
        for (std::size_t d = 0; d < docs.size(); ++d) {
            for (std::size_t i = 0; i < docs[d].size(); ++i) {
                const int w = docs[d][i];
                const int old_k = z[d][i];
                --doc_topic[d][static_cast<std::size_t>(old_k)];
                --m.topic_word[static_cast<std::size_t>(old_k) * v + static_cast<std::size_t>(w)];
                --m.topic_total[static_cast<std::size_t>(old_k)];

                detail::lda_site_weights(m, doc_topic[d], w, weights);
                const int new_k = detail::sample_from_weights(weights, rng);

                z[d][i] = new_k;
                ++doc_topic[d][static_cast<std::size_t>(new_k)];
                ++m.topic_word[static_cast<std::size_t>(new_k) * v + static_cast<std::size_t>(w)];
                ++m.topic_total[static_cast<std::size_t>(new_k)];
            }
        }
    }
    return m;
}

// Fold-in inference holding topic_word fixed; returns normalized doc-topic
// proportions.  An all-out-of-vocabulary document yields the uniform prior.
inline DocVector lda_infer(const LdaModel& m, const Document& doc, int iters, std::uint64_t seed) {
    std::vector<int> ids;
    for (const std::string& tok : whitespace_tokens(doc.text)) {
        auto it = m.term_to_index.find(tok);
        if (it != m.term_to_index.end()) ids.push_back(it->second);
    }

    const auto k_topics = static_cast<std::size_t>(m.n_topics);
    std::vector<std::int64_t> doc_topic(k_topics, 0);
    std::vector<int> z(ids.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int k = static_cast<int>(rng.uniform_below(k_topics));
        z[i] = k;
        ++doc_topic[static_cast<std::size_t>(k)];
    }
    std::vector<double> weights;
    for (int sweep = 0; sweep < iters; ++sweep) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            --doc_topic[static_cast<std::size_t>(z[i])];
            detail::lda_site_weights(m, doc_topic, ids[i], weights);
            z[i] = detail::sample_from_weights(weights, rng);
            ++doc_topic[static_cast<std::size_t>(z[i])];
        }
    }

    DocVector out;
    out.producer_id = "lda";
    out.values.resize(k_topics);
    const double denom = static_cast<double>(ids.size()) + m.alpha * static_cast<double>(m.n_topics);
    for (std::size_t k = 0; k < k_topics; ++k) {
        out.values[k] = (static_cast<double>(doc_topic[k]) + m.alpha) / denom;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Truncated randomized SVD
// ---------------------------------------------------------------------------

// column-major sparse matrix: entry lists per column
struct SparseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::vector<std::pair<int, double>>> col_entries;
};

struct SvdResult {
    int rows = 0;
    int rank = 0;
    std::vector<double> u;      // rows x rank, row-major, orthonormal columns
    std::vector<double> sigma;  // rank values, descending
};

namespace detail {

// modified Gram-Schmidt, applied twice; near-null columns are zeroed
inline void orthonormalize_columns(std::vector<double>& m, int rows, int cols) {
    for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < cols; ++j) {
            for (int i = 0; i < j; ++i) {
                double dot = 0.0;
                for (int r = 0; r < rows; ++r) {
                    dot += m[static_cast<std::size_t>(r) * cols + i] *
                           m[static_cast<std::size_t>(r) * cols + j];
                }
                for (int r = 0; r < rows; ++r) {
                    m[static_cast<std::size_t>(r) * cols + j] -=
                        dot * m[static_cast<std::size_t>(r) * cols + i];
                }
            }
            double norm = 0.0;
            for (int r = 0; r < rows; ++r) {
                const double x = m[static_cast<std::size_t>(r) * cols + j];
                norm += x * x;
            }
            norm = std::sqrt(norm);
            if (norm > 1e-150) {
                for (int r = 0; r < rows; ++r) m[static_cast<std::size_t>(r) * cols + j] /= norm;
            } else {
                for (int r = 0; r < rows; ++r) m[static_cast<std::size_t>(r) * cols + j] = 0.0;
            }
        }
    }
}

// cyclic Jacobi eigendecomposition of a symmetric matrix; eigenvalues
// descending, eigenvectors as columns of `vecs`
inline void sym_eigen_jacobi(std::vector<double> a, int n, std::vector<double>& values,
                             std::vector<double>& vecs) {
    vecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vecs[static_cast<std::size_t>(i) * n + i] = 1.0;
    auto at = [&](std::vector<double>& m, int i, int j) -> double& {
        return m[static_cast<std::size_t>(i) * n + j];
    };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) off += at(a, p, q) * at(a, p, q);
        }
        if (off < 1e-28) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(a, p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
                const double t =
                    (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(a, k, p), akq = at(a, k, q);
                    at(a, k, p) = c * akp - s * akq;
                    at(a, k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(a, p, k), aqk = at(a, q, k);
                    at(a, p, k) = c * apk - s * aqk;
                    at(a, q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = at(vecs, k, p), vkq = at(vecs, k, q);
                    at(vecs, k, p) = c * vkp - s * vkq;
                    at(vecs, k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        return a[static_cast<std::size_t>(x) * n + x] > a[static_cast<std::size_t>(y) * n + y];
    });
    values.resize(static_cast<std::size_t>(n));
    std::vector<double> sorted(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
        values[static_cast<std::size_t>(j)] = a[static_cast<std::size_t>(order[static_cast<std::size_t>(j)]) * n +
                                                order[static_cast<std::size_t>(j)]];
        for (int i = 0; i < n; ++i) {
            sorted[static_cast<std::size_t>(i) * n + j] =
                vecs[static_cast<std::size_t>(i) * n + order[static_cast<std::size_t>(j)]];
        }
    }
    vecs = std::move(sorted);
}

// y (rows x s) = A (rows x cols, sparse) * omega (cols x s)
inline void sparse_times_dense(const SparseMatrix& a, const std::vector<double>& omega, int s,
                               std::vector<double>& y) {
    y.assign(static_cast<std::size_t>(a.rows) * s, 0.0);
    for (int j = 0; j < a.cols; ++j) {
        for (const auto& [row, val] : a.col_entries[static_cast<std::size_t>(j)]) {
            const std::size_t y_off = static_cast<std::size_t>(row) * s;
            const std::size_t o_off = static_cast<std::size_t>(j) * s;
            for (int c = 0; c < s; ++c) y[y_off + c] += val * omega[o_off + c];
        }
    }
}

// z (cols x s) = A^T (cols x rows) * q (rows x s)
inline void sparse_transpose_times_dense(const SparseMatrix& a, const std::vector<double>& q, int s,
                                         std::vector<double>& z) {
    z.assign(static_cast<std::size_t>(a.cols) * s, 0.0);
    for (int j = 0; j < a.cols; ++j) {
        const std::size_t z_off = static_cast<std::size_t>(j) * s;
        for (const auto& [row, val] : a.col_entries[static_cast<std::size_t>(j)]) {
            const std::size_t q_off = static_cast<std::size_t>(row) * s;
            for (int c = 0; c < s; ++c) z[z_off + c] += val * q[q_off + c];
        }
    }
}

}  // namespace detail

inline SvdResult randomized_svd(const SparseMatrix& a, int k, int oversample = 8,
                                int power_iters = 4, std::uint64_t seed = 0x51d5eedULL) {
    const int min_dim = std::min(a.rows, a.cols);
    if (k < 1 || k > min_dim) {
        throw std::invalid_argument("randomized_svd: k must satisfy 1 <= k <= min(rows, cols)");
    }
    const int s = std::min(k + oversample, min_dim);

    Rng rng(seed);
    std::vector<double> omega(static_cast<std::size_t>(a.cols) * s);
    for (double& x : omega) x = rng.normal();

    std::vector<double> q, z;
    detail::sparse_times_dense(a, omega, s, q);        // rows x s
    detail::orthonormalize_columns(q, a.rows, s);
    for (int it = 0; it < power_iters; ++it) {
        detail::sparse_transpose_times_dense(a, q, s, z);  // cols x s
        detail::orthonormalize_columns(z, a.cols, s);
        detail::sparse_times_dense(a, z, s, q);            // rows x s
        detail::orthonormalize_columns(q, a.rows, s);
    }

    // b = Q^T A (s x cols), then eigendecompose b b^T (s x s)
    std::vector<double> bt;  // cols x s, row j holds b[:, j]
    detail::sparse_transpose_times_dense(a, q, s, bt);
    std::vector<double> gram(static_cast<std::size_t>(s) * s, 0.0);
    for (int j = 0; j < a.cols; ++j) {
        const std::size_t off = static_cast<std::size_t>(j) * s;
        for (int p = 0; p < s; ++p) {
            for (int r = p; r < s; ++r) {
                gram[static_cast<std::size_t>(p) * s + r] += bt[off + p] * bt[off + r];
            }
        }
    }
    for (int p = 0; p < s; ++p) {
        for (int r = 0; r < p; ++r) {
            gram[static_cast<std::size_t>(p) * s + r] = gram[static_cast<std::size_t>(r) * s + p];
        }
    }

    std::vector<double> eigvals, eigvecs;
    detail::sym_eigen_jacobi(std::move(gram), s, eigvals, eigvecs);

    SvdResult out;
    out.rows = a.rows;
    out.rank = k;
    out.sigma.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        out.sigma[static_cast<std::size_t>(j)] = std::sqrt(std::max(0.0, eigvals[static_cast<std::size_t>(j)]));
    }
    // u = q * eigvecs[:, :k]
    out.u.assign(static_cast<std::size_t>(a.rows) * k, 0.0);
    for (int r = 0; r < a.rows; ++r) {
        for (int p = 0; p < s; ++p) {
            const double qv = q[static_cast<std::size_t>(r) * s + p];
            if (qv == 0.0) continue;
            for (int j = 0; j < k; ++j) {
                out.u[static_cast<std::size_t>(r) * k + j] +=
                    qv * eigvecs[static_cast<std::size_t>(p) * s + j];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// LSI
// ---------------------------------------------------------------------------

struct LsiModel {
    TfidfModel tfidf;           // vocabulary map and idf weights of the fit corpus
    std::vector<double> u_k;    // T x k, row-major
    std::vector<double> sigma;  // k singular values, descending
    int rank = 0;

    int input_dim() const { return tfidf.dim(); }
};

inline LsiModel lsi_fit(const LabeledDataset& corpus, int k) {
    LsiModel model;
    model.tfidf = tfidf_fit(corpus);

    SparseMatrix a;
    a.rows = model.tfidf.dim();
    a.cols = static_cast<int>(corpus.docs.size());
    if (k < 1 || k > std::min(a.rows, a.cols)) {
        throw std::invalid_argument("lsi_fit: k must satisfy 1 <= k <= min(T, N)");
    }
    a.col_entries.resize(static_cast<std::size_t>(a.cols));
    for (int j = 0; j < a.cols; ++j) {
        const DocVector v = tfidf_transform(model.tfidf, corpus.docs[static_cast<std::size_t>(j)]);
        for (int t = 0; t < a.rows; ++t) {
            if (v.values[static_cast<std::size_t>(t)] != 0.0) {
                a.col_entries[static_cast<std::size_t>(j)].emplace_back(
                    t, v.values[static_cast<std::size_t>(t)]);
            }
        }
    }

    SvdResult svd = randomized_svd(a, k);
    model.u_k = std::move(svd.u);
    model.sigma = std::move(svd.sigma);
    model.rank = k;
    return model;
}

// v = Sigma^{-1} U^T x; coordinates with zero singular value map to 0.
inline DocVector lsi_project(const LsiModel& model, const DocVector& doc_tfidf) {
    if (static_cast<int>(doc_tfidf.values.size()) != model.input_dim()) {
        throw std::invalid_argument("lsi_project: dimension mismatch");
    }
    DocVector out;
    out.producer_id = "lsi";
    out.values.assign(static_cast<std::size_t>(model.rank), 0.0);
    for (int t = 0; t < model.input_dim(); ++t) {
        const double x = doc_tfidf.values[static_cast<std::size_t>(t)];
        if (x == 0.0) continue;
        for (int j = 0; j < model.rank; ++j) {
            out.values[static_cast<std::size_t>(j)] +=
                x * model.u_k[static_cast<std::size_t>(t) * model.rank + j];
        }
    }
    const double sigma_floor = model.sigma.empty() ? 0.0 : model.sigma[0] * 1e-12;
    for (int j = 0; j < model.rank; ++j) {
        const double s = model.sigma[static_cast<std::size_t>(j)];
        out.values[static_cast<std::size_t>(j)] =
            s > sigma_floor ? out.values[static_cast<std::size_t>(j)] / s : 0.0;
    }
    return out;
}

inline DocVector lsi_transform(const LsiModel& model, const Document& doc) {
    return lsi_project(model, tfidf_transform(model.tfidf, doc));
}

}  // namespace tb
