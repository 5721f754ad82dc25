// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles, kept independent of the library implementations they
// check: a threshold-swept trapezoidal ROC AUC, a unigram Naive Bayes
// classifier, a dense Jacobi SVD, and finite-difference helpers.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

// Area under the ROC curve by sweeping every distinct score as a threshold
// and integrating with the trapezoid rule.  Ties produce diagonal segments,
// which the trapezoid credits exactly like Mann-Whitney half credit.
inline double trapezoid_auc_pct(const std::vector<double>& scores, const std::vector<int>& truth) {
    std::size_t n_pos = 0, n_neg = 0;
    for (int t : truth) (t == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("trapezoid_auc: one class missing");

    std::vector<double> thresholds(scores);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    double area = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
    for (double thr : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= thr) (truth[i] == 1 ? tp : fp)++;
        }
        const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
        area += (fpr - prev_fpr) * 0.5 * (tpr + prev_tpr);
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    area += (1.0 - prev_fpr) * 0.5 * (1.0 + prev_tpr);
    return 100.0 * area;
}

// Multinomial Naive Bayes over whitespace-split unigrams with Laplace
// smoothing.  Used as a separability oracle for synthetic corpora.
struct NaiveBayes {
    std::map<std::string, std::array<double, 2>> log_like;
    std::array<double, 2> log_prior{};
    std::array<double, 2> log_unseen{};

    static std::vector<std::string> split(const std::string& text) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : text) {
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) out.push_back(std::move(cur));
        return out;
    }

    void fit(const std::vector<std::string>& texts, const std::vector<int>& labels) {
        std::map<std::string, std::array<double, 2>> counts;
        std::array<double, 2> total_tokens{};
        std::array<double, 2> n_docs{};
        for (std::size_t i = 0; i < texts.size(); ++i) {
            const int y = labels[i];
            n_docs[y] += 1.0;
            for (const std::string& w : split(texts[i])) {
                counts[w][y] += 1.0;
                total_tokens[y] += 1.0;
            }
        }
        const double v = static_cast<double>(counts.size());
        for (int y = 0; y < 2; ++y) {
            log_prior[y] = std::log(n_docs[y] / (n_docs[0] + n_docs[1]));
            log_unseen[y] = std::log(1.0 / (total_tokens[y] + v));
        }
        for (auto& [w, c] : counts) {
            for (int y = 0; y < 2; ++y) {
                log_like[w][y] = std::log((c[y] + 1.0) / (total_tokens[y] + v));
            }
        }
    }

    int predict(const std::string& text) const {
        std::array<double, 2> score = log_prior;
        for (const std::string& w : split(text)) {
            auto it = log_like.find(w);
            for (int y = 0; y < 2; ++y) {
                score[y] += (it != log_like.end()) ? it->second[y] : log_unseen[y];
            }
        }
        return score[1] > score[0] ? 1 : 0;
    }
};

// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double got, double want) {
    const double denom = std::max({std::abs(got), std::abs(want), 1e-12});
    return std::abs(got - want) / denom;
}

// Dense SVD of an m x n matrix (m >= n is not required) via cyclic Jacobi
// eigendecomposition of A^T A.  Row-major input; returns singular values
// descending plus right singular vectors as rows of V (n x n).
struct DenseSvd {
    std::vector<double> sigma;            // descending
    std::vector<std::vector<double>> v;   // v[i] = right singular vector i
};

inline DenseSvd dense_svd(const std::vector<std::vector<double>>& a) {
    const std::size_t m = a.size();
    const std::size_t n = a.empty() ? 0 : a[0].size();
    // G = A^T A, symmetric n x n
    std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) g[i][j] += a[r][i] * a[r][j];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) g[i][j] = g[j][i];
    }
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += g[p][q] * g[p][q];
        }
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(g[p][q]) < 1e-300) continue;
                const double theta = (g[q][q] - g[p][p]) / (2.0 * g[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double gkp = g[k][p], gkq = g[k][q];
                    g[k][p] = c * gkp - s * gkq;
                    g[k][q] = s * gkp + c * gkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double gpk = g[p][k], gqk = g[q][k];
                    g[p][k] = c * gpk - s * gqk;
                    g[q][k] = s * gpk + c * gqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return g[x][x] > g[y][y]; });

    DenseSvd out;
    out.sigma.resize(n);
    out.v.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        out.sigma[i] = std::sqrt(std::max(0.0, g[order[i]][order[i]]));
        for (std::size_t k = 0; k < n; ++k) out.v[i][k] = v[k][order[i]];
    }
    return out;
}

}  // namespace oracle
