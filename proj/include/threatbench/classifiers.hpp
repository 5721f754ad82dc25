// SPDX-License-Identifier: Apache-2.0
//
// Classical classifiers over DocVectors: full-batch logistic regression,
// linear SVM (hinge subgradient descent plus Platt-style sigmoid
// calibration on training margins), and a random forest with Gini splits.
// Combined by an unweighted soft-voting ensemble.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "threatbench/features.hpp"
#include "threatbench/rng.hpp"

namespace tb {

struct ProbVector {
    std::array<double, 2> p{0.5, 0.5};
};

namespace detail {
inline double dot(const std::vector<double>& w, const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return s;
}

inline void check_training_input(const std::vector<DocVector>& x, const std::vector<int>& y) {
    if (x.empty() || x.size() != y.size()) {
        throw std::invalid_argument("train: need matching, non-empty features and labels");
    }
    const std::size_t dim = x[0].values.size();
    for (const auto& v : x) {
        if (v.values.size() != dim) throw std::invalid_argument("train: inconsistent feature dims");
    }
    bool has0 = false, has1 = false;
    for (int label : y) (label == 1 ? has1 : has0) = true;
    if (!has0 || !has1) throw std::invalid_argument("train: both classes must be present");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
};

inline double logistic_loss(const LogisticModel& m, const std::vector<DocVector>& x,
                            const std::vector<int>& y, double l2) {
    double loss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double z = detail::dot(m.weights, x[i].values) + m.bias;
        // -y log p - (1-y) log(1-p), stable form
        loss += std::max(z, 0.0) - z * y[i] + std::log1p(std::exp(-std::abs(z)));
    }
    loss /= static_cast<double>(x.size());
    for (double w : m.weights) loss += 0.5 * l2 * w * w;
    return loss;
}

inline void logistic_grad(const LogisticModel& m, const std::vector<DocVector>& x,
                          const std::vector<int>& y, double l2, std::vector<double>& gw,
                          double& gb) {
    gw.assign(m.weights.size(), 0.0);
    gb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double err = sigmoid(detail::dot(m.weights, x[i].values) + m.bias) - y[i];
        for (std::size_t j = 0; j < gw.size(); ++j) gw[j] += err * x[i].values[j];
        gb += err;
    }
    const double inv_n = 1.0 / static_cast<double>(x.size());
    for (std::size_t j = 0; j < gw.size(); ++j) gw[j] = gw[j] * inv_n + l2 * m.weights[j];
    gb *= inv_n;
}

inline LogisticModel train_logistic(const std::vector<DocVector>& x, const std::vector<int>& y,
                                    double l2, int epochs, double lr, std::uint64_t /*seed*/) {
    detail::check_training_input(x, y);
    LogisticModel m;
    m.weights.assign(x[0].values.size(), 0.0);
    std::vector<double> gw;
    double gb;
    for (int e = 0; e < epochs; ++e) {
        logistic_grad(m, x, y, l2, gw, gb);
        for (std::size_t j = 0; j < m.weights.size(); ++j) m.weights[j] -= lr * gw[j];
        m.bias -= lr * gb;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Linear SVM with sigmoid calibration
// ---------------------------------------------------------------------------

struct SvmModel {
    std::vector<double> weights;
    double bias = 0.0;
    double calib_a = 1.0;
    double calib_b = 0.0;
};

// mean hinge + ||w||^2 / (2C), labels in {0,1} mapped to {-1,+1}
inline double svm_objective(const SvmModel& m, const std::vector<DocVector>& x,
                            const std::vector<int>& y, double c) {
    double loss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = 2.0 * y[i] - 1.0;
        loss += std::max(0.0, 1.0 - s * (detail::dot(m.weights, x[i].values) + m.bias));
    }
    loss /= static_cast<double>(x.size());
    for (double w : m.weights) loss += w * w / (2.0 * c);
    return loss;
}

inline void svm_subgrad(const SvmModel& m, const std::vector<DocVector>& x,
                        const std::vector<int>& y, double c, std::vector<double>& gw, double& gb) {
    gw.assign(m.weights.size(), 0.0);
    gb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = 2.0 * y[i] - 1.0;
        if (s * (detail::dot(m.weights, x[i].values) + m.bias) < 1.0) {
            for (std::size_t j = 0; j < gw.size(); ++j) gw[j] -= s * x[i].values[j];
            gb -= s;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(x.size());
    for (std::size_t j = 0; j < gw.size(); ++j) gw[j] = gw[j] * inv_n + m.weights[j] / c;
    gb *= inv_n;
}

// 100 Newton steps on the calibration NLL; margins fixed.
inline void fit_sigmoid_calibration(SvmModel& m, const std::vector<double>& margins,
                                    const std::vector<int>& y) {
    double a = 1.0, b = 0.0;
    for (int step = 0; step < 100; ++step) {
        double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
        for (std::size_t i = 0; i < margins.size(); ++i) {
            const double p = sigmoid(a * margins[i] + b);
            const double err = p - y[i];
            const double w = std::max(p * (1.0 - p), 1e-12);
            ga += err * margins[i];
            gb += err;
            haa += w * margins[i] * margins[i];
            hab += w * margins[i];
            hbb += w;
        }
        haa += 1e-9;
        hbb += 1e-9;
        const double det = haa * hbb - hab * hab;
        if (std::abs(det) < 1e-300) break;
        double da = (hbb * ga - hab * gb) / det;
        double db = (haa * gb - hab * ga) / det;
        // damp huge steps on separable data
        const double sz = std::max(std::abs(da), std::abs(db));
        if (sz > 10.0) {
            da *= 10.0 / sz;
            db *= 10.0 / sz;
        }
        a -= da;
        b -= db;
        if (std::abs(da) + std::abs(db) < 1e-12) break;
    }
    m.calib_a = a;
    m.calib_b = b;
}

inline SvmModel train_svm(const std::vector<DocVector>& x, const std::vector<int>& y, double c,
                          int epochs, double lr, std::uint64_t /*seed*/) {
    detail::check_training_input(x, y);
    SvmModel m;
    m.weights.assign(x[0].values.size(), 0.0);
    std::vector<double> gw;
    double gb;
    for (int e = 0; e < epochs; ++e) {
        svm_subgrad(m, x, y, c, gw, gb);
        for (std::size_t j = 0; j < m.weights.size(); ++j) m.weights[j] -= lr * gw[j];
        m.bias -= lr * gb;
    }
    std::vector<double> margins(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        margins[i] = detail::dot(m.weights, x[i].values) + m.bias;
    }
    fit_sigmoid_calibration(m, margins, y);
    return m;
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

struct TreeNode {
    int feature = -1;       // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    std::array<double, 2> leaf_prob{0.0, 0.0};
};

struct ForestModel {
    std::vector<std::vector<TreeNode>> trees;
    int n_trees = 0;
    int max_depth = 0;
    int n_features = 0;
    std::uint64_t seed = 0;
};

inline double gini_impurity(double n0, double n1) {
    const double n = n0 + n1;
    if (n == 0.0) return 0.0;
    const double p0 = n0 / n, p1 = n1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

namespace detail {

struct TreeBuilder {
    const std::vector<DocVector>& x;
    const std::vector<int>& y;
    int max_depth;
    int n_candidates;
    Rng& rng;
    std::vector<TreeNode> nodes;

    int build(std::vector<std::size_t>& idx, int depth) {
        double n0 = 0.0, n1 = 0.0;
        for (std::size_t i : idx) (y[i] == 1 ? n1 : n0) += 1.0;

        const auto make_leaf = [&]() {
            TreeNode leaf;
            const double n = n0 + n1;
            leaf.leaf_prob = {n0 / n, n1 / n};
            nodes.push_back(leaf);
            return static_cast<int>(nodes.size() - 1);
        };
        if (depth >= max_depth || idx.size() < 2 || n0 == 0.0 || n1 == 0.0) return make_leaf();

        // sqrt(D) feature candidates, sampled without replacement
        const int dim = static_cast<int>(x[0].values.size());
        std::vector<int> features(static_cast<std::size_t>(dim));
        std::iota(features.begin(), features.end(), 0);
        for (int i = 0; i < n_candidates && i < dim; ++i) {
            const auto j = static_cast<std::size_t>(i) +
                           rng.uniform_below(features.size() - static_cast<std::size_t>(i));
            std::swap(features[static_cast<std::size_t>(i)], features[j]);
        }

        const double parent_gini = gini_impurity(n0, n1);
        int best_feature = -1;
        double best_threshold = 0.0, best_score = parent_gini - 1e-12;
        std::vector<std::pair<double, int>> vals(idx.size());
        for (int fi = 0; fi < n_candidates && fi < dim; ++fi) {
            const int f = features[static_cast<std::size_t>(fi)];
            for (std::size_t i = 0; i < idx.size(); ++i) {
                vals[i] = {x[idx[i]].values[static_cast<std::size_t>(f)], y[idx[i]]};
            }
            std::sort(vals.begin(), vals.end());
            double l0 = 0.0, l1 = 0.0, r0 = n0, r1 = n1;
            for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                (vals[i].second == 1 ? l1 : l0) += 1.0;
                (vals[i].second == 1 ? r1 : r0) -= 1.0;
                if (vals[i].first == vals[i + 1].first) continue;
                const double nl = l0 + l1, nr = r0 + r1, n = nl + nr;
                const double score =
                    (nl / n) * gini_impurity(l0, l1) + (nr / n) * gini_impurity(r0, r1);
                if (score < best_score) {
                    best_score = score;
                    best_feature = f;
                    best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                }
            }
        }
        if (best_feature < 0) return make_leaf();

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : idx) {
            (x[i].values[static_cast<std::size_t>(best_feature)] <= best_threshold ? left_idx
                                                                                   : right_idx)
                .push_back(i);
        }
        if (left_idx.empty() || right_idx.empty()) return make_leaf();

        TreeNode node;
        node.feature = best_feature;
        node.threshold = best_threshold;
        nodes.push_back(node);
        const int self = static_cast<int>(nodes.size() - 1);
        const int l = build(left_idx, depth + 1);
        const int r = build(right_idx, depth + 1);
        nodes[static_cast<std::size_t>(self)].left = l;
        nodes[static_cast<std::size_t>(self)].right = r;
        return self;
    }
};

inline std::array<double, 2> tree_predict(const std::vector<TreeNode>& nodes,
                                          const std::vector<double>& x) {
    int cur = 0;
    while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(cur)];
        cur = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(cur)].leaf_prob;
}

}  // namespace detail

inline ForestModel train_forest(const std::vector<DocVector>& x, const std::vector<int>& y,
                                int n_trees, int max_depth, std::uint64_t seed) {
    if (n_trees < 1) throw std::invalid_argument("train_forest: n_trees must be >= 1");
    detail::check_training_input(x, y);
    ForestModel model;
    model.n_trees = n_trees;
    model.max_depth = max_depth;
    model.seed = seed;
    const int dim = static_cast<int>(x[0].values.size());
    model.n_features = dim;
    const int n_candidates =
        std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(dim)))));
    for (int t = 0; t < n_trees; ++t) {
        // per-tree stream so parallel and sequential training would agree
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
        std::vector<std::size_t> bootstrap(x.size());
        for (auto& i : bootstrap) i = rng.uniform_below(x.size());
        detail::TreeBuilder builder{x, y, max_depth, n_candidates, rng, {}};
        builder.build(bootstrap, 0);
        model.trees.push_back(std::move(builder.nodes));
    }
    return model;
}

// ---------------------------------------------------------------------------
// Prediction and soft voting
// ---------------------------------------------------------------------------

inline ProbVector predict_proba(const LogisticModel& m, const DocVector& x) {
    if (x.values.size() != m.weights.size()) {
        throw std::invalid_argument("predict_proba: dimension mismatch");
    }
    const double p1 = sigmoid(detail::dot(m.weights, x.values) + m.bias);
    return {{1.0 - p1, p1}};
}

inline ProbVector predict_proba(const SvmModel& m, const DocVector& x) {
    if (x.values.size() != m.weights.size()) {
        throw std::invalid_argument("predict_proba: dimension mismatch");
    }
    const double margin = detail::dot(m.weights, x.values) + m.bias;
    const double p1 = sigmoid(m.calib_a * margin + m.calib_b);
    return {{1.0 - p1, p1}};
}

inline ProbVector predict_proba(const ForestModel& m, const DocVector& x) {
    if (m.n_features > 0 && static_cast<int>(x.values.size()) != m.n_features) {
        throw std::invalid_argument("predict_proba: dimension mismatch");
    }
    double p0 = 0.0, p1 = 0.0;
    for (const auto& tree : m.trees) {
        const auto leaf = detail::tree_predict(tree, x.values);
        p0 += leaf[0];
        p1 += leaf[1];
    }
    const double n = static_cast<double>(m.trees.size());
    return {{p0 / n, p1 / n}};
}

using ClassicalModel = std::variant<LogisticModel, SvmModel, ForestModel>;

inline ProbVector predict_proba(const ClassicalModel& m, const DocVector& x) {
    return std::visit([&](const auto& model) { return predict_proba(model, x); }, m);
}

inline ProbVector ensemble_predict_proba(const std::vector<ClassicalModel>& members,
                                         const DocVector& x) {
    if (members.empty()) throw std::invalid_argument("ensemble_predict_proba: no members");
    double p0 = 0.0, p1 = 0.0;
    for (const auto& m : members) {
        const auto p = predict_proba(m, x);
        p0 += p.p[0];
        p1 += p.p[1];
    }
    const double n = static_cast<double>(members.size());
    return {{p0 / n, p1 / n}};
}

inline int predict_label(const ProbVector& p, double threshold = 0.5) {
    return p.p[1] >= threshold ? 1 : 0;  // ties go to the positive class
}

// ---------------------------------------------------------------------------
// Serialization: versioned text containers, hexfloat precision so reload is
// exact and identical training inputs give identical files.
// ---------------------------------------------------------------------------

namespace detail {
inline std::string hexd(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}
inline double parse_hexd(const std::string& s) { return std::strtod(s.c_str(), nullptr); }
}  // namespace detail

inline void save_model(const LogisticModel& m, std::ostream& os) {
    os << "logistic v1\n" << m.weights.size() << ' ' << detail::hexd(m.bias) << '\n';
    for (double w : m.weights) os << detail::hexd(w) << '\n';
}

inline void save_model(const SvmModel& m, std::ostream& os) {
    os << "svm v1\n"
       << m.weights.size() << ' ' << detail::hexd(m.bias) << ' ' << detail::hexd(m.calib_a) << ' '
       << detail::hexd(m.calib_b) << '\n';
    for (double w : m.weights) os << detail::hexd(w) << '\n';
}

inline void save_model(const ForestModel& m, std::ostream& os) {
    os << "forest v1\n"
       << m.trees.size() << ' ' << m.max_depth << ' ' << m.n_features << ' ' << m.seed << '\n';
    for (const auto& tree : m.trees) {
        os << tree.size() << '\n';
        for (const auto& n : tree) {
            os << n.feature << ' ' << detail::hexd(n.threshold) << ' ' << n.left << ' ' << n.right
               << ' ' << detail::hexd(n.leaf_prob[0]) << ' ' << detail::hexd(n.leaf_prob[1]) << '\n';
        }
    }
}

inline void save_model(const ClassicalModel& m, std::ostream& os) {
    std::visit([&](const auto& model) { save_model(model, os); }, m);
}

inline ClassicalModel load_model(std::istream& is) {
    std::string kind, version;
    is >> kind >> version;
    if (version != "v1") throw std::runtime_error("load_model: unsupported version " + version);
    if (kind == "logistic") {
        std::size_t dim;
        std::string bias;
        is >> dim >> bias;
        LogisticModel m;
        m.bias = detail::parse_hexd(bias);
        m.weights.resize(dim);
        for (auto& w : m.weights) {
            std::string tok;
            is >> tok;
            w = detail::parse_hexd(tok);
        }
        return m;
    }
    if (kind == "svm") {
        std::size_t dim;
        std::string bias, a, b;
        is >> dim >> bias >> a >> b;
        SvmModel m;
        m.bias = detail::parse_hexd(bias);
        m.calib_a = detail::parse_hexd(a);
        m.calib_b = detail::parse_hexd(b);
        m.weights.resize(dim);
        for (auto& w : m.weights) {
            std::string tok;
            is >> tok;
            w = detail::parse_hexd(tok);
        }
        return m;
    }
    if (kind == "forest") {
        std::size_t n_trees;
        ForestModel m;
        is >> n_trees >> m.max_depth >> m.n_features >> m.seed;
        m.n_trees = static_cast<int>(n_trees);
        m.trees.resize(n_trees);
        for (auto& tree : m.trees) {
            std::size_t n_nodes;
            is >> n_nodes;
            tree.resize(n_nodes);
            for (auto& n : tree) {
                std::string thr, p0, p1;
                is >> n.feature >> thr >> n.left >> n.right >> p0 >> p1;
                n.threshold = detail::parse_hexd(thr);
                n.leaf_prob = {detail::parse_hexd(p0), detail::parse_hexd(p1)};
            }
        }
        return m;
    }
    throw std::runtime_error("load_model: unknown model kind " + kind);
}

}  // namespace tb
