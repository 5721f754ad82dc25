// SPDX-License-Identifier: Apache-2.0
//
// Binary classification metrics: confusion counts, accuracy, F_beta, and
// Mann-Whitney ROC AUC.  All reported values are percentages in [0,100].
// Positive class is threat (label 1).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tb {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct FBetaResult {
    double pct = 0.0;
    bool degenerate = false;  // zero-division convention applied
};

struct MetricReport {
    double accuracy = 0.0;
    double f_1 = 0.0;
    double f_05 = 0.0;
    double f_2 = 0.0;
    double auc = 0.0;
    ConfusionCounts counts;
    bool f_degenerate = false;
};

inline ConfusionCounts confusion(const std::vector<int>& preds, const std::vector<int>& truth) {
    if (preds.size() != truth.size()) {
        throw std::invalid_argument("confusion: preds and truth differ in length");
    }
    if (preds.empty()) throw std::invalid_argument("confusion: empty input");
    ConfusionCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (truth[i] == 1) {
            preds[i] == 1 ? ++c.tp : ++c.fn;
        } else {
            preds[i] == 1 ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

// F_beta = (1+beta^2) P R / (beta^2 P + R), as a percentage.
// tp = 0 with any error present, or an undefined P/R, yields 0 with the
// degenerate flag set so tables stay total.
inline FBetaResult f_beta(const ConfusionCounts& c, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("f_beta: beta must be > 0");
    if (c.tp == 0) {
        return {0.0, true};
    }
    if (c.tp + c.fp == 0 || c.tp + c.fn == 0) {
        return {0.0, true};  // unreachable when tp > 0; kept for clarity
    }
    const double p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double r = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    const double b2 = beta * beta;
    const double denom = b2 * p + r;
    if (denom == 0.0) return {0.0, true};
    return {100.0 * (1.0 + b2) * p * r / denom, false};
}

inline double accuracy(const ConfusionCounts& c) {
    if (c.total() == 0) throw std::invalid_argument("accuracy: empty counts");
    return 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

// Mann-Whitney statistic over (positive, negative) pairs with half credit
// for ties, computed via average ranks in O(n log n).
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
    if (scores.size() != truth.size()) {
        throw std::invalid_argument("roc_auc: scores and truth differ in length");
    }
    std::size_t n_pos = 0, n_neg = 0;
    for (int t : truth) (t == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("roc_auc: both classes must be present");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (truth[order[k]] == 1) pos_rank_sum += avg_rank;
        }
        i = j;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return 100.0 * u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Full report from positive-class scores. Labels are thresholded at
// `threshold` with ties going to the positive class.
inline MetricReport report(const std::vector<double>& pos_scores, const std::vector<int>& truth,
                           double threshold = 0.5) {
    if (pos_scores.size() != truth.size()) {
        throw std::invalid_argument("report: scores and truth differ in length");
    }
    std::vector<int> preds(pos_scores.size());
    for (std::size_t i = 0; i < pos_scores.size(); ++i) {
        preds[i] = pos_scores[i] >= threshold ? 1 : 0;
    }
    MetricReport r;
    r.counts = confusion(preds, truth);
    r.accuracy = accuracy(r.counts);
    const FBetaResult f1 = f_beta(r.counts, 1.0);
    const FBetaResult f05 = f_beta(r.counts, 0.5);
    const FBetaResult f2 = f_beta(r.counts, 2.0);
    r.f_1 = f1.pct;
    r.f_05 = f05.pct;
    r.f_2 = f2.pct;
    r.f_degenerate = f1.degenerate || f05.degenerate || f2.degenerate;
    r.auc = roc_auc(pos_scores, truth);
    return r;
}

inline int predict_label_from_score(double pos_score, double threshold = 0.5) {
    return pos_score >= threshold ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Serialization.  Percentages are printed with two decimals; field order is
// fixed: acc, f1, f05, f2, auc, tp, fp, tn, fn.
// ---------------------------------------------------------------------------

inline std::string format_pct(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

inline std::string metric_csv_header() { return "acc,f1,f05,f2,auc,tp,fp,tn,fn"; }

inline std::string metric_csv_row(const MetricReport& r) {
    std::ostringstream os;
    os << format_pct(r.accuracy) << ',' << format_pct(r.f_1) << ',' << format_pct(r.f_05) << ','
       << format_pct(r.f_2) << ',' << format_pct(r.auc) << ',' << r.counts.tp << ',' << r.counts.fp
       << ',' << r.counts.tn << ',' << r.counts.fn;
    return os.str();
}

inline std::string metric_json(const MetricReport& r) {
    std::ostringstream os;
    os << "{\"acc\": " << format_pct(r.accuracy) << ", \"f1\": " << format_pct(r.f_1)
       << ", \"f05\": " << format_pct(r.f_05) << ", \"f2\": " << format_pct(r.f_2)
       << ", \"auc\": " << format_pct(r.auc) << ", \"tp\": " << r.counts.tp
       << ", \"fp\": " << r.counts.fp << ", \"tn\": " << r.counts.tn << ", \"fn\": " << r.counts.fn
       << "}";
    return os.str();
}

inline MetricReport metric_from_csv_row(const std::string& row) {
    std::istringstream is(row);
    std::string tok;
    std::vector<std::string> parts;
    while (std::getline(is, tok, ',')) parts.push_back(tok);
    if (parts.size() != 9) throw std::runtime_error("metric_from_csv_row: expected 9 fields");
    MetricReport r;
    r.accuracy = std::stod(parts[0]);
    r.f_1 = std::stod(parts[1]);
    r.f_05 = std::stod(parts[2]);
    r.f_2 = std::stod(parts[3]);
    r.auc = std::stod(parts[4]);
    r.counts.tp = std::stoull(parts[5]);
    r.counts.fp = std::stoull(parts[6]);
    r.counts.tn = std::stoull(parts[7]);
    r.counts.fn = std::stoull(parts[8]);
    return r;
}

}  // namespace tb
