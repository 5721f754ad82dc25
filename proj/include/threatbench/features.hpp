// SPDX-License-Identifier: Apache-2.0
//
// TF-IDF over whitespace-tokenized documents.  TF is the raw in-document
// count, IDF the smoothed ln((1+N)/(1+df)) + 1, and vectors are
// L2-normalized.  Terms unseen at fit time are ignored at transform time.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "threatbench/corpus.hpp"
#include "threatbench/tokenizer.hpp"

namespace tb {

struct DocVector {
    std::vector<double> values;
    std::string producer_id;
};

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct TfidfModel {
    std::unordered_map<std::string, int> term_to_index;  // columns dense 0..T-1
    std::vector<std::string> terms;                      // index -> term
    std::vector<double> idf;
    std::size_t n_docs_fit = 0;

    int dim() const { return static_cast<int>(terms.size()); }
};

inline TfidfModel tfidf_fit(const LabeledDataset& train) {
    TfidfModel model;
    model.n_docs_fit = train.docs.size();
    std::vector<std::size_t> df;
    std::vector<std::size_t> last_doc;  // dedup per document
    bool any_token = false;
    for (std::size_t d = 0; d < train.docs.size(); ++d) {
        for (const std::string& term : whitespace_tokens(train.docs[d].text)) {
            any_token = true;
            auto [it, inserted] = model.term_to_index.try_emplace(term, model.dim());
            if (inserted) {
                model.terms.push_back(term);
                df.push_back(0);
                last_doc.push_back(static_cast<std::size_t>(-1));
            }
            const auto col = static_cast<std::size_t>(it->second);
            if (last_doc[col] != d) {
                last_doc[col] = d;
                ++df[col];
            }
        }
    }
    if (!any_token) throw std::invalid_argument("tfidf_fit: corpus has no tokens");

    const double n = static_cast<double>(model.n_docs_fit);
    model.idf.resize(df.size());
    for (std::size_t t = 0; t < df.size(); ++t) {
        model.idf[t] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[t]))) + 1.0;
    }
    return model;
}

inline DocVector tfidf_transform(const TfidfModel& model, const Document& doc) {
    DocVector out;
    out.producer_id = "tfidf";
    out.values.assign(static_cast<std::size_t>(model.dim()), 0.0);
    for (const std::string& term : whitespace_tokens(doc.text)) {
        auto it = model.term_to_index.find(term);
        if (it != model.term_to_index.end()) {
            out.values[static_cast<std::size_t>(it->second)] += 1.0;
        }
    }
    double norm_sq = 0.0;
    for (std::size_t t = 0; t < out.values.size(); ++t) {
        out.values[t] *= model.idf[t];
        norm_sq += out.values[t] * out.values[t];
    }
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (double& v : out.values) v *= inv;
    }
    return out;
}

inline std::vector<DocVector> tfidf_transform_all(const TfidfModel& model, const LabeledDataset& ds) {
    std::vector<DocVector> out;
    out.reserve(ds.docs.size());
    for (const Document& d : ds.docs) out.push_back(tfidf_transform(model, d));
    return out;
}

}  // namespace tb
