// SPDX-License-Identifier: Apache-2.0
//
// Labeled text corpora: CSV ingestion, balance-scenario construction,
// stratified train/test splitting, minority upsampling, and a synthetic
// two-class generator for tests and benchmarks.
//
// Texts are stored verbatim: no case folding, no punctuation or stopword
// handling anywhere in the toolkit.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "threatbench/csv.hpp"
#include "threatbench/rng.hpp"

namespace tb {

inline bool valid_utf8(const std::string& s) {
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        unsigned char b = static_cast<unsigned char>(s[i]);
        std::size_t len;
        std::uint32_t cp;
        if (b < 0x80) {
            ++i;
            continue;
        } else if ((b & 0xE0) == 0xC0) {
            len = 2;
            cp = b & 0x1F;
        } else if ((b & 0xF0) == 0xE0) {
            len = 3;
            cp = b & 0x0F;
        } else if ((b & 0xF8) == 0xF0) {
            len = 4;
            cp = b & 0x07;
        } else {
            return false;
        }
        if (i + len > n) return false;
        for (std::size_t k = 1; k < len; ++k) {
            unsigned char cont = static_cast<unsigned char>(s[i + k]);
            if ((cont & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cont & 0x3F);
        }
        // overlong encodings, surrogates, out of range
        if (len == 2 && cp < 0x80) return false;
        if (len == 3 && cp < 0x800) return false;
        if (len == 4 && cp < 0x10000) return false;
        if (cp >= 0xD800 && cp <= 0xDFFF) return false;
        if (cp > 0x10FFFF) return false;
        i += len;
    }
    return true;
}

struct Document {
    std::string text;       // raw, unpreprocessed
    int label = 0;          // threat = 1, nonthreat = 0
    std::string source_id;  // opaque provenance tag
};

struct LabeledDataset {
    std::vector<Document> docs;
    std::map<int, std::size_t> class_counts;

    void add(Document d) {
        ++class_counts[d.label];
        docs.push_back(std::move(d));
    }
    std::size_t size() const { return docs.size(); }
    std::size_t count(int label) const {
        auto it = class_counts.find(label);
        return it == class_counts.end() ? 0 : it->second;
    }
};

struct ScenarioSpec {
    std::size_t n_nonthreat = 0;
    std::string nonthreat_pool_id;
    std::uint64_t seed = 0;
};

struct SplitPair {
    LabeledDataset train;
    LabeledDataset test;
    double test_fraction = 0.0;
};

// ---------------------------------------------------------------------------
// CSV ingestion.  Format: header `text,label`, label in {0,1}, UTF-8 text.
// ---------------------------------------------------------------------------

inline LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);

    CsvReader reader(in);
    CsvRecord rec;
    if (!reader.next(rec)) throw std::runtime_error("load_csv: empty file " + path);
    if (rec.fields.size() != 2 || rec.fields[0] != "text" || rec.fields[1] != "label") {
        throw std::runtime_error("load_csv: expected header `text,label` in " + path);
    }

    std::string base = path;
    if (auto pos = base.find_last_of("/\\"); pos != std::string::npos) base = base.substr(pos + 1);

    LabeledDataset ds;
    while (reader.next(rec)) {
        const std::string where = "row " + std::to_string(rec.record_number);
        if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;  // trailing blank line
        if (rec.fields.size() != 2) {
            throw std::runtime_error("load_csv: malformed " + where + " in " + path +
                                     " (expected 2 fields, got " + std::to_string(rec.fields.size()) + ")");
        }
        const std::string& text = rec.fields[0];
        const std::string& label_str = rec.fields[1];
        int label;
        if (label_str == "0") label = 0;
        else if (label_str == "1") label = 1;
        else throw std::runtime_error("load_csv: unknown label \"" + label_str + "\" on " + where + " in " + path);
        if (text.empty()) throw std::runtime_error("load_csv: empty text on " + where + " in " + path);
        if (!valid_utf8(text)) throw std::runtime_error("load_csv: invalid UTF-8 on " + where + " in " + path);
        ds.add(Document{text, label, base + ":" + std::to_string(rec.record_number)});
    }
    if (ds.docs.empty()) throw std::runtime_error("load_csv: no data rows in " + path);
    return ds;
}

inline void save_csv(const std::string& path, const LabeledDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_csv: cannot open " + path);
    csv_write_row(out, {"text", "label"});
    for (const Document& d : ds.docs) {
        csv_write_row(out, {d.text, std::to_string(d.label)});
    }
    if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Scenario construction: all threat docs plus n_nonthreat docs sampled
// without replacement from the nonthreat pool.
// ---------------------------------------------------------------------------

inline LabeledDataset build_scenario(const LabeledDataset& threat,
                                     const LabeledDataset& nonthreat_pool,
                                     const ScenarioSpec& spec) {
    for (const Document& d : threat.docs) {
        if (d.label != 1) throw std::invalid_argument("build_scenario: threat set contains label-0 doc");
    }
    for (const Document& d : nonthreat_pool.docs) {
        if (d.label != 0) throw std::invalid_argument("build_scenario: nonthreat pool contains label-1 doc");
    }
    if (spec.n_nonthreat > nonthreat_pool.size()) {
        throw std::invalid_argument("build_scenario: pool has " + std::to_string(nonthreat_pool.size()) +
                                    " docs, scenario needs " + std::to_string(spec.n_nonthreat));
    }

    LabeledDataset out;
    for (const Document& d : threat.docs) out.add(d);

    // Partial Fisher-Yates: first n_nonthreat slots of a seeded permutation.
    std::vector<std::size_t> idx(nonthreat_pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < spec.n_nonthreat; ++i) {
        std::size_t j = i + rng.uniform_below(idx.size() - i);
        std::swap(idx[i], idx[j]);
        out.add(nonthreat_pool.docs[idx[i]]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stratified split.  Per class, round-half-up(test_fraction * count) docs go
// to the test side after a seeded within-class shuffle.
// ---------------------------------------------------------------------------

inline SplitPair stratified_split(const LabeledDataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("stratified_split: test_fraction must be in (0,1)");
    }
    for (const auto& [label, count] : ds.class_counts) {
        if (count < 2) {
            throw std::invalid_argument("stratified_split: class " + std::to_string(label) +
                                        " has fewer than 2 docs");
        }
    }

    SplitPair split;
    split.test_fraction = test_fraction;
    Rng rng(seed);
    for (const auto& [label, count] : ds.class_counts) {  // std::map: ascending label order
        std::vector<std::size_t> idx;
        idx.reserve(count);
        for (std::size_t i = 0; i < ds.docs.size(); ++i) {
            if (ds.docs[i].label == label) idx.push_back(i);
        }
        rng.shuffle(idx);
        const std::size_t n_test =
            static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(count) + 0.5));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i < n_test) split.test.add(ds.docs[idx[i]]);
            else split.train.add(ds.docs[idx[i]]);
        }
    }
    return split;
}

// ---------------------------------------------------------------------------
// Minority upsampling: the minority class is replaced by majority-count
// draws with replacement from the original minority docs.  Pure resampling;
// original minority docs are not guaranteed to survive.
// ---------------------------------------------------------------------------

inline LabeledDataset upsample_minority(const LabeledDataset& train, std::uint64_t seed) {
    if (train.class_counts.size() != 2) {
        throw std::invalid_argument("upsample_minority: need exactly two classes, got " +
                                    std::to_string(train.class_counts.size()));
    }
    auto it = train.class_counts.begin();
    const auto [label_a, count_a] = *it;
    const auto [label_b, count_b] = *std::next(it);
    if (count_a == count_b) return train;

    const int minority = count_a < count_b ? label_a : label_b;
    const std::size_t target = std::max(count_a, count_b);

    std::vector<const Document*> minority_docs;
    LabeledDataset out;
    for (const Document& d : train.docs) {
        if (d.label == minority) minority_docs.push_back(&d);
        else out.add(d);
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < target; ++i) {
        out.add(*minority_docs[rng.uniform_below(minority_docs.size())]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic two-class corpus.  Each token comes from a shared vocabulary
// with probability `overlap`, otherwise from the class-specific one, so
// overlap 0 gives disjoint vocabularies and overlap 1 identical ones.
// ---------------------------------------------------------------------------

struct SynthParams {
    int vocab_shared = 60;
    int vocab_per_class = 60;
    int len_min = 6;
    int len_max = 14;
    double overlap = 0.0;
};

namespace detail {
inline Document synth_doc(int label, std::size_t index, const SynthParams& p, Rng& rng) {
    const int len = p.len_min + static_cast<int>(rng.uniform_below(
                                    static_cast<std::size_t>(p.len_max - p.len_min + 1)));
    std::string text;
    for (int t = 0; t < len; ++t) {
        if (t) text += ' ';
        if (rng.uniform01() < p.overlap) {
            text += "ws" + std::to_string(rng.uniform_below(static_cast<std::size_t>(p.vocab_shared)));
        } else {
            text += (label == 0 ? "wa" : "wb") +
                    std::to_string(rng.uniform_below(static_cast<std::size_t>(p.vocab_per_class)));
        }
    }
    return Document{text, label, "synth:" + std::to_string(label) + ":" + std::to_string(index)};
}
}  // namespace detail

// One-class generator; used by the benchmark driver to make asymmetric pools.
inline LabeledDataset synth_class(int n_docs, int label, const SynthParams& p, std::uint64_t seed) {
    if (n_docs < 1) throw std::invalid_argument("synth_class: n_docs must be >= 1");
    if (p.len_min < 1 || p.len_max < p.len_min) throw std::invalid_argument("synth_class: bad length range");
    if (p.overlap < 0.0 || p.overlap > 1.0) throw std::invalid_argument("synth_class: overlap must be in [0,1]");
    if (p.vocab_shared < 1 || p.vocab_per_class < 1) throw std::invalid_argument("synth_class: bad vocab sizes");
    LabeledDataset ds;
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(label)}));
    for (int i = 0; i < n_docs; ++i) {
        ds.add(detail::synth_doc(label, static_cast<std::size_t>(i), p, rng));
    }
    return ds;
}

inline LabeledDataset synth_corpus(int n_per_class, const SynthParams& p, std::uint64_t seed) {
    LabeledDataset ds = synth_class(n_per_class, 0, p, seed);
    for (Document& d : synth_class(n_per_class, 1, p, seed).docs) ds.add(std::move(d));
    return ds;
}

}  // namespace tb
