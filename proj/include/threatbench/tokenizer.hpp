// SPDX-License-Identifier: Apache-2.0
//
// Byte-pair-encoding tokenizer with byte-level fallback.  The vocabulary
// id space is fixed: PAD=0, UNK=1, CLS=2, the 256 single bytes at 3..258,
// and one id per merge from 259 upward.  UNK exists for symmetry but is
// never produced: every UTF-8 input decomposes into byte tokens.
//
// Classical (non-neural) pipelines use whitespace_tokens() instead: split
// on Unicode whitespace, punctuation kept attached, no case folding.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "threatbench/corpus.hpp"

namespace tb {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kByteIdBase = 3;
inline constexpr int kBpeFloorVocab = 259;  // 256 bytes + PAD/UNK/CLS

struct BpeVocab {
    // merge i combines token pair merges[i] into token id 259 + i
    std::vector<std::pair<int, int>> merges;
    std::vector<std::string> id_to_bytes;          // byte string per id; specials empty
    std::unordered_map<std::uint64_t, int> merge_rank;  // packed pair -> merge index

    int size() const { return static_cast<int>(id_to_bytes.size()); }

    static std::uint64_t pack(int a, int b) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
               static_cast<std::uint32_t>(b);
    }

    const std::string& bytes_of(int id) const {
        if (id < 0 || id >= size()) {
            throw std::invalid_argument("BpeVocab: unknown token id " + std::to_string(id));
        }
        return id_to_bytes[static_cast<std::size_t>(id)];
    }
};

struct TokenSequence {
    std::vector<std::int32_t> ids;  // length exactly max_len, CLS first, PAD suffix
    int attn_len = 0;               // count of non-PAD positions
};

namespace detail {

inline BpeVocab bpe_base_vocab() {
    BpeVocab v;
    v.id_to_bytes.resize(kBpeFloorVocab);
    for (int b = 0; b < 256; ++b) {
        v.id_to_bytes[static_cast<std::size_t>(kByteIdBase + b)] =
            std::string(1, static_cast<char>(static_cast<unsigned char>(b)));
    }
    return v;
}

inline std::vector<int> bytes_to_ids(const std::string& text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(kByteIdBase + c);
    return ids;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training: greedy highest-frequency pair merging over the whole corpus,
// ties broken by the lexicographically smallest (left bytes, right bytes)
// pair.  Stops at vocab_size tokens or when no pair occurs at least twice.
// ---------------------------------------------------------------------------

inline BpeVocab train_bpe(const LabeledDataset& corpus, int vocab_size) {
    if (vocab_size < kBpeFloorVocab) {
        throw std::invalid_argument("train_bpe: vocab_size must be >= " +
                                    std::to_string(kBpeFloorVocab));
    }
    BpeVocab vocab = detail::bpe_base_vocab();

    std::vector<std::vector<int>> seqs;
    seqs.reserve(corpus.docs.size());
    for (const Document& d : corpus.docs) seqs.push_back(detail::bytes_to_ids(d.text));

    std::unordered_map<std::uint64_t, std::int64_t> pair_count;
    std::unordered_map<std::uint64_t, std::unordered_set<std::size_t>> pair_seqs;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        const auto& seq = seqs[s];
        for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
            const auto key = BpeVocab::pack(seq[i], seq[i + 1]);
            ++pair_count[key];
            pair_seqs[key].insert(s);
        }
    }

    auto pair_less = [&](std::uint64_t a, std::uint64_t b) {
        const int a1 = static_cast<int>(a >> 32), a2 = static_cast<int>(a & 0xffffffff);
        const int b1 = static_cast<int>(b >> 32), b2 = static_cast<int>(b & 0xffffffff);
        if (vocab.bytes_of(a1) != vocab.bytes_of(b1)) return vocab.bytes_of(a1) < vocab.bytes_of(b1);
        return vocab.bytes_of(a2) < vocab.bytes_of(b2);
    };

    while (vocab.size() < vocab_size) {
        std::uint64_t best_key = 0;
        std::int64_t best_count = 0;
        for (const auto& [key, count] : pair_count) {
            if (count > best_count || (count == best_count && count > 0 && pair_less(key, best_key))) {
                best_key = key;
                best_count = count;
            }
        }
        if (best_count < 2) break;

        const int left = static_cast<int>(best_key >> 32);
        const int right = static_cast<int>(best_key & 0xffffffff);
        const int new_id = vocab.size();
        vocab.id_to_bytes.push_back(vocab.bytes_of(left) + vocab.bytes_of(right));
        vocab.merge_rank[best_key] = static_cast<int>(vocab.merges.size());
        vocab.merges.emplace_back(left, right);

        auto touched = pair_seqs[best_key];  // copy; the sets mutate below
        for (std::size_t s : touched) {
            auto& seq = seqs[s];
            std::vector<int> out;
            out.reserve(seq.size());
            std::size_t i = 0;
            while (i < seq.size()) {
                if (i + 1 < seq.size() && seq[i] == left && seq[i + 1] == right) {
                    // retire old neighbor pairs, account for the new token;
                    // a preceding new_id means the old (right,left) bridge was
                    // already retired by that occurrence's right-neighbor step
                    if (!out.empty()) {
                        if (out.back() != new_id) {
                            const auto k = BpeVocab::pack(out.back(), left);
                            --pair_count[k];
                        }
                        const auto kn = BpeVocab::pack(out.back(), new_id);
                        ++pair_count[kn];
                        pair_seqs[kn].insert(s);
                    }
                    --pair_count[best_key];
                    if (i + 2 < seq.size()) {
                        const auto k = BpeVocab::pack(right, seq[i + 2]);
                        --pair_count[k];
                    }
                    out.push_back(new_id);
                    i += 2;
                } else {
                    if (!out.empty() && out.back() == new_id) {
                        const auto kn = BpeVocab::pack(new_id, seq[i]);
                        ++pair_count[kn];
                        pair_seqs[kn].insert(s);
                    }
                    out.push_back(seq[i]);
                    ++i;
                }
            }
            seq = std::move(out);
        }
        pair_count.erase(best_key);
        pair_seqs.erase(best_key);
    }
    return vocab;
}

// ---------------------------------------------------------------------------
// Encoding: start from single bytes and repeatedly merge the adjacent pair
// with the lowest merge rank, then CLS-prefix, truncate, and pad.
// ---------------------------------------------------------------------------

inline std::vector<int> bpe_merge_bytes(const BpeVocab& vocab, const std::string& text) {
    std::vector<int> ids = detail::bytes_to_ids(text);
    while (ids.size() >= 2) {
        int best_rank = std::numeric_limits<int>::max();
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
            auto it = vocab.merge_rank.find(BpeVocab::pack(ids[i], ids[i + 1]));
            if (it != vocab.merge_rank.end() && it->second < best_rank) best_rank = it->second;
        }
        if (best_rank == std::numeric_limits<int>::max()) break;
        const auto [left, right] = vocab.merges[static_cast<std::size_t>(best_rank)];
        const int merged = kBpeFloorVocab + best_rank;
        std::vector<int> out;
        out.reserve(ids.size());
        std::size_t i = 0;
        while (i < ids.size()) {
            if (i + 1 < ids.size() && ids[i] == left && ids[i + 1] == right) {
                out.push_back(merged);
                i += 2;
            } else {
                out.push_back(ids[i]);
                ++i;
            }
        }
        ids = std::move(out);
    }
    return ids;
}

inline TokenSequence encode(const BpeVocab& vocab, const std::string& text, int max_len) {
    if (max_len < 2) throw std::invalid_argument("encode: max_len must be >= 2");
    const std::vector<int> merged = bpe_merge_bytes(vocab, text);
    TokenSequence seq;
    seq.ids.assign(static_cast<std::size_t>(max_len), kPadId);
    seq.ids[0] = kClsId;
    int pos = 1;
    for (int id : merged) {
        if (pos >= max_len) break;
        seq.ids[static_cast<std::size_t>(pos++)] = id;
    }
    seq.attn_len = pos;
    return seq;
}

inline std::string decode(const BpeVocab& vocab, const TokenSequence& seq) {
    std::string out;
    for (int id : seq.ids) {
        if (id == kPadId || id == kClsId || id == kUnkId) continue;
        out += vocab.bytes_of(id);  // throws on unknown id
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary serialization: a line-based text format, one merge per line as
// two tab-separated tokens with \xNN escapes for bytes outside printable
// ASCII (and for backslash itself).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string escape_token(const std::string& bytes) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned char c : bytes) {
        if (c >= 0x21 && c <= 0x7e && c != '\\') {
            out.push_back(static_cast<char>(c));
        } else {
            out += "\\x";
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xf]);
        }
    }
    return out;
}

inline std::string unescape_token(const std::string& s) {
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '\\') {
            if (i + 3 >= s.size() || s[i + 1] != 'x') {
                throw std::runtime_error("bpe vocab: bad escape in token");
            }
            out.push_back(static_cast<char>(std::stoi(s.substr(i + 2, 2), nullptr, 16)));
            i += 4;
        } else {
            out.push_back(s[i++]);
        }
    }
    return out;
}

}  // namespace detail

inline void save_bpe_vocab(const BpeVocab& vocab, std::ostream& os) {
    os << "bpe-vocab v1\n";
    os << "specials\tPAD=0\tUNK=1\tCLS=2\n";
    os << "merges\t" << vocab.merges.size() << "\n";
    for (const auto& [left, right] : vocab.merges) {
        os << detail::escape_token(vocab.bytes_of(left)) << '\t'
           << detail::escape_token(vocab.bytes_of(right)) << '\n';
    }
}

inline void save_bpe_vocab(const BpeVocab& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_bpe_vocab: cannot open " + path);
    save_bpe_vocab(vocab, out);
}

inline BpeVocab load_bpe_vocab(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "bpe-vocab v1") {
        throw std::runtime_error("load_bpe_vocab: bad header");
    }
    std::getline(is, line);  // specials line, fixed by construction
    if (!std::getline(is, line) || line.rfind("merges\t", 0) != 0) {
        throw std::runtime_error("load_bpe_vocab: missing merge count");
    }
    const std::size_t n_merges = std::stoull(line.substr(7));

    BpeVocab vocab = detail::bpe_base_vocab();
    std::unordered_map<std::string, int> bytes_to_id;
    for (int id = kByteIdBase; id < kBpeFloorVocab; ++id) {
        bytes_to_id[vocab.bytes_of(id)] = id;
    }
    for (std::size_t m = 0; m < n_merges; ++m) {
        if (!std::getline(is, line)) throw std::runtime_error("load_bpe_vocab: truncated merge list");
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("load_bpe_vocab: malformed merge line");
        const std::string left_bytes = detail::unescape_token(line.substr(0, tab));
        const std::string right_bytes = detail::unescape_token(line.substr(tab + 1));
        const auto li = bytes_to_id.find(left_bytes);
        const auto ri = bytes_to_id.find(right_bytes);
        if (li == bytes_to_id.end() || ri == bytes_to_id.end()) {
            throw std::runtime_error("load_bpe_vocab: merge references unknown token");
        }
        const int new_id = vocab.size();
        vocab.id_to_bytes.push_back(left_bytes + right_bytes);
        vocab.merge_rank[BpeVocab::pack(li->second, ri->second)] = static_cast<int>(vocab.merges.size());
        vocab.merges.emplace_back(li->second, ri->second);
        bytes_to_id[left_bytes + right_bytes] = new_id;
    }
    return vocab;
}

inline BpeVocab load_bpe_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_bpe_vocab: cannot open " + path);
    return load_bpe_vocab(in);
}

// ---------------------------------------------------------------------------
// Whitespace tokenization for the classical pipelines.
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_unicode_space(std::uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

}  // namespace detail

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    std::size_t i = 0;
    while (i < text.size()) {
        const unsigned char b = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        std::uint32_t cp = b;
        if ((b & 0xE0) == 0xC0) len = 2, cp = b & 0x1F;
        else if ((b & 0xF0) == 0xE0) len = 3, cp = b & 0x0F;
        else if ((b & 0xF8) == 0xF0) len = 4, cp = b & 0x07;
        if (i + len > text.size()) len = 1, cp = b;  // tolerate stray bytes
        for (std::size_t k = 1; k < len; ++k) {
            cp = (cp << 6) | (static_cast<unsigned char>(text[i + k]) & 0x3F);
        }
        if (detail::is_unicode_space(cp)) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.append(text, i, len);
        }
        i += len;
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace tb
