// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "threatbench/rng.hpp"
#include "threatbench/tokenizer.hpp"

namespace {

tb::LabeledDataset corpus_of(const std::vector<std::string>& texts) {
    tb::LabeledDataset ds;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        ds.add(tb::Document{texts[i], 0, "t" + std::to_string(i)});
    }
    return ds;
}

std::string random_text(tb::Rng& rng) {
    // mixed ASCII and multi-byte UTF-8
    static const std::vector<std::string> pieces = {
        "a", "b", "c", " ", "zz", "the", "é", "ü", "日", "🙂", "\t", "0", "!", "--"};
    std::string out;
    const std::size_t n = rng.uniform_below(30);
    for (std::size_t i = 0; i < n; ++i) out += pieces[rng.uniform_below(pieces.size())];
    return out;
}

}  // namespace

TEST_CASE("train_bpe first merge is the most frequent pair") {
    const auto ds = corpus_of({"aaaa", "aaaa", "aaaa"});
    const auto vocab = tb::train_bpe(ds, 260);
    REQUIRE(vocab.merges.size() == 1);
    CHECK(vocab.bytes_of(vocab.merges[0].first) == "a");
    CHECK(vocab.bytes_of(vocab.merges[0].second) == "a");
    CHECK(vocab.bytes_of(259) == "aa");
}

TEST_CASE("train_bpe floor vocab has zero merges") {
    const auto ds = corpus_of({"abcabc"});
    const auto vocab = tb::train_bpe(ds, 259);
    CHECK(vocab.merges.empty());
    CHECK(vocab.size() == 259);
    CHECK_THROWS_AS(tb::train_bpe(ds, 258), std::invalid_argument);
}

TEST_CASE("train_bpe is deterministic") {
    const auto ds = corpus_of({"the cat sat on the mat", "the bat and the rat", "mat cat bat"});
    const auto v1 = tb::train_bpe(ds, 300);
    const auto v2 = tb::train_bpe(ds, 300);
    REQUIRE(v1.merges.size() == v2.merges.size());
    CHECK(v1.merges == v2.merges);
}

TEST_CASE("train_bpe pair counts survive chained merges") {
    // "abababab": merging (a,b) twice in a row exercises the bridge-pair
    // bookkeeping; next merge must be (ab, ab).
    const auto ds = corpus_of({"abababab", "abababab"});
    const auto vocab = tb::train_bpe(ds, 262);
    REQUIRE(vocab.merges.size() >= 2);
    CHECK(vocab.bytes_of(259) == "ab");
    CHECK(vocab.bytes_of(260) == "abab");
}

TEST_CASE("encode pads, truncates, and never produces UNK") {
    const auto ds = corpus_of({"hello world hello world"});
    const auto vocab = tb::train_bpe(ds, 280);

    const auto empty = tb::encode(vocab, "", 4);
    CHECK(empty.ids == std::vector<std::int32_t>{tb::kClsId, tb::kPadId, tb::kPadId, tb::kPadId});
    CHECK(empty.attn_len == 1);

    // zero-merge vocab: byte count + 1 tokens before padding
    const auto bytes_only = tb::train_bpe(ds, 259);
    const auto seq = tb::encode(bytes_only, "abc", 10);
    CHECK(seq.attn_len == 4);

    tb::Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const auto s = tb::encode(vocab, random_text(rng), 16);
        CHECK(s.ids.size() == 16);
        CHECK(s.ids[0] == tb::kClsId);
        for (int id : s.ids) CHECK(id != tb::kUnkId);
        // PAD only as suffix
        bool seen_pad = false;
        for (std::size_t k = 1; k < s.ids.size(); ++k) {
            if (s.ids[k] == tb::kPadId) seen_pad = true;
            else CHECK(!seen_pad);
        }
    }
}

TEST_CASE("decode inverts encode for untruncated text") {
    const auto ds = corpus_of({"the quick brown fox", "pack my box with five dozen jugs"});
    const auto vocab = tb::train_bpe(ds, 320);

    CHECK(tb::decode(vocab, tb::encode(vocab, "", 8)) == "");
    CHECK(tb::decode(vocab, tb::encode(vocab, "A", 8)) == "A");

    tb::Rng rng(42);
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::string text = random_text(rng);
        const auto seq = tb::encode(vocab, text, 256);
        if (seq.attn_len < 256) {  // untruncated
            CHECK(tb::decode(vocab, seq) == text);
            ++checked;
        }
    }
    CHECK(checked > 900);
}

TEST_CASE("decode rejects unknown ids") {
    const auto vocab = tb::train_bpe(corpus_of({"xy"}), 259);
    tb::TokenSequence seq;
    seq.ids = {tb::kClsId, 9999};
    seq.attn_len = 2;
    CHECK_THROWS_AS(tb::decode(vocab, seq), std::invalid_argument);
}

TEST_CASE("truncation is monotone: shorter encodings are prefixes") {
    const auto ds = corpus_of({"mississippi river mississippi delta"});
    const auto vocab = tb::train_bpe(ds, 300);
    const std::string text = "mississippi mississippi mississippi";
    const auto long_seq = tb::encode(vocab, text, 64);
    for (int len : {2, 3, 5, 8, 13, 21}) {
        const auto short_seq = tb::encode(vocab, text, len);
        for (int k = 0; k < short_seq.attn_len; ++k) {
            CHECK(short_seq.ids[static_cast<std::size_t>(k)] ==
                  long_seq.ids[static_cast<std::size_t>(k)]);
        }
    }
}

TEST_CASE("vocab round-trips through the text format") {
    const auto ds = corpus_of({"tab\tand\nnewline mixed é🙂 bytes", "more text more merges"});
    const auto vocab = tb::train_bpe(ds, 290);
    std::stringstream ss;
    tb::save_bpe_vocab(vocab, ss);
    const auto back = tb::load_bpe_vocab(ss);
    REQUIRE(back.merges == vocab.merges);
    REQUIRE(back.size() == vocab.size());
    for (int id = 0; id < vocab.size(); ++id) {
        CHECK(back.bytes_of(id) == vocab.bytes_of(id));
    }
    // loaded vocab encodes identically
    const std::string probe = "tab\tand mixed stuff é";
    CHECK(tb::encode(back, probe, 64).ids == tb::encode(vocab, probe, 64).ids);
}

TEST_CASE("whitespace tokenization keeps punctuation attached") {
    const auto toks = tb::whitespace_tokens("Hello, world!  \t`don't`\nsplit here");
    const std::vector<std::string> want = {"Hello,", "world!", "`don't`", "split", "here"};
    CHECK(toks == want);
    CHECK(tb::whitespace_tokens("").empty());
    CHECK(tb::whitespace_tokens("   \t\n").empty());
    // no case folding
    CHECK(tb::whitespace_tokens("ABC abc")[0] == "ABC");
}
