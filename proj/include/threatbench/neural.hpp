// SPDX-License-Identifier: Apache-2.0
//
// Miniature transformer encoder classifier, 32-bit floats throughout.
//
// Architecture: token embedding -> n_layers pre-norm blocks (rotary
// attention + GELU MLP, parameter-free RMSNorm, residual connections) ->
// RMSNorm at the CLS position -> linear head.  Attention is bidirectional
// with optional grouped key/value heads and an optional sliding window:
// with a finite window W, position i attends to positions within distance
// W on either side (a causal one-sided window would leave the leading CLS
// query blind, so the encoder uses the symmetric form).
//
// Weight matrices are stored row-major with the h = M x orientation,
// M in R^{out x in}; activations are [seq, features] and multiply by M^T.
//
// Fine-tuning freezes the base and trains low-rank adapters
// h = M0 x + (alpha/r) MA MB x plus the classifier head; a full-training
// scope (every tensor trainable, no adapters) is available as the
// from-scratch baseline.  After training, adapters can be merged into the
// base weights.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "threatbench/rng.hpp"
#include "threatbench/tokenizer.hpp"

namespace tb {

// ---------------------------------------------------------------------------
// Tensors and configuration
// ---------------------------------------------------------------------------

struct Mat32 {
    int rows = 0, cols = 0;
    std::vector<float> v;
    bool frozen = true;

    Mat32() = default;
    Mat32(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0f) {}

    float& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    const float* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
    float* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    void zero() { std::fill(v.begin(), v.end(), 0.0f); }
    bool same_shape(const Mat32& o) const { return rows == o.rows && cols == o.cols; }
};

struct TransformerConfig {
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int n_kv_heads = 2;
    int swa_window = 16;  // 0 = unlimited
    int max_len = 128;
    int vocab_size = 1024;
    int n_classes = 2;
    float rope_base = 10000.0f;

    int head_dim() const { return d_model / n_heads; }
    int kv_dim() const { return n_kv_heads * head_dim(); }
    int mlp_dim() const { return 4 * d_model; }

    void validate() const {
        if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || n_kv_heads <= 0 ||
            max_len < 2 || vocab_size < 1 || n_classes < 2) {
            throw std::invalid_argument("TransformerConfig: non-positive dimension");
        }
        if (d_model % n_heads != 0) {
            throw std::invalid_argument("TransformerConfig: d_model must divide by n_heads");
        }
        if (n_heads % n_kv_heads != 0) {
            throw std::invalid_argument("TransformerConfig: n_heads must divide by n_kv_heads");
        }
        if (head_dim() % 2 != 0) {
            throw std::invalid_argument("TransformerConfig: head dim must be even for rotation");
        }
        if (swa_window < 0) {
            throw std::invalid_argument("TransformerConfig: window must be >= 1 or 0 for unlimited");
        }
    }
};

struct LayerWeights {
    Mat32 wq, wk, wv, wo;  // attention projections
    Mat32 w_in, w_out;     // MLP
};

struct BaseWeights {
    TransformerConfig cfg;
    Mat32 embedding;  // vocab_size x d_model
    std::vector<LayerWeights> layers;
    Mat32 head;  // n_classes x d_model
};

inline BaseWeights init_base(const TransformerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const float scale = 1.0f / std::sqrt(static_cast<float>(cfg.d_model));
    auto gauss = [&](int rows, int cols) {
        Mat32 m(rows, cols);
        for (auto& x : m.v) x = static_cast<float>(rng.normal()) * scale;
        m.frozen = true;
        return m;
    };
    BaseWeights base;
    base.cfg = cfg;
    base.embedding = gauss(cfg.vocab_size, cfg.d_model);
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerWeights lw;
        lw.wq = gauss(cfg.d_model, cfg.d_model);
        lw.wk = gauss(cfg.kv_dim(), cfg.d_model);
        lw.wv = gauss(cfg.kv_dim(), cfg.d_model);
        lw.wo = gauss(cfg.d_model, cfg.d_model);
        lw.w_in = gauss(cfg.mlp_dim(), cfg.d_model);
        lw.w_out = gauss(cfg.d_model, cfg.mlp_dim());
        base.layers.push_back(std::move(lw));
    }
    base.head = gauss(cfg.n_classes, cfg.d_model);
    return base;
}

// ---------------------------------------------------------------------------
// LoRA adapters
// ---------------------------------------------------------------------------

inline constexpr const char* kLoraTargets[] = {"wq", "wk", "wv", "wo", "w_in", "w_out"};

struct LoraAdapter {
    int layer = 0;
    std::string target;  // one of kLoraTargets
    int rank = 8;
    float alpha = 16.0f;
    Mat32 a;  // out x rank
    Mat32 b;  // rank x in
    float scale() const { return alpha / static_cast<float>(rank); }
};

enum class LoraInit {
    paper,         // A zero, B Gaussian: the update starts at exactly zero
    conventional,  // A Gaussian, B zero
};

struct LoraOptions {
    std::vector<std::string> targets = {"wq", "wk", "wv", "wo"};
    int rank = 8;
    float alpha = 16.0f;
    LoraInit init = LoraInit::paper;
    float init_stddev = 0.02f;
};

inline Mat32& target_matrix(BaseWeights& base, int layer, const std::string& target) {
    if (layer < 0 || layer >= static_cast<int>(base.layers.size())) {
        throw std::invalid_argument("lora: layer out of range");
    }
    LayerWeights& lw = base.layers[static_cast<std::size_t>(layer)];
    if (target == "wq") return lw.wq;
    if (target == "wk") return lw.wk;
    if (target == "wv") return lw.wv;
    if (target == "wo") return lw.wo;
    if (target == "w_in") return lw.w_in;
    if (target == "w_out") return lw.w_out;
    throw std::invalid_argument("lora: unknown target " + target);
}

inline std::vector<LoraAdapter> attach_adapters(BaseWeights& base, const LoraOptions& opts,
                                                std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LoraAdapter> adapters;
    for (int layer = 0; layer < base.cfg.n_layers; ++layer) {
        for (const std::string& target : opts.targets) {
            const Mat32& m = target_matrix(base, layer, target);
            if (opts.rank < 1 || opts.rank > std::min(m.rows, m.cols)) {
                throw std::invalid_argument("lora: rank must satisfy 1 <= r <= min(d, k)");
            }
            LoraAdapter ad;
            ad.layer = layer;
            ad.target = target;
            ad.rank = opts.rank;
            ad.alpha = opts.alpha;
            ad.a = Mat32(m.rows, opts.rank);
            ad.b = Mat32(opts.rank, m.cols);
            auto fill = [&](Mat32& t) {
                for (auto& x : t.v) x = static_cast<float>(rng.normal()) * opts.init_stddev;
            };
            if (opts.init == LoraInit::paper) {
                fill(ad.b);  // A stays zero, so MA MB = 0 at the start
            } else {
                fill(ad.a);
            }
            ad.a.frozen = false;
            ad.b.frozen = false;
            adapters.push_back(std::move(ad));
        }
    }
    // each adapter must target a distinct matrix
    for (std::size_t i = 0; i < adapters.size(); ++i) {
        for (std::size_t j = i + 1; j < adapters.size(); ++j) {
            if (adapters[i].layer == adapters[j].layer && adapters[i].target == adapters[j].target) {
                throw std::invalid_argument("lora: duplicate adapter target");
            }
        }
    }
    return adapters;
}

inline BaseWeights lora_merge(const BaseWeights& base, const std::vector<LoraAdapter>& adapters) {
    BaseWeights merged = base;
    for (const LoraAdapter& ad : adapters) {
        Mat32& m = target_matrix(merged, ad.layer, ad.target);
        if (ad.a.rows != m.rows || ad.b.cols != m.cols || ad.a.cols != ad.b.rows) {
            throw std::invalid_argument("lora_merge: adapter/base shape mismatch");
        }
        const double scale = static_cast<double>(ad.scale());
        for (int r = 0; r < m.rows; ++r) {
            for (int c = 0; c < m.cols; ++c) {
                double delta = 0.0;
                for (int k = 0; k < ad.rank; ++k) {
                    delta += static_cast<double>(ad.a.at(r, k)) * static_cast<double>(ad.b.at(k, c));
                }
                m.at(r, c) = static_cast<float>(static_cast<double>(m.at(r, c)) + scale * delta);
            }
        }
    }
    return merged;
}

// inverse of lora_merge, same delta arithmetic
inline BaseWeights lora_unmerge(const BaseWeights& base, const std::vector<LoraAdapter>& adapters) {
    BaseWeights out = base;
    for (const LoraAdapter& ad : adapters) {
        Mat32& m = target_matrix(out, ad.layer, ad.target);
        const double scale = static_cast<double>(ad.scale());
        for (int r = 0; r < m.rows; ++r) {
            for (int c = 0; c < m.cols; ++c) {
                double delta = 0.0;
                for (int k = 0; k < ad.rank; ++k) {
                    delta += static_cast<double>(ad.a.at(r, k)) * static_cast<double>(ad.b.at(k, c));
                }
                m.at(r, c) = static_cast<float>(static_cast<double>(m.at(r, c)) - scale * delta);
            }
        }
    }
    return out;
}

inline std::int64_t trainable_parameter_count(const std::vector<LoraAdapter>& adapters,
                                              const BaseWeights& base) {
    std::int64_t n = static_cast<std::int64_t>(base.head.v.size());
    for (const auto& ad : adapters) {
        n += static_cast<std::int64_t>(ad.a.v.size()) + static_cast<std::int64_t>(ad.b.v.size());
    }
    return n;
}

inline std::int64_t base_parameter_count(const BaseWeights& base) {
    std::int64_t n = static_cast<std::int64_t>(base.embedding.v.size()) +
                     static_cast<std::int64_t>(base.head.v.size());
    for (const auto& lw : base.layers) {
        n += static_cast<std::int64_t>(lw.wq.v.size()) + static_cast<std::int64_t>(lw.wk.v.size()) +
             static_cast<std::int64_t>(lw.wv.v.size()) + static_cast<std::int64_t>(lw.wo.v.size()) +
             static_cast<std::int64_t>(lw.w_in.v.size()) + static_cast<std::int64_t>(lw.w_out.v.size());
    }
    return n;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

// Pairwise rotation by angle pos * base^(-2j/dim); x is [n, dim] with even
// dim, one row per position.  Angles are computed in double and applied to
// the float storage.
inline void rope_apply(Mat32& x, const std::vector<int>& positions, float rope_base) {
    if (x.cols % 2 != 0) throw std::invalid_argument("rope_apply: head dimension must be even");
    if (static_cast<int>(positions.size()) != x.rows) {
        throw std::invalid_argument("rope_apply: one position per row required");
    }
    const int half = x.cols / 2;
    for (int r = 0; r < x.rows; ++r) {
        float* row = x.row(r);
        for (int j = 0; j < half; ++j) {
            const double freq =
                std::pow(static_cast<double>(rope_base), -2.0 * j / static_cast<double>(x.cols));
            const double angle = static_cast<double>(positions[static_cast<std::size_t>(r)]) * freq;
            const double c = std::cos(angle), s = std::sin(angle);
            const double x0 = static_cast<double>(row[2 * j]);
            const double x1 = static_cast<double>(row[2 * j + 1]);
            row[2 * j] = static_cast<float>(c * x0 - s * x1);
            row[2 * j + 1] = static_cast<float>(s * x0 + c * x1);
        }
    }
}

namespace detail {

inline void rope_apply_heads(Mat32& x, int head_dim, float rope_base, bool inverse = false) {
    const int n_heads = x.cols / head_dim;
    const int half = head_dim / 2;
    for (int r = 0; r < x.rows; ++r) {
        for (int h = 0; h < n_heads; ++h) {
            float* row = x.row(r) + h * head_dim;
            for (int j = 0; j < half; ++j) {
                const double freq = std::pow(static_cast<double>(rope_base),
                                             -2.0 * j / static_cast<double>(head_dim));
                double angle = static_cast<double>(r) * freq;
                if (inverse) angle = -angle;
                const double c = std::cos(angle), s = std::sin(angle);
                const double x0 = static_cast<double>(row[2 * j]);
                const double x1 = static_cast<double>(row[2 * j + 1]);
                row[2 * j] = static_cast<float>(c * x0 - s * x1);
                row[2 * j + 1] = static_cast<float>(s * x0 + c * x1);
            }
        }
    }
}

// y [n, out] = x [n, in] * w^T, plus optional LoRA term
inline void linear_forward(const Mat32& x, const Mat32& w, const LoraAdapter* adapter, Mat32& y) {
    if (x.cols != w.cols) throw std::invalid_argument("linear: shape mismatch");
    y = Mat32(x.rows, w.rows);
    for (int i = 0; i < x.rows; ++i) {
        const float* xi = x.row(i);
        float* yi = y.row(i);
        for (int o = 0; o < w.rows; ++o) {
            const float* wo = w.row(o);
            float acc = 0.0f;
            for (int c = 0; c < x.cols; ++c) acc += xi[c] * wo[c];
            yi[o] = acc;
        }
    }
    if (adapter != nullptr) {
        if (adapter->a.rows != w.rows || adapter->b.cols != w.cols) {
            throw std::invalid_argument("linear: adapter/base shape mismatch");
        }
        const float scale = adapter->scale();
        Mat32 t(x.rows, adapter->rank);
        for (int i = 0; i < x.rows; ++i) {
            const float* xi = x.row(i);
            for (int k = 0; k < adapter->rank; ++k) {
                const float* bk = adapter->b.row(k);
                float acc = 0.0f;
                for (int c = 0; c < x.cols; ++c) acc += xi[c] * bk[c];
                t.at(i, k) = acc;
            }
        }
        for (int i = 0; i < x.rows; ++i) {
            float* yi = y.row(i);
            for (int o = 0; o < w.rows; ++o) {
                const float* ao = adapter->a.row(o);
                float acc = 0.0f;
                for (int k = 0; k < adapter->rank; ++k) acc += t.at(i, k) * ao[k];
                yi[o] += scale * acc;
            }
        }
    }
}

struct LinearGrads {
    Mat32* dw = nullptr;        // base weight gradient (full scope)
    Mat32* da = nullptr;        // adapter gradients (lora scope)
    Mat32* db = nullptr;
    const LoraAdapter* adapter = nullptr;
};

// backward of linear_forward: fills dx and accumulates weight/adapter grads
inline void linear_backward(const Mat32& x, const Mat32& w, const Mat32& dy, const LinearGrads& g,
                            Mat32& dx) {
    dx = Mat32(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const float* dyi = dy.row(i);
        float* dxi = dx.row(i);
        for (int o = 0; o < w.rows; ++o) {
            const float d = dyi[o];
            if (d == 0.0f) continue;
            const float* wo = w.row(o);
            for (int c = 0; c < x.cols; ++c) dxi[c] += d * wo[c];
        }
    }
    if (g.dw != nullptr) {
        for (int i = 0; i < x.rows; ++i) {
            const float* dyi = dy.row(i);
            const float* xi = x.row(i);
            for (int o = 0; o < w.rows; ++o) {
                const float d = dyi[o];
                if (d == 0.0f) continue;
                float* dwo = g.dw->row(o);
                for (int c = 0; c < x.cols; ++c) dwo[c] += d * xi[c];
            }
        }
    }
    if (g.adapter != nullptr) {
        const LoraAdapter& ad = *g.adapter;
        const float scale = ad.scale();
        // t = x b^T recomputed; u = dy a (both [n, rank])
        Mat32 t(x.rows, ad.rank), u(x.rows, ad.rank);
        for (int i = 0; i < x.rows; ++i) {
            const float* xi = x.row(i);
            const float* dyi = dy.row(i);
            for (int k = 0; k < ad.rank; ++k) {
                const float* bk = ad.b.row(k);
                float acc = 0.0f;
                for (int c = 0; c < x.cols; ++c) acc += xi[c] * bk[c];
                t.at(i, k) = acc;
                float uacc = 0.0f;
                for (int o = 0; o < w.rows; ++o) uacc += dyi[o] * ad.a.at(o, k);
                u.at(i, k) = uacc;
            }
        }
        // dx += scale * u b
        for (int i = 0; i < x.rows; ++i) {
            float* dxi = dx.row(i);
            for (int k = 0; k < ad.rank; ++k) {
                const float uk = scale * u.at(i, k);
                if (uk == 0.0f) continue;
                const float* bk = ad.b.row(k);
                for (int c = 0; c < x.cols; ++c) dxi[c] += uk * bk[c];
            }
        }
        if (g.da != nullptr) {  // da += scale * dy^T t
            for (int i = 0; i < x.rows; ++i) {
                const float* dyi = dy.row(i);
                for (int o = 0; o < w.rows; ++o) {
                    const float d = scale * dyi[o];
                    if (d == 0.0f) continue;
                    float* dao = g.da->row(o);
                    for (int k = 0; k < ad.rank; ++k) dao[k] += d * t.at(i, k);
                }
            }
        }
        if (g.db != nullptr) {  // db += scale * u^T x
            for (int i = 0; i < x.rows; ++i) {
                const float* xi = x.row(i);
                for (int k = 0; k < ad.rank; ++k) {
                    const float uk = scale * u.at(i, k);
                    if (uk == 0.0f) continue;
                    float* dbk = g.db->row(k);
                    for (int c = 0; c < x.cols; ++c) dbk[c] += uk * xi[c];
                }
            }
        }
    }
}

constexpr float kRmsEps = 1e-5f;

inline void rmsnorm_forward(const Mat32& x, Mat32& y, std::vector<float>& inv_rms) {
    y = Mat32(x.rows, x.cols);
    inv_rms.resize(static_cast<std::size_t>(x.rows));
    for (int i = 0; i < x.rows; ++i) {
        const float* xi = x.row(i);
        float ss = 0.0f;
        for (int c = 0; c < x.cols; ++c) ss += xi[c] * xi[c];
        const float inv = 1.0f / std::sqrt(ss / static_cast<float>(x.cols) + kRmsEps);
        inv_rms[static_cast<std::size_t>(i)] = inv;
        float* yi = y.row(i);
        for (int c = 0; c < x.cols; ++c) yi[c] = xi[c] * inv;
    }
}

inline void rmsnorm_backward(const Mat32& y, const std::vector<float>& inv_rms, const Mat32& dy,
                             Mat32& dx) {
    dx = Mat32(y.rows, y.cols);
    for (int i = 0; i < y.rows; ++i) {
        const float* yi = y.row(i);
        const float* dyi = dy.row(i);
        float dot = 0.0f;
        for (int c = 0; c < y.cols; ++c) dot += dyi[c] * yi[c];
        const float mean_dot = dot / static_cast<float>(y.cols);
        float* dxi = dx.row(i);
        for (int c = 0; c < y.cols; ++c) {
            dxi[c] = (dyi[c] - yi[c] * mean_dot) * inv_rms[static_cast<std::size_t>(i)];
        }
    }
}

inline float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.7071067811865476f));
}

inline float gelu_grad(float x) {
    const float cdf = 0.5f * (1.0f + std::erf(x * 0.7071067811865476f));
    const float pdf = 0.3989422804014327f * std::exp(-0.5f * x * x);
    return cdf + x * pdf;
}

inline bool window_allows(const TransformerConfig& cfg, int query, int key) {
    if (cfg.swa_window <= 0) return true;
    const int d = query >= key ? query - key : key - query;
    return d <= cfg.swa_window;
}

}  // namespace detail

// Scaled dot-product attention over already-projected (and rotated) q, k, v.
// q is [len, n_heads*head_dim]; k and v are [len, n_kv_heads*head_dim]; each
// group of n_heads/n_kv_heads query heads shares one kv head.  A finite
// cfg.swa_window masks keys outside |i - j| <= W.  Returns [len, d_model]
// and optionally the per-head attention rows for backward.
inline Mat32 attention(const TransformerConfig& cfg, const Mat32& q, const Mat32& k, const Mat32& v,
                       std::vector<Mat32>* probs_out = nullptr) {
    const int len = q.rows;
    const int hd = cfg.head_dim();
    if (q.cols != cfg.n_heads * hd || k.cols != cfg.kv_dim() || v.cols != cfg.kv_dim() ||
        k.rows != len || v.rows != len) {
        throw std::invalid_argument("attention: shape mismatch");
    }
    const int group = cfg.n_heads / cfg.n_kv_heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));

    Mat32 ctx(len, cfg.n_heads * hd);
    if (probs_out != nullptr) probs_out->assign(static_cast<std::size_t>(cfg.n_heads), Mat32(len, len));

    std::vector<float> scores(static_cast<std::size_t>(len));
    for (int h = 0; h < cfg.n_heads; ++h) {
        const int kv = h / group;
        for (int i = 0; i < len; ++i) {
            const float* qi = q.row(i) + h * hd;
            float max_score = -std::numeric_limits<float>::infinity();
            for (int j = 0; j < len; ++j) {
                if (!detail::window_allows(cfg, i, j)) {
                    scores[static_cast<std::size_t>(j)] = -std::numeric_limits<float>::infinity();
                    continue;
                }
                const float* kj = k.row(j) + kv * hd;
                float s = 0.0f;
                for (int c = 0; c < hd; ++c) s += qi[c] * kj[c];
                s *= inv_sqrt;
                scores[static_cast<std::size_t>(j)] = s;
                max_score = std::max(max_score, s);
            }
            float denom = 0.0f;
            for (int j = 0; j < len; ++j) {
                float& s = scores[static_cast<std::size_t>(j)];
                if (s == -std::numeric_limits<float>::infinity()) {
                    s = 0.0f;
                } else {
                    s = std::exp(s - max_score);
                    denom += s;
                }
            }
            const float inv_denom = 1.0f / denom;
            float* out = ctx.row(i) + h * hd;
            std::fill(out, out + hd, 0.0f);
            for (int j = 0; j < len; ++j) {
                const float p = scores[static_cast<std::size_t>(j)] * inv_denom;
                if (probs_out != nullptr) (*probs_out)[static_cast<std::size_t>(h)].at(i, j) = p;
                if (p == 0.0f) continue;
                const float* vj = v.row(j) + kv * hd;
                for (int c = 0; c < hd; ++c) out[c] += p * vj[c];
            }
        }
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

namespace detail {

struct LayerCache {
    Mat32 x_in;        // residual stream entering the block
    Mat32 xn1;         // normed input
    std::vector<float> inv_rms1;
    Mat32 q, k, v;     // post-rope q, k
    std::vector<Mat32> probs;
    Mat32 ctx;
    Mat32 x_mid;       // after attention residual
    Mat32 xn2;
    std::vector<float> inv_rms2;
    Mat32 h_pre;       // MLP pre-activation
    Mat32 h_act;
};

struct ForwardCache {
    std::vector<int> token_ids;  // attn_len ids, CLS first
    std::vector<LayerCache> layers;
    Mat32 x_final;
    Mat32 cls_normed;  // 1 x d_model
    std::vector<float> cls_inv_rms;
    std::vector<float> logits;
};

struct AdapterSet {
    // adapter pointer (or null) per layer and target slot, slots ordered as kLoraTargets
    std::vector<std::array<const LoraAdapter*, 6>> slots;

    AdapterSet(const BaseWeights& base, const std::vector<LoraAdapter>& adapters) {
        slots.assign(static_cast<std::size_t>(base.cfg.n_layers), {});
        for (const LoraAdapter& ad : adapters) {
            int slot = -1;
            for (int s = 0; s < 6; ++s) {
                if (ad.target == kLoraTargets[s]) slot = s;
            }
            if (slot < 0 || ad.layer < 0 || ad.layer >= base.cfg.n_layers) {
                throw std::invalid_argument("forward: adapter references unknown target");
            }
            const Mat32& m = target_matrix(const_cast<BaseWeights&>(base), ad.layer, ad.target);
            if (ad.a.rows != m.rows || ad.b.cols != m.cols) {
                throw std::invalid_argument("forward: adapter/base shape mismatch");
            }
            slots[static_cast<std::size_t>(ad.layer)][static_cast<std::size_t>(slot)] = &ad;
        }
    }
    const LoraAdapter* get(int layer, int slot) const {
        return slots[static_cast<std::size_t>(layer)][static_cast<std::size_t>(slot)];
    }
};

inline void forward_cached(const BaseWeights& base, const AdapterSet& ads,
                           const TokenSequence& tokens, ForwardCache& cache) {
    const TransformerConfig& cfg = base.cfg;
    const int len = tokens.attn_len;
    if (len < 1 || static_cast<int>(tokens.ids.size()) < len) {
        throw std::invalid_argument("forward: empty or malformed token sequence");
    }

    cache.token_ids.assign(tokens.ids.begin(), tokens.ids.begin() + len);
    Mat32 x(len, cfg.d_model);
    for (int i = 0; i < len; ++i) {
        const int id = cache.token_ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("forward: token id out of range");
        std::memcpy(x.row(i), base.embedding.row(id), sizeof(float) * static_cast<std::size_t>(cfg.d_model));
    }

    cache.layers.assign(static_cast<std::size_t>(cfg.n_layers), {});
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
        const LayerWeights& lw = base.layers[static_cast<std::size_t>(l)];
        lc.x_in = x;

        rmsnorm_forward(lc.x_in, lc.xn1, lc.inv_rms1);
        linear_forward(lc.xn1, lw.wq, ads.get(l, 0), lc.q);
        linear_forward(lc.xn1, lw.wk, ads.get(l, 1), lc.k);
        linear_forward(lc.xn1, lw.wv, ads.get(l, 2), lc.v);
        rope_apply_heads(lc.q, cfg.head_dim(), cfg.rope_base);
        rope_apply_heads(lc.k, cfg.head_dim(), cfg.rope_base);
        lc.ctx = attention(cfg, lc.q, lc.k, lc.v, &lc.probs);

        Mat32 attn_out;
        linear_forward(lc.ctx, lw.wo, ads.get(l, 3), attn_out);
        lc.x_mid = lc.x_in;
        for (std::size_t i = 0; i < lc.x_mid.v.size(); ++i) lc.x_mid.v[i] += attn_out.v[i];

        rmsnorm_forward(lc.x_mid, lc.xn2, lc.inv_rms2);
        linear_forward(lc.xn2, lw.w_in, ads.get(l, 4), lc.h_pre);
        lc.h_act = lc.h_pre;
        for (auto& h : lc.h_act.v) h = gelu(h);
        Mat32 mlp_out;
        linear_forward(lc.h_act, lw.w_out, ads.get(l, 5), mlp_out);

        x = lc.x_mid;
        for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += mlp_out.v[i];
    }
    cache.x_final = x;

    // classification reads the CLS position (index 0) through the head
    Mat32 cls(1, cfg.d_model);
    std::memcpy(cls.row(0), cache.x_final.row(0), sizeof(float) * static_cast<std::size_t>(cfg.d_model));
    rmsnorm_forward(cls, cache.cls_normed, cache.cls_inv_rms);

    cache.logits.assign(static_cast<std::size_t>(cfg.n_classes), 0.0f);
    for (int c = 0; c < cfg.n_classes; ++c) {
        const float* w = base.head.row(c);
        float acc = 0.0f;
        for (int d = 0; d < cfg.d_model; ++d) acc += w[d] * cache.cls_normed.at(0, d);
        cache.logits[static_cast<std::size_t>(c)] = acc;
    }
}

}  // namespace detail

inline std::vector<float> forward(const BaseWeights& base, const std::vector<LoraAdapter>& adapters,
                                  const TokenSequence& tokens) {
    detail::AdapterSet ads(base, adapters);
    detail::ForwardCache cache;
    detail::forward_cached(base, ads, tokens, cache);
    return cache.logits;
}

// ---------------------------------------------------------------------------
// Weighted cross-entropy (double precision over the logits)
//   l_n = -w_{y_n} log softmax(y_hat_n)[y_n],   loss = sum l_n / sum w_{y_n}
// ---------------------------------------------------------------------------

inline double weighted_cross_entropy(const std::vector<std::vector<double>>& logits,
                                     const std::vector<int>& targets,
                                     const std::vector<double>& class_weights) {
    if (logits.empty() || logits.size() != targets.size()) {
        throw std::invalid_argument("weighted_cross_entropy: batch shape mismatch");
    }
    double loss_sum = 0.0, weight_sum = 0.0;
    for (std::size_t n = 0; n < logits.size(); ++n) {
        const auto& row = logits[n];
        const int y = targets[n];
        if (y < 0 || y >= static_cast<int>(row.size())) {
            throw std::invalid_argument("weighted_cross_entropy: target out of range");
        }
        double max_logit = row[0];
        for (double z : row) {
            if (!std::isfinite(z)) throw std::invalid_argument("weighted_cross_entropy: non-finite logit");
            max_logit = std::max(max_logit, z);
        }
        double denom = 0.0;
        for (double z : row) denom += std::exp(z - max_logit);
        const double log_p = row[static_cast<std::size_t>(y)] - max_logit - std::log(denom);
        const double w = class_weights[static_cast<std::size_t>(y)];
        if (!(w > 0.0)) throw std::invalid_argument("weighted_cross_entropy: weights must be positive");
        loss_sum += -w * log_p;
        weight_sum += w;
    }
    return loss_sum / weight_sum;
}

inline void weighted_cross_entropy_grad(const std::vector<std::vector<double>>& logits,
                                        const std::vector<int>& targets,
                                        const std::vector<double>& class_weights,
                                        std::vector<std::vector<double>>& dlogits) {
    double weight_sum = 0.0;
    for (int y : targets) weight_sum += class_weights[static_cast<std::size_t>(y)];
    dlogits.assign(logits.size(), {});
    for (std::size_t n = 0; n < logits.size(); ++n) {
        const auto& row = logits[n];
        const int y = targets[n];
        double max_logit = row[0];
        for (double z : row) max_logit = std::max(max_logit, z);
        double denom = 0.0;
        for (double z : row) denom += std::exp(z - max_logit);
        const double coeff = class_weights[static_cast<std::size_t>(y)] / weight_sum;
        auto& d = dlogits[n];
        d.resize(row.size());
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double p = std::exp(row[c] - max_logit) / denom;
            d[c] = coeff * (p - (static_cast<int>(c) == y ? 1.0 : 0.0));
        }
    }
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

struct TrainState {
    float lr = 2e-5f;
    float eps = 1e-8f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float weight_decay = 0.01f;
    int batch_size = 16;
    int epochs = 10;
    std::vector<double> class_weights;  // per class; empty = all ones
    std::uint64_t seed = 0;

    long long step = 0;
    std::vector<Mat32> moment_m, moment_v;  // aligned with the trainable tensor list
};

inline void adamw_step(TrainState& st, const std::vector<Mat32*>& params,
                       const std::vector<Mat32>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("adamw_step: param/grad mismatch");
    if (st.moment_m.empty()) {
        for (const Mat32* p : params) {
            st.moment_m.emplace_back(p->rows, p->cols);
            st.moment_v.emplace_back(p->rows, p->cols);
        }
    }
    if (st.moment_m.size() != params.size()) {
        throw std::invalid_argument("adamw_step: state tracks a different tensor list");
    }
    ++st.step;
    const float bc1 = 1.0f - std::pow(st.beta1, static_cast<float>(st.step));
    const float bc2 = 1.0f - std::pow(st.beta2, static_cast<float>(st.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        Mat32& p = *params[t];
        const Mat32& g = grads[t];
        if (!p.same_shape(g) || !p.same_shape(st.moment_m[t])) {
            throw std::invalid_argument("adamw_step: shape mismatch");
        }
        if (p.frozen) throw std::invalid_argument("adamw_step: refusing to update a frozen tensor");
        Mat32& m = st.moment_m[t];
        Mat32& v = st.moment_v[t];
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            m.v[i] = st.beta1 * m.v[i] + (1.0f - st.beta1) * g.v[i];
            v.v[i] = st.beta2 * v.v[i] + (1.0f - st.beta2) * g.v[i] * g.v[i];
            const float m_hat = m.v[i] / bc1;
            const float v_hat = v.v[i] / bc2;
            p.v[i] -= st.lr * (m_hat / (std::sqrt(v_hat) + st.eps) + st.weight_decay * p.v[i]);
        }
    }
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

struct TokenizedDataset {
    std::vector<TokenSequence> seqs;
    std::vector<int> labels;
};

enum class TrainScope {
    lora,  // adapters + head
    full,  // every tensor, no adapters
};

struct FinetuneResult {
    std::vector<double> epoch_loss;
};

namespace detail {

struct GradSet {
    // mirror of the trainable tensor list; lookups hold indices into `grads`
    // because the vector may reallocate while it is being built
    std::vector<Mat32*> params;
    std::vector<Mat32> grads;
    std::vector<std::array<int, 6>> layer_base_idx;  // full scope
    std::vector<std::array<int, 6>> adapter_a_idx;   // lora scope
    std::vector<std::array<int, 6>> adapter_b_idx;
    int embedding_idx = -1;
    int head_idx = -1;

    int add(Mat32* p) {
        params.push_back(p);
        grads.emplace_back(p->rows, p->cols);
        return static_cast<int>(grads.size()) - 1;
    }
    Mat32* grad_at(int idx) { return idx < 0 ? nullptr : &grads[static_cast<std::size_t>(idx)]; }
    void zero() {
        for (auto& g : grads) g.zero();
    }
};

inline GradSet build_grad_set(BaseWeights& base, std::vector<LoraAdapter>& adapters,
                              TrainScope scope) {
    GradSet gs;
    std::array<int, 6> none;
    none.fill(-1);
    gs.layer_base_idx.assign(static_cast<std::size_t>(base.cfg.n_layers), none);
    gs.adapter_a_idx.assign(static_cast<std::size_t>(base.cfg.n_layers), none);
    gs.adapter_b_idx.assign(static_cast<std::size_t>(base.cfg.n_layers), none);

    if (scope == TrainScope::full) {
        base.embedding.frozen = false;
        gs.embedding_idx = gs.add(&base.embedding);
        for (int l = 0; l < base.cfg.n_layers; ++l) {
            for (int s = 0; s < 6; ++s) {
                Mat32& m = target_matrix(base, l, kLoraTargets[s]);
                m.frozen = false;
                gs.layer_base_idx[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)] =
                    gs.add(&m);
            }
        }
    } else {
        for (LoraAdapter& ad : adapters) {
            int slot = -1;
            for (int s = 0; s < 6; ++s) {
                if (ad.target == kLoraTargets[s]) slot = s;
            }
            ad.a.frozen = false;
            ad.b.frozen = false;
            gs.adapter_a_idx[static_cast<std::size_t>(ad.layer)][static_cast<std::size_t>(slot)] =
                gs.add(&ad.a);
            gs.adapter_b_idx[static_cast<std::size_t>(ad.layer)][static_cast<std::size_t>(slot)] =
                gs.add(&ad.b);
        }
    }
    base.head.frozen = false;
    gs.head_idx = gs.add(&base.head);
    return gs;
}

// backward through the whole network for one sequence, seeding from dlogits
inline void backward_cached(const BaseWeights& base, const AdapterSet& ads,
                            const ForwardCache& cache, const std::vector<float>& dlogits,
                            GradSet& gs) {
    const TransformerConfig& cfg = base.cfg;
    const int len = static_cast<int>(cache.token_ids.size());
    const int hd = cfg.head_dim();
    const int group = cfg.n_heads / cfg.n_kv_heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));

    // head
    Mat32 d_cls_normed(1, cfg.d_model);
    Mat32* head_grad = gs.grad_at(gs.head_idx);
    for (int c = 0; c < cfg.n_classes; ++c) {
        const float d = dlogits[static_cast<std::size_t>(c)];
        if (head_grad != nullptr) {
            float* hg = head_grad->row(c);
            for (int j = 0; j < cfg.d_model; ++j) hg[j] += d * cache.cls_normed.at(0, j);
        }
        const float* hw = base.head.row(c);
        for (int j = 0; j < cfg.d_model; ++j) d_cls_normed.at(0, j) += d * hw[j];
    }
    Mat32 d_cls;
    rmsnorm_backward(cache.cls_normed, cache.cls_inv_rms, d_cls_normed, d_cls);

    Mat32 dx(len, cfg.d_model);
    for (int j = 0; j < cfg.d_model; ++j) dx.at(0, j) = d_cls.at(0, j);

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
        const LayerWeights& lw = base.layers[static_cast<std::size_t>(l)];
        auto lg = [&](int slot) {
            LinearGrads g;
            g.dw = gs.grad_at(gs.layer_base_idx[static_cast<std::size_t>(l)][static_cast<std::size_t>(slot)]);
            g.adapter = ads.get(l, slot);
            g.da = gs.grad_at(gs.adapter_a_idx[static_cast<std::size_t>(l)][static_cast<std::size_t>(slot)]);
            g.db = gs.grad_at(gs.adapter_b_idx[static_cast<std::size_t>(l)][static_cast<std::size_t>(slot)]);
            return g;
        };

        // MLP block: x = x_mid + w_out(gelu(w_in(xn2)))
        Mat32 d_hact;
        linear_backward(lc.h_act, lw.w_out, dx, lg(5), d_hact);
        Mat32 d_hpre = d_hact;
        for (std::size_t i = 0; i < d_hpre.v.size(); ++i) d_hpre.v[i] *= gelu_grad(lc.h_pre.v[i]);
        Mat32 d_xn2;
        linear_backward(lc.xn2, lw.w_in, d_hpre, lg(4), d_xn2);
        Mat32 d_mid_from_norm;
        rmsnorm_backward(lc.xn2, lc.inv_rms2, d_xn2, d_mid_from_norm);
        Mat32 d_mid = dx;  // residual path
        for (std::size_t i = 0; i < d_mid.v.size(); ++i) d_mid.v[i] += d_mid_from_norm.v[i];

        // attention block: x_mid = x_in + wo(attention(rope(q), rope(k), v))
        Mat32 d_ctx;
        linear_backward(lc.ctx, lw.wo, d_mid, lg(3), d_ctx);

        Mat32 d_q(len, cfg.n_heads * hd), d_k(len, cfg.kv_dim()), d_v(len, cfg.kv_dim());
        std::vector<float> d_p(static_cast<std::size_t>(len));
        for (int h = 0; h < cfg.n_heads; ++h) {
            const int kv = h / group;
            const Mat32& probs = lc.probs[static_cast<std::size_t>(h)];
            for (int i = 0; i < len; ++i) {
                const float* d_ctx_i = d_ctx.row(i) + h * hd;
                // d_p and d_v
                float dot_dp_p = 0.0f;
                for (int j = 0; j < len; ++j) {
                    const float p = probs.at(i, j);
                    float acc = 0.0f;
                    if (p != 0.0f) {
                        const float* vj = lc.v.row(j) + kv * hd;
                        for (int c = 0; c < hd; ++c) acc += d_ctx_i[c] * vj[c];
                        float* dvj = d_v.row(j) + kv * hd;
                        for (int c = 0; c < hd; ++c) dvj[c] += p * d_ctx_i[c];
                    }
                    d_p[static_cast<std::size_t>(j)] = acc;
                    dot_dp_p += acc * p;
                }
                // softmax backward, then scores -> q, k
                float* d_qi = d_q.row(i) + h * hd;
                for (int j = 0; j < len; ++j) {
                    const float p = probs.at(i, j);
                    if (p == 0.0f) continue;
                    const float ds = p * (d_p[static_cast<std::size_t>(j)] - dot_dp_p) * inv_sqrt;
                    const float* kj = lc.k.row(j) + kv * hd;
                    for (int c = 0; c < hd; ++c) d_qi[c] += ds * kj[c];
                    float* d_kj = d_k.row(j) + kv * hd;
                    const float* qi = lc.q.row(i) + h * hd;
                    for (int c = 0; c < hd; ++c) d_kj[c] += ds * qi[c];
                }
            }
        }
        // undo the rotation on the gradients
        rope_apply_heads(d_q, hd, cfg.rope_base, /*inverse=*/true);
        rope_apply_heads(d_k, hd, cfg.rope_base, /*inverse=*/true);

        Mat32 d_xn1_q, d_xn1_k, d_xn1_v;
        linear_backward(lc.xn1, lw.wq, d_q, lg(0), d_xn1_q);
        linear_backward(lc.xn1, lw.wk, d_k, lg(1), d_xn1_k);
        linear_backward(lc.xn1, lw.wv, d_v, lg(2), d_xn1_v);
        for (std::size_t i = 0; i < d_xn1_q.v.size(); ++i) {
            d_xn1_q.v[i] += d_xn1_k.v[i] + d_xn1_v.v[i];
        }
        Mat32 d_in_from_norm;
        rmsnorm_backward(lc.xn1, lc.inv_rms1, d_xn1_q, d_in_from_norm);

        dx = d_mid;  // residual path into the block input
        for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += d_in_from_norm.v[i];
    }

    if (Mat32* emb_grad = gs.grad_at(gs.embedding_idx)) {
        for (int i = 0; i < len; ++i) {
            float* row = emb_grad->row(cache.token_ids[static_cast<std::size_t>(i)]);
            const float* dxi = dx.row(i);
            for (int c = 0; c < cfg.d_model; ++c) row[c] += dxi[c];
        }
    }
}

}  // namespace detail

inline FinetuneResult finetune(BaseWeights& base, std::vector<LoraAdapter>& adapters,
                               const TokenizedDataset& train, TrainState& state,
                               TrainScope scope = TrainScope::lora) {
    if (train.seqs.empty() || train.seqs.size() != train.labels.size()) {
        throw std::invalid_argument("finetune: empty or mismatched training data");
    }
    if (state.class_weights.empty()) {
        state.class_weights.assign(static_cast<std::size_t>(base.cfg.n_classes), 1.0);
    }
    if (static_cast<int>(state.class_weights.size()) != base.cfg.n_classes) {
        throw std::invalid_argument("finetune: class weight vector has wrong length");
    }

    detail::GradSet gs = detail::build_grad_set(base, adapters, scope);
    const std::vector<LoraAdapter> no_adapters;
    const std::vector<LoraAdapter>& fwd_adapters =
        scope == TrainScope::lora ? adapters : no_adapters;
    // adapter tensors mutate in place but the vector never resizes, so the
    // pointer set stays valid across the whole run
    detail::AdapterSet ads(base, fwd_adapters);

    Rng rng(state.seed);
    std::vector<std::size_t> order(train.seqs.size());
    std::iota(order.begin(), order.end(), 0);

    FinetuneResult result;
    std::vector<detail::ForwardCache> caches(static_cast<std::size_t>(state.batch_size));
    for (int epoch = 0; epoch < state.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss_sum = 0.0, epoch_weight_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(state.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(state.batch_size));
            const std::size_t n = end - start;
            std::vector<std::vector<double>> logits(n);
            std::vector<int> targets(n);
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t idx = order[start + b];
                detail::forward_cached(base, ads, train.seqs[idx], caches[b]);
                logits[b].assign(caches[b].logits.begin(), caches[b].logits.end());
                targets[b] = train.labels[idx];
            }
            const double batch_loss = weighted_cross_entropy(logits, targets, state.class_weights);
            std::vector<std::vector<double>> dlogits;
            weighted_cross_entropy_grad(logits, targets, state.class_weights, dlogits);

            double batch_weight = 0.0;
            for (int y : targets) batch_weight += state.class_weights[static_cast<std::size_t>(y)];
            epoch_loss_sum += batch_loss * batch_weight;
            epoch_weight_sum += batch_weight;

            gs.zero();
            for (std::size_t b = 0; b < n; ++b) {
                std::vector<float> seed_grad(dlogits[b].begin(), dlogits[b].end());
                detail::backward_cached(base, ads, caches[b], seed_grad, gs);
            }
            adamw_step(state, gs.params, gs.grads);
        }
        result.epoch_loss.push_back(epoch_loss_sum / epoch_weight_sum);
    }
    return result;
}

// softmax over logits, for binary classification probability readout
inline std::vector<double> softmax_probs(const std::vector<float>& logits) {
    double max_logit = logits[0];
    for (float z : logits) max_logit = std::max(max_logit, static_cast<double>(z));
    std::vector<double> p(logits.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - max_logit);
        denom += p[i];
    }
    for (double& x : p) x /= denom;
    return p;
}

// ---------------------------------------------------------------------------
// Checkpoints: binary container with config, base tensors, adapters, and
// the training seed.  Reloading reproduces identical logits.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_i32(std::ostream& os, std::int32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_f32(std::ostream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline std::int32_t read_i32(std::istream& is) {
    std::int32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline float read_f32(std::istream& is) {
    float v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

inline void write_mat(std::ostream& os, const Mat32& m) {
    write_i32(os, m.rows);
    write_i32(os, m.cols);
    os.write(reinterpret_cast<const char*>(m.v.data()),
             static_cast<std::streamsize>(m.v.size() * sizeof(float)));
}

inline Mat32 read_mat(std::istream& is) {
    const int rows = read_i32(is);
    const int cols = read_i32(is);
    if (rows < 0 || cols < 0) throw std::runtime_error("checkpoint: bad tensor shape");
    Mat32 m(rows, cols);
    is.read(reinterpret_cast<char*>(m.v.data()),
            static_cast<std::streamsize>(m.v.size() * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
    return m;
}

}  // namespace detail

struct Checkpoint {
    BaseWeights base;
    std::vector<LoraAdapter> adapters;
    std::uint64_t seed = 0;
};

inline void save_checkpoint(const Checkpoint& ck, std::ostream& os) {
    os.write("TBCK", 4);
    detail::write_u32(os, 1);
    const TransformerConfig& c = ck.base.cfg;
    detail::write_i32(os, c.d_model);
    detail::write_i32(os, c.n_layers);
    detail::write_i32(os, c.n_heads);
    detail::write_i32(os, c.n_kv_heads);
    detail::write_i32(os, c.swa_window);
    detail::write_i32(os, c.max_len);
    detail::write_i32(os, c.vocab_size);
    detail::write_i32(os, c.n_classes);
    detail::write_f32(os, c.rope_base);
    detail::write_u64(os, ck.seed);
    detail::write_mat(os, ck.base.embedding);
    for (const auto& lw : ck.base.layers) {
        detail::write_mat(os, lw.wq);
        detail::write_mat(os, lw.wk);
        detail::write_mat(os, lw.wv);
        detail::write_mat(os, lw.wo);
        detail::write_mat(os, lw.w_in);
        detail::write_mat(os, lw.w_out);
    }
    detail::write_mat(os, ck.base.head);
    detail::write_u32(os, static_cast<std::uint32_t>(ck.adapters.size()));
    for (const auto& ad : ck.adapters) {
        detail::write_i32(os, ad.layer);
        detail::write_u32(os, static_cast<std::uint32_t>(ad.target.size()));
        os.write(ad.target.data(), static_cast<std::streamsize>(ad.target.size()));
        detail::write_i32(os, ad.rank);
        detail::write_f32(os, ad.alpha);
        detail::write_mat(os, ad.a);
        detail::write_mat(os, ad.b);
    }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    save_checkpoint(ck, out);
}

inline Checkpoint load_checkpoint(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TBCK", 4) != 0) throw std::runtime_error("checkpoint: bad magic");
    const std::uint32_t version = detail::read_u32(is);
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
    Checkpoint ck;
    TransformerConfig c;
    c.d_model = detail::read_i32(is);
    c.n_layers = detail::read_i32(is);
    c.n_heads = detail::read_i32(is);
    c.n_kv_heads = detail::read_i32(is);
    c.swa_window = detail::read_i32(is);
    c.max_len = detail::read_i32(is);
    c.vocab_size = detail::read_i32(is);
    c.n_classes = detail::read_i32(is);
    c.rope_base = detail::read_f32(is);
    c.validate();
    ck.seed = detail::read_u64(is);
    ck.base.cfg = c;
    ck.base.embedding = detail::read_mat(is);
    ck.base.layers.resize(static_cast<std::size_t>(c.n_layers));
    for (auto& lw : ck.base.layers) {
        lw.wq = detail::read_mat(is);
        lw.wk = detail::read_mat(is);
        lw.wv = detail::read_mat(is);
        lw.wo = detail::read_mat(is);
        lw.w_in = detail::read_mat(is);
        lw.w_out = detail::read_mat(is);
    }
    ck.base.head = detail::read_mat(is);
    const std::uint32_t n_adapters = detail::read_u32(is);
    for (std::uint32_t i = 0; i < n_adapters; ++i) {
        LoraAdapter ad;
        ad.layer = detail::read_i32(is);
        const std::uint32_t tlen = detail::read_u32(is);
        ad.target.resize(tlen);
        is.read(ad.target.data(), tlen);
        ad.rank = detail::read_i32(is);
        ad.alpha = detail::read_f32(is);
        ad.a = detail::read_mat(is);
        ad.b = detail::read_mat(is);
        ck.adapters.push_back(std::move(ad));
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    return load_checkpoint(in);
}

}  // namespace tb
