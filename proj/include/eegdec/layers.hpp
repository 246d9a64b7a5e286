#pragma once

#include <vector>

#include "eegdec/rng.hpp"
#include "eegdec/tensor.hpp"

namespace eegdec {

// 1-D convolution over [batch, time, channels], "same" zero padding.
// Cross-correlation (no kernel flip), odd kernel so the length is preserved.
struct Conv1dLayer {
    Tensor weight; // [out_ch, in_ch, kernel]
    Tensor bias;   // [out_ch]

    static Conv1dLayer create(int64_t in_ch, int64_t out_ch, int64_t kernel, Rng& rng);

    int64_t in_channels() const { return weight.shape()[1]; }
    int64_t out_channels() const { return weight.shape()[0]; }
    int64_t kernel() const { return weight.shape()[2]; }
};

Tensor conv1d_forward(Tape* tape, const Conv1dLayer& layer, const Tensor& x);

// Per-position normalization over the last axis, biased variance.
struct LayerNormLayer {
    Tensor gain;  // [dim]
    Tensor shift; // [dim]
    double epsilon = 1e-5;

    static LayerNormLayer create(int64_t dim, double epsilon = 1e-5);

    int64_t dim() const { return gain.shape()[0]; }
};

Tensor layernorm_forward(Tape* tape, const LayerNormLayer& layer, const Tensor& x);

struct LinearLayer {
    Tensor weight; // [in, out]
    Tensor bias;   // [out]

    static LinearLayer create(int64_t in_dim, int64_t out_dim, Rng& rng);
};

Tensor linear_forward(Tape* tape, const LinearLayer& layer, const Tensor& x);

// Encoder-style full self-attention, scale 1/sqrt(dim/n_heads).
struct MultiHeadAttention {
    LinearLayer query, key, value, output;
    int64_t n_heads = 1;

    static MultiHeadAttention create(int64_t dim, int64_t n_heads, Rng& rng);

    int64_t dim() const { return query.weight.shape()[0]; }
};

// `attn_out`, when given, receives the [batch, heads, time, time] weights.
Tensor mha_forward(Tape* tape, const MultiHeadAttention& layer, const Tensor& x,
                   Tensor* attn_out = nullptr);

struct EmbeddingTable {
    Tensor table; // [n_subjects, dim]

    static EmbeddingTable create(int64_t n_subjects, int64_t dim, Rng& rng);

    int64_t rows() const { return table.shape()[0]; }
    int64_t dim() const { return table.shape()[1]; }
};

Tensor embedding_lookup(Tape* tape, const EmbeddingTable& table, int64_t subject_id);

// Batched lookup -> [batch, 1, dim], ready to broadcast over time.
Tensor embedding_lookup_batch(Tape* tape, const EmbeddingTable& table,
                              const std::vector<int>& subject_ids);

// Inverted dropout: scales kept activations by 1/(1-rate) in training,
// identity at inference.
Tensor dropout_forward(Tape* tape, const Tensor& x, double rate, bool training, Rng& rng);

} // namespace eegdec
