#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegdec/layers.hpp"
#include "eegdec/rng.hpp"
#include "eegdec/tensor.hpp"

namespace eegdec {

struct ModelConfig {
    int64_t in_channels = 64;
    int64_t hidden_dim = 128;
    int64_t n_blocks = 8;
    int64_t n_heads = 2;
    int64_t conv_kernel_pre = 3;
    int64_t ffn_kernel = 3;
    int64_t ffn_expansion = 4;
    double dropout_rate = 0.1;
    int64_t n_subjects = 0;
    bool use_conditioner = false;
    bool use_pre_ln = true;
    bool use_positional_encoding = true;
    int64_t sample_rate_hz = 64;
    int64_t segment_seconds = 5;

    int64_t segment_samples() const { return sample_rate_hz * segment_seconds; }
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

// Attention + conv feed-forward sub-layers, each behind a residual.
// Normalization sits at the branch entries (pre-LN) or after the residual
// sums (post-LN ablation).
struct PreLNFFTBlock {
    LayerNormLayer ln1, ln2;
    MultiHeadAttention attn;
    Conv1dLayer conv_a, conv_b;

    static PreLNFFTBlock create(const ModelConfig& cfg, Rng& rng);
};

Tensor block_forward(Tape* tape, const PreLNFFTBlock& block, const Tensor& h, bool use_pre_ln,
                     double dropout_rate, bool training, Rng* dropout_rng);

// Fixed sinusoidal encoding, [time, dim].
Tensor positional_encoding(int64_t time, int64_t dim);

struct NamedParam {
    std::string path;
    Tensor tensor;
};

// Pre-conv frontend, optional subject conditioner, FFT block stack and a
// linear envelope head. Input [batch, time, in_channels], output
// [batch, time].
class DecoderModel {
public:
    DecoderModel(const ModelConfig& cfg, Rng init_rng);

    Tensor forward(Tape* tape, const Tensor& eeg, const std::vector<int>* subject_ids,
                   bool training = false, Rng* dropout_rng = nullptr) const;

    // Parameters in a stable path order, e.g. "blocks.3.attn.query.weight".
    std::vector<NamedParam> parameters() const;
    int64_t count_parameters() const;
    void ensure_zero_grads() const;

    const ModelConfig& config() const { return cfg_; }

    const Conv1dLayer& pre_conv() const { return pre_conv_; }
    const std::optional<EmbeddingTable>& conditioner() const { return conditioner_; }
    std::optional<EmbeddingTable>& conditioner() { return conditioner_; }
    const std::vector<PreLNFFTBlock>& blocks() const { return blocks_; }
    std::vector<PreLNFFTBlock>& blocks() { return blocks_; }
    const LayerNormLayer& final_norm() const { return final_norm_; }
    const LinearLayer& head() const { return head_; }

private:
    ModelConfig cfg_;
    Conv1dLayer pre_conv_;
    std::optional<EmbeddingTable> conditioner_;
    std::vector<PreLNFFTBlock> blocks_;
    LayerNormLayer final_norm_;
    LinearLayer head_;
};

} // namespace eegdec
