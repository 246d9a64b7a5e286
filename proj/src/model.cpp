#include "eegdec/model.hpp"

#include <cmath>

namespace eegdec {

void ModelConfig::validate() const {
    if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
    if (n_heads < 1 || hidden_dim % n_heads != 0) {
        throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                          " must be divisible by n_heads " + std::to_string(n_heads));
    }
    if (conv_kernel_pre < 1 || conv_kernel_pre % 2 == 0) {
        throw ConfigError("conv_kernel_pre must be odd");
    }
    if (ffn_kernel < 1 || ffn_kernel % 2 == 0) throw ConfigError("ffn_kernel must be odd");
    if (ffn_expansion < 1) throw ConfigError("ffn_expansion must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("dropout_rate must be in [0, 1)");
    }
    if (n_subjects < 0) throw ConfigError("n_subjects must be >= 0");
    if (use_conditioner && n_subjects < 1) {
        throw ConfigError("use_conditioner requires n_subjects >= 1");
    }
    if (sample_rate_hz < 1 || segment_seconds < 1) {
        throw ConfigError("sample_rate_hz and segment_seconds must be positive");
    }
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
    j = nlohmann::json{{"in_channels", cfg.in_channels},
                       {"hidden_dim", cfg.hidden_dim},
                       {"n_blocks", cfg.n_blocks},
                       {"n_heads", cfg.n_heads},
                       {"conv_kernel_pre", cfg.conv_kernel_pre},
                       {"ffn_kernel", cfg.ffn_kernel},
                       {"ffn_expansion", cfg.ffn_expansion},
                       {"dropout_rate", cfg.dropout_rate},
                       {"n_subjects", cfg.n_subjects},
                       {"use_conditioner", cfg.use_conditioner},
                       {"use_pre_ln", cfg.use_pre_ln},
                       {"use_positional_encoding", cfg.use_positional_encoding},
                       {"sample_rate_hz", cfg.sample_rate_hz},
                       {"segment_seconds", cfg.segment_seconds}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
    ModelConfig defaults;
    cfg.in_channels = j.value("in_channels", defaults.in_channels);
    cfg.hidden_dim = j.value("hidden_dim", defaults.hidden_dim);
    cfg.n_blocks = j.value("n_blocks", defaults.n_blocks);
    cfg.n_heads = j.value("n_heads", defaults.n_heads);
    cfg.conv_kernel_pre = j.value("conv_kernel_pre", defaults.conv_kernel_pre);
    cfg.ffn_kernel = j.value("ffn_kernel", defaults.ffn_kernel);
    cfg.ffn_expansion = j.value("ffn_expansion", defaults.ffn_expansion);
    cfg.dropout_rate = j.value("dropout_rate", defaults.dropout_rate);
    cfg.n_subjects = j.value("n_subjects", defaults.n_subjects);
    cfg.use_conditioner = j.value("use_conditioner", defaults.use_conditioner);
    cfg.use_pre_ln = j.value("use_pre_ln", defaults.use_pre_ln);
    cfg.use_positional_encoding =
        j.value("use_positional_encoding", defaults.use_positional_encoding);
    cfg.sample_rate_hz = j.value("sample_rate_hz", defaults.sample_rate_hz);
    cfg.segment_seconds = j.value("segment_seconds", defaults.segment_seconds);
}

PreLNFFTBlock PreLNFFTBlock::create(const ModelConfig& cfg, Rng& rng) {
    PreLNFFTBlock block;
    const int64_t dim = cfg.hidden_dim;
    const int64_t ffn_dim = dim * cfg.ffn_expansion;
    block.ln1 = LayerNormLayer::create(dim);
    block.ln2 = LayerNormLayer::create(dim);
    Rng attn_rng = rng.substream("attn");
    block.attn = MultiHeadAttention::create(dim, cfg.n_heads, attn_rng);
    Rng conv_rng = rng.substream("ffn");
    block.conv_a = Conv1dLayer::create(dim, ffn_dim, cfg.ffn_kernel, conv_rng);
    block.conv_b = Conv1dLayer::create(ffn_dim, dim, cfg.ffn_kernel, conv_rng);
    return block;
}

Tensor block_forward(Tape* tape, const PreLNFFTBlock& block, const Tensor& h, bool use_pre_ln,
                     double dropout_rate, bool training, Rng* dropout_rng) {
    Rng fallback(0);
    Rng& rng = dropout_rng ? *dropout_rng : fallback;
    const double rate = training ? dropout_rate : 0.0;

    auto ffn = [&](const Tensor& t) {
        return conv1d_forward(tape, block.conv_b, relu(tape, conv1d_forward(tape, block.conv_a, t)));
    };

    if (use_pre_ln) {
        Tensor a = add(tape, h,
                       dropout_forward(tape, mha_forward(tape, block.attn, layernorm_forward(tape, block.ln1, h)),
                                       rate, training, rng));
        return add(tape, a, dropout_forward(tape, ffn(layernorm_forward(tape, block.ln2, a)), rate, training, rng));
    }
    Tensor a = layernorm_forward(
        tape, block.ln1,
        add(tape, h, dropout_forward(tape, mha_forward(tape, block.attn, h), rate, training, rng)));
    return layernorm_forward(tape, block.ln2,
                             add(tape, a, dropout_forward(tape, ffn(a), rate, training, rng)));
}

Tensor positional_encoding(int64_t time, int64_t dim) {
    Tensor pe = Tensor::zeros({time, dim});
    auto v = pe.values_mut();
    for (int64_t p = 0; p < time; ++p) {
        for (int64_t i = 0; i < dim; i += 2) {
            const double angle =
                static_cast<double>(p) /
                std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
            v[p * dim + i] = std::sin(angle);
            if (i + 1 < dim) v[p * dim + i + 1] = std::cos(angle);
        }
    }
    return pe;
}

DecoderModel::DecoderModel(const ModelConfig& cfg, Rng init_rng) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = init_rng.substream("init");
    Rng pre_rng = rng.substream("pre_conv");
    pre_conv_ = Conv1dLayer::create(cfg_.in_channels, cfg_.hidden_dim, cfg_.conv_kernel_pre, pre_rng);
    if (cfg_.use_conditioner) {
        Rng emb_rng = rng.substream("conditioner");
        conditioner_ = EmbeddingTable::create(cfg_.n_subjects, cfg_.hidden_dim, emb_rng);
    }
    blocks_.reserve(static_cast<size_t>(cfg_.n_blocks));
    for (int64_t i = 0; i < cfg_.n_blocks; ++i) {
        Rng block_rng = rng.substream("block" + std::to_string(i));
        blocks_.push_back(PreLNFFTBlock::create(cfg_, block_rng));
    }
    final_norm_ = LayerNormLayer::create(cfg_.hidden_dim);
    Rng head_rng = rng.substream("head");
    head_ = LinearLayer::create(cfg_.hidden_dim, 1, head_rng);
}

Tensor DecoderModel::forward(Tape* tape, const Tensor& eeg, const std::vector<int>* subject_ids,
                             bool training, Rng* dropout_rng) const {
    if (eeg.rank() != 3) {
        throw DimError("model expects EEG [batch, time, channels], got " + shape_str(eeg.shape()));
    }
    const int64_t batch = eeg.shape()[0], time = eeg.shape()[1];
    if (eeg.shape()[2] != cfg_.in_channels) {
        throw DimError("EEG channel count " + std::to_string(eeg.shape()[2]) +
                       " does not match configured " + std::to_string(cfg_.in_channels));
    }
    if (cfg_.use_conditioner) {
        if (!subject_ids || static_cast<int64_t>(subject_ids->size()) != batch) {
            throw SubjectError("conditioner enabled: one subject id per batch item required");
        }
    }
    if (training && cfg_.dropout_rate > 0.0 && !dropout_rng) {
        throw ContractError("training forward with dropout needs a dropout rng");
    }

    Tensor h = conv1d_forward(tape, pre_conv_, eeg);
    if (cfg_.use_conditioner) {
        Tensor emb = embedding_lookup_batch(tape, *conditioner_, *subject_ids); // [B, 1, D]
        h = add(tape, h, emb);
    }
    if (cfg_.use_positional_encoding) {
        h = add(tape, h, positional_encoding(time, cfg_.hidden_dim));
    }
    for (const auto& block : blocks_) {
        h = block_forward(tape, block, h, cfg_.use_pre_ln, cfg_.dropout_rate, training, dropout_rng);
    }
    if (cfg_.use_pre_ln) {
        h = layernorm_forward(tape, final_norm_, h);
    }
    Tensor y = linear_forward(tape, head_, h); // [B, T, 1]
    return reshape(tape, y, {batch, time});
}

std::vector<NamedParam> DecoderModel::parameters() const {
    std::vector<NamedParam> params;
    params.push_back({"pre_conv.weight", pre_conv_.weight});
    params.push_back({"pre_conv.bias", pre_conv_.bias});
    if (conditioner_) params.push_back({"conditioner.table", conditioner_->table});
    for (size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "blocks." + std::to_string(i) + ".";
        const auto& b = blocks_[i];
        params.push_back({p + "ln1.gain", b.ln1.gain});
        params.push_back({p + "ln1.shift", b.ln1.shift});
        params.push_back({p + "attn.query.weight", b.attn.query.weight});
        params.push_back({p + "attn.query.bias", b.attn.query.bias});
        params.push_back({p + "attn.key.weight", b.attn.key.weight});
        params.push_back({p + "attn.key.bias", b.attn.key.bias});
        params.push_back({p + "attn.value.weight", b.attn.value.weight});
        params.push_back({p + "attn.value.bias", b.attn.value.bias});
        params.push_back({p + "attn.output.weight", b.attn.output.weight});
        params.push_back({p + "attn.output.bias", b.attn.output.bias});
        params.push_back({p + "ln2.gain", b.ln2.gain});
        params.push_back({p + "ln2.shift", b.ln2.shift});
        params.push_back({p + "conv_a.weight", b.conv_a.weight});
        params.push_back({p + "conv_a.bias", b.conv_a.bias});
        params.push_back({p + "conv_b.weight", b.conv_b.weight});
        params.push_back({p + "conv_b.bias", b.conv_b.bias});
    }
    params.push_back({"final_norm.gain", final_norm_.gain});
    params.push_back({"final_norm.shift", final_norm_.shift});
    params.push_back({"head.weight", head_.weight});
    params.push_back({"head.bias", head_.bias});
    return params;
}

int64_t DecoderModel::count_parameters() const {
    int64_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

void DecoderModel::ensure_zero_grads() const {
    for (auto& p : parameters()) {
        Tensor t = p.tensor;
        t.grad(); // allocate
        t.zero_grad();
    }
}

} // namespace eegdec
