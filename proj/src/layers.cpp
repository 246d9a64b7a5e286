#include "eegdec/layers.hpp"

#include <cmath>
#include <string>

namespace eegdec {

namespace {

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
Tensor init_uniform(Shape shape, int64_t fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.values_mut()) v = rng.uniform(-bound, bound);
    return t;
}

} // namespace

// ---- conv1d -----------------------------------------------------------------

Conv1dLayer Conv1dLayer::create(int64_t in_ch, int64_t out_ch, int64_t kernel, Rng& rng) {
    if (kernel < 1 || kernel % 2 == 0) {
        throw ConfigError("conv kernel must be odd and positive, got " + std::to_string(kernel));
    }
    Conv1dLayer layer;
    layer.weight = init_uniform({out_ch, in_ch, kernel}, in_ch * kernel, rng);
    layer.bias = init_uniform({out_ch}, in_ch * kernel, rng);
    return layer;
}

namespace {

// Per-tap weight slice transposed to [in_ch, out_ch] so each tap becomes a
// plain matrix product over contiguous rows.
std::vector<double> tap_matrix(const Conv1dLayer& layer, int64_t k) {
    const int64_t ic_n = layer.in_channels(), oc_n = layer.out_channels(), kn = layer.kernel();
    const auto w = layer.weight.values();
    std::vector<double> wk(static_cast<size_t>(ic_n * oc_n));
    for (int64_t oc = 0; oc < oc_n; ++oc) {
        for (int64_t ic = 0; ic < ic_n; ++ic) {
            wk[ic * oc_n + oc] = w[(oc * ic_n + ic) * kn + k];
        }
    }
    return wk;
}

void conv_tap_bounds(int64_t time, int64_t shift, int64_t& t0, int64_t& t1) {
    // rows t with 0 <= t + shift < time
    t0 = std::max<int64_t>(0, -shift);
    t1 = std::min<int64_t>(time, time - shift);
}

} // namespace

Tensor conv1d_forward(Tape* tape, const Conv1dLayer& layer, const Tensor& x) {
    if (x.rank() != 3) {
        throw DimError("conv1d expects [batch, time, channels], got " + shape_str(x.shape()));
    }
    const int64_t batch = x.shape()[0], time = x.shape()[1], in_ch = x.shape()[2];
    if (in_ch != layer.in_channels()) {
        throw DimError("conv1d channel mismatch: input " + shape_str(x.shape()) + " vs weight " +
                       shape_str(layer.weight.shape()));
    }
    const int64_t out_ch = layer.out_channels(), kn = layer.kernel(), half = kn / 2;

    Tensor y = Tensor::zeros({batch, time, out_ch});
    {
        auto yv = y.values_mut();
        const auto bv = layer.bias.values();
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t t = 0; t < time; ++t) {
                double* row = yv.data() + (b * time + t) * out_ch;
                for (int64_t oc = 0; oc < out_ch; ++oc) row[oc] = bv[oc];
            }
        }
        const auto xv = x.values();
        for (int64_t k = 0; k < kn; ++k) {
            const auto wk = tap_matrix(layer, k);
            const int64_t shift = k - half;
            int64_t t0, t1;
            conv_tap_bounds(time, shift, t0, t1);
            for (int64_t b = 0; b < batch; ++b) {
                const double* xb = xv.data() + b * time * in_ch;
                double* yb = yv.data() + b * time * out_ch;
                for (int64_t t = t0; t < t1; ++t) {
                    const double* xr = xb + (t + shift) * in_ch;
                    double* yr = yb + t * out_ch;
                    for (int64_t ic = 0; ic < in_ch; ++ic) {
                        const double xvl = xr[ic];
                        const double* wr = wk.data() + ic * out_ch;
                        for (int64_t oc = 0; oc < out_ch; ++oc) yr[oc] += xvl * wr[oc];
                    }
                }
            }
        }
    }

    const bool want_grad =
        tape && (x.requires_grad() || layer.weight.requires_grad() || layer.bias.requires_grad());
    if (want_grad) {
        y.set_requires_grad(true);
        Tensor x2 = x, w2 = layer.weight, b2 = layer.bias;
        Conv1dLayer cap = layer;
        tape->record(y, [x2, w2, b2, cap, y, batch, time, in_ch, out_ch, kn, half]() mutable {
            const auto g = y.grad_view();
            if (b2.requires_grad()) {
                auto gb = b2.grad();
                for (int64_t b = 0; b < batch; ++b) {
                    for (int64_t t = 0; t < time; ++t) {
                        const double* gr = g.data() + (b * time + t) * out_ch;
                        for (int64_t oc = 0; oc < out_ch; ++oc) gb[oc] += gr[oc];
                    }
                }
            }
            const auto xv = x2.values();
            const bool gx = x2.requires_grad(), gw = w2.requires_grad();
            for (int64_t k = 0; k < kn; ++k) {
                const int64_t shift = k - half;
                int64_t t0, t1;
                conv_tap_bounds(time, shift, t0, t1);
                if (gx) {
                    const auto wk = tap_matrix(cap, k);
                    auto gxs = x2.grad();
                    for (int64_t b = 0; b < batch; ++b) {
                        const double* gb = g.data() + b * time * out_ch;
                        double* xg = gxs.data() + b * time * in_ch;
                        for (int64_t t = t0; t < t1; ++t) {
                            const double* gr = gb + t * out_ch;
                            double* xr = xg + (t + shift) * in_ch;
                            for (int64_t ic = 0; ic < in_ch; ++ic) {
                                const double* wr = wk.data() + ic * out_ch;
                                double acc = 0.0;
                                for (int64_t oc = 0; oc < out_ch; ++oc) acc += gr[oc] * wr[oc];
                                xr[ic] += acc;
                            }
                        }
                    }
                }
                if (gw) {
                    std::vector<double> dwk(static_cast<size_t>(in_ch * out_ch), 0.0);
                    for (int64_t b = 0; b < batch; ++b) {
                        const double* gb = g.data() + b * time * out_ch;
                        const double* xb = xv.data() + b * time * in_ch;
                        for (int64_t t = t0; t < t1; ++t) {
                            const double* gr = gb + t * out_ch;
                            const double* xr = xb + (t + shift) * in_ch;
                            for (int64_t ic = 0; ic < in_ch; ++ic) {
                                const double xvl = xr[ic];
                                double* dw = dwk.data() + ic * out_ch;
                                for (int64_t oc = 0; oc < out_ch; ++oc) dw[oc] += xvl * gr[oc];
                            }
                        }
                    }
                    auto gwv = w2.grad();
                    for (int64_t oc = 0; oc < out_ch; ++oc) {
                        for (int64_t ic = 0; ic < in_ch; ++ic) {
                            gwv[(oc * in_ch + ic) * kn + k] += dwk[ic * out_ch + oc];
                        }
                    }
                }
            }
        });
    }
    return y;
}

// ---- layer norm ----------------------------------------------------------------

LayerNormLayer LayerNormLayer::create(int64_t dim, double epsilon) {
    if (epsilon <= 0.0) throw ConfigError("layer norm epsilon must be > 0");
    LayerNormLayer layer;
    layer.gain = Tensor::full({dim}, 1.0);
    layer.gain.set_requires_grad(true);
    layer.shift = Tensor::zeros({dim}, true);
    layer.epsilon = epsilon;
    return layer;
}

Tensor layernorm_forward(Tape* tape, const LayerNormLayer& layer, const Tensor& x) {
    if (x.rank() < 1 || x.shape().back() != layer.dim()) {
        throw DimError("layernorm expects trailing extent " + std::to_string(layer.dim()) +
                       ", got " + shape_str(x.shape()));
    }
    Tensor mu = mean(tape, x, {-1}, true);
    Tensor centered = sub(tape, x, mu);
    Tensor var = mean(tape, mul(tape, centered, centered), {-1}, true);
    Tensor denom = sqrt(tape, scalar_add(tape, var, layer.epsilon));
    Tensor normed = div(tape, centered, denom);
    return add(tape, mul(tape, normed, layer.gain), layer.shift);
}

// ---- linear ---------------------------------------------------------------------

LinearLayer LinearLayer::create(int64_t in_dim, int64_t out_dim, Rng& rng) {
    LinearLayer layer;
    layer.weight = init_uniform({in_dim, out_dim}, in_dim, rng);
    layer.bias = init_uniform({out_dim}, in_dim, rng);
    return layer;
}

Tensor linear_forward(Tape* tape, const LinearLayer& layer, const Tensor& x) {
    if (x.shape().back() != layer.weight.shape()[0]) {
        throw DimError("linear expects trailing extent " +
                       std::to_string(layer.weight.shape()[0]) + ", got " +
                       shape_str(x.shape()));
    }
    return add(tape, matmul(tape, x, layer.weight), layer.bias);
}

// ---- multi-head attention ----------------------------------------------------------

MultiHeadAttention MultiHeadAttention::create(int64_t dim, int64_t n_heads, Rng& rng) {
    if (n_heads < 1 || dim % n_heads != 0) {
        throw ConfigError("attention dim " + std::to_string(dim) +
                          " must be divisible by n_heads " + std::to_string(n_heads));
    }
    MultiHeadAttention layer;
    layer.query = LinearLayer::create(dim, dim, rng);
    layer.key = LinearLayer::create(dim, dim, rng);
    layer.value = LinearLayer::create(dim, dim, rng);
    layer.output = LinearLayer::create(dim, dim, rng);
    layer.n_heads = n_heads;
    return layer;
}

Tensor mha_forward(Tape* tape, const MultiHeadAttention& layer, const Tensor& x,
                   Tensor* attn_out) {
    if (x.rank() != 3 || x.shape()[2] != layer.dim()) {
        throw DimError("attention expects [batch, time, " + std::to_string(layer.dim()) +
                       "], got " + shape_str(x.shape()));
    }
    const int64_t batch = x.shape()[0], time = x.shape()[1], dim = layer.dim();
    const int64_t heads = layer.n_heads, hd = dim / heads;

    auto split_heads = [&](const Tensor& t) {
        // [B, T, D] -> [B, H, T, hd]
        return permute(tape, reshape(tape, t, {batch, time, heads, hd}), {0, 2, 1, 3});
    };

    Tensor q = split_heads(linear_forward(tape, layer.query, x));
    Tensor k = split_heads(linear_forward(tape, layer.key, x));
    Tensor v = split_heads(linear_forward(tape, layer.value, x));

    Tensor kt = permute(tape, k, {0, 1, 3, 2}); // [B, H, hd, T]
    Tensor scores = scalar_mul(tape, matmul(tape, q, kt), 1.0 / std::sqrt(static_cast<double>(hd)));
    Tensor attn = softmax(tape, scores, -1); // [B, H, T, T]
    if (attn_out) *attn_out = attn;

    Tensor ctx = matmul(tape, attn, v); // [B, H, T, hd]
    Tensor merged = reshape(tape, permute(tape, ctx, {0, 2, 1, 3}), {batch, time, dim});
    return linear_forward(tape, layer.output, merged);
}

// ---- embedding -------------------------------------------------------------------

EmbeddingTable EmbeddingTable::create(int64_t n_subjects, int64_t dim, Rng& rng) {
    if (n_subjects < 1) throw ConfigError("embedding table needs at least one row");
    EmbeddingTable table;
    table.table = Tensor::zeros({n_subjects, dim}, true);
    for (auto& v : table.table.values_mut()) v = rng.normal(0.0, 0.02);
    return table;
}

namespace {

void check_subject(const EmbeddingTable& table, int64_t id) {
    if (id < 0 || id >= table.rows()) {
        throw SubjectError("unknown subject id " + std::to_string(id) + " (table has " +
                           std::to_string(table.rows()) + " rows)");
    }
}

} // namespace

Tensor embedding_lookup(Tape* tape, const EmbeddingTable& table, int64_t subject_id) {
    check_subject(table, subject_id);
    const int64_t dim = table.dim();
    const auto tv = table.table.values();
    std::vector<double> row(tv.begin() + subject_id * dim, tv.begin() + (subject_id + 1) * dim);
    Tensor out = Tensor::from_values({dim}, std::move(row));
    if (tape && table.table.requires_grad()) {
        out.set_requires_grad(true);
        Tensor t2 = table.table;
        tape->record(out, [t2, out, subject_id, dim]() mutable {
            auto g = t2.grad();
            const auto og = out.grad_view();
            for (int64_t i = 0; i < dim; ++i) g[subject_id * dim + i] += og[i];
        });
    }
    return out;
}

Tensor embedding_lookup_batch(Tape* tape, const EmbeddingTable& table,
                              const std::vector<int>& subject_ids) {
    const int64_t batch = static_cast<int64_t>(subject_ids.size());
    if (batch < 1) throw ContractError("embedding_lookup_batch: empty id list");
    const int64_t dim = table.dim();
    const auto tv = table.table.values();
    Tensor out = Tensor::zeros({batch, 1, dim});
    auto ov = out.values_mut();
    for (int64_t b = 0; b < batch; ++b) {
        check_subject(table, subject_ids[b]);
        const double* src = tv.data() + subject_ids[b] * dim;
        std::copy(src, src + dim, ov.data() + b * dim);
    }
    if (tape && table.table.requires_grad()) {
        out.set_requires_grad(true);
        Tensor t2 = table.table;
        std::vector<int> ids = subject_ids;
        tape->record(out, [t2, out, ids, dim]() mutable {
            auto g = t2.grad();
            const auto og = out.grad_view();
            for (size_t b = 0; b < ids.size(); ++b) {
                const double* src = og.data() + b * dim;
                double* dst = g.data() + ids[b] * static_cast<size_t>(dim);
                for (int64_t i = 0; i < dim; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

// ---- dropout ---------------------------------------------------------------------

Tensor dropout_forward(Tape* tape, const Tensor& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask = Tensor::zeros(x.shape());
    for (auto& v : mask.values_mut()) v = rng.uniform() < rate ? 0.0 : keep_scale;
    return mul(tape, x, mask);
}

} // namespace eegdec
