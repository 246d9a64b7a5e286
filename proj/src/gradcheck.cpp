#include "eegdec/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "eegdec/layers.hpp"
#include "eegdec/model.hpp"
#include "eegdec/objective.hpp"
#include "eegdec/rng.hpp"

namespace eegdec {

double grad_rel_err(double fd, double ad, double floor) {
    const double denom = std::max({floor, std::abs(fd), std::abs(ad)});
    return std::abs(fd - ad) / denom;
}

double finite_diff_max_rel_err(const std::function<double()>& loss_fn,
                               const std::vector<Tensor>& leaves, double h) {
    double worst = 0.0;
    for (Tensor leaf : leaves) {
        const auto analytic = leaf.grad_view();
        if (analytic.empty()) {
            throw ContractError("finite_diff_max_rel_err: leaf has no accumulated gradient");
        }
        auto vals = leaf.values_mut();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + h;
            const double up = loss_fn();
            vals[i] = orig - h;
            const double down = loss_fn();
            vals[i] = orig;
            const double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, grad_rel_err(fd, analytic[i]));
        }
    }
    return worst;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.values_mut()) v = rng.uniform(lo, hi);
    return t;
}

// Random positive cotangent so the scalar probe weights every output.
Tensor random_coeffs(const Shape& shape, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.values_mut()) v = rng.uniform(0.5, 1.5);
    return t;
}

double probe_loss(Tape* tape, const Tensor& y, const Tensor& coeffs) {
    return sum(tape, mul(tape, y, coeffs)).scalar_value();
}

// Runs one taped forward + backward, then the finite-difference sweep.
GradCheckRow check(const std::string& name, const std::vector<Tensor>& leaves,
                   const std::function<Tensor(Tape*)>& forward, const Tensor& coeffs) {
    Tape tape;
    Tensor y = forward(&tape);
    Tensor loss = sum(&tape, mul(&tape, y, coeffs));
    for (Tensor leaf : leaves) {
        leaf.grad();
        leaf.zero_grad();
    }
    backward(loss, tape);
    const double err = finite_diff_max_rel_err(
        [&]() { return probe_loss(nullptr, forward(nullptr), coeffs); }, leaves);
    return {name, err, err < kGradCheckTol};
}

GradCheckRow check_model(uint64_t seed) {
    ModelConfig cfg;
    cfg.in_channels = 4;
    cfg.hidden_dim = 16;
    cfg.n_blocks = 2;
    cfg.n_heads = 2;
    cfg.ffn_expansion = 2;
    cfg.dropout_rate = 0.0;
    cfg.n_subjects = 3;
    cfg.use_conditioner = true;
    DecoderModel model(cfg, Rng(seed));

    Rng rng = Rng(seed).substream("model_check");
    const int64_t batch = 2, time = 8;
    Tensor eeg = random_tensor({batch, time, cfg.in_channels}, rng);
    eeg.set_requires_grad(false);
    Tensor target = random_tensor({batch, time}, rng);
    target.set_requires_grad(false);
    const std::vector<int> ids{0, 2};
    LossConfig loss_cfg;

    auto loss_fn = [&](Tape* tape) {
        Tensor pred = model.forward(tape, eeg, &ids, false, nullptr);
        return total_loss(tape, pred, target, loss_cfg);
    };

    Tape tape;
    Tensor loss = loss_fn(&tape);
    model.ensure_zero_grads();
    backward(loss, tape);

    std::vector<Tensor> leaves;
    for (const auto& p : model.parameters()) leaves.push_back(p.tensor);
    const double err = finite_diff_max_rel_err(
        [&]() { return loss_fn(nullptr).scalar_value(); }, leaves);
    return {"model.2block_total_loss", err, err < kGradCheckTol};
}

} // namespace

std::vector<GradCheckRow> run_gradient_checks(uint64_t seed) {
    std::vector<GradCheckRow> rows;
    Rng root(seed);

    {
        Rng rng = root.substream("matmul");
        Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
        Tensor c = random_coeffs({3, 5}, rng);
        rows.push_back(check("op.matmul", {a, b},
                             [&](Tape* t) { return matmul(t, a, b); }, c));
    }
    {
        Rng rng = root.substream("matmul_batched");
        Tensor a = random_tensor({2, 3, 2, 4}, rng), b = random_tensor({3, 4, 3}, rng);
        Tensor c = random_coeffs({2, 3, 2, 3}, rng);
        rows.push_back(check("op.matmul_batched", {a, b},
                             [&](Tape* t) { return matmul(t, a, b); }, c));
    }
    {
        Rng rng = root.substream("add_broadcast");
        Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({4}, rng);
        Tensor c = random_coeffs({2, 3, 4}, rng);
        rows.push_back(check("op.add_broadcast", {a, b},
                             [&](Tape* t) { return add(t, a, b); }, c));
    }
    {
        Rng rng = root.substream("mul_broadcast");
        Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 1, 4}, rng);
        Tensor c = random_coeffs({2, 3, 4}, rng);
        rows.push_back(check("op.mul_broadcast", {a, b},
                             [&](Tape* t) { return mul(t, a, b); }, c));
    }
    {
        Rng rng = root.substream("div");
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({3, 1}, rng, 0.5, 2.0); // keep denominators away from 0
        Tensor c = random_coeffs({3, 4}, rng);
        rows.push_back(check("op.div_broadcast", {a, b},
                             [&](Tape* t) { return div(t, a, b); }, c));
    }
    {
        Rng rng = root.substream("relu");
        Tensor a = random_tensor({40}, rng);
        // nudge values off the kink so the finite difference stays one-sided
        for (auto& v : a.values_mut()) {
            if (std::abs(v) < 1e-3) v += 0.01;
        }
        Tensor c = random_coeffs({40}, rng);
        rows.push_back(check("op.relu", {a}, [&](Tape* t) { return relu(t, a); }, c));
    }
    {
        Rng rng = root.substream("exp");
        Tensor a = random_tensor({20}, rng);
        Tensor c = random_coeffs({20}, rng);
        rows.push_back(check("op.exp", {a}, [&](Tape* t) { return exp(t, a); }, c));
    }
    {
        Rng rng = root.substream("sqrt");
        Tensor a = random_tensor({20}, rng, 0.2, 2.0);
        Tensor c = random_coeffs({20}, rng);
        rows.push_back(check("op.sqrt", {a}, [&](Tape* t) { return sqrt(t, a); }, c));
    }
    {
        Rng rng = root.substream("abs");
        Tensor a = random_tensor({40}, rng);
        for (auto& v : a.values_mut()) {
            if (std::abs(v) < 1e-3) v += 0.01;
        }
        Tensor c = random_coeffs({40}, rng);
        rows.push_back(check("op.abs", {a}, [&](Tape* t) { return abs(t, a); }, c));
    }
    {
        Rng rng = root.substream("reductions");
        Tensor a = random_tensor({3, 4, 5}, rng);
        Tensor c = random_coeffs({3, 5}, rng);
        rows.push_back(check("op.sum_axis", {a},
                             [&](Tape* t) { return sum(t, a, {1}); }, c));
        Tensor c2 = random_coeffs({4}, rng);
        rows.push_back(check("op.mean_axes", {a},
                             [&](Tape* t) { return mean(t, a, {0, 2}); }, c2));
    }
    {
        Rng rng = root.substream("softmax");
        Tensor a = random_tensor({4, 6}, rng);
        Tensor c = random_coeffs({4, 6}, rng);
        rows.push_back(check("op.softmax", {a},
                             [&](Tape* t) { return softmax(t, a, -1); }, c));
    }
    {
        Rng rng = root.substream("permute");
        Tensor a = random_tensor({2, 3, 4}, rng);
        Tensor c = random_coeffs({4, 2, 3}, rng);
        rows.push_back(check("op.permute", {a},
                             [&](Tape* t) { return permute(t, a, {2, 0, 1}); }, c));
    }
    {
        Rng rng = root.substream("conv1d");
        Rng init = root.substream("conv1d_init");
        Conv1dLayer layer = Conv1dLayer::create(3, 5, 3, init);
        Tensor x = random_tensor({2, 7, 3}, rng);
        Tensor c = random_coeffs({2, 7, 5}, rng);
        rows.push_back(check("layer.conv1d", {x, layer.weight, layer.bias},
                             [&](Tape* t) { return conv1d_forward(t, layer, x); }, c));
    }
    {
        Rng rng = root.substream("layernorm");
        LayerNormLayer layer = LayerNormLayer::create(6);
        // non-trivial affine part
        Rng init = root.substream("layernorm_init");
        for (auto& v : layer.gain.values_mut()) v = init.uniform(0.5, 1.5);
        for (auto& v : layer.shift.values_mut()) v = init.uniform(-0.5, 0.5);
        Tensor x = random_tensor({2, 4, 6}, rng);
        Tensor c = random_coeffs({2, 4, 6}, rng);
        rows.push_back(check("layer.layernorm", {x, layer.gain, layer.shift},
                             [&](Tape* t) { return layernorm_forward(t, layer, x); }, c));
    }
    {
        Rng rng = root.substream("linear");
        Rng init = root.substream("linear_init");
        LinearLayer layer = LinearLayer::create(5, 3, init);
        Tensor x = random_tensor({2, 4, 5}, rng);
        Tensor c = random_coeffs({2, 4, 3}, rng);
        rows.push_back(check("layer.linear", {x, layer.weight, layer.bias},
                             [&](Tape* t) { return linear_forward(t, layer, x); }, c));
    }
    {
        Rng rng = root.substream("mha");
        Rng init = root.substream("mha_init");
        MultiHeadAttention layer = MultiHeadAttention::create(8, 2, init);
        Tensor x = random_tensor({2, 5, 8}, rng);
        Tensor c = random_coeffs({2, 5, 8}, rng);
        std::vector<Tensor> leaves{x,
                                   layer.query.weight, layer.query.bias,
                                   layer.key.weight,   layer.key.bias,
                                   layer.value.weight, layer.value.bias,
                                   layer.output.weight, layer.output.bias};
        rows.push_back(check("layer.mha", leaves,
                             [&](Tape* t) { return mha_forward(t, layer, x); }, c));
    }
    {
        Rng rng = root.substream("embedding");
        Rng init = root.substream("embedding_init");
        EmbeddingTable table = EmbeddingTable::create(5, 6, init);
        Tensor c = random_coeffs({6}, rng);
        rows.push_back(check("layer.embedding", {table.table},
                             [&](Tape* t) { return embedding_lookup(t, table, 3); }, c));
    }
    for (const bool pre_ln : {true, false}) {
        Rng rng = root.substream(pre_ln ? "block_pre" : "block_post");
        Rng init = root.substream("block_init");
        ModelConfig cfg;
        cfg.hidden_dim = 8;
        cfg.n_heads = 2;
        cfg.ffn_expansion = 2;
        PreLNFFTBlock block = PreLNFFTBlock::create(cfg, init);
        Tensor x = random_tensor({2, 5, 8}, rng);
        Tensor c = random_coeffs({2, 5, 8}, rng);
        std::vector<Tensor> leaves{x};
        leaves.push_back(block.ln1.gain);
        leaves.push_back(block.ln1.shift);
        leaves.push_back(block.ln2.gain);
        leaves.push_back(block.ln2.shift);
        for (const auto& lin : {&block.attn.query, &block.attn.key, &block.attn.value,
                                &block.attn.output}) {
            leaves.push_back(lin->weight);
            leaves.push_back(lin->bias);
        }
        leaves.push_back(block.conv_a.weight);
        leaves.push_back(block.conv_a.bias);
        leaves.push_back(block.conv_b.weight);
        leaves.push_back(block.conv_b.bias);
        rows.push_back(check(pre_ln ? "block.pre_ln" : "block.post_ln", leaves,
                             [&](Tape* t) {
                                 return block_forward(t, block, x, pre_ln, 0.0, false, nullptr);
                             },
                             c));
    }
    rows.push_back(check_model(seed));
    return rows;
}

bool all_pass(const std::vector<GradCheckRow>& rows) {
    return std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass; });
}

} // namespace eegdec
