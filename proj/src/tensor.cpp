#include "eegdec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace eegdec {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

static void validate_shape(const Shape& shape) {
    for (int64_t e : shape) {
        if (e < 1) throw DimError("tensor extents must be >= 1, got " + shape_str(shape));
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    validate_shape(shape);
    auto d = std::make_shared<TensorData>();
    const int64_t n = shape_numel(shape);
    d->shape = std::move(shape);
    d->values.assign(static_cast<size_t>(n), 0.0);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.d_->values.begin(), t.d_->values.end(), value);
    return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
        throw DimError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    auto d = std::make_shared<TensorData>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

double Tensor::at(std::initializer_list<int64_t> index) const {
    if (static_cast<int>(index.size()) != rank()) {
        throw DimError("index rank " + std::to_string(index.size()) +
                       " does not match tensor rank " + std::to_string(rank()));
    }
    int64_t flat = 0;
    int d = 0;
    for (int64_t i : index) {
        if (i < 0 || i >= d_->shape[d]) throw DimError("index out of range");
        flat = flat * d_->shape[d] + i;
        ++d;
    }
    return d_->values[static_cast<size_t>(flat)];
}

double Tensor::scalar_value() const {
    if (numel() != 1) throw ContractError("scalar_value on tensor of shape " + shape_str(shape()));
    return d_->values[0];
}

std::span<double> Tensor::grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
}

std::span<const double> Tensor::grad_view() const { return d_->grad; }

void Tensor::zero_grad() {
    std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

void Tape::record(Tensor output, std::function<void()> backward_fn) {
    nodes_.push_back({std::move(output), std::move(backward_fn)});
}

void Tape::clear() { nodes_.clear(); }

void backward(const Tensor& loss, Tape& tape) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a defined scalar tensor");
    }
    // Produced tensors get fresh gradients each call; leaves keep theirs
    // and accumulate.
    for (auto& node : tape.nodes_) node.output.zero_grad();
    Tensor seed = loss;
    seed.grad()[0] = 1.0;
    for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
        it->backward_fn();
    }
}

void accumulate_grad(Tensor& t, std::span<const double> delta) {
    auto g = t.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const size_t ra = a.size(), rb = b.size();
    const size_t r = std::max(ra, rb);
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        const int64_t ea = i < r - ra ? 1 : a[i - (r - ra)];
        const int64_t eb = i < r - rb ? 1 : b[i - (r - rb)];
        if (ea != eb && ea != 1 && eb != 1) {
            throw DimError("shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
        }
        out[i] = std::max(ea, eb);
    }
    return out;
}

// Row-major strides; broadcast dims (extent 1 against a larger out extent)
// get stride 0. `shape` is right-aligned against `out`.
static std::vector<int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
    const size_t r = out.size(), rs = shape.size();
    std::vector<int64_t> strides(r, 0);
    int64_t acc = 1;
    for (size_t i = rs; i-- > 0;) {
        const size_t oi = i + (r - rs);
        strides[oi] = shape[i] == 1 ? 0 : acc;
        acc *= shape[i];
    }
    return strides;
}

namespace {

// Odometer over `out_shape` yielding flat offsets into two broadcast inputs.
template <typename Fn>
void for_each_broadcast(const Shape& out_shape, const std::vector<int64_t>& sa,
                        const std::vector<int64_t>& sb, Fn&& fn) {
    const size_t r = out_shape.size();
    const int64_t n = shape_numel(out_shape);
    std::vector<int64_t> idx(r, 0);
    int64_t oa = 0, ob = 0;
    for (int64_t o = 0; o < n; ++o) {
        fn(o, oa, ob);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out_shape[d]) break;
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

template <typename Op>
Tensor ew_binary(Tape* tape, const Tensor& a, const Tensor& b, Op op,
                 const std::function<void(Tensor, Tensor, Tensor)>& make_backward) {
    Tensor out;
    if (a.shape() == b.shape()) {
        out = Tensor::zeros(a.shape());
        auto ov = out.values_mut();
        const auto av = a.values(), bv = b.values();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = op(av[i], bv[i]);
    } else {
        Shape os = broadcast_shape(a.shape(), b.shape());
        out = Tensor::zeros(os);
        auto ov = out.values_mut();
        const auto av = a.values(), bv = b.values();
        const auto sa = broadcast_strides(a.shape(), os);
        const auto sb = broadcast_strides(b.shape(), os);
        for_each_broadcast(os, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
            ov[o] = op(av[ia], bv[ib]);
        });
    }
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        make_backward(a, b, out);
    }
    return out;
}

// Scatter-accumulates an out-shaped gradient into a (possibly broadcast)
// input's grad slot.
void accumulate_broadcast_grad(Tensor input, const Tensor& out,
                               const std::function<double(int64_t io, int64_t oo)>& contrib) {
    auto g = input.grad();
    if (input.shape() == out.shape()) {
        const int64_t n = out.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += contrib(i, i);
        return;
    }
    const auto si = broadcast_strides(input.shape(), out.shape());
    const std::vector<int64_t> szero(out.shape().size(), 0);
    for_each_broadcast(out.shape(), si, szero, [&](int64_t o, int64_t ii, int64_t) {
        g[ii] += contrib(ii, o);
    });
}

template <typename Op, typename Dop>
Tensor ew_unary(Tape* tape, const Tensor& a, Op op, Dop dop) {
    Tensor out = Tensor::zeros(a.shape());
    auto ov = out.values_mut();
    const auto av = a.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = op(av[i]);
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor a2 = a;
        tape->record(out, [a2, out, dop]() mutable {
            auto g = a2.grad();
            const auto og = out.grad_view();
            const auto av2 = a2.values();
            const auto ov2 = out.values();
            for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] * dop(av2[i], ov2[i]);
        });
    }
    return out;
}

} // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    return ew_binary(
        tape, a, b, [](double x, double y) { return x + y; },
        [tape](Tensor a2, Tensor b2, Tensor out) {
            tape->record(out, [a2, b2, out]() mutable {
                const auto og = out.grad_view();
                if (a2.requires_grad())
                    accumulate_broadcast_grad(a2, out, [&](int64_t, int64_t o) { return og[o]; });
                if (b2.requires_grad())
                    accumulate_broadcast_grad(b2, out, [&](int64_t, int64_t o) { return og[o]; });
            });
        });
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    return ew_binary(
        tape, a, b, [](double x, double y) { return x - y; },
        [tape](Tensor a2, Tensor b2, Tensor out) {
            tape->record(out, [a2, b2, out]() mutable {
                const auto og = out.grad_view();
                if (a2.requires_grad())
                    accumulate_broadcast_grad(a2, out, [&](int64_t, int64_t o) { return og[o]; });
                if (b2.requires_grad())
                    accumulate_broadcast_grad(b2, out, [&](int64_t, int64_t o) { return -og[o]; });
            });
        });
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    return ew_binary(
        tape, a, b, [](double x, double y) { return x * y; },
        [tape](Tensor a2, Tensor b2, Tensor out) {
            tape->record(out, [a2, b2, out]() mutable {
                const auto og = out.grad_view();
                const Shape& os = out.shape();
                const auto sa = broadcast_strides(a2.shape(), os);
                const auto sb = broadcast_strides(b2.shape(), os);
                const auto av = a2.values();
                const auto bv = b2.values();
                const bool ga = a2.requires_grad(), gb = b2.requires_grad();
                auto gav = ga ? a2.grad() : std::span<double>();
                auto gbv = gb ? b2.grad() : std::span<double>();
                for_each_broadcast(os, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
                    if (ga) gav[ia] += og[o] * bv[ib];
                    if (gb) gbv[ib] += og[o] * av[ia];
                });
            });
        });
}

Tensor div(Tape* tape, const Tensor& a, const Tensor& b) {
    return ew_binary(
        tape, a, b, [](double x, double y) { return x / y; },
        [tape](Tensor a2, Tensor b2, Tensor out) {
            tape->record(out, [a2, b2, out]() mutable {
                const auto og = out.grad_view();
                const auto ov = out.values();
                const Shape& os = out.shape();
                const auto sa = broadcast_strides(a2.shape(), os);
                const auto sb = broadcast_strides(b2.shape(), os);
                const auto bv = b2.values();
                const bool ga = a2.requires_grad(), gb = b2.requires_grad();
                auto gav = ga ? a2.grad() : std::span<double>();
                auto gbv = gb ? b2.grad() : std::span<double>();
                for_each_broadcast(os, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
                    if (ga) gav[ia] += og[o] / bv[ib];
                    if (gb) gbv[ib] -= og[o] * ov[o] / bv[ib];
                });
            });
        });
}

Tensor scalar_mul(Tape* tape, const Tensor& a, double s) {
    return ew_unary(
        tape, a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor scalar_add(Tape* tape, const Tensor& a, double s) {
    return ew_unary(
        tape, a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(Tape* tape, const Tensor& a) {
    return ew_unary(
        tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(Tape* tape, const Tensor& a) {
    return ew_unary(
        tape, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sqrt(Tape* tape, const Tensor& a) {
    return ew_unary(
        tape, a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

Tensor abs(Tape* tape, const Tensor& a) {
    // Subgradient 0 at exactly 0.
    return ew_unary(
        tape, a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// ---- matmul ---------------------------------------------------------------

namespace {

// C(m,n) += A(m,k) * B(k,n)
void mm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + p * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C(m,n) += A(m,k) * B(n,k)^T
void mm_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* b = B + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a[p] * b[p];
            c[j] += acc;
        }
    }
}

// C(k,n) += A(m,k)^T * B(m,n)
void mm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < m; ++p) {
        const double* a = A + p * k;
        const double* b = B + p * n;
        for (int64_t i = 0; i < k; ++i) {
            const double av = a[i];
            double* c = C + i * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

struct BatchMap {
    Shape batch;               // broadcast batch shape
    std::vector<int64_t> sa;   // per-batch-dim strides into a (0 on broadcast)
    std::vector<int64_t> sb;
    int64_t m, k, n;
};

BatchMap matmul_map(const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw DimError("matmul requires rank >= 2 tensors, got " + shape_str(a) + " and " +
                       shape_str(b));
    }
    BatchMap map;
    map.m = a[a.size() - 2];
    map.k = a[a.size() - 1];
    map.n = b[b.size() - 1];
    if (b[b.size() - 2] != map.k) {
        throw DimError("matmul inner extents differ: " + shape_str(a) + " x " + shape_str(b));
    }
    Shape ab(a.begin(), a.end() - 2), bb(b.begin(), b.end() - 2);
    map.batch = broadcast_shape(ab, bb);
    // strides counted in whole matrices
    map.sa.assign(map.batch.size(), 0);
    map.sb.assign(map.batch.size(), 0);
    int64_t acc = map.m * map.k;
    for (size_t i = ab.size(); i-- > 0;) {
        const size_t oi = i + (map.batch.size() - ab.size());
        map.sa[oi] = ab[i] == 1 ? 0 : acc;
        acc *= ab[i];
    }
    acc = map.k * map.n;
    for (size_t i = bb.size(); i-- > 0;) {
        const size_t oi = i + (map.batch.size() - bb.size());
        map.sb[oi] = bb[i] == 1 ? 0 : acc;
        acc *= bb[i];
    }
    return map;
}

template <typename Fn>
void for_each_batch(const BatchMap& map, Fn&& fn) {
    const int64_t nb = shape_numel(map.batch);
    const size_t r = map.batch.size();
    std::vector<int64_t> idx(r, 0);
    int64_t oa = 0, ob = 0;
    for (int64_t o = 0; o < nb; ++o) {
        fn(o, oa, ob);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            oa += map.sa[d];
            ob += map.sb[d];
            if (idx[d] < map.batch[d]) break;
            oa -= map.sa[d] * map.batch[d];
            ob -= map.sb[d] * map.batch[d];
            idx[d] = 0;
        }
    }
}

} // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    const BatchMap map = matmul_map(a.shape(), b.shape());
    Shape out_shape = map.batch;
    out_shape.push_back(map.m);
    out_shape.push_back(map.n);
    Tensor out = Tensor::zeros(out_shape);
    {
        const double* av = a.values().data();
        const double* bv = b.values().data();
        double* ov = out.values_mut().data();
        const int64_t block = map.m * map.n;
        for_each_batch(map, [&](int64_t o, int64_t oa, int64_t ob) {
            mm_nn(av + oa, bv + ob, ov + o * block, map.m, map.k, map.n);
        });
    }
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor a2 = a, b2 = b;
        tape->record(out, [a2, b2, out, map]() mutable {
            const double* og = out.grad_view().data();
            const int64_t block = map.m * map.n;
            const bool ga = a2.requires_grad(), gb = b2.requires_grad();
            double* gav = ga ? a2.grad().data() : nullptr;
            double* gbv = gb ? b2.grad().data() : nullptr;
            const double* av = a2.values().data();
            const double* bv = b2.values().data();
            for_each_batch(map, [&](int64_t o, int64_t oa, int64_t ob) {
                const double* g = og + o * block;
                // dA += G * B^T ; dB += A^T * G. Zero strides on broadcast
                // batch dims make the accumulation double as the reduction.
                if (ga) mm_nt(g, bv + ob, gav + oa, map.m, map.n, map.k);
                if (gb) mm_tn(av + oa, g, gbv + ob, map.m, map.k, map.n);
            });
        });
    }
    return out;
}

// ---- reductions -------------------------------------------------------------

namespace {

std::vector<int> normalize_axes(const std::vector<int>& axes, int rank) {
    std::vector<int> out;
    out.reserve(axes.size());
    for (int ax : axes) {
        const int a = ax < 0 ? ax + rank : ax;
        if (a < 0 || a >= rank) {
            throw DimError("axis " + std::to_string(ax) + " out of range for rank " +
                           std::to_string(rank));
        }
        if (std::find(out.begin(), out.end(), a) != out.end()) {
            throw DimError("duplicate reduction axis " + std::to_string(ax));
        }
        out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Map each input flat index to the flat index of its reduction cell.
struct ReduceMap {
    Shape out_shape;     // with keepdims applied
    Shape kept_shape;    // reduced dims as 1 (for index math)
    int64_t count;       // elements folded into one output cell
};

ReduceMap reduce_map(const Shape& in, const std::vector<int>& axes, bool keepdims) {
    ReduceMap map;
    map.kept_shape = in;
    map.count = 1;
    std::vector<bool> reduced(in.size(), false);
    for (int a : axes) {
        reduced[a] = true;
        map.count *= in[a];
        map.kept_shape[a] = 1;
    }
    for (size_t d = 0; d < in.size(); ++d) {
        if (!reduced[d]) {
            map.out_shape.push_back(in[d]);
        } else if (keepdims) {
            map.out_shape.push_back(1);
        }
    }
    if (map.out_shape.empty()) map.out_shape.push_back(1);
    return map;
}

template <typename Fn>
void for_each_reduce(const Shape& in, const Shape& kept, Fn&& fn) {
    const auto strides = broadcast_strides(kept, in);
    const size_t r = in.size();
    const int64_t n = shape_numel(in);
    std::vector<int64_t> idx(r, 0);
    int64_t oo = 0;
    for (int64_t i = 0; i < n; ++i) {
        fn(i, oo);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            oo += strides[d];
            if (idx[d] < in[d]) break;
            oo -= strides[d] * in[d];
            idx[d] = 0;
        }
    }
}

Tensor reduce_op(Tape* tape, const Tensor& a, const std::vector<int>& axes_in, bool keepdims,
                 bool take_mean) {
    const auto axes = normalize_axes(axes_in, a.rank());
    const ReduceMap map = reduce_map(a.shape(), axes, keepdims);
    const double scale = take_mean ? 1.0 / static_cast<double>(map.count) : 1.0;
    Tensor out = Tensor::zeros(map.out_shape);
    {
        auto ov = out.values_mut();
        const auto av = a.values();
        for_each_reduce(a.shape(), map.kept_shape, [&](int64_t i, int64_t o) {
            ov[o] += av[i];
        });
        if (take_mean) {
            for (auto& v : ov) v *= scale;
        }
    }
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor a2 = a;
        tape->record(out, [a2, out, map, scale]() mutable {
            auto g = a2.grad();
            const auto og = out.grad_view();
            for_each_reduce(a2.shape(), map.kept_shape, [&](int64_t i, int64_t o) {
                g[i] += og[o] * scale;
            });
        });
    }
    return out;
}

std::vector<int> all_axes(int rank) {
    std::vector<int> axes(rank);
    std::iota(axes.begin(), axes.end(), 0);
    return axes;
}

} // namespace

Tensor sum(Tape* tape, const Tensor& a, const std::vector<int>& axes, bool keepdims) {
    return reduce_op(tape, a, axes, keepdims, false);
}

Tensor mean(Tape* tape, const Tensor& a, const std::vector<int>& axes, bool keepdims) {
    return reduce_op(tape, a, axes, keepdims, true);
}

Tensor sum(Tape* tape, const Tensor& a) { return reduce_op(tape, a, all_axes(a.rank()), false, false); }

Tensor mean(Tape* tape, const Tensor& a) { return reduce_op(tape, a, all_axes(a.rank()), false, true); }

// ---- softmax ----------------------------------------------------------------

Tensor softmax(Tape* tape, const Tensor& a, int axis) {
    const int rank = a.rank();
    const int ax = axis < 0 ? axis + rank : axis;
    if (ax < 0 || ax >= rank) {
        throw DimError("softmax axis " + std::to_string(axis) + " out of range for rank " +
                       std::to_string(rank));
    }
    const Shape& shape = a.shape();
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < ax; ++d) outer *= shape[d];
    for (int d = ax + 1; d < rank; ++d) inner *= shape[d];
    const int64_t len = shape[ax];

    Tensor out = Tensor::zeros(shape);
    {
        const auto av = a.values();
        auto ov = out.values_mut();
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t i = 0; i < inner; ++i) {
                const int64_t base = o * len * inner + i;
                double mx = av[base];
                for (int64_t j = 1; j < len; ++j) mx = std::max(mx, av[base + j * inner]);
                double denom = 0.0;
                for (int64_t j = 0; j < len; ++j) {
                    const double e = std::exp(av[base + j * inner] - mx);
                    ov[base + j * inner] = e;
                    denom += e;
                }
                for (int64_t j = 0; j < len; ++j) ov[base + j * inner] /= denom;
            }
        }
    }
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor a2 = a;
        tape->record(out, [a2, out, outer, inner, len]() mutable {
            auto g = a2.grad();
            const auto og = out.grad_view();
            const auto ov = out.values();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t i = 0; i < inner; ++i) {
                    const int64_t base = o * len * inner + i;
                    double dot = 0.0;
                    for (int64_t j = 0; j < len; ++j) {
                        const int64_t p = base + j * inner;
                        dot += og[p] * ov[p];
                    }
                    for (int64_t j = 0; j < len; ++j) {
                        const int64_t p = base + j * inner;
                        g[p] += (og[p] - dot) * ov[p];
                    }
                }
            }
        });
    }
    return out;
}

// ---- layout ops ---------------------------------------------------------------

Tensor reshape(Tape* tape, const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel()) {
        throw DimError("reshape from " + shape_str(a.shape()) + " to " + shape_str(new_shape) +
                       " changes element count");
    }
    Tensor out = Tensor::from_values(std::move(new_shape),
                                     std::vector<double>(a.values().begin(), a.values().end()));
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor a2 = a;
        tape->record(out, [a2, out]() mutable { accumulate_grad(a2, out.grad_view()); });
    }
    return out;
}

namespace {

std::vector<int64_t> row_major_strides(const Shape& shape) {
    std::vector<int64_t> s(shape.size());
    int64_t acc = 1;
    for (size_t i = shape.size(); i-- > 0;) {
        s[i] = acc;
        acc *= shape[i];
    }
    return s;
}

void permute_copy(const Shape& in_shape, const std::vector<int>& dims,
                  std::span<const double> src, std::span<double> dst, bool add) {
    const size_t r = in_shape.size();
    Shape out_shape(r);
    for (size_t i = 0; i < r; ++i) out_shape[i] = in_shape[dims[i]];
    const auto in_strides = row_major_strides(in_shape);
    std::vector<int64_t> src_strides(r);
    for (size_t i = 0; i < r; ++i) src_strides[i] = in_strides[dims[i]];

    std::vector<int64_t> idx(r, 0);
    int64_t so = 0;
    const int64_t n = shape_numel(in_shape);
    for (int64_t o = 0; o < n; ++o) {
        if (add) {
            dst[so] += src[o]; // used for the inverse-permute grad path
        } else {
            dst[o] = src[so];
        }
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            so += src_strides[d];
            if (idx[d] < out_shape[d]) break;
            so -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

} // namespace

Tensor permute(Tape* tape, const Tensor& a, const std::vector<int>& dims) {
    const size_t r = a.shape().size();
    if (dims.size() != r) throw DimError("permute dims rank mismatch");
    std::vector<bool> seen(r, false);
    for (int d : dims) {
        if (d < 0 || static_cast<size_t>(d) >= r || seen[d]) {
            throw DimError("permute dims must be a permutation of 0.." + std::to_string(r - 1));
        }
        seen[d] = true;
    }
    Shape out_shape(r);
    for (size_t i = 0; i < r; ++i) out_shape[i] = a.shape()[dims[i]];
    Tensor out = Tensor::zeros(out_shape);
    permute_copy(a.shape(), dims, a.values(), out.values_mut(), false);
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor a2 = a;
        std::vector<int> dims2 = dims;
        tape->record(out, [a2, out, dims2]() mutable {
            // grad wrt input: scatter out-grad back through the same map
            permute_copy(a2.shape(), dims2, out.grad_view(), a2.grad(), true);
        });
    }
    return out;
}

} // namespace eegdec
