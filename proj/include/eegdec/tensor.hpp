#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eegdec/errors.hpp"

namespace eegdec {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorData {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad; // empty until first accumulation
};

// Dense row-major tensor of 64-bit floats. Value-semantics handle over
// shared storage; values are treated as immutable while a tape is live,
// the grad slot is the only mutable part. Slices and reshapes copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value);
    static Tensor from_values(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    int rank() const { return static_cast<int>(d_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(d_->values.size()); }

    std::span<const double> values() const { return d_->values; }
    std::span<double> values_mut() { return d_->values; }

    double at(std::initializer_list<int64_t> index) const;
    double scalar_value() const;

    bool requires_grad() const { return d_->requires_grad; }
    Tensor& set_requires_grad(bool flag) {
        d_->requires_grad = flag;
        return *this;
    }

    bool has_grad() const { return !d_->grad.empty(); }
    // Grad slot, zero-allocated on first touch.
    std::span<double> grad();
    std::span<const double> grad_view() const;
    void zero_grad();

    TensorData* node() const { return d_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
    std::shared_ptr<TensorData> d_;
};

// Records one backward rule per produced tensor, in execution order.
// Single-owner: drive each tape from one logical thread.
class Tape {
public:
    void record(Tensor output, std::function<void()> backward_fn);
    void clear();
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor output;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;

    friend void backward(const Tensor& loss, Tape& tape);
};

// Seeds d(loss)/d(loss) = 1 and runs recorded rules in reverse. Leaf grads
// accumulate across calls until zero_grad; produced tensors get fresh grads.
void backward(const Tensor& loss, Tape& tape);

// Accumulates `delta` into the grad slot of `t` (helper for custom rules).
void accumulate_grad(Tensor& t, std::span<const double> delta);

// Trailing-dimension broadcast of two shapes; throws DimError when
// incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b);

// ---- differentiable ops -------------------------------------------------
// All ops are pure. `tape` may be null for forward-only evaluation; a rule
// is recorded only when the tape is present and some input requires grad.

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor div(Tape* tape, const Tensor& a, const Tensor& b);

Tensor scalar_mul(Tape* tape, const Tensor& a, double s);
Tensor scalar_add(Tape* tape, const Tensor& a, double s);

Tensor relu(Tape* tape, const Tensor& a);
Tensor exp(Tape* tape, const Tensor& a);
Tensor sqrt(Tape* tape, const Tensor& a);
Tensor abs(Tape* tape, const Tensor& a);

Tensor sum(Tape* tape, const Tensor& a, const std::vector<int>& axes, bool keepdims = false);
Tensor mean(Tape* tape, const Tensor& a, const std::vector<int>& axes, bool keepdims = false);
Tensor sum(Tape* tape, const Tensor& a);  // all axes -> scalar
Tensor mean(Tape* tape, const Tensor& a); // all axes -> scalar

Tensor softmax(Tape* tape, const Tensor& a, int axis);

Tensor reshape(Tape* tape, const Tensor& a, Shape new_shape);
Tensor permute(Tape* tape, const Tensor& a, const std::vector<int>& dims);

} // namespace eegdec
