#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eegdec/tensor.hpp"

namespace eegdec {

// Central finite differences against taped gradients. The numeric side
// only ever calls forward evaluation, so it stays independent of the
// backward rules it is checking.
struct GradCheckRow {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

constexpr double kGradCheckStep = 1e-5;
constexpr double kGradCheckTol = 1e-4;

// |fd - ad| / max(floor, |fd|, |ad|); the floor keeps finite-difference
// roundoff on near-zero gradients from counting as disagreement.
double grad_rel_err(double fd, double ad, double floor = kGradCheckTol);

// Perturbs every element of every tensor in `leaves`, recomputing
// `loss_fn()` (a plain forward pass) and comparing against the grads
// already accumulated on the leaves.
double finite_diff_max_rel_err(const std::function<double()>& loss_fn,
                               const std::vector<Tensor>& leaves, double h = kGradCheckStep);

// The standard battery: every op, every layer, one pre-LN and one post-LN
// block, and a full 2-block model under the training loss.
std::vector<GradCheckRow> run_gradient_checks(uint64_t seed = 42);

bool all_pass(const std::vector<GradCheckRow>& rows);

} // namespace eegdec
