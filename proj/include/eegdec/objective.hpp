#pragma once

#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eegdec/tensor.hpp"

namespace eegdec {

struct LossConfig {
    double alpha = 0.2;
    bool l1_enabled = true;
    double epsilon_denominator = 1e-8;

    void validate() const {
        if (alpha < 0.0) throw ConfigError("loss alpha must be >= 0");
        if (epsilon_denominator <= 0.0) throw ConfigError("loss epsilon must be > 0");
    }
};

// r = sum(pc*tc) / sqrt(sum(pc^2)*sum(tc^2) + eps) over the last axis,
// pc/tc mean-centered. The eps guard sends constant signals to r ~ 0
// instead of dividing by zero.
Tensor pearson_rows(Tape* tape, const Tensor& pred, const Tensor& target, double eps = 1e-8);

// 1-D convenience: [n] x [n] -> scalar, n >= 2.
Tensor pearson_r(Tape* tape, const Tensor& pred, const Tensor& target, double eps = 1e-8);

// -R + alpha * L1: R is the mean per-item correlation over time, L1 the
// mean absolute difference over all elements. The L1 term is skipped
// entirely when disabled or alpha == 0, so those runs match bitwise.
Tensor total_loss(Tape* tape, const Tensor& pred, const Tensor& target, const LossConfig& cfg);

// Scalar form of the same combination.
double combine_loss(double r, double l1, const LossConfig& cfg);

struct SubjectStats {
    double mean_r = 0.0;
    double std_r = 0.0;
    int n_recordings = 0;
};

struct EvalReport {
    std::map<int, SubjectStats> per_subject;
    double overall_mean = 0.0; // over recording-level r values
    double overall_std = 0.0;  // population convention
    int n_recordings = 0;
    double by_subject_mean = 0.0; // over per-subject means
    double by_subject_std = 0.0;
};

EvalReport aggregate_report(const std::vector<std::pair<int, double>>& per_recording);

nlohmann::json report_to_json(const EvalReport& report);

} // namespace eegdec
