#include "eegdec/objective.hpp"

#include <cmath>

namespace eegdec {

Tensor pearson_rows(Tape* tape, const Tensor& pred, const Tensor& target, double eps) {
    if (pred.shape() != target.shape()) {
        throw DimError("pearson: shapes differ, " + shape_str(pred.shape()) + " vs " +
                       shape_str(target.shape()));
    }
    if (pred.shape().back() < 2) {
        throw ContractError("pearson needs at least 2 samples per row");
    }
    Tensor pc = sub(tape, pred, mean(tape, pred, {-1}, true));
    Tensor tc = sub(tape, target, mean(tape, target, {-1}, true));
    Tensor num = sum(tape, mul(tape, pc, tc), {-1});
    Tensor pp = sum(tape, mul(tape, pc, pc), {-1});
    Tensor tt = sum(tape, mul(tape, tc, tc), {-1});
    Tensor den = sqrt(tape, scalar_add(tape, mul(tape, pp, tt), eps));
    return div(tape, num, den);
}

Tensor pearson_r(Tape* tape, const Tensor& pred, const Tensor& target, double eps) {
    if (pred.rank() != 1 || target.rank() != 1) {
        throw ContractError("pearson_r expects rank-1 tensors");
    }
    return pearson_rows(tape, pred, target, eps);
}

Tensor total_loss(Tape* tape, const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
    cfg.validate();
    if (pred.shape() != target.shape()) {
        throw DimError("total_loss: shapes differ, " + shape_str(pred.shape()) + " vs " +
                       shape_str(target.shape()));
    }
    Tensor r = mean(tape, pearson_rows(tape, pred, target, cfg.epsilon_denominator));
    Tensor neg_r = scalar_mul(tape, r, -1.0);
    if (!cfg.l1_enabled || cfg.alpha == 0.0) return neg_r;
    Tensor l1 = mean(tape, abs(tape, sub(tape, pred, target)));
    return add(tape, neg_r, scalar_mul(tape, l1, cfg.alpha));
}

double combine_loss(double r, double l1, const LossConfig& cfg) {
    if (!cfg.l1_enabled || cfg.alpha == 0.0) return -r;
    return -r + cfg.alpha * l1;
}

EvalReport aggregate_report(const std::vector<std::pair<int, double>>& per_recording) {
    if (per_recording.empty()) {
        throw ContractError("aggregate_report: empty recording list");
    }
    for (const auto& [sid, r] : per_recording) {
        if (!std::isfinite(r)) {
            throw ContractError("aggregate_report: non-finite r for subject " +
                                std::to_string(sid));
        }
    }
    auto mean_std = [](const std::vector<double>& xs) {
        double m = 0.0;
        for (double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - m) * (x - m);
        var /= static_cast<double>(xs.size()); // population convention
        return std::pair<double, double>(m, std::sqrt(var));
    };

    EvalReport report;
    std::map<int, std::vector<double>> by_subject;
    std::vector<double> all;
    all.reserve(per_recording.size());
    for (const auto& [sid, r] : per_recording) {
        by_subject[sid].push_back(r);
        all.push_back(r);
    }
    for (const auto& [sid, rs] : by_subject) {
        const auto [m, s] = mean_std(rs);
        report.per_subject[sid] = {m, s, static_cast<int>(rs.size())};
    }
    const auto [om, os] = mean_std(all);
    report.overall_mean = om;
    report.overall_std = os;
    report.n_recordings = static_cast<int>(all.size());

    std::vector<double> subject_means;
    subject_means.reserve(report.per_subject.size());
    for (const auto& [sid, st] : report.per_subject) subject_means.push_back(st.mean_r);
    const auto [sm, ss] = mean_std(subject_means);
    report.by_subject_mean = sm;
    report.by_subject_std = ss;
    return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json per;
    for (const auto& [sid, st] : report.per_subject) {
        per[std::to_string(sid)] = {
            {"mean_r", st.mean_r}, {"std_r", st.std_r}, {"n_recordings", st.n_recordings}};
    }
    return nlohmann::json{{"per_subject", per},
                          {"overall_mean", report.overall_mean},
                          {"overall_std", report.overall_std},
                          {"n_recordings", report.n_recordings},
                          {"by_subject_mean", report.by_subject_mean},
                          {"by_subject_std", report.by_subject_std}};
}

} // namespace eegdec
