#pragma once

// Test-side reference implementations, kept independent of the library
// code paths they check.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace oracles {

// Two-pass textbook Pearson correlation.
inline double pearson_two_pass(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("bad input");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    const double denom = std::sqrt(sxx * syy);
    if (denom == 0.0) return 0.0;
    return sxy / denom;
}

// Dense symmetric positive-definite solve via Cholesky with a small jitter;
// enough for lagged least-squares designs.
inline std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b) {
    const size_t n = b.size();
    for (size_t i = 0; i < n; ++i) a[i * n + i] += 1e-9;
    // in-place lower Cholesky
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (s <= 0.0) throw std::runtime_error("matrix not positive definite");
                a[i * n + j] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    // forward then back substitution
    for (size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    for (size_t i = n; i-- > 0;) {
        double s = b[i];
        for (size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
        b[i] = s / a[i * n + i];
    }
    return b;
}

// Linear least-squares decoder over lagged EEG features (channels x lags
// window plus intercept), fitted on one set of recordings, scored on
// another by Pearson r. Rows: (eeg[time][channel], envelope[time]).
struct LaggedRecording {
    std::vector<std::vector<double>> eeg; // [time][channels]
    std::vector<double> envelope;         // [time]
};

class LstsqDecoder {
public:
    LstsqDecoder(int channels, int lag_radius)
        : channels_(channels), radius_(lag_radius),
          n_features_(channels * (2 * lag_radius + 1) + 1) {}

    void fit(const std::vector<LaggedRecording>& recs) {
        std::vector<double> xtx(static_cast<size_t>(n_features_) * n_features_, 0.0);
        std::vector<double> xty(n_features_, 0.0);
        std::vector<double> row(n_features_);
        for (const auto& rec : recs) {
            const int64_t time = static_cast<int64_t>(rec.envelope.size());
            for (int64_t t = radius_; t < time - radius_; ++t) {
                fill_row(rec, t, row);
                for (int i = 0; i < n_features_; ++i) {
                    for (int j = i; j < n_features_; ++j) {
                        xtx[static_cast<size_t>(i) * n_features_ + j] += row[i] * row[j];
                    }
                    xty[i] += row[i] * rec.envelope[t];
                }
            }
        }
        for (int i = 0; i < n_features_; ++i) {
            for (int j = 0; j < i; ++j) {
                xtx[static_cast<size_t>(i) * n_features_ + j] =
                    xtx[static_cast<size_t>(j) * n_features_ + i];
            }
        }
        weights_ = solve_spd(std::move(xtx), std::move(xty));
    }

    std::vector<double> predict(const LaggedRecording& rec) const {
        const int64_t time = static_cast<int64_t>(rec.envelope.size());
        std::vector<double> out(time, 0.0);
        std::vector<double> row(n_features_);
        for (int64_t t = radius_; t < time - radius_; ++t) {
            fill_row(rec, t, row);
            double acc = 0.0;
            for (int i = 0; i < n_features_; ++i) acc += weights_[i] * row[i];
            out[t] = acc;
        }
        return out;
    }

    // Pearson r over the interior region where all lags are in range.
    double score(const LaggedRecording& rec) const {
        const std::vector<double> pred = predict(rec);
        const int64_t time = static_cast<int64_t>(rec.envelope.size());
        std::vector<double> p(pred.begin() + radius_, pred.begin() + (time - radius_));
        std::vector<double> e(rec.envelope.begin() + radius_,
                              rec.envelope.begin() + (time - radius_));
        return pearson_two_pass(p, e);
    }

private:
    void fill_row(const LaggedRecording& rec, int64_t t, std::vector<double>& row) const {
        int f = 0;
        for (int lag = -radius_; lag <= radius_; ++lag) {
            const auto& frame = rec.eeg[static_cast<size_t>(t + lag)];
            for (int c = 0; c < channels_; ++c) row[f++] = frame[c];
        }
        row[f] = 1.0;
    }

    int channels_;
    int radius_;
    int n_features_;
    std::vector<double> weights_;
};

} // namespace oracles
