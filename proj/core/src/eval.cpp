#include "sphnet/eval.hpp"

#include <cmath>

#include "sphnet/errors.hpp"

namespace sphnet {

double r2_score(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) {
        throw ShapeError("r2_score: length mismatch " + std::to_string(y.size()) + " vs " +
                         std::to_string(y_hat.size()));
    }
    if (y.size() < 2) throw DataError("r2_score: need at least 2 observations");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_tot += (y[i] - mean) * (y[i] - mean);
        ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    }
    if (ss_tot == 0.0) throw DataError("r2_score: constant observations have undefined variance");
    return 1.0 - ss_res / ss_tot;
}

std::pair<std::vector<Direction>, std::vector<Direction>> direction_labels(
    std::span<const double> actual, std::span<const double> predicted, std::span<const double> prev) {
    if (actual.size() != predicted.size() || actual.size() != prev.size()) {
        throw ShapeError("direction_labels: length mismatch (" + std::to_string(actual.size()) + ", " +
                         std::to_string(predicted.size()) + ", " + std::to_string(prev.size()) + ")");
    }
    std::vector<Direction> a(actual.size()), p(actual.size());
    for (std::size_t i = 0; i < actual.size(); ++i) {
        a[i] = actual[i] - prev[i] > 0.0 ? Direction::Up : Direction::Down;
        p[i] = predicted[i] - prev[i] > 0.0 ? Direction::Up : Direction::Down;
    }
    return {std::move(a), std::move(p)};
}

ConfusionCounts confusion(std::span<const Direction> actual, std::span<const Direction> predicted) {
    if (actual.size() != predicted.size()) {
        throw ShapeError("confusion: length mismatch " + std::to_string(actual.size()) + " vs " +
                         std::to_string(predicted.size()));
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const bool act_up = actual[i] == Direction::Up;
        const bool pred_up = predicted[i] == Direction::Up;
        if (act_up && pred_up) ++c.tp;
        else if (!act_up && !pred_up) ++c.tn;
        else if (!act_up && pred_up) ++c.fp;
        else ++c.fn;
    }
    return c;
}

ClassificationMetrics classification_metrics(const ConfusionCounts& c) {
    if (c.total() < 1) throw DataError("classification_metrics: no evaluated steps");
    ClassificationMetrics m;
    if (c.tp + c.fp > 0) {
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
        m.precision_defined = true;
    }
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    m.accuracy_defined = true;
    if (c.tp + c.fn > 0) {
        m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
        m.recall_defined = true;
    }
    return m;
}

std::vector<double> sma(std::span<const double> series, int window) {
    const int n = static_cast<int>(series.size());
    if (window < 1 || window > n) {
        throw DataError("sma: window " + std::to_string(window) + " out of range for series of length " +
                        std::to_string(n));
    }
    std::vector<double> out(static_cast<std::size_t>(n - window + 1));
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (int j = 0; j < window; ++j) s += series[i + static_cast<std::size_t>(j)];
        out[i] = s / window;
    }
    return out;
}

std::vector<double> ema(std::span<const double> series, double alpha) {
    if (series.empty()) throw DataError("ema: empty series");
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ConfigError("ema: alpha must be in (0,1], got " + std::to_string(alpha));
    }
    std::vector<double> out(series.size());
    out[0] = series[0];
    for (std::size_t i = 1; i < series.size(); ++i) {
        out[i] = alpha * series[i] + (1.0 - alpha) * out[i - 1];
    }
    return out;
}

PearsonResult pearson_matrix(const std::vector<std::array<double, 6>>& rows) {
    const std::size_t n = rows.size();
    if (n < 2) throw DataError("pearson_matrix: need at least 2 rows, got " + std::to_string(n));

    std::array<double, 6> mean{};
    for (const auto& r : rows) {
        for (int j = 0; j < kFeatureCount; ++j) mean[static_cast<std::size_t>(j)] += r[static_cast<std::size_t>(j)];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    std::array<double, 6> sq{};
    for (const auto& r : rows) {
        for (int j = 0; j < kFeatureCount; ++j) {
            const double d = r[static_cast<std::size_t>(j)] - mean[static_cast<std::size_t>(j)];
            sq[static_cast<std::size_t>(j)] += d * d;
        }
    }

    PearsonResult res;
    res.matrix = Tensor({6, 6});
    for (int j = 0; j < kFeatureCount; ++j) res.degenerate[static_cast<std::size_t>(j)] = sq[static_cast<std::size_t>(j)] == 0.0;

    for (int a = 0; a < kFeatureCount; ++a) {
        res.matrix.at(a, a) = 1.0;
        for (int b = a + 1; b < kFeatureCount; ++b) {
            double corr = 0.0;
            if (!res.degenerate[static_cast<std::size_t>(a)] && !res.degenerate[static_cast<std::size_t>(b)]) {
                double cov = 0.0;
                for (const auto& r : rows) {
                    cov += (r[static_cast<std::size_t>(a)] - mean[static_cast<std::size_t>(a)]) *
                           (r[static_cast<std::size_t>(b)] - mean[static_cast<std::size_t>(b)]);
                }
                corr = cov / std::sqrt(sq[static_cast<std::size_t>(a)] * sq[static_cast<std::size_t>(b)]);
            }
            res.matrix.at(a, b) = corr;
            res.matrix.at(b, a) = corr;
        }
    }
    return res;
}

std::vector<double> persistence_baseline(std::span<const WindowSample> samples,
                                         const ScalerParams& scaler) {
    if (samples.empty()) throw DataError("persistence_baseline: no samples");
    std::vector<double> out;
    out.reserve(samples.size());
    for (const WindowSample& ws : samples) {
        out.push_back(inverse_transform(ws.prev_close, scaler, kClose));
    }
    return out;
}

}  // namespace sphnet
