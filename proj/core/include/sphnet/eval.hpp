#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "sphnet/dataio.hpp"
#include "sphnet/tensor.hpp"

namespace sphnet {

struct RegressionMetrics {
    double mse = 0.0;
    double r2 = 0.0;
    int n = 0;
};

// 1 - SS_res/SS_tot; requires at least 2 observations with non-constant y.
double r2_score(std::span<const double> y, std::span<const double> y_hat);

enum class Direction { Down = 0, Up = 1 };

// Labels price moves against the previous actual close. Zero change counts as
// Down for both actual and predicted labels.
std::pair<std::vector<Direction>, std::vector<Direction>> direction_labels(
    std::span<const double> actual, std::span<const double> predicted, std::span<const double> prev);

struct ConfusionCounts {
    long tp = 0, tn = 0, fp = 0, fn = 0;
    long total() const { return tp + tn + fp + fn; }
};

// Up is the positive class.
ConfusionCounts confusion(std::span<const Direction> actual, std::span<const Direction> predicted);

struct ClassificationMetrics {
    double precision = 0.0;
    double accuracy = 0.0;
    double recall = 0.0;
    // False when the defining denominator is zero (metric reported as 0).
    bool precision_defined = false;
    bool accuracy_defined = false;
    bool recall_defined = false;
};

ClassificationMetrics classification_metrics(const ConfusionCounts& c);

// Trailing mean; output length = len - window + 1.
std::vector<double> sma(std::span<const double> series, int window);

// e0 = x0; e_t = alpha*x_t + (1-alpha)*e_{t-1}; same length as input.
std::vector<double> ema(std::span<const double> series, double alpha);

inline double ema_alpha_from_span(int span) { return 2.0 / (span + 1.0); }

struct PearsonResult {
    Tensor matrix;                       // 6×6, symmetric, unit diagonal
    std::array<bool, 6> degenerate{};    // true for constant columns
};

PearsonResult pearson_matrix(const std::vector<std::array<double, 6>>& rows);

// Naive forecast: next close equals the window's last observed close,
// reported in price units.
std::vector<double> persistence_baseline(std::span<const WindowSample> samples,
                                         const ScalerParams& scaler);

}  // namespace sphnet
