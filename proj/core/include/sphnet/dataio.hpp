#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "sphnet/tensor.hpp"

namespace sphnet {

// Fixed feature order used by every CSV and every tensor column.
inline constexpr std::array<const char*, 6> kFeatureNames{"Open", "High", "Low",
                                                          "Close", "Adj Close", "Volume"};
inline constexpr int kFeatureCount = 6;
enum Feature { kOpen = 0, kHigh, kLow, kClose, kAdjClose, kVolume };

inline constexpr const char* kCsvHeader = "Date,Open,High,Low,Close,Adj Close,Volume";

// ---- calendar helpers (proleptic Gregorian) ----
bool parse_iso_date(const std::string& s, int& y, int& m, int& d);
long days_from_civil(int y, int m, int d);
std::string civil_from_days(long days);  // inverse, as YYYY-MM-DD

// Dated table of the six financial metrics for one ticker. Missing values are
// stored as NaN until forward_fill removes them.
struct PriceSeries {
    std::string ticker;
    std::vector<std::string> dates;            // ISO-8601, strictly increasing
    std::vector<std::array<double, 6>> rows;   // aligned with dates

    std::size_t size() const { return rows.size(); }
    bool has_missing() const;
};

// Parses the declared CSV format. Rows may arrive unsorted; the loader sorts by
// date and rejects duplicates. Empty or unparseable numeric cells become NaN.
PriceSeries load_ohlcv(const std::filesystem::path& path);

// Replaces each missing cell with the most recent prior value in its column.
PriceSeries forward_fill(const PriceSeries& s);

// Per-feature MinMax affine map fitted so the fit range becomes [0,1].
struct ScalerParams {
    std::array<double, 6> min{};
    std::array<double, 6> max{};
};

ScalerParams fit_scaler(const std::vector<std::array<double, 6>>& rows);
std::array<double, 6> transform_row(const std::array<double, 6>& row, const ScalerParams& sc);
std::vector<std::array<double, 6>> transform(const std::vector<std::array<double, 6>>& rows,
                                             const ScalerParams& sc);
double inverse_transform(double v, const ScalerParams& sc, int feature);

// One (T×d window, next-day-close target) pair, all in normalized units.
struct WindowSample {
    Tensor input;             // T×6
    double target = 0.0;      // Close one step past the window
    std::string target_date;
    double prev_close = 0.0;  // Close on the window's last day
};

// Sliding windows with stride 1 over an already-normalized series.
std::vector<WindowSample> make_windows(const PriceSeries& normalized, int T);

struct DatasetSplit {
    std::vector<WindowSample> train;
    std::vector<WindowSample> test;
    ScalerParams scaler;
};

// First floor(ratio*N) samples become train, the rest test; order preserved.
DatasetSplit chrono_split(std::vector<WindowSample> samples, double ratio, ScalerParams scaler);

// Number of samples that land in the training side for a series of length L.
int train_sample_count(int series_len, int T, double ratio);

// Full preprocessing pipeline: fits the scaler on the rows covered by training
// windows and their targets only, normalizes everything, windows, and splits.
DatasetSplit prepare_dataset(const PriceSeries& filled, int T, double ratio);

// Rows [i*T/P, (i+1)*T/P) flattened row-major into patch vector i. Because the
// input is row-major this is a pure reshape.
Tensor patchify(const Tensor& x, int P);
Tensor unpatchify(const Tensor& patches, int T, int d);

}  // namespace sphnet
