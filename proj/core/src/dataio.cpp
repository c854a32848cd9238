#include "sphnet/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "sphnet/errors.hpp"

namespace sphnet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    out.push_back(field);
    return out;
}

double parse_cell(const std::string& s) {
    if (s.empty()) return kNaN;
    const char* begin = s.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + s.size()) return kNaN;  // unparseable -> missing
    return v;
}

}  // namespace

// ---------------------------------------------------------------- dates

// Howard Hinnant's civil-days algorithm.
long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097L + static_cast<long>(doe) - 719468L;
}

std::string civil_from_days(long z) {
    z += 719468L;
    const long era = (z >= 0 ? z : z - 146096L) / 146097L;
    const unsigned doe = static_cast<unsigned>(z - era * 146097L);
    const unsigned yoe = (doe - doe / 1460u + doe / 36524u - doe / 146096u) / 365u;
    const long y = static_cast<long>(yoe) + era * 400L;
    const unsigned doy = doe - (365u * yoe + yoe / 4u - yoe / 100u);
    const unsigned mp = (5u * doy + 2u) / 153u;
    const unsigned d = doy - (153u * mp + 2u) / 5u + 1u;
    const unsigned m = mp + (mp < 10 ? 3u : static_cast<unsigned>(-9));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04ld-%02u-%02u", y + (m <= 2), m, d);
    return buf;
}

bool parse_iso_date(const std::string& s, int& y, int& m, int& d) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    y = std::stoi(s.substr(0, 4));
    m = std::stoi(s.substr(5, 2));
    d = std::stoi(s.substr(8, 2));
    if (m < 1 || m > 12 || d < 1 || d > 31) return false;
    // Round-trip through the day count to reject impossible days (e.g. Feb 30).
    return civil_from_days(days_from_civil(y, m, d)) == s;
}

// ---------------------------------------------------------------- PriceSeries

bool PriceSeries::has_missing() const {
    for (const auto& r : rows) {
        for (double v : r) {
            if (std::isnan(v)) return true;
        }
    }
    return false;
}

PriceSeries load_ohlcv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw DataError("cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();

    const std::vector<std::string> header = split_csv_line(line);
    const std::vector<std::string> expected = split_csv_line(kCsvHeader);
    if (header != expected) {
        std::string missing;
        for (const auto& col : expected) {
            if (std::find(header.begin(), header.end(), col) == header.end()) {
                if (!missing.empty()) missing += ",";
                missing += col;
            }
        }
        if (!missing.empty()) {
            throw DataError("bad header: missing columns: " + missing +
                            " (expected: " + std::string(kCsvHeader) + ")");
        }
        throw DataError("bad header: '" + line + "' (expected: " + std::string(kCsvHeader) + ")");
    }

    struct Row {
        std::string date;
        std::array<double, 6> vals;
    };
    std::vector<Row> raw;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 7) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields, got " +
                            std::to_string(cells.size()));
        }
        int y, m, d;
        if (!parse_iso_date(cells[0], y, m, d)) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad date '" + cells[0] + "'");
        }
        Row r;
        r.date = cells[0];
        for (int j = 0; j < kFeatureCount; ++j) r.vals[static_cast<std::size_t>(j)] = parse_cell(cells[static_cast<std::size_t>(j) + 1]);
        raw.push_back(std::move(r));
    }
    if (raw.empty()) throw DataError("'" + path.string() + "' has no data rows");

    // ISO dates sort correctly as strings.
    std::stable_sort(raw.begin(), raw.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < raw.size(); ++i) {
        if (raw[i].date == raw[i - 1].date) {
            throw DataError("duplicate date '" + raw[i].date + "' in '" + path.string() + "'");
        }
    }

    PriceSeries s;
    s.ticker = path.stem().string();
    s.dates.reserve(raw.size());
    s.rows.reserve(raw.size());
    for (auto& r : raw) {
        s.dates.push_back(std::move(r.date));
        s.rows.push_back(r.vals);
    }
    return s;
}

PriceSeries forward_fill(const PriceSeries& s) {
    PriceSeries out = s;
    for (int j = 0; j < kFeatureCount; ++j) {
        if (!out.rows.empty() && std::isnan(out.rows[0][static_cast<std::size_t>(j)])) {
            throw DataError(std::string("no predecessor for ") + kFeatureNames[static_cast<std::size_t>(j)] + " at row 0");
        }
        for (std::size_t i = 1; i < out.rows.size(); ++i) {
            if (std::isnan(out.rows[i][static_cast<std::size_t>(j)])) {
                out.rows[i][static_cast<std::size_t>(j)] = out.rows[i - 1][static_cast<std::size_t>(j)];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- scaler

ScalerParams fit_scaler(const std::vector<std::array<double, 6>>& rows) {
    if (rows.empty()) throw DataError("fit_scaler: no rows");
    ScalerParams sc;
    for (int j = 0; j < kFeatureCount; ++j) {
        sc.min[static_cast<std::size_t>(j)] = rows[0][static_cast<std::size_t>(j)];
        sc.max[static_cast<std::size_t>(j)] = rows[0][static_cast<std::size_t>(j)];
    }
    for (const auto& r : rows) {
        for (int j = 0; j < kFeatureCount; ++j) {
            sc.min[static_cast<std::size_t>(j)] = std::min(sc.min[static_cast<std::size_t>(j)], r[static_cast<std::size_t>(j)]);
            sc.max[static_cast<std::size_t>(j)] = std::max(sc.max[static_cast<std::size_t>(j)], r[static_cast<std::size_t>(j)]);
        }
    }
    return sc;
}

std::array<double, 6> transform_row(const std::array<double, 6>& row, const ScalerParams& sc) {
    std::array<double, 6> out;
    for (int j = 0; j < kFeatureCount; ++j) {
        const double range = sc.max[static_cast<std::size_t>(j)] - sc.min[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(j)] = range > 0.0 ? (row[static_cast<std::size_t>(j)] - sc.min[static_cast<std::size_t>(j)]) / range : 0.0;
    }
    return out;
}

std::vector<std::array<double, 6>> transform(const std::vector<std::array<double, 6>>& rows,
                                             const ScalerParams& sc) {
    std::vector<std::array<double, 6>> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(transform_row(r, sc));
    return out;
}

double inverse_transform(double v, const ScalerParams& sc, int feature) {
    const double range = sc.max[static_cast<std::size_t>(feature)] - sc.min[static_cast<std::size_t>(feature)];
    return range > 0.0 ? v * range + sc.min[static_cast<std::size_t>(feature)] : sc.min[static_cast<std::size_t>(feature)];
}

// ---------------------------------------------------------------- windows

std::vector<WindowSample> make_windows(const PriceSeries& normalized, int T) {
    const int L = static_cast<int>(normalized.size());
    if (T < 1) throw ConfigError("window length must be >= 1, got " + std::to_string(T));
    if (L <= T) {
        throw DataError("insufficient data: " + std::to_string(L) + " rows with window length " +
                        std::to_string(T) + " (need at least " + std::to_string(T + 1) + ")");
    }
    std::vector<WindowSample> samples;
    samples.reserve(static_cast<std::size_t>(L - T));
    for (int i = 0; i + T < L; ++i) {
        WindowSample ws;
        ws.input = Tensor({T, kFeatureCount});
        for (int r = 0; r < T; ++r) {
            for (int j = 0; j < kFeatureCount; ++j) {
                ws.input.at(r, j) = normalized.rows[static_cast<std::size_t>(i + r)][static_cast<std::size_t>(j)];
            }
        }
        ws.target = normalized.rows[static_cast<std::size_t>(i + T)][kClose];
        ws.target_date = normalized.dates[static_cast<std::size_t>(i + T)];
        ws.prev_close = normalized.rows[static_cast<std::size_t>(i + T - 1)][kClose];
        samples.push_back(std::move(ws));
    }
    return samples;
}

DatasetSplit chrono_split(std::vector<WindowSample> samples, double ratio, ScalerParams scaler) {
    const int n = static_cast<int>(samples.size());
    if (n < 2) throw DataError("chrono_split: need at least 2 samples, got " + std::to_string(n));
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ConfigError("split ratio must be in (0,1), got " + std::to_string(ratio));
    }
    const int train_n = static_cast<int>(std::floor(ratio * n));
    if (train_n == 0 || train_n == n) {
        throw DataError("chrono_split: ratio " + std::to_string(ratio) + " leaves an empty side for " +
                        std::to_string(n) + " samples");
    }
    DatasetSplit split;
    split.scaler = scaler;
    split.train.assign(std::make_move_iterator(samples.begin()),
                       std::make_move_iterator(samples.begin() + train_n));
    split.test.assign(std::make_move_iterator(samples.begin() + train_n),
                      std::make_move_iterator(samples.end()));
    return split;
}

int train_sample_count(int series_len, int T, double ratio) {
    const int n = series_len - T;
    return static_cast<int>(std::floor(ratio * n));
}

DatasetSplit prepare_dataset(const PriceSeries& filled, int T, double ratio) {
    if (filled.has_missing()) {
        throw DataError("prepare_dataset: series still has missing values; run forward_fill first");
    }
    const int L = static_cast<int>(filled.size());
    if (L <= T) {
        throw DataError("insufficient data: " + std::to_string(L) + " rows with window length " +
                        std::to_string(T) + " (need at least " + std::to_string(T + 1) + ")");
    }
    const int train_n = train_sample_count(L, T, ratio);
    // The last training window covers rows [train_n-1, train_n-1+T) and its
    // target sits at row train_n-1+T, so rows [0, train_n+T) are the training
    // date range. The scaler never sees anything later.
    const int fit_rows = std::min(train_n + T, L);
    if (fit_rows < 1) throw DataError("prepare_dataset: no training rows");
    std::vector<std::array<double, 6>> head(filled.rows.begin(), filled.rows.begin() + fit_rows);
    const ScalerParams scaler = fit_scaler(head);

    PriceSeries norm = filled;
    norm.rows = transform(filled.rows, scaler);
    return chrono_split(make_windows(norm, T), ratio, scaler);
}

// ---------------------------------------------------------------- patchify

Tensor patchify(const Tensor& x, int P) {
    if (x.ndim() != 2) throw ShapeError("patchify: expected 2-D input, got " + x.shape_str());
    const int T = x.rows(), d = x.cols();
    if (P < 1 || T % P != 0) {
        throw ShapeError("patchify: " + std::to_string(P) + " does not divide " + std::to_string(T));
    }
    return x.reshaped({P, T / P * d});
}

Tensor unpatchify(const Tensor& patches, int T, int d) {
    if (patches.ndim() != 2) throw ShapeError("unpatchify: expected 2-D input, got " + patches.shape_str());
    if (patches.size() != static_cast<std::size_t>(T) * static_cast<std::size_t>(d)) {
        throw ShapeError("unpatchify: " + patches.shape_str() + " cannot reshape to [" +
                         std::to_string(T) + "x" + std::to_string(d) + "]");
    }
    return patches.reshaped({T, d});
}

}  // namespace sphnet
