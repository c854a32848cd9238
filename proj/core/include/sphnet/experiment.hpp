#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sphnet/dataio.hpp"
#include "sphnet/eval.hpp"
#include "sphnet/model.hpp"
#include "sphnet/train.hpp"

namespace sphnet {

enum class Regime { LinearTrend, SinusoidPlusTrend, RandomWalk };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

struct SyntheticSpec {
    std::uint64_t seed = 1;
    int length = 600;
    Regime regime = Regime::SinusoidPlusTrend;
};

// Deterministic OHLCV fixture in the declared CSV format. High >= max(Open,
// Close), Low <= min(Open, Close), Volume > 0, Adj Close == Close; the
// linear-trend regime has a strictly increasing Close column.
void gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_csv);

struct EmitFlags {
    bool history = true;
    bool predictions = true;
    bool correlations = true;
    bool moving_averages = true;
};

struct ExperimentConfig {
    std::string data_path;                   // one of data_path / synthetic
    std::optional<SyntheticSpec> synthetic;
    ModelConfig model;
    TrainConfig train;
    double split_ratio = 0.7;
    std::filesystem::path output_dir = "out";
    EmitFlags emit;
    int sma_window = 20;
    int ema_span = 20;

    void validate() const;
};

// "paper" is the canonical configuration; "desk" is the small profile used for
// quick verification runs.
void apply_profile(ExperimentConfig& cfg, const std::string& profile);
ExperimentConfig default_config(const std::string& profile);

ExperimentConfig parse_config_json(const std::string& text);
std::string config_to_json_string(const ExperimentConfig& cfg);

struct ExperimentReport {
    std::string dataset_source;
    std::string ticker;
    int rows = 0;
    int train_samples = 0;
    int test_samples = 0;
    ExperimentConfig config;
    ScalerParams scaler;

    RegressionMetrics regression;  // price scale
    ConfusionCounts confusion_counts;
    ClassificationMetrics classification;
    RegressionMetrics baseline_regression;
    ConfusionCounts baseline_confusion;
    ClassificationMetrics baseline_classification;
    std::vector<EpochStats> history;

    // Plot data, written to CSV files rather than report.json.
    std::vector<std::string> test_dates;
    std::vector<double> test_actual;     // price scale
    std::vector<double> test_predicted;  // price scale
    std::vector<double> test_baseline;   // price scale
    std::vector<std::string> all_dates;
    std::vector<double> close_series;    // price scale
    PearsonResult pearson;

    double total_seconds = 0.0;  // wall clock; deliberately not serialized
};

// Deterministic byte-for-byte serialization for identical runs.
std::string report_to_json_string(const ExperimentReport& report);

// Trains and evaluates on an already prepared split; shared by single runs and
// ablation cells so their numbers agree exactly.
ExperimentReport run_on_split(const ExperimentConfig& cfg, const PriceSeries& filled,
                              const DatasetSplit& split, const std::string& source);

// Full pipeline: resolve data (generating the fixture when synthetic), clean,
// scale, window, split, train, evaluate, and write report + plot files into
// cfg.output_dir.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

void emit_plot_data(const ExperimentReport& report, const std::filesystem::path& out_dir,
                    const EmitFlags& emit);

struct AblationCell {
    int patches = 0;
    int heads = 0;
    bool ok = false;
    std::string error;
    RegressionMetrics regression;
    ConfusionCounts confusion_counts;
    ClassificationMetrics classification;
};

struct AblationResult {
    std::vector<AblationCell> cells;
};

inline const std::vector<int> kAblationGrid{2, 4, 8, 16};

// Runs every (patches, heads) cell on one shared preprocessed dataset with the
// base config's seeds. Invalid cells are marked failed and the sweep continues.
// max_threads <= 1 runs serially; results are identical either way.
AblationResult run_ablation(const ExperimentConfig& base, const std::vector<int>& patch_set,
                            const std::vector<int>& head_set, int max_threads = 1);

std::string ablation_table_csv(const AblationResult& result);

}  // namespace sphnet
