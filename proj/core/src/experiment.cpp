#include "sphnet/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "sphnet/errors.hpp"

namespace sphnet {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out.good()) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace

// ---------------------------------------------------------------- synthetic

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::LinearTrend: return "linear-trend";
        case Regime::SinusoidPlusTrend: return "sinusoid-plus-trend";
        case Regime::RandomWalk: return "random-walk";
    }
    return "?";
}

Regime regime_from_name(const std::string& name) {
    if (name == "linear-trend") return Regime::LinearTrend;
    if (name == "sinusoid-plus-trend") return Regime::SinusoidPlusTrend;
    if (name == "random-walk") return Regime::RandomWalk;
    throw ConfigError("unknown regime '" + name +
                      "' (expected linear-trend, sinusoid-plus-trend or random-walk)");
}

namespace {

double next_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Box-Muller; both uniforms drawn every call so the stream stays aligned.
double next_normal(std::mt19937_64& rng) {
    const double u1 = 1.0 - next_unit(rng);
    const double u2 = next_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

constexpr double kBasePrice = 100.0;
constexpr long kBaseDay = 16436;  // 2015-01-01

}  // namespace

void gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_csv) {
    if (spec.length < 64) {
        throw DataError("synthetic length must be >= 64, got " + std::to_string(spec.length));
    }
    std::mt19937_64 rng(spec.seed);

    std::vector<double> close(static_cast<std::size_t>(spec.length));
    switch (spec.regime) {
        case Regime::LinearTrend:
            for (int t = 0; t < spec.length; ++t) close[static_cast<std::size_t>(t)] = kBasePrice + 0.25 * t;
            break;
        case Regime::SinusoidPlusTrend:
            for (int t = 0; t < spec.length; ++t) {
                close[static_cast<std::size_t>(t)] =
                    kBasePrice + 0.02 * t + 15.0 * std::sin(2.0 * 3.14159265358979323846 * t / 40.0);
            }
            break;
        case Regime::RandomWalk: {
            double level = std::log(kBasePrice);
            for (int t = 0; t < spec.length; ++t) {
                if (t > 0) level += 0.01 * next_normal(rng);
                close[static_cast<std::size_t>(t)] = std::exp(level);
            }
            break;
        }
    }

    std::string text = std::string(kCsvHeader) + "\n";
    char buf[256];
    for (int t = 0; t < spec.length; ++t) {
        const double c = close[static_cast<std::size_t>(t)];
        const double prev = t > 0 ? close[static_cast<std::size_t>(t) - 1] : c;
        const double open = prev * (1.0 + 0.002 * next_normal(rng));
        const double high = std::max(open, c) * (1.0 + 0.004 * std::abs(next_normal(rng)));
        const double low = std::min(open, c) * (1.0 - 0.004 * std::abs(next_normal(rng)));
        const double volume = 1e6 * (1.0 + 0.1 * std::abs(next_normal(rng)));
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.0f\n",
                      civil_from_days(kBaseDay + t).c_str(), open, high, low, c, c, volume);
        text += buf;
    }
    write_text_file(out_csv, text);
}

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
    if (!data_path.empty() && synthetic.has_value()) {
        throw ConfigError("config specifies both data_path and synthetic");
    }
    if (data_path.empty() && !synthetic.has_value()) {
        throw ConfigError("config needs a data source: data_path or synthetic");
    }
    model.validate();
    train.validate();
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
        throw ConfigError("split_ratio must be in (0,1), got " + std::to_string(split_ratio));
    }
    if (sma_window < 1) throw ConfigError("sma_window must be >= 1");
    if (ema_span < 1) throw ConfigError("ema_span must be >= 1");
}

void apply_profile(ExperimentConfig& cfg, const std::string& profile) {
    if (profile == "paper") {
        cfg.model.d_model = 128;
        cfg.model.vit_layers = 4;
        cfg.model.trf_layers = 4;
        cfg.model.ffn_dim = 512;
        cfg.train.epochs = 100;
    } else if (profile == "desk") {
        cfg.model.d_model = 32;
        cfg.model.vit_layers = 2;
        cfg.model.trf_layers = 2;
        cfg.model.ffn_dim = 128;
        cfg.train.epochs = 30;
    } else {
        throw ConfigError("unknown profile '" + profile + "' (expected paper or desk)");
    }
    cfg.model.T = 32;
    cfg.model.d = 6;
    cfg.model.P = 8;
    cfg.model.heads = 8;
    cfg.train.learning_rate = 1e-3;
    cfg.train.batch_size = 32;
}

ExperimentConfig default_config(const std::string& profile) {
    ExperimentConfig cfg;
    apply_profile(cfg, profile);
    return cfg;
}

namespace {

void check_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&key](const char* a) { return key == a; }) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
    try {
        check_keys(j, {"profile", "data_path", "synthetic", "model", "train", "split_ratio",
                       "output_dir", "emit", "sma_window", "ema_span"}, "config");
        ExperimentConfig cfg;
        if (j.contains("profile")) apply_profile(cfg, j["profile"].get<std::string>());
        if (j.contains("data_path")) cfg.data_path = j["data_path"].get<std::string>();
        if (j.contains("synthetic")) {
            const auto& s = j["synthetic"];
            check_keys(s, {"seed", "length", "regime"}, "synthetic");
            SyntheticSpec spec;
            if (s.contains("seed")) spec.seed = s["seed"].get<std::uint64_t>();
            if (s.contains("length")) spec.length = s["length"].get<int>();
            if (s.contains("regime")) spec.regime = regime_from_name(s["regime"].get<std::string>());
            cfg.synthetic = spec;
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            check_keys(m, {"T", "d", "P", "d_model", "vit_layers", "trf_layers", "heads", "ffn_dim",
                           "activation", "seed"}, "model");
            if (m.contains("T")) cfg.model.T = m["T"].get<int>();
            if (m.contains("d")) cfg.model.d = m["d"].get<int>();
            if (m.contains("P")) cfg.model.P = m["P"].get<int>();
            if (m.contains("d_model")) cfg.model.d_model = m["d_model"].get<int>();
            if (m.contains("vit_layers")) cfg.model.vit_layers = m["vit_layers"].get<int>();
            if (m.contains("trf_layers")) cfg.model.trf_layers = m["trf_layers"].get<int>();
            if (m.contains("heads")) cfg.model.heads = m["heads"].get<int>();
            if (m.contains("ffn_dim")) cfg.model.ffn_dim = m["ffn_dim"].get<int>();
            if (m.contains("activation")) cfg.model.activation = activation_from_name(m["activation"].get<std::string>());
            if (m.contains("seed")) cfg.model.seed = m["seed"].get<std::uint64_t>();
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            check_keys(t, {"learning_rate", "batch_size", "epochs", "beta1", "beta2", "eps_adam",
                           "shuffle_seed"}, "train");
            if (t.contains("learning_rate")) cfg.train.learning_rate = t["learning_rate"].get<double>();
            if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<int>();
            if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<int>();
            if (t.contains("beta1")) cfg.train.beta1 = t["beta1"].get<double>();
            if (t.contains("beta2")) cfg.train.beta2 = t["beta2"].get<double>();
            if (t.contains("eps_adam")) cfg.train.eps_adam = t["eps_adam"].get<double>();
            if (t.contains("shuffle_seed")) cfg.train.shuffle_seed = t["shuffle_seed"].get<std::uint64_t>();
        }
        if (j.contains("split_ratio")) cfg.split_ratio = j["split_ratio"].get<double>();
        if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("emit")) {
            const auto& e = j["emit"];
            check_keys(e, {"history", "predictions", "correlations", "moving_averages"}, "emit");
            if (e.contains("history")) cfg.emit.history = e["history"].get<bool>();
            if (e.contains("predictions")) cfg.emit.predictions = e["predictions"].get<bool>();
            if (e.contains("correlations")) cfg.emit.correlations = e["correlations"].get<bool>();
            if (e.contains("moving_averages")) cfg.emit.moving_averages = e["moving_averages"].get<bool>();
        }
        if (j.contains("sma_window")) cfg.sma_window = j["sma_window"].get<int>();
        if (j.contains("ema_span")) cfg.ema_span = j["ema_span"].get<int>();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
}

namespace {

// include_output_dir=false for report serialization: the output directory is
// run metadata, and identical experiments must serialize identically wherever
// their outputs land.
ordered_json config_json(const ExperimentConfig& cfg, bool include_output_dir = true) {
    ordered_json j;
    if (!cfg.data_path.empty()) j["data_path"] = cfg.data_path;
    if (cfg.synthetic) {
        j["synthetic"] = {{"seed", cfg.synthetic->seed},
                          {"length", cfg.synthetic->length},
                          {"regime", regime_name(cfg.synthetic->regime)}};
    }
    j["model"] = {{"T", cfg.model.T},
                  {"d", cfg.model.d},
                  {"P", cfg.model.P},
                  {"d_model", cfg.model.d_model},
                  {"vit_layers", cfg.model.vit_layers},
                  {"trf_layers", cfg.model.trf_layers},
                  {"heads", cfg.model.heads},
                  {"ffn_dim", cfg.model.ffn_dim},
                  {"activation", activation_name(cfg.model.activation)},
                  {"seed", cfg.model.seed}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"eps_adam", cfg.train.eps_adam},
                  {"shuffle_seed", cfg.train.shuffle_seed}};
    j["split_ratio"] = cfg.split_ratio;
    if (include_output_dir) j["output_dir"] = cfg.output_dir.string();
    j["emit"] = {{"history", cfg.emit.history},
                 {"predictions", cfg.emit.predictions},
                 {"correlations", cfg.emit.correlations},
                 {"moving_averages", cfg.emit.moving_averages}};
    j["sma_window"] = cfg.sma_window;
    j["ema_span"] = cfg.ema_span;
    return j;
}

}  // namespace

std::string config_to_json_string(const ExperimentConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

// ---------------------------------------------------------------- reports

namespace {

ordered_json classification_json(const ConfusionCounts& c, const ClassificationMetrics& m) {
    return {{"tp", c.tp},
            {"tn", c.tn},
            {"fp", c.fp},
            {"fn", c.fn},
            {"precision", m.precision},
            {"precision_defined", m.precision_defined},
            {"accuracy", m.accuracy},
            {"recall", m.recall},
            {"recall_defined", m.recall_defined}};
}

}  // namespace

std::string report_to_json_string(const ExperimentReport& r) {
    ordered_json j;
    j["format_version"] = 1;
    j["dataset"] = {{"source", r.dataset_source},
                    {"ticker", r.ticker},
                    {"rows", r.rows},
                    {"train_samples", r.train_samples},
                    {"test_samples", r.test_samples}};
    j["scaler"] = {{"min", r.scaler.min}, {"max", r.scaler.max}};
    j["config"] = config_json(r.config, false);
    j["regression"] = {{"mse", r.regression.mse}, {"r2", r.regression.r2}, {"n", r.regression.n}};
    j["classification"] = classification_json(r.confusion_counts, r.classification);
    j["baseline"] = {{"mse", r.baseline_regression.mse},
                     {"r2", r.baseline_regression.r2},
                     {"classification",
                      classification_json(r.baseline_confusion, r.baseline_classification)}};
    auto& hist = j["history"] = ordered_json::array();
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        hist.push_back({{"epoch", i + 1},
                        {"train_loss", r.history[i].train_loss},
                        {"test_mse", r.history[i].test_mse}});
    }
    return j.dump(2) + "\n";
}

ExperimentReport run_on_split(const ExperimentConfig& cfg, const PriceSeries& filled,
                              const DatasetSplit& split, const std::string& source) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult trained = train_model(cfg.model, cfg.train, split);

    ExperimentReport r;
    r.dataset_source = source;
    r.ticker = filled.ticker;
    r.rows = static_cast<int>(filled.size());
    r.train_samples = static_cast<int>(split.train.size());
    r.test_samples = static_cast<int>(split.test.size());
    r.config = cfg;
    r.scaler = split.scaler;
    r.history = trained.history.epochs;

    // Price-scale evaluation on the test side.
    std::vector<double> prev_price;
    r.test_actual.reserve(split.test.size());
    r.test_predicted.reserve(split.test.size());
    for (const WindowSample& ws : split.test) {
        r.test_dates.push_back(ws.target_date);
        r.test_actual.push_back(inverse_transform(ws.target, split.scaler, kClose));
        r.test_predicted.push_back(
            inverse_transform(forward(cfg.model, trained.params, ws.input), split.scaler, kClose));
        prev_price.push_back(inverse_transform(ws.prev_close, split.scaler, kClose));
    }
    r.test_baseline = persistence_baseline(split.test, split.scaler);

    r.regression.mse = mse_loss(r.test_predicted, r.test_actual);
    r.regression.r2 = r2_score(r.test_actual, r.test_predicted);
    r.regression.n = static_cast<int>(split.test.size());
    auto [act_dir, pred_dir] = direction_labels(r.test_actual, r.test_predicted, prev_price);
    r.confusion_counts = confusion(act_dir, pred_dir);
    r.classification = classification_metrics(r.confusion_counts);

    r.baseline_regression.mse = mse_loss(r.test_baseline, r.test_actual);
    r.baseline_regression.r2 = r2_score(r.test_actual, r.test_baseline);
    r.baseline_regression.n = static_cast<int>(split.test.size());
    auto [bact_dir, bpred_dir] = direction_labels(r.test_actual, r.test_baseline, prev_price);
    r.baseline_confusion = confusion(bact_dir, bpred_dir);
    r.baseline_classification = classification_metrics(r.baseline_confusion);

    r.all_dates = filled.dates;
    r.close_series.reserve(filled.size());
    for (const auto& row : filled.rows) r.close_series.push_back(row[kClose]);
    r.pearson = pearson_matrix(filled.rows);

    r.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

namespace {

struct ResolvedData {
    PriceSeries filled;
    std::string source;
};

ResolvedData resolve_data(const ExperimentConfig& cfg) {
    std::filesystem::path csv;
    std::string source;
    if (cfg.synthetic) {
        std::filesystem::create_directories(cfg.output_dir);
        csv = cfg.output_dir / "data.csv";
        gen_synthetic(*cfg.synthetic, csv);
        source = "synthetic:" + regime_name(cfg.synthetic->regime) +
                 ":seed=" + std::to_string(cfg.synthetic->seed) +
                 ":length=" + std::to_string(cfg.synthetic->length);
    } else {
        csv = cfg.data_path;
        source = cfg.data_path;
    }
    return {forward_fill(load_ohlcv(csv)), source};
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ResolvedData data = resolve_data(cfg);
    DatasetSplit split = prepare_dataset(data.filled, cfg.model.T, cfg.split_ratio);
    ExperimentReport report = run_on_split(cfg, data.filled, split, data.source);
    std::filesystem::create_directories(cfg.output_dir);
    write_text_file(cfg.output_dir / "report.json", report_to_json_string(report));
    emit_plot_data(report, cfg.output_dir, cfg.emit);
    return report;
}

void emit_plot_data(const ExperimentReport& report, const std::filesystem::path& out_dir,
                    const EmitFlags& emit) {
    std::filesystem::create_directories(out_dir);

    if (emit.predictions) {
        std::string text = "date,actual,predicted,baseline\n";
        for (std::size_t i = 0; i < report.test_dates.size(); ++i) {
            text += report.test_dates[i] + "," + fmt_full(report.test_actual[i]) + "," +
                    fmt_full(report.test_predicted[i]) + "," + fmt_full(report.test_baseline[i]) + "\n";
        }
        write_text_file(out_dir / "predictions.csv", text);
    }

    if (emit.history) {
        std::string text = "epoch,train_loss,test_mse\n";
        for (std::size_t i = 0; i < report.history.size(); ++i) {
            text += std::to_string(i + 1) + "," + fmt_full(report.history[i].train_loss) + "," +
                    fmt_full(report.history[i].test_mse) + "\n";
        }
        write_text_file(out_dir / "history.csv", text);
    }

    if (emit.correlations) {
        std::string text;
        for (const char* name : kFeatureNames) text += std::string(",") + name;
        text += "\n";
        for (int i = 0; i < kFeatureCount; ++i) {
            text += kFeatureNames[static_cast<std::size_t>(i)];
            for (int j = 0; j < kFeatureCount; ++j) text += "," + fmt_full(report.pearson.matrix.at(i, j));
            text += "\n";
        }
        write_text_file(out_dir / "correlation.csv", text);
    }

    if (emit.moving_averages) {
        const int w = report.config.sma_window;
        const std::vector<double> s = sma(report.close_series, w);
        const std::vector<double> e = ema(report.close_series, ema_alpha_from_span(report.config.ema_span));
        std::string text = "date,close,sma,ema\n";
        for (std::size_t i = 0; i < report.close_series.size(); ++i) {
            // The trailing SMA over [i-w+1, i] is undefined for the first w-1 rows.
            const std::string sma_cell =
                i + 1 >= static_cast<std::size_t>(w) ? fmt_full(s[i + 1 - static_cast<std::size_t>(w)]) : "";
            text += report.all_dates[i] + "," + fmt_full(report.close_series[i]) + "," + sma_cell +
                    "," + fmt_full(e[i]) + "\n";
        }
        write_text_file(out_dir / "moving_averages.csv", text);
    }
}

// ---------------------------------------------------------------- ablation

AblationResult run_ablation(const ExperimentConfig& base, const std::vector<int>& patch_set,
                            const std::vector<int>& head_set, int max_threads) {
    base.validate();
    if (patch_set.empty() || head_set.empty()) throw ConfigError("ablation grid is empty");

    ResolvedData data = resolve_data(base);
    const DatasetSplit split = prepare_dataset(data.filled, base.model.T, base.split_ratio);

    struct CellJob {
        int patches, heads;
        ExperimentConfig cfg;
    };
    std::vector<CellJob> jobs;
    for (int p : patch_set) {
        for (int h : head_set) {
            CellJob job{p, h, base};
            job.cfg.model.P = p;
            job.cfg.model.heads = h;
            job.cfg.output_dir = base.output_dir / "cells" /
                                 ("p" + std::to_string(p) + "_h" + std::to_string(h));
            jobs.push_back(std::move(job));
        }
    }

    AblationResult result;
    result.cells.resize(jobs.size());
    std::vector<ExperimentReport> reports(jobs.size());

    auto run_cell = [&](std::size_t i) {
        AblationCell& cell = result.cells[i];
        cell.patches = jobs[i].patches;
        cell.heads = jobs[i].heads;
        try {
            jobs[i].cfg.validate();
            reports[i] = run_on_split(jobs[i].cfg, data.filled, split, data.source);
            cell.ok = true;
            cell.regression = reports[i].regression;
            cell.confusion_counts = reports[i].confusion_counts;
            cell.classification = reports[i].classification;
        } catch (const Error& e) {
            cell.ok = false;
            cell.error = e.what();
        }
    };

    const int threads = std::clamp(max_threads, 1, static_cast<int>(jobs.size()));
    if (threads <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run_cell(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
                    run_cell(i);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    // File output after the parallel section, in grid order.
    std::filesystem::create_directories(base.output_dir);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!result.cells[i].ok) continue;
        std::filesystem::create_directories(jobs[i].cfg.output_dir);
        write_text_file(jobs[i].cfg.output_dir / "report.json", report_to_json_string(reports[i]));
        emit_plot_data(reports[i], jobs[i].cfg.output_dir, jobs[i].cfg.emit);
    }
    write_text_file(base.output_dir / "ablation.csv", ablation_table_csv(result));
    return result;
}

std::string ablation_table_csv(const AblationResult& result) {
    std::string text = "patches,heads,status,mse,r2,precision,accuracy,recall,error\n";
    for (const AblationCell& c : result.cells) {
        text += std::to_string(c.patches) + "," + std::to_string(c.heads) + ",";
        if (c.ok) {
            text += "ok," + fmt_full(c.regression.mse) + "," + fmt_full(c.regression.r2) + "," +
                    fmt_full(c.classification.precision) + "," + fmt_full(c.classification.accuracy) +
                    "," + fmt_full(c.classification.recall) + ",";
        } else {
            std::string msg = c.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            text += "failed,,,,,," + msg;
        }
        text += "\n";
    }
    return text;
}

}  // namespace sphnet
