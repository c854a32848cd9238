#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sphnet/errors.hpp"
#include "sphnet/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw sphnet::DataError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string profile;
    std::optional<std::uint64_t> seed;
    std::string data_path;
};

sphnet::ExperimentConfig resolve_config(const CommonFlags& flags) {
    sphnet::ExperimentConfig cfg;
    if (!flags.config_path.empty()) {
        cfg = sphnet::parse_config_json(read_file(flags.config_path));
    } else {
        cfg = sphnet::default_config("paper");
    }
    if (!flags.profile.empty()) sphnet::apply_profile(cfg, flags.profile);
    if (!flags.data_path.empty()) {
        cfg.data_path = flags.data_path;
        cfg.synthetic.reset();
    }
    if (!flags.out_dir.empty()) cfg.output_dir = flags.out_dir;
    if (flags.seed) {
        cfg.model.seed = *flags.seed;
        cfg.train.shuffle_seed = *flags.seed;
        if (cfg.synthetic) cfg.synthetic->seed = *flags.seed;
    }
    return cfg;
}

int ablation_threads() {
    if (const char* env = std::getenv("SPHNET_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

void print_report_summary(const sphnet::ExperimentReport& r) {
    std::cout << "dataset: " << r.dataset_source << " (" << r.rows << " rows, " << r.train_samples
              << " train / " << r.test_samples << " test samples)\n";
    std::cout << "test mse (price): " << r.regression.mse << "   r2: " << r.regression.r2 << "\n";
    std::cout << "direction: precision " << r.classification.precision << "  accuracy "
              << r.classification.accuracy << "  recall " << r.classification.recall << "\n";
    std::cout << "persistence baseline mse: " << r.baseline_regression.mse << "\n";
    std::cout << "wall clock: " << r.total_seconds << " s\n";
    std::cout << "outputs in " << r.config.output_dir.string() << "\n";
}

// Gradient and invariant self-test; the toy model configuration keeps it fast.
int run_check(int probes, double step) {
    using namespace sphnet;
    bool ok = true;

    ModelConfig toy;
    toy.T = 8;
    toy.d = 6;
    toy.P = 2;
    toy.d_model = 8;
    toy.vit_layers = 1;
    toy.trf_layers = 1;
    toy.heads = 2;
    toy.ffn_dim = 32;
    toy.seed = 1234;
    SphNetParams params = init_params(toy);

    std::mt19937_64 rng(99);
    auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    Tensor window({toy.T, toy.d});
    for (std::size_t i = 0; i < window.size(); ++i) window[i] = unit();
    LossBuilder build = mse_loss_builder(toy, {{window, 0.35}});

    const auto t0 = std::chrono::steady_clock::now();
    const double worst = grad_check(build, params.store, probes, 0xC0FFEE, step);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool grad_ok = worst < 1e-4;
    ok = ok && grad_ok;
    std::cout << (grad_ok ? "[PASS] " : "[FAIL] ") << "gradient check: max rel error " << worst
              << " over " << probes << " probes (" << secs << " s)\n";

    // softmax rows sum to 1
    {
        bool rows_ok = true;
        std::mt19937_64 r2(7);
        for (int trial = 0; trial < 50 && rows_ok; ++trial) {
            Tensor m({4, 5});
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = (static_cast<double>(r2() >> 11) * 0x1.0p-53 - 0.5) * 20.0;
            Tensor sm = softmax_rows_values(m);
            for (int row = 0; row < 4; ++row) {
                double s = 0.0;
                for (int col = 0; col < 5; ++col) s += sm.at(row, col);
                rows_ok = rows_ok && std::abs(s - 1.0) < 1e-12;
            }
        }
        ok = ok && rows_ok;
        std::cout << (rows_ok ? "[PASS] " : "[FAIL] ") << "softmax rows sum to 1\n";
    }

    // patchify roundtrip
    {
        bool rt_ok = true;
        std::mt19937_64 r3(8);
        Tensor x({32, 6});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(r3() >> 11) * 0x1.0p-53;
        for (int P : {2, 4, 8, 16}) {
            rt_ok = rt_ok && unpatchify(patchify(x, P), 32, 6) == x;
        }
        ok = ok && rt_ok;
        std::cout << (rt_ok ? "[PASS] " : "[FAIL] ") << "patchify roundtrip\n";
    }

    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SPH-Net time-series forecasting toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic OHLCV fixture");
    std::string gen_out = "data.csv";
    sphnet::SyntheticSpec gen_spec;
    std::string gen_regime = "sinusoid-plus-trend";
    gen->add_option("--out", gen_out, "output CSV path");
    gen->add_option("--seed", gen_spec.seed, "generator seed");
    gen->add_option("--length", gen_spec.length, "number of rows (>= 64)");
    gen->add_option("--regime", gen_regime, "linear-trend | sinusoid-plus-trend | random-walk");

    // run
    auto* run = app.add_subcommand("run", "run a single experiment");
    run->add_option("--config", flags.config_path, "experiment config JSON");
    run->add_option("--out", flags.out_dir, "output directory");
    run->add_option("--seed", [&flags](const CLI::results_t& vals) {
        flags.seed = std::stoull(vals[0]);
        return true;
    }, "override model and shuffle seeds");
    run->add_option("--profile", flags.profile, "paper | desk");
    run->add_option("--data", flags.data_path, "input OHLCV CSV (overrides config data source)");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run the patches x heads ablation grid");
    std::string patches_csv = "2,4,8,16";
    std::string heads_csv = "2,4,8,16";
    ablate->add_option("--config", flags.config_path, "experiment config JSON");
    ablate->add_option("--out", flags.out_dir, "output directory");
    ablate->add_option("--seed", [&flags](const CLI::results_t& vals) {
        flags.seed = std::stoull(vals[0]);
        return true;
    }, "override model and shuffle seeds");
    ablate->add_option("--profile", flags.profile, "paper | desk");
    ablate->add_option("--data", flags.data_path, "input OHLCV CSV (overrides config data source)");
    ablate->add_option("--patches", patches_csv, "comma-separated patch counts");
    ablate->add_option("--heads", heads_csv, "comma-separated head counts");

    // check
    auto* check = app.add_subcommand("check", "gradient + invariant self-test");
    int probes = 200;
    double fd_step = 1e-5;
    check->add_option("--probes", probes, "finite-difference probe count");
    check->add_option("--step", fd_step, "finite-difference step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            gen_spec.regime = sphnet::regime_from_name(gen_regime);
            sphnet::gen_synthetic(gen_spec, gen_out);
            std::cout << "wrote " << gen_out << " (" << gen_spec.length << " rows, "
                      << sphnet::regime_name(gen_spec.regime) << ", seed " << gen_spec.seed << ")\n";
            return kExitOk;
        }
        if (run->parsed()) {
            sphnet::ExperimentConfig cfg = resolve_config(flags);
            print_report_summary(sphnet::run_experiment(cfg));
            return kExitOk;
        }
        if (ablate->parsed()) {
            sphnet::ExperimentConfig cfg = resolve_config(flags);
            const auto result = sphnet::run_ablation(cfg, parse_int_list(patches_csv),
                                                     parse_int_list(heads_csv), ablation_threads());
            std::cout << sphnet::ablation_table_csv(result);
            std::cout << "outputs in " << cfg.output_dir.string() << "\n";
            return kExitOk;
        }
        if (check->parsed()) {
            return run_check(probes, fd_step);
        }
    } catch (const sphnet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const sphnet::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const sphnet::TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const sphnet::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
