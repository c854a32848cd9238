#include "sphnet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "sphnet/errors.hpp"

namespace sphnet {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0,1)");
    if (!(eps_adam > 0.0)) throw ConfigError("eps_adam must be > 0");
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw ShapeError("mse_loss: length mismatch " + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()));
    }
    if (pred.empty()) throw ShapeError("mse_loss: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = target[i] - pred[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

AdamState init_adam(const ParamStore& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& [_, t] : params.items()) {
        st.m.push_back(Tensor::zeros(t.shape()));
        st.v.push_back(Tensor::zeros(t.shape()));
    }
    return st;
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, const TrainConfig& cfg) {
    if (params.size() != grads.size()) {
        throw ConfigError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                          std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [pname, pt] = params.items()[i];
        const auto& [gname, gt] = grads.items()[i];
        if (pname != gname) {
            throw ConfigError("adam_step: gradient key '" + gname + "' does not match parameter '" +
                              pname + "'");
        }
        if (!pt.same_shape(gt)) {
            throw ConfigError("adam_step: gradient shape " + gt.shape_str() + " for '" + pname +
                              "' does not match " + pt.shape_str());
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& theta = params.items()[i].second;
        const Tensor& g = grads.items()[i].second;
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            theta[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
        }
    }
}

namespace {

// In-place Fisher-Yates; std::shuffle is implementation-defined, this is not.
void shuffle_indices(std::vector<int>& idx, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
}

double evaluate_test_mse(const ModelConfig& cfg, const SphNetParams& params,
                         const std::vector<WindowSample>& test) {
    if (test.empty()) return 0.0;
    double s = 0.0;
    for (const WindowSample& ws : test) {
        const double d = forward(cfg, params, ws.input) - ws.target;
        s += d * d;
    }
    return s / static_cast<double>(test.size());
}

}  // namespace

TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        const DatasetSplit& split) {
    model_cfg.validate();
    train_cfg.validate();
    if (split.train.empty()) throw DataError("train: empty training set");

    TrainResult result;
    result.params = init_params(model_cfg);
    AdamState adam = init_adam(result.params.store);

    const int n = static_cast<int>(split.train.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_indices(order, train_cfg.shuffle_seed ^ static_cast<std::uint64_t>(epoch));

        double loss_sum = 0.0;
        int batch_index = 0;
        for (int start = 0; start < n; start += train_cfg.batch_size, ++batch_index) {
            const int end = std::min(start + train_cfg.batch_size, n);
            const int bn = end - start;

            Tape tape;
            ModelVars vars = bind_params(tape, result.params, true);
            Var acc;
            for (int s = start; s < end; ++s) {
                const WindowSample& ws = split.train[static_cast<std::size_t>(order[static_cast<std::size_t>(s)])];
                Var pred = forward_on_tape(tape, model_cfg, vars, ws.input);
                Var diff = sub(pred, tape.constant(Tensor({1, 1}, {ws.target})));
                Var sq = mul(diff, diff);
                acc = s == start ? sq : add(acc, sq);
            }
            Var loss = scale(acc, 1.0 / bn);
            const double loss_value = tape.value(loss)[0];
            if (!std::isfinite(loss_value)) {
                throw TrainingError("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch + 1) + ", batch " +
                                    std::to_string(batch_index + 1));
            }
            tape.backward(loss);

            ParamStore grads;
            const auto& items = result.params.store.items();
            // Parameter leaves are the first size() nodes on the tape, in order.
            for (std::size_t i = 0; i < items.size(); ++i) {
                const Tensor& g = tape.grad(Var{&tape, static_cast<int>(i)});
                grads.add(items[i].first, g.empty() ? Tensor::zeros(items[i].second.shape()) : g);
            }
            adam_step(result.params.store, grads, adam, train_cfg);
            loss_sum += loss_value * bn;
        }

        EpochStats stats;
        stats.train_loss = loss_sum / n;
        stats.test_mse = evaluate_test_mse(model_cfg, result.params, split.test);
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.epochs.push_back(stats);
    }
    return result;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'S', 'P', 'H', 'C', 'K', 'P', 'T', '1'};

nlohmann::json config_json(const ModelConfig& c) {
    return {{"T", c.T},
            {"d", c.d},
            {"P", c.P},
            {"d_model", c.d_model},
            {"vit_layers", c.vit_layers},
            {"trf_layers", c.trf_layers},
            {"heads", c.heads},
            {"ffn_dim", c.ffn_dim},
            {"activation", activation_name(c.activation)},
            {"seed", c.seed}};
}

ModelConfig config_from(const nlohmann::json& j) {
    ModelConfig c;
    c.T = j.at("T").get<int>();
    c.d = j.at("d").get<int>();
    c.P = j.at("P").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.vit_layers = j.at("vit_layers").get<int>();
    c.trf_layers = j.at("trf_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.activation = activation_from_name(j.at("activation").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void save_checkpoint(const SphNetParams& params, const std::filesystem::path& path) {
    nlohmann::json header;
    header["format_version"] = 1;
    header["model_config"] = config_json(params.config);
    auto& tensors = header["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : params.store.items()) {
        tensors.push_back({{"name", name}, {"shape", t.shape()}});
    }
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw DataError("cannot write checkpoint '" + path.string() + "'");
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [_, t] : params.store.items()) {
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out.good()) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

SphNetParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw DataError("cannot open checkpoint '" + path.string() + "'");

    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError("'" + path.string() + "' is not a sphnet checkpoint");
    }
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (in.gcount() != sizeof(hlen) || hlen == 0 || hlen > (1ull << 24)) {
        throw CheckpointError("corrupt checkpoint header in '" + path.string() + "'");
    }
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (static_cast<std::uint64_t>(in.gcount()) != hlen) {
        throw CheckpointError("truncated checkpoint '" + path.string() + "'");
    }

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("corrupt checkpoint header in '" + path.string() + "': " + e.what());
    }
    if (header.value("format_version", 0) != 1) {
        throw CheckpointError("unsupported checkpoint version in '" + path.string() + "'");
    }

    SphNetParams params;
    try {
        params.config = config_from(header.at("model_config"));
        params.config.validate();
        for (const auto& entry : header.at("tensors")) {
            const std::string name = entry.at("name").get<std::string>();
            const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
            Tensor t(shape);
            in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
            if (static_cast<std::size_t>(in.gcount()) != t.size() * sizeof(double)) {
                throw CheckpointError("truncated checkpoint '" + path.string() + "' at tensor '" + name + "'");
            }
            params.store.add(name, std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("corrupt checkpoint header in '" + path.string() + "': " + e.what());
    }
    if (params.store.total_elements() != param_count(params.config)) {
        throw CheckpointError("checkpoint '" + path.string() + "' holds " +
                              std::to_string(params.store.total_elements()) +
                              " values but the config requires " +
                              std::to_string(param_count(params.config)));
    }
    return params;
}

SphNetParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
    SphNetParams params = load_checkpoint(path);
    const ModelConfig& c = params.config;
    auto mismatch = [](const char* field, int got, int want) {
        throw ConfigError(std::string("checkpoint config mismatch: ") + field + " " +
                          std::to_string(got) + " vs expected " + std::to_string(want));
    };
    if (c.T != expected.T) mismatch("T", c.T, expected.T);
    if (c.d != expected.d) mismatch("d", c.d, expected.d);
    if (c.P != expected.P) mismatch("P", c.P, expected.P);
    if (c.d_model != expected.d_model) mismatch("d_model", c.d_model, expected.d_model);
    if (c.vit_layers != expected.vit_layers) mismatch("vit_layers", c.vit_layers, expected.vit_layers);
    if (c.trf_layers != expected.trf_layers) mismatch("trf_layers", c.trf_layers, expected.trf_layers);
    if (c.heads != expected.heads) mismatch("heads", c.heads, expected.heads);
    if (c.ffn_dim != expected.ffn_dim) mismatch("ffn_dim", c.ffn_dim, expected.ffn_dim);
    if (c.activation != expected.activation) {
        throw ConfigError("checkpoint config mismatch: activation " + activation_name(c.activation) +
                          " vs expected " + activation_name(expected.activation));
    }
    return params;
}

}  // namespace sphnet
