#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sphnet/dataio.hpp"
#include "sphnet/model.hpp"

namespace sphnet {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 100;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    std::uint64_t shuffle_seed = 0;

    void validate() const;
};

// First/second moment estimates aligned with ParamStore insertion order.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;
};

AdamState init_adam(const ParamStore& params);

double mse_loss(std::span<const double> pred, std::span<const double> target);

// Standard Adam update with bias correction. grads must mirror params in names
// and shapes.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, const TrainConfig& cfg);

struct EpochStats {
    double train_loss = 0.0;  // mean per-sample training loss (normalized scale)
    double test_mse = 0.0;    // evaluated after the epoch (normalized scale)
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

struct TrainResult {
    SphNetParams params;
    TrainHistory history;
};

// Minibatch MSE training with per-epoch reshuffling (seed = shuffle_seed XOR
// epoch index); the final partial batch is trained, not dropped. Deterministic
// given the config seeds.
TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        const DatasetSplit& split);

// Self-describing binary checkpoint; load(save(x)) is bit-exact.
void save_checkpoint(const SphNetParams& params, const std::filesystem::path& path);
SphNetParams load_checkpoint(const std::filesystem::path& path);
// Additionally rejects files whose config differs from `expected`.
SphNetParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace sphnet
