#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sphnet/autodiff.hpp"
#include "sphnet/tensor.hpp"

namespace sphnet {

inline constexpr double kLayerNormEps = 1e-5;

enum class Activation { Gelu, Relu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct ModelConfig {
    int T = 32;           // window length
    int d = 6;            // features per time step
    int P = 8;            // patch count
    int d_model = 128;    // embedding width
    int vit_layers = 4;
    int trf_layers = 4;
    int heads = 8;
    int ffn_dim = 512;
    Activation activation = Activation::Gelu;
    std::uint64_t seed = 42;

    int d_k() const { return d_model / heads; }
    int patch_len() const { return T / P * d; }
    void validate() const;  // throws ConfigError naming the violated constraint
};

// Closed-form learnable-element count for a config; tested against the sizes
// actually allocated by init_params.
std::size_t param_count(const ModelConfig& cfg);

// Every learnable of the network in one addressable store, keyed by a fixed
// naming scheme ("embed.weight", "vit0.attn.wq0", "trf1.ffn.b2", ...).
struct SphNetParams {
    ModelConfig config;
    ParamStore store;
};

// Xavier-uniform weights, zero biases, LayerNorm gamma=1 beta=0; fully
// determined by cfg.seed.
SphNetParams init_params(const ModelConfig& cfg);

// ---- tape-level building blocks ----

Var embed_patches(Var patches, Var w_e, Var b_e);
// Row t of z gains t * w_pe (positions count from 0). w_pe is 1×d_model.
Var add_positional(Var z, Var w_pe);
// softmax(q·kT/sqrt(d_k))·v
Var attention(Var q, Var k, Var v);

struct BlockVars {
    std::vector<Var> wq, wk, wv;  // one per head, d_model×d_k
    Var wo;                       // d_model×d_model
    Var w1, b1, w2, b2;           // FFN
    Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

Var mhsa(Var h, const BlockVars& blk);
// Post-norm residual order: LN(h + MHSA(h)) then LN(h' + FFN(h')).
Var encoder_block(Var h, const BlockVars& blk, Activation act);

struct ModelVars {
    Var w_e, b_e, w_pe;
    std::vector<BlockVars> blocks;  // vit stack then trf stack
    Var w_y, b_y;
};

// Places every parameter on the tape (in store order) and returns the handles.
ModelVars bind_params(Tape& tape, const SphNetParams& params, bool requires_grad);

// Assembles handles from leaves already on a tape, in store order. Used by
// grad_check loss builders, which receive the leaf list from the checker.
ModelVars assemble_vars(const ModelConfig& cfg, const std::vector<Var>& vars);

// Loss builder for grad_check: mean squared error of the model over the given
// (window, target) pairs.
LossBuilder mse_loss_builder(const ModelConfig& cfg, std::vector<std::pair<Tensor, double>> samples);

// Full forward pass for one window: patchify -> embed -> +positional ->
// encoder stacks -> mean-pool -> linear head. Returns a 1×1 node.
Var forward_on_tape(Tape& tape, const ModelConfig& cfg, const ModelVars& vars, const Tensor& window);

// Convenience inference entry point (throwaway tape).
double forward(const ModelConfig& cfg, const SphNetParams& params, const Tensor& window);

}  // namespace sphnet
