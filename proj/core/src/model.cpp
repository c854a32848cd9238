#include "sphnet/model.hpp"

#include <cmath>
#include <random>

#include "sphnet/dataio.hpp"
#include "sphnet/errors.hpp"

namespace sphnet {

std::string activation_name(Activation a) { return a == Activation::Gelu ? "gelu" : "relu"; }

Activation activation_from_name(const std::string& name) {
    if (name == "gelu") return Activation::Gelu;
    if (name == "relu") return Activation::Relu;
    throw ConfigError("unknown activation '" + name + "' (expected gelu or relu)");
}

void ModelConfig::validate() const {
    auto positive = [](int v, const char* what) {
        if (v < 1) throw ConfigError(std::string(what) + " must be positive, got " + std::to_string(v));
    };
    positive(T, "T");
    positive(d, "d");
    positive(P, "P");
    positive(d_model, "d_model");
    positive(vit_layers, "vit_layers");
    positive(trf_layers, "trf_layers");
    positive(heads, "heads");
    positive(ffn_dim, "ffn_dim");
    if (T % P != 0) {
        throw ConfigError("P must divide T (P=" + std::to_string(P) + ", T=" + std::to_string(T) + ")");
    }
    if (d_model % heads != 0) {
        throw ConfigError("heads must divide d_model (heads=" + std::to_string(heads) +
                          ", d_model=" + std::to_string(d_model) + ")");
    }
}

std::size_t param_count(const ModelConfig& cfg) {
    const std::size_t dm = static_cast<std::size_t>(cfg.d_model);
    const std::size_t ffn = static_cast<std::size_t>(cfg.ffn_dim);
    const std::size_t plen = static_cast<std::size_t>(cfg.patch_len());
    const std::size_t per_layer = 3 * dm * dm  // per-head QKV concatenated over heads
                                  + dm * dm    // W_O
                                  + dm * ffn + ffn + ffn * dm + dm  // FFN
                                  + 4 * dm;                         // two LayerNorm pairs
    const std::size_t layers = static_cast<std::size_t>(cfg.vit_layers + cfg.trf_layers);
    return plen * dm + dm  // embedding
           + dm            // positional vector
           + layers * per_layer
           + dm + 1;  // head
}

namespace {

// Deterministic uniform in [0,1) from the top 53 bits; avoids the
// implementation-defined std::uniform_real_distribution.
double next_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * next_unit(rng) - 1.0) * limit;
    return t;
}

std::string layer_prefix(const ModelConfig& cfg, int layer) {
    return layer < cfg.vit_layers ? "vit" + std::to_string(layer)
                                  : "trf" + std::to_string(layer - cfg.vit_layers);
}

}  // namespace

SphNetParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    SphNetParams p;
    p.config = cfg;
    ParamStore& s = p.store;

    const int dm = cfg.d_model, dk = cfg.d_k(), ffn = cfg.ffn_dim, plen = cfg.patch_len();
    s.add("embed.weight", xavier_uniform({plen, dm}, plen, dm, rng));
    s.add("embed.bias", Tensor::zeros({dm}));
    s.add("pos.weight", xavier_uniform({1, dm}, 1, dm, rng));
    for (int layer = 0; layer < cfg.vit_layers + cfg.trf_layers; ++layer) {
        const std::string pre = layer_prefix(cfg, layer);
        for (int h = 0; h < cfg.heads; ++h) {
            s.add(pre + ".attn.wq" + std::to_string(h), xavier_uniform({dm, dk}, dm, dk, rng));
            s.add(pre + ".attn.wk" + std::to_string(h), xavier_uniform({dm, dk}, dm, dk, rng));
            s.add(pre + ".attn.wv" + std::to_string(h), xavier_uniform({dm, dk}, dm, dk, rng));
        }
        s.add(pre + ".attn.wo", xavier_uniform({dm, dm}, dm, dm, rng));
        s.add(pre + ".ffn.w1", xavier_uniform({dm, ffn}, dm, ffn, rng));
        s.add(pre + ".ffn.b1", Tensor::zeros({ffn}));
        s.add(pre + ".ffn.w2", xavier_uniform({ffn, dm}, ffn, dm, rng));
        s.add(pre + ".ffn.b2", Tensor::zeros({dm}));
        s.add(pre + ".ln1.gamma", Tensor::full({dm}, 1.0));
        s.add(pre + ".ln1.beta", Tensor::zeros({dm}));
        s.add(pre + ".ln2.gamma", Tensor::full({dm}, 1.0));
        s.add(pre + ".ln2.beta", Tensor::zeros({dm}));
    }
    s.add("head.weight", xavier_uniform({dm, 1}, dm, 1, rng));
    s.add("head.bias", Tensor::zeros({1}));
    return p;
}

// ---------------------------------------------------------------- blocks

Var embed_patches(Var patches, Var w_e, Var b_e) {
    return add_row(matmul(patches, w_e), b_e);
}

Var add_positional(Var z, Var w_pe) {
    Tape* t = z.tape;
    const int P = t->value(z).rows();
    Tensor positions({P, 1});
    for (int i = 0; i < P; ++i) positions[static_cast<std::size_t>(i)] = static_cast<double>(i);
    // outer(t, w_pe) gives row t the offset t*w_pe
    return add(z, matmul(t->constant(std::move(positions)), w_pe));
}

Var attention(Var q, Var k, Var v) {
    Tape* t = q.tape;
    const Tensor& qv = t->value(q);
    const Tensor& kv = t->value(k);
    const Tensor& vv = t->value(v);
    if (qv.cols() != kv.cols() || kv.rows() != vv.rows()) {
        throw ShapeError("attention: incompatible shapes q" + qv.shape_str() + " k" + kv.shape_str() +
                         " v" + vv.shape_str());
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(qv.cols()));
    Var scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    return matmul(softmax_rows(scores), v);
}

Var mhsa(Var h, const BlockVars& blk) {
    std::vector<Var> heads;
    heads.reserve(blk.wq.size());
    for (std::size_t i = 0; i < blk.wq.size(); ++i) {
        heads.push_back(attention(matmul(h, blk.wq[i]), matmul(h, blk.wk[i]), matmul(h, blk.wv[i])));
    }
    Var cat = heads.size() == 1 ? heads[0] : concat_cols(heads);
    return matmul(cat, blk.wo);
}

Var encoder_block(Var h, const BlockVars& blk, Activation act) {
    Var h1 = layer_norm(add(h, mhsa(h, blk)), blk.ln1_gamma, blk.ln1_beta, kLayerNormEps);
    Var f = add_row(matmul(h1, blk.w1), blk.b1);
    f = act == Activation::Gelu ? gelu(f) : relu(f);
    f = add_row(matmul(f, blk.w2), blk.b2);
    return layer_norm(add(h1, f), blk.ln2_gamma, blk.ln2_beta, kLayerNormEps);
}

// ---------------------------------------------------------------- forward

ModelVars assemble_vars(const ModelConfig& cfg, const std::vector<Var>& vars) {
    if (vars.size() != 5 + static_cast<std::size_t>(cfg.vit_layers + cfg.trf_layers) *
                               (3 * static_cast<std::size_t>(cfg.heads) + 9)) {
        throw ConfigError("assemble_vars: " + std::to_string(vars.size()) +
                          " leaves do not match the config's parameter layout");
    }
    ModelVars mv;
    std::size_t i = 0;
    mv.w_e = vars[i++];
    mv.b_e = vars[i++];
    mv.w_pe = vars[i++];
    for (int layer = 0; layer < cfg.vit_layers + cfg.trf_layers; ++layer) {
        BlockVars blk;
        for (int h = 0; h < cfg.heads; ++h) {
            blk.wq.push_back(vars[i++]);
            blk.wk.push_back(vars[i++]);
            blk.wv.push_back(vars[i++]);
        }
        blk.wo = vars[i++];
        blk.w1 = vars[i++];
        blk.b1 = vars[i++];
        blk.w2 = vars[i++];
        blk.b2 = vars[i++];
        blk.ln1_gamma = vars[i++];
        blk.ln1_beta = vars[i++];
        blk.ln2_gamma = vars[i++];
        blk.ln2_beta = vars[i++];
        mv.blocks.push_back(std::move(blk));
    }
    mv.w_y = vars[i++];
    mv.b_y = vars[i++];
    return mv;
}

ModelVars bind_params(Tape& tape, const SphNetParams& params, bool requires_grad) {
    // Leaves must be created in store order so gradients can be read back by index.
    std::vector<Var> vars;
    vars.reserve(params.store.size());
    for (const auto& [_, t] : params.store.items()) vars.push_back(tape.leaf(t, requires_grad));
    return assemble_vars(params.config, vars);
}

LossBuilder mse_loss_builder(const ModelConfig& cfg, std::vector<std::pair<Tensor, double>> samples) {
    if (samples.empty()) throw ConfigError("mse_loss_builder: no samples");
    return [cfg, samples = std::move(samples)](Tape& tape, const std::vector<Var>& vars) {
        ModelVars mv = assemble_vars(cfg, vars);
        Var acc;
        for (std::size_t s = 0; s < samples.size(); ++s) {
            Var pred = forward_on_tape(tape, cfg, mv, samples[s].first);
            Var diff = sub(pred, tape.constant(Tensor({1, 1}, {samples[s].second})));
            Var sq = mul(diff, diff);
            acc = s == 0 ? sq : add(acc, sq);
        }
        return scale(acc, 1.0 / static_cast<double>(samples.size()));
    };
}

Var forward_on_tape(Tape& tape, const ModelConfig& cfg, const ModelVars& vars, const Tensor& window) {
    if (window.ndim() != 2 || window.rows() != cfg.T || window.cols() != cfg.d) {
        throw ShapeError("forward: expected input [" + std::to_string(cfg.T) + "x" +
                         std::to_string(cfg.d) + "], got " + window.shape_str());
    }
    Var z = embed_patches(tape.constant(patchify(window, cfg.P)), vars.w_e, vars.b_e);
    z = add_positional(z, vars.w_pe);
    for (const BlockVars& blk : vars.blocks) z = encoder_block(z, blk, cfg.activation);
    Var pooled = mean_rows(z);
    return add_row(matmul(pooled, vars.w_y), vars.b_y);
}

double forward(const ModelConfig& cfg, const SphNetParams& params, const Tensor& window) {
    Tape tape;
    ModelVars vars = bind_params(tape, params, false);
    return tape.value(forward_on_tape(tape, cfg, vars, window))[0];
}

}  // namespace sphnet
