#pragma once

// Decoder-only transformer over 14-channel observation tokens. An MLP embeds
// each token into the model width, learned positional embeddings are added,
// and a linear head predicts the next observation's 10 normalized bands.

#include <functional>
#include <string>
#include <vector>

#include "eopt/tape.hpp"

namespace eopt {

struct ModelConfig {
    int n_layer = 4;
    int n_head = 4;
    int n_embd = 128;
    int block_size = 64;
    int in_channels = 14;
    int out_channels = 10;
    int mlp_hidden_multiplier = 4;
    bool use_positional = true;
    std::string name = "custom";

    void validate() const;  // throws ConfigError
    int64_t mlp_hidden() const { return static_cast<int64_t>(mlp_hidden_multiplier) * n_embd; }
};

// Named presets: the published ladder 700M/300M/100M/10M (block size 256)
// plus toy sizes for desk-scale runs. Throws ConfigError on unknown names.
ModelConfig model_preset(const std::string& name);
std::vector<std::string> model_preset_names();

struct ModelParams {
    ModelConfig config;

    Tensor in_fc1_w, in_fc1_b;  // 14 -> hidden
    Tensor in_fc2_w, in_fc2_b;  // hidden -> n_embd
    Tensor pos;                 // [block_size, n_embd] when use_positional

    struct Block {
        Tensor ln1_g, ln1_b;
        Tensor qkv_w, qkv_b;
        Tensor proj_w, proj_b;
        Tensor ln2_g, ln2_b;
        Tensor fc_w, fc_b;
        Tensor out_w, out_b;
    };
    std::vector<Block> blocks;

    Tensor lnf_g, lnf_b;
    Tensor head_w, head_b;

    // Stable enumeration order shared by the optimizer and the checkpoint
    // manifest.
    void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
    bool all_finite();
};

// Exact learnable-scalar count; never allocates parameter storage.
int64_t param_count(const ModelConfig& config);

// Deterministic initialization: normal(0, 0.02) weights, zero biases, unit
// layer-norm gains; residual projections scaled by 1/sqrt(2 * n_layer).
ModelParams build_model(const ModelConfig& config, uint64_t seed);

// ----------------------------- tape graph -----------------------------

struct ModelGraph {
    std::vector<NodeId> param_nodes;  // aligned with ModelParams::for_each order
    NodeId predictions = -1;          // [B, T, out_channels]
    NodeId penultimate = -1;          // [B, T, n_embd], after the final layer norm
};

// Binds parameters onto the tape (trainable -> leaves with gradients) and
// builds the forward graph. tokens: [T, 14] or [B, T, 14], 1 <= T <= block.
ModelGraph model_forward(Tape& tape, ModelParams& params, const Tensor& tokens, bool trainable);

// ----------------------------- convenience -----------------------------

// [T, 14] -> [T, 10]
Tensor forward(ModelParams& params, const Tensor& tokens);

// mean Huber loss over T x 10 residuals in normalized units
double loss(ModelParams& params, const Tensor& tokens, const Tensor& targets, double delta);

// mean over time of the penultimate activations: [T, 14] -> [n_embd]
Tensor extract_embeddings(ModelParams& params, const Tensor& tokens);

// ----------------------------- checkpoints -----------------------------
// Layout: magic "EOCK", u32 version, config as a key=value text block,
// tensor manifest (name, shape, offset), then raw float32 payload.

void save_checkpoint(ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace eopt
