#pragma once

// Next-observation training over a tokenized dataset: seeded window
// sampling, Adam with the factor-of-10 decay schedule, loss logging, and
// the compute-optimal sizing arithmetic.

#include <string>
#include <vector>

#include "eopt/dataset.hpp"
#include "eopt/model.hpp"

namespace eopt {

enum class LrShape { cosine, linear };

struct TrainConfig {
    int64_t total_steps = 3000;
    int64_t tokens_per_step = 8192;  // batch size measured in tokens
    double max_lr = 1e-3;
    double lr_decay_factor = 10.0;
    double lr_horizon_multiplier = 1.1;
    LrShape lr_shape = LrShape::cosine;
    int64_t warmup_steps = 0;
    double huber_delta = 1.0;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    // denoising augmentation: gaussian noise (normalized units) added to the
    // input band channels only, targets stay clean; steadies autoregressive
    // rollouts that feed predictions back as inputs
    double input_noise = 0.0;
    uint64_t seed = 1;
    int64_t checkpoint_every = 0;  // steps; 0 = final checkpoint only
    double val_fraction = 0.05;    // pixels held out inside the training date range
    int64_t log_every = 50;
    std::string checkpoint_path;  // empty = no checkpoints written by train()
    // temporal split: only observations dated before this (days since the
    // dataset epoch) are visible during training; INT64_MAX = everything
    int64_t train_before_day = INT64_MAX;

    void validate() const;
};

// Decay from max_lr at step 0 to max_lr/decay_factor at
// step = horizon_multiplier * total_steps, clamped beyond; monotone
// non-increasing. Optional linear warmup precedes the decay.
double lr_schedule(int64_t step, const TrainConfig& config);

struct LossLogRow {
    int64_t step = 0;    // completed steps
    int64_t tokens = 0;  // step * tokens_per_step
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN when no validation pixels exist
    double lr = 0.0;
    double seconds = 0.0;  // wall time; observational, excluded from equality
};

struct LossLog {
    std::vector<LossLogRow> rows;
    // trajectory equality over the deterministic fields (wall time excluded)
    bool same_trajectory(const LossLog& other) const;
};

// CSV with header "step,tokens,train_loss,val_loss,lr,seconds".
void write_loss_log_csv(const LossLog& log, const std::string& path);

// Runs total_steps Adam steps over seeded (pixel, offset) windows. Mutates
// params in place; throws NumericError naming the last good checkpoint if
// the loss goes non-finite.
LossLog train(ModelParams& params, const TokenizedDataset& data, const TrainConfig& config);

// ----------------------------- sizing -----------------------------
// tokens ~ 20 * params and its inverse.
double chinchilla_tokens(double n_params);
double chinchilla_params(double n_tokens);
int64_t tokens_consumed(int64_t total_steps, int64_t tokens_per_step);

}  // namespace eopt
