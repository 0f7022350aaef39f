#include "eopt/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "eopt/adam.hpp"

namespace eopt {

void TrainConfig::validate() const {
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (tokens_per_step < 1) throw ConfigError("tokens_per_step must be >= 1");
    if (max_lr <= 0) throw ConfigError("max_lr must be > 0");
    if (lr_decay_factor < 1) throw ConfigError("lr_decay_factor must be >= 1");
    if (lr_horizon_multiplier < 1) throw ConfigError("lr_horizon_multiplier must be >= 1");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (huber_delta <= 0) throw ConfigError("huber_delta must be > 0");
    if (grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
    if (input_noise < 0) throw ConfigError("input_noise must be >= 0");
    if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("val_fraction must be in [0, 1)");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

double lr_schedule(int64_t step, const TrainConfig& config) {
    const double min_lr = config.max_lr / config.lr_decay_factor;
    if (config.warmup_steps > 0 && step < config.warmup_steps)
        return config.max_lr * static_cast<double>(step + 1) /
               static_cast<double>(config.warmup_steps);
    const double horizon =
        config.lr_horizon_multiplier * static_cast<double>(config.total_steps);
    const double s = static_cast<double>(step - config.warmup_steps);
    const double span = horizon - static_cast<double>(config.warmup_steps);
    if (s <= 0.0) return config.max_lr;
    if (s >= span) return min_lr;
    if (config.lr_shape == LrShape::linear)
        return config.max_lr + (min_lr - config.max_lr) * (s / span);
    const double cosine = 0.5 * (1.0 + std::cos(3.141592653589793 * s / span));
    return min_lr + (config.max_lr - min_lr) * cosine;
}

bool LossLog::same_trajectory(const LossLog& other) const {
    if (rows.size() != other.rows.size()) return false;
    for (size_t i = 0; i < rows.size(); ++i) {
        const LossLogRow& a = rows[i];
        const LossLogRow& b = other.rows[i];
        const bool val_equal =
            (std::isnan(a.val_loss) && std::isnan(b.val_loss)) || a.val_loss == b.val_loss;
        if (a.step != b.step || a.tokens != b.tokens || a.train_loss != b.train_loss ||
            !val_equal || a.lr != b.lr)
            return false;
    }
    return true;
}

void write_loss_log_csv(const LossLog& log, const std::string& path) {
    std::string out = "step,tokens,train_loss,val_loss,lr,seconds\n";
    char buf[256];
    for (const LossLogRow& r : log.rows) {
        std::snprintf(buf, sizeof buf, "%lld,%lld,%.8g,%.8g,%.8g,%.3f\n",
                      static_cast<long long>(r.step), static_cast<long long>(r.tokens),
                      r.train_loss, r.val_loss, r.lr, r.seconds);
        out += buf;
    }
    write_file_atomic(path, out);
}

namespace {

struct WindowSampler {
    const TokenizedDataset& data;
    int64_t window;
    int64_t max_offset;  // inclusive; inputs end at row T-2

    void fill(int64_t pixel, int64_t offset, float* tokens, float* targets) const {
        for (int64_t s = 0; s < window; ++s) {
            const float* row = data.row(pixel, offset + s);
            float* tok = tokens + s * kNumChannels;
            for (int c = 0; c < kNumChannels; ++c) tok[c] = row[c];
            const float* next = data.row(pixel, offset + s + 1);
            float* tgt = targets + s * kNumBands;
            for (int b = 0; b < kNumBands; ++b) tgt[b] = next[b];
        }
    }
};

}  // namespace

LossLog train(ModelParams& params, const TokenizedDataset& data, const TrainConfig& config) {
    config.validate();
    int64_t t_obs = data.n_time;
    while (t_obs > 0 && data.dates[static_cast<size_t>(t_obs - 1)] >= config.train_before_day)
        --t_obs;
    if (t_obs < 2) throw HistoryError("dataset needs at least 2 observations per pixel "
                                      "inside the training date range");
    if (data.n_channel != kNumChannels)
        throw DimensionError("dataset has " + std::to_string(data.n_channel) +
                             " channels, expected 14");

    const int64_t window = std::min<int64_t>(params.config.block_size, t_obs - 1);
    if (config.tokens_per_step % window != 0)
        throw ConfigError("tokens_per_step " + std::to_string(config.tokens_per_step) +
                          " is not divisible by the window length " + std::to_string(window));
    const int64_t batch = config.tokens_per_step / window;
    if (data.n_index * t_obs < config.tokens_per_step)
        throw ConfigError("dataset holds fewer tokens than one step consumes");

    const int64_t n_val = static_cast<int64_t>(config.val_fraction * static_cast<double>(data.n_index));
    const int64_t n_train = data.n_index - n_val;
    if (n_train < 1) throw ConfigError("validation split leaves no training pixels");
    const int64_t max_offset = t_obs - 1 - window;  // inclusive

    WindowSampler sampler{data, window, max_offset};
    Rng batch_rng = Rng(config.seed).fork(0xBA7C4);

    // fixed validation windows, evaluated at every logged row
    std::vector<std::pair<int64_t, int64_t>> val_windows;
    if (n_val > 0) {
        Rng val_rng = Rng(config.seed).fork(0x7A11D);
        const int64_t n_windows = std::min<int64_t>(batch, 16);
        for (int64_t i = 0; i < n_windows; ++i)
            val_windows.emplace_back(n_train + static_cast<int64_t>(val_rng.next_below(
                                                   static_cast<uint64_t>(n_val))),
                                     static_cast<int64_t>(val_rng.next_below(
                                         static_cast<uint64_t>(max_offset + 1))));
    }

    std::vector<AdamState> states;
    std::vector<Tensor*> tensors;
    params.for_each([&](const std::string&, Tensor& t) {
        states.push_back(AdamState::like(t));
        tensors.push_back(&t);
    });

    Tensor tokens({batch, window, kNumChannels});
    Tensor targets({batch, window, kNumBands});

    auto eval_val = [&]() -> double {
        if (val_windows.empty()) return std::nan("");
        const int64_t v = static_cast<int64_t>(val_windows.size());
        Tensor vt({v, window, kNumChannels});
        Tensor vy({v, window, kNumBands});
        for (int64_t i = 0; i < v; ++i)
            sampler.fill(val_windows[i].first, val_windows[i].second,
                         vt.data.data() + i * window * kNumChannels,
                         vy.data.data() + i * window * kNumBands);
        return loss(params, vt, vy, config.huber_delta);
    };

    LossLog log;
    std::string last_checkpoint;
    const auto t0 = std::chrono::steady_clock::now();

    for (int64_t step = 0; step < config.total_steps; ++step) {
        for (int64_t i = 0; i < batch; ++i) {
            const int64_t pixel =
                static_cast<int64_t>(batch_rng.next_below(static_cast<uint64_t>(n_train)));
            const int64_t offset =
                static_cast<int64_t>(batch_rng.next_below(static_cast<uint64_t>(max_offset + 1)));
            sampler.fill(pixel, offset, tokens.data.data() + i * window * kNumChannels,
                         targets.data.data() + i * window * kNumBands);
        }
        if (config.input_noise > 0) {
            for (int64_t i = 0; i < batch * window; ++i) {
                float* row = tokens.data.data() + i * kNumChannels;
                for (int b = 0; b < kNumBands; ++b)
                    row[b] += static_cast<float>(batch_rng.gauss(0.0, config.input_noise));
            }
        }

        Tape tape;
        ModelGraph graph = model_forward(tape, params, tokens, true);
        NodeId loss_node = tape.huber(graph.predictions, tape.constant(targets), config.huber_delta);
        const double step_loss = tape.scalar(loss_node);
        if (!std::isfinite(step_loss))
            throw NumericError("non-finite loss at step " + std::to_string(step + 1) +
                               "; last good checkpoint: " +
                               (last_checkpoint.empty() ? "none" : last_checkpoint));
        tape.backward(loss_node);

        double clip_scale = 1.0;
        if (config.grad_clip > 0) {
            double sq = 0.0;
            for (size_t p = 0; p < tensors.size(); ++p) {
                const Tensor& g = tape.grad(graph.param_nodes[p]);
                for (float v : g.data) sq += static_cast<double>(v) * v;
            }
            const double norm = std::sqrt(sq);
            if (norm > config.grad_clip) clip_scale = config.grad_clip / norm;
        }

        const double lr = lr_schedule(step, config);
        for (size_t p = 0; p < tensors.size(); ++p) {
            Tensor g = tape.grad(graph.param_nodes[p]);
            if (clip_scale != 1.0)
                for (float& v : g.data) v = static_cast<float>(v * clip_scale);
            adam_step(*tensors[p], g, states[p], lr);
        }

        const int64_t done = step + 1;
        if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() &&
            done % config.checkpoint_every == 0) {
            save_checkpoint(params, config.checkpoint_path);
            last_checkpoint = config.checkpoint_path;
        }
        if (done % config.log_every == 0 || done == config.total_steps) {
            LossLogRow row;
            row.step = done;
            row.tokens = done * config.tokens_per_step;
            row.train_loss = step_loss;
            row.val_loss = eval_val();
            row.lr = lr;
            row.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log.rows.push_back(row);
        }
    }
    return log;
}

double chinchilla_tokens(double n_params) {
    if (!(n_params > 0)) throw ConfigError("parameter count must be positive");
    return 20.0 * n_params;
}

double chinchilla_params(double n_tokens) {
    if (!(n_tokens > 0)) throw ConfigError("token count must be positive");
    return n_tokens / 20.0;
}

int64_t tokens_consumed(int64_t total_steps, int64_t tokens_per_step) {
    if (total_steps < 0 || tokens_per_step < 0)
        throw ConfigError("tokens_consumed arguments must be non-negative");
    return total_steps * tokens_per_step;
}

}  // namespace eopt
