// eopt: command-line driver wiring data generation, training, forecasting,
// evaluation and embedding analysis into reproducible runs.
//
// Exit codes: 0 success, 2 usage/config/format error, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eopt/common.hpp"
#include "eopt/dataset.hpp"
#include "eopt/dates.hpp"
#include "eopt/embedding.hpp"
#include "eopt/forecast.hpp"
#include "eopt/model.hpp"
#include "eopt/synth.hpp"
#include "eopt/training.hpp"

namespace {

using namespace eopt;

constexpr const char* kVersion = "0.1.0";

constexpr const char* kUsage = R"(usage: eopt <subcommand> [--flag value ...]

subcommands:
  gen-data    synthesize a dataset (+ labels sidecar)
  train       train a model on a dataset, writing a checkpoint and loss log
  forecast    autoregressive rollout past a divergence date
  baseline    phase-folded historical-average forecast
  evaluate    median-L1/IQR report of predictions against the dataset
  embed       per-pixel embeddings, PCA projection, CSV/SVG export
  size        compute-optimal budget arithmetic (tokens ~ 20 x params)
  emissions   energy-to-CO2 arithmetic

Every subcommand accepts --config FILE (key = value lines, '#' comments;
explicit flags win). Runs with file outputs write a <out>.manifest that can
be replayed via --config. See README.md for the full flag reference.
)";

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// ----------------------------- flags -----------------------------

class Args {
public:
    Args(const std::vector<std::string>& argv, const std::vector<std::string>& known)
        : known_(known.begin(), known.end()) {
        std::map<std::string, std::string> from_config;
        // first pass: find --config and load defaults
        for (size_t i = 0; i < argv.size(); i += 2) {
            if (argv[i] == "--config") {
                if (i + 1 >= argv.size()) throw UsageError("--config needs a file argument");
                load_config(argv[i + 1], from_config);
            }
        }
        for (auto& [k, v] : from_config) values_[k] = v;
        // explicit flags win
        for (size_t i = 0; i < argv.size(); ++i) {
            const std::string& a = argv[i];
            if (a.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + a + "'");
            const std::string key = a.substr(2);
            if (key == "config") {
                ++i;
                continue;
            }
            if (!known_.count(key)) throw UsageError("unknown flag --" + key);
            if (i + 1 >= argv.size()) throw UsageError("flag --" + key + " needs a value");
            values_[key] = argv[++i];
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw UsageError("missing required flag --" + key);
        return it->second;
    }

    int64_t i64(const std::string& key, int64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos = 0;
            int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw UsageError("flag --" + key + " expects an integer, got '" + it->second + "'");
        }
    }

    double f64(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw UsageError("flag --" + key + " expects a number, got '" + it->second + "'");
        }
    }

private:
    void load_config(const std::string& path, std::map<std::string, std::string>& out) {
        std::ifstream in(path);
        if (!in) throw UsageError("cannot open config file: " + path);
        std::string line;
        while (std::getline(in, line)) {
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](const std::string& s) {
                const size_t a = s.find_first_not_of(" \t\r");
                const size_t b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            const std::string stripped = trim(line);
            if (stripped.empty()) continue;
            const size_t eq = stripped.find('=');
            if (eq == std::string::npos)
                throw UsageError("bad config line (expected key = value): " + stripped);
            const std::string key = trim(stripped.substr(0, eq));
            const std::string value = trim(stripped.substr(eq + 1));
            if (!known_.count(key)) throw UsageError("unknown config key '" + key + "'");
            out[key] = value;
        }
    }

    std::set<std::string> known_;
    std::map<std::string, std::string> values_;
};

// ----------------------------- manifests -----------------------------

struct Manifest {
    std::string subcommand;
    std::vector<std::pair<std::string, std::string>> meta;    // comments
    std::vector<std::pair<std::string, std::string>> config;  // replayable keys

    void write(const std::string& beside_output) const {
        std::string out;
        out += "# eopt run manifest; replay with: eopt " + subcommand + " --config <this file>\n";
        out += "# subcommand = " + subcommand + "\n";
        out += "# tool_version = " + std::string(kVersion) + "\n";
        for (const auto& [k, v] : meta) out += "# " + k + " = " + v + "\n";
        for (const auto& [k, v] : config) out += k + " = " + v + "\n";
        write_file_atomic(beside_output + ".manifest", out);
    }
};

// ----------------------------- shared helpers -----------------------------

std::pair<int64_t, int64_t> parse_pixel_range(const std::string& spec, int64_t n_pixels) {
    if (spec.empty() || spec == "all") return {0, n_pixels};
    const size_t colon = spec.find(':');
    try {
        if (colon == std::string::npos) return {0, std::stoll(spec)};
        return {std::stoll(spec.substr(0, colon)), std::stoll(spec.substr(colon + 1))};
    } catch (const std::exception&) {
        throw UsageError("bad pixel range '" + spec + "' (expected N or A:B)");
    }
}

std::string format_sig3(double v) {
    if (v == 0.0) return "0";
    const int d = static_cast<int>(std::floor(std::log10(std::fabs(v))));
    const int decimals = std::max(0, 2 - d);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return std::string(buf);
}

ModelConfig model_config_from_args(const Args& args) {
    ModelConfig config = model_preset(args.str("preset", "toy-128"));
    if (args.has("layers")) config.n_layer = static_cast<int>(args.i64("layers", 0));
    if (args.has("heads")) config.n_head = static_cast<int>(args.i64("heads", 0));
    if (args.has("embd")) config.n_embd = static_cast<int>(args.i64("embd", 0));
    if (args.has("block")) config.block_size = static_cast<int>(args.i64("block", 0));
    if (args.has("positional")) config.use_positional = args.i64("positional", 1) != 0;
    config.validate();
    return config;
}

// ----------------------------- subcommands -----------------------------

int cmd_gen_data(const Args& args) {
    const std::string out = args.require("out");
    SynthConfig config;
    config.n_pixels = args.i64("pixels", config.n_pixels);
    config.epoch_day = kDefaultEpochDay;
    config.start_day = parse_iso_date(args.str("start", "2015-01-01")) - config.epoch_day;
    config.end_day = parse_iso_date(args.str("end", "2022-12-25")) - config.epoch_day;
    config.cadence_days = static_cast<int>(args.i64("cadence", config.cadence_days));
    config.seed = static_cast<uint64_t>(args.i64("seed", 1));
    config.noise_sigma = args.f64("noise-sigma", config.noise_sigma);
    config.trend_range = args.f64("trend-range", config.trend_range);
    config.regime_switch_prob = args.f64("switch-prob", config.regime_switch_prob);
    config.level_jitter = args.f64("level-jitter", config.level_jitter);
    config.phase_jitter_days = args.f64("phase-jitter", config.phase_jitter_days);
    const std::string dtype = args.str("dtype", "f16");
    if (dtype == "f16") config.dtype = 1;
    else if (dtype == "f32") config.dtype = 2;
    else throw UsageError("--dtype must be f16 or f32");
    if (args.has("weights")) {
        std::istringstream is(args.str("weights"));
        std::string piece;
        for (int i = 0; i < kNumArchetypes; ++i) {
            if (!std::getline(is, piece, ','))
                throw UsageError("--weights needs 5 comma-separated values");
            config.archetype_weights[static_cast<size_t>(i)] = std::stod(piece);
        }
    }
    config.validate();

    SynthResult result = synth_generate(config);
    write_dataset(result.dataset, out);
    write_labels(result.label_names(), out + ".labels");

    Manifest manifest;
    manifest.subcommand = "gen-data";
    manifest.meta = {{"dataset_checksum", hex64(fnv1a_file(out))}};
    manifest.config = {
        {"out", out},
        {"pixels", std::to_string(config.n_pixels)},
        {"start", format_iso_date(config.epoch_day + config.start_day)},
        {"end", format_iso_date(config.epoch_day + config.end_day)},
        {"cadence", std::to_string(config.cadence_days)},
        {"seed", std::to_string(config.seed)},
        {"noise-sigma", std::to_string(config.noise_sigma)},
        {"trend-range", std::to_string(config.trend_range)},
        {"switch-prob", std::to_string(config.regime_switch_prob)},
        {"level-jitter", std::to_string(config.level_jitter)},
        {"phase-jitter", std::to_string(config.phase_jitter_days)},
        {"dtype", dtype},
    };
    manifest.write(out);
    std::cout << "wrote " << out << ": " << result.dataset.n_index << " pixels x "
              << result.dataset.n_time << " observations ("
              << count_tokens(result.dataset) << " tokens)\n";
    return 0;
}

int cmd_train(const Args& args) {
    const std::string data_path = args.require("data");
    const std::string out = args.require("out");
    const TokenizedDataset data = read_dataset(data_path);
    const ModelConfig model_config = model_config_from_args(args);

    TrainConfig config;
    config.total_steps = args.i64("steps", config.total_steps);
    config.tokens_per_step = args.i64("tokens-per-step", config.tokens_per_step);
    config.max_lr = args.f64("max-lr", config.max_lr);
    config.lr_decay_factor = args.f64("decay-factor", config.lr_decay_factor);
    config.lr_horizon_multiplier = args.f64("horizon-mult", config.lr_horizon_multiplier);
    config.warmup_steps = args.i64("warmup", config.warmup_steps);
    config.huber_delta = args.f64("huber-delta", config.huber_delta);
    config.grad_clip = args.f64("grad-clip", config.grad_clip);
    config.input_noise = args.f64("input-noise", config.input_noise);
    config.seed = static_cast<uint64_t>(args.i64("seed", 1));
    config.val_fraction = args.f64("val-fraction", config.val_fraction);
    config.log_every = args.i64("log-every", config.log_every);
    config.checkpoint_every = args.i64("checkpoint-every", config.checkpoint_every);
    config.checkpoint_path = out;
    if (args.has("train-before"))
        config.train_before_day = parse_iso_date(args.str("train-before")) - data.epoch_day;
    const std::string shape = args.str("lr-shape", "cosine");
    if (shape == "cosine") config.lr_shape = LrShape::cosine;
    else if (shape == "linear") config.lr_shape = LrShape::linear;
    else throw UsageError("--lr-shape must be cosine or linear");
    config.validate();
    const uint64_t model_seed = static_cast<uint64_t>(args.i64("model-seed",
                                                               static_cast<int64_t>(config.seed)));
    const std::string log_path = args.str("loss-log", out + ".loss.csv");

    ModelParams params = build_model(model_config, model_seed);
    const LossLog log = train(params, data, config);
    save_checkpoint(params, out);
    write_loss_log_csv(log, log_path);

    Manifest manifest;
    manifest.subcommand = "train";
    manifest.meta = {{"dataset_checksum", hex64(fnv1a_file(data_path))},
                     {"checkpoint_checksum", hex64(fnv1a_file(out))}};
    char lr_buf[32];
    std::snprintf(lr_buf, sizeof lr_buf, "%g", config.max_lr);
    manifest.config = {
        {"data", data_path},
        {"out", out},
        {"preset", args.str("preset", "toy-128")},
        {"layers", std::to_string(model_config.n_layer)},
        {"heads", std::to_string(model_config.n_head)},
        {"embd", std::to_string(model_config.n_embd)},
        {"block", std::to_string(model_config.block_size)},
        {"positional", model_config.use_positional ? "1" : "0"},
        {"steps", std::to_string(config.total_steps)},
        {"tokens-per-step", std::to_string(config.tokens_per_step)},
        {"max-lr", lr_buf},
        {"decay-factor", std::to_string(config.lr_decay_factor)},
        {"horizon-mult", std::to_string(config.lr_horizon_multiplier)},
        {"warmup", std::to_string(config.warmup_steps)},
        {"lr-shape", shape},
        {"huber-delta", std::to_string(config.huber_delta)},
        {"grad-clip", std::to_string(config.grad_clip)},
        {"input-noise", std::to_string(config.input_noise)},
        {"seed", std::to_string(config.seed)},
        {"model-seed", std::to_string(model_seed)},
        {"val-fraction", std::to_string(config.val_fraction)},
        {"log-every", std::to_string(config.log_every)},
        {"checkpoint-every", std::to_string(config.checkpoint_every)},
        {"loss-log", log_path},
    };
    if (args.has("train-before"))
        manifest.config.push_back({"train-before", args.str("train-before")});
    manifest.write(out);
    std::cout << "trained " << model_config.name << " (" << param_count(model_config)
              << " params) for " << config.total_steps << " steps; final train loss "
              << (log.rows.empty() ? 0.0 : log.rows.back().train_loss) << "\n";
    return 0;
}

ForecastRequest request_from_args(const Args& args, const TokenizedDataset& data) {
    ForecastRequest request;
    const auto range = parse_pixel_range(args.str("pixels", "all"), data.n_index);
    request.pixel_begin = range.first;
    request.pixel_end = range.second;
    request.divergence_day = parse_iso_date(args.require("divergence")) - data.epoch_day;
    request.horizon = args.i64("horizon", 0);
    request.cadence_days = static_cast<int>(args.i64("cadence", data.cadence_days()));
    request.validate(data);
    return request;
}

void write_forecast_manifest(const char* subcommand, const Args& args,
                             const std::string& data_path, const std::string& out,
                             const ForecastRequest& request) {
    Manifest manifest;
    manifest.subcommand = subcommand;
    manifest.meta = {{"dataset_checksum", hex64(fnv1a_file(data_path))}};
    manifest.config = {{"data", data_path}, {"out", out}};
    if (args.has("checkpoint")) manifest.config.push_back({"checkpoint", args.str("checkpoint")});
    manifest.config.push_back({"divergence", args.require("divergence")});
    manifest.config.push_back({"horizon", std::to_string(request.horizon)});
    manifest.config.push_back(
        {"pixels", std::to_string(request.pixel_begin) + ":" + std::to_string(request.pixel_end)});
    manifest.config.push_back({"cadence", std::to_string(request.cadence_days)});
    manifest.write(out);
}

int cmd_forecast(const Args& args) {
    const std::string data_path = args.require("data");
    const std::string out = args.require("out");
    const TokenizedDataset data = read_dataset(data_path);
    ModelParams params = load_checkpoint(args.require("checkpoint"));
    const ForecastRequest request = request_from_args(args, data);
    const Trajectories t = forecast_pixels(params, data, request);
    write_trajectories_csv(t, out);
    write_forecast_manifest("forecast", args, data_path, out, request);
    std::cout << "forecast " << t.pixel_ids.size() << " pixels x " << t.dates.size()
              << " steps -> " << out << "\n";
    return 0;
}

int cmd_baseline(const Args& args) {
    const std::string data_path = args.require("data");
    const std::string out = args.require("out");
    const TokenizedDataset data = read_dataset(data_path);
    const ForecastRequest request = request_from_args(args, data);
    const Trajectories t = baseline_pixels(data, request);
    write_trajectories_csv(t, out);
    write_forecast_manifest("baseline", args, data_path, out, request);
    std::cout << "baseline " << t.pixel_ids.size() << " pixels x " << t.dates.size()
              << " steps -> " << out << "\n";
    return 0;
}

int cmd_evaluate(const Args& args) {
    const std::string data_path = args.require("data");
    const std::string pred_path = args.require("pred");
    const std::string out = args.require("out");
    const std::string index = args.str("index", "ndvi");
    const TokenizedDataset data = read_dataset(data_path);
    Trajectories pred = read_trajectories_csv(pred_path, data.epoch_day);
    pred.method = args.str("method", "model");
    if (args.has("divergence"))
        pred.divergence_day = parse_iso_date(args.str("divergence")) - data.epoch_day;
    const ForecastReport report = evaluate_l1(pred, data, index);
    write_report_csv({report}, out);

    Manifest manifest;
    manifest.subcommand = "evaluate";
    manifest.meta = {{"dataset_checksum", hex64(fnv1a_file(data_path))}};
    manifest.config = {{"data", data_path},
                       {"pred", pred_path},
                       {"out", out},
                       {"index", index},
                       {"method", pred.method}};
    manifest.write(out);
    double overall = 0;
    for (const auto& b : report.buckets) overall += b.median_l1;
    if (!report.buckets.empty()) overall /= static_cast<double>(report.buckets.size());
    std::cout << pred.method << " " << index << ": mean-of-medians "
              << format_sig3(overall) << " over " << report.buckets.size() << " lead buckets -> "
              << out << "\n";
    return 0;
}

int cmd_embed(const Args& args) {
    const std::string data_path = args.require("data");
    const std::string out = args.require("out");
    const TokenizedDataset data = read_dataset(data_path);
    ModelParams params = load_checkpoint(args.require("checkpoint"));
    const auto range = parse_pixel_range(args.str("pixels", "all"), data.n_index);

    int64_t window_begin, window_end;
    if (args.has("window-start") || args.has("window-end")) {
        window_begin = parse_iso_date(args.require("window-start")) - data.epoch_day;
        window_end = parse_iso_date(args.require("window-end")) - data.epoch_day;
    } else {
        const int year = static_cast<int>(args.i64("year", 2022));
        window_begin = days_from_civil(year, 1, 1) - data.epoch_day;
        window_end = days_from_civil(year, 12, 31) - data.epoch_day;
    }

    EmbeddingTable table =
        embed_pixels(params, data, range.first, range.second, window_begin, window_end);
    const int components = static_cast<int>(args.i64("components", 2));
    const uint64_t pca_seed = static_cast<uint64_t>(args.i64("pca-seed", 1));
    const PcaModel pca = fit_pca(table, components, pca_seed);
    project_into(pca, table);
    write_embedding_csv(table, out);

    std::vector<std::string> colorings;
    {
        std::istringstream is(args.str("colorings", "ndvi_mean,rgb"));
        std::string piece;
        while (std::getline(is, piece, ',')) colorings.push_back(piece);
    }
    if (args.has("svg")) {
        for (const std::string& c : colorings)
            emit_scatter(table, c, args.str("svg") + "_" + c + ".svg");
    }

    Manifest manifest;
    manifest.subcommand = "embed";
    manifest.meta = {{"dataset_checksum", hex64(fnv1a_file(data_path))}};
    manifest.config = {
        {"data", data_path},
        {"checkpoint", args.str("checkpoint")},
        {"out", out},
        {"pixels", std::to_string(range.first) + ":" + std::to_string(range.second)},
        {"window-start", format_iso_date(data.epoch_day + window_begin)},
        {"window-end", format_iso_date(data.epoch_day + window_end)},
        {"components", std::to_string(components)},
        {"pca-seed", std::to_string(pca_seed)},
        {"colorings", args.str("colorings", "ndvi_mean,rgb")},
    };
    if (args.has("svg")) manifest.config.push_back({"svg", args.str("svg")});
    manifest.write(out);
    std::cout << "embedded " << table.pixel_ids.size() << " pixels (width " << table.width
              << "); leading explained variance "
              << (pca.variances.empty() ? 0.0 : pca.variances[0]) << " -> " << out << "\n";
    return 0;
}

int cmd_size(const Args& args) {
    const bool has_params = args.has("params");
    const bool has_tokens = args.has("tokens");
    if (has_params == has_tokens)
        throw UsageError("size needs exactly one of --params or --tokens");
    if (has_params) {
        const double tokens = chinchilla_tokens(args.f64("params", 0));
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1fe9 tokens", tokens / 1e9);
        std::cout << buf << "\n";
    } else {
        const double params = chinchilla_params(args.f64("tokens", 0));
        const int exponent = static_cast<int>(std::floor(std::log10(params)));
        const double mantissa = params / std::pow(10.0, exponent);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1fe%d params", mantissa, exponent);
        std::cout << buf << "\n";
    }
    return 0;
}

int cmd_emissions(const Args& args) {
    const double kwh = args.f64("kwh", -1);
    const double intensity = args.f64("intensity", 0.193);
    if (kwh < 0) throw UsageError("emissions needs --kwh >= 0");
    if (intensity < 0) throw UsageError("--intensity must be >= 0");
    std::cout << format_sig3(kwh * intensity) << " kgCO2eq\n";
    return 0;
}

// ----------------------------- dispatch -----------------------------

int dispatch(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << kUsage;
        return 2;
    }
    const std::string sub = argv[1];
    std::vector<std::string> rest(argv + 2, argv + argc);

    if (sub == "help" || sub == "--help" || sub == "-h") {
        std::cout << kUsage;
        return 0;
    }
    if (sub == "gen-data") {
        Args args(rest, {"out", "pixels", "start", "end", "cadence", "seed", "noise-sigma",
                         "trend-range", "switch-prob", "level-jitter", "phase-jitter", "weights",
                         "dtype"});
        return cmd_gen_data(args);
    }
    if (sub == "train") {
        Args args(rest, {"data", "out", "preset", "layers", "heads", "embd", "block", "positional",
                         "steps", "tokens-per-step", "max-lr", "decay-factor", "horizon-mult",
                         "warmup", "lr-shape", "huber-delta", "grad-clip", "input-noise", "seed",
                         "model-seed", "val-fraction", "log-every", "checkpoint-every",
                         "loss-log", "train-before"});
        return cmd_train(args);
    }
    if (sub == "forecast") {
        Args args(rest, {"data", "checkpoint", "out", "divergence", "horizon", "pixels", "cadence"});
        return cmd_forecast(args);
    }
    if (sub == "baseline") {
        Args args(rest, {"data", "out", "divergence", "horizon", "pixels", "cadence"});
        return cmd_baseline(args);
    }
    if (sub == "evaluate") {
        Args args(rest, {"data", "pred", "out", "index", "method", "divergence"});
        return cmd_evaluate(args);
    }
    if (sub == "embed") {
        Args args(rest, {"data", "checkpoint", "out", "pixels", "year", "window-start",
                         "window-end", "components", "pca-seed", "colorings", "svg"});
        return cmd_embed(args);
    }
    if (sub == "size") {
        Args args(rest, {"params", "tokens"});
        return cmd_size(args);
    }
    if (sub == "emissions") {
        Args args(rest, {"kwh", "intensity"});
        return cmd_emissions(args);
    }
    std::cerr << "unknown subcommand '" << sub << "'\n" << kUsage;
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n" << kUsage;
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
