#pragma once

// Synthetic multispectral time series. Each pixel draws a land-cover
// archetype; raw band values are a seasonal sinusoid (period 365 in days
// since epoch) plus a per-pixel linear trend, an optional one-off regime
// switch, and Gaussian noise, clamped to the raw 0..10,000 scale.
// Generation is a pure function of the config, seed included: every pixel
// derives its own RNG stream from (seed, pixel_id).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eopt/dataset.hpp"

namespace eopt {

constexpr int kNumArchetypes = 5;

// (base, amplitude, peak day) per band; value peaks at `peak` when amp > 0.
struct BandSeason {
    double base;
    double amp;
    double peak;
};

struct ArchetypeSpec {
    const char* name;
    std::array<BandSeason, kNumBands> bands;
};

// Fixed published constants; tests and the forecast benchmark rely on them.
extern const std::array<ArchetypeSpec, kNumArchetypes> kArchetypes;

struct SynthConfig {
    int64_t n_pixels = 4096;
    int64_t epoch_day = kDefaultEpochDay;  // days since 1970-01-01
    int64_t start_day = 0;                 // days since epoch, inclusive
    int64_t end_day = 2915;                // inclusive; default spans 8 365-day years
    int cadence_days = 5;
    std::array<double, kNumArchetypes> archetype_weights{0.35, 0.30, 0.10, 0.15, 0.10};
    double noise_sigma = 40.0;        // raw units
    double trend_range = 150.0;       // raw units per year, per band, uniform
    double regime_switch_prob = 0.2;  // per year, at most one switch per pixel
    double level_jitter = 0.10;       // relative per-pixel base/amp variation
    double phase_jitter_days = 6.0;   // per-pixel peak-day variation
    uint64_t seed = 1;
    uint8_t dtype = 1;  // storage dtype of the generated dataset

    void validate() const;  // throws ConfigError
    std::vector<int32_t> observation_dates() const;
};

struct SynthResult {
    TokenizedDataset dataset;
    std::vector<int> labels;  // archetype id per pixel
    std::vector<std::string> label_names() const;
};

SynthResult synth_generate(const SynthConfig& config);

// Raw series for one pixel under the config (same stream the dataset uses).
ObservationSeries synth_series(const SynthConfig& config, int64_t pixel, int* archetype_out = nullptr);

const char* archetype_name(int archetype);

}  // namespace eopt
