#pragma once

// Preprocessing and dataset persistence. Tokens are dated multispectral
// observations: 10 normalized bands, the date embedding of the current
// observation, and the date embedding of the next one (14 channels total).
//
// File layout (little-endian):
//   0..3    magic "EOPT"
//   4..7    u32 version (1)
//   8..15   u64 n_index
//   16..23  u64 n_time
//   24..31  u64 n_channel
//   32      u8 dtype (1 = float16, 2 = float32)
//   33..39  reserved, zero
//   40..47  i64 epoch day (days since 1970-01-01)
//   48..    n_time x i32 date offsets (days since epoch)
//   then    payload, [index][time][channel] row-major in the declared dtype
// The payload region is a flat array at a fixed offset, so readers may map
// it directly without copying.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eopt/common.hpp"
#include "eopt/dates.hpp"
#include "eopt/indices.hpp"

namespace eopt {

constexpr int kNumChannels = 14;

// ----------------------------- formulas -----------------------------

struct NormStats {
    int64_t out_of_range = 0;  // inputs outside [0, 10000]
};

// v on the raw 0..10,000 scale -> v/500 - 1
inline float normalize_reflectance(double v) { return static_cast<float>(v / 500.0 - 1.0); }

inline float normalize_reflectance(double v, NormStats& stats) {
    if (v < 0.0 || v > 10000.0) stats.out_of_range += 1;
    return normalize_reflectance(v);
}

inline double denormalize_reflectance(double vhat) { return 500.0 * (vhat + 1.0); }

// day-of-year t -> (sin 2*pi*t/365, cos 2*pi*t/365)
std::array<double, 2> date_embedding(double day_of_year_value);

// ----------------------------- float16 -----------------------------
// IEEE binary16, round to nearest even.
uint16_t f32_to_f16(float v);
float f16_to_f32(uint16_t h);

// ----------------------------- types -----------------------------

struct ObservationSeries {
    int64_t pixel_id = 0;
    std::vector<int32_t> dates;  // days since dataset epoch, strictly increasing
    std::vector<std::array<float, kNumBands>> reflectances;  // raw scale
};

struct TokenizedDataset {
    int64_t n_index = 0;
    int64_t n_time = 0;  // observations per pixel; one token each
    int64_t n_channel = kNumChannels;
    uint8_t dtype = 1;  // storage dtype for write_dataset
    int64_t epoch_day = kDefaultEpochDay;
    std::vector<int32_t> dates;  // [n_time], shared across pixels
    std::vector<float> data;     // [n_index * n_time * n_channel]

    const float* row(int64_t pixel, int64_t t) const {
        return data.data() + (pixel * n_time + t) * n_channel;
    }
    float* row(int64_t pixel, int64_t t) { return data.data() + (pixel * n_time + t) * n_channel; }

    int32_t cadence_days() const {
        return n_time >= 2 ? dates[1] - dates[0] : 5;
    }
};

inline int64_t count_tokens(const TokenizedDataset& ds) { return ds.n_index * ds.n_time; }

// Fills one 14-channel token row. Band channels are normalized; date
// channels use the calendar day-of-year of the current and next observation.
void fill_token_row(float* out, const std::array<float, kNumBands>& raw, int64_t date_cur,
                    int64_t date_next, int64_t epoch_day, NormStats* stats = nullptr);

// ----------------------------- assembly -----------------------------

struct TokenMatrix {
    int64_t steps = 0;           // T - 1
    std::vector<float> tokens;   // [steps x 14]
    std::vector<float> targets;  // [steps x 10], normalized bands of the next obs
};

// Training view of one series: token i = observation i with the date
// embeddings of i and i+1; target i = normalized bands of observation i+1.
// The final observation contributes only as a target.
TokenMatrix assemble_tokens(const ObservationSeries& series, int64_t epoch_day);

// Inverse of tokenization on the band channels.
ObservationSeries series_from_dataset(const TokenizedDataset& ds, int64_t pixel);

// ----------------------------- persistence -----------------------------

// Atomic write (temp + rename). Quantizes through the declared dtype.
void write_dataset(const TokenizedDataset& ds, const std::string& path);

// Parses via a read-only memory map; throws FormatError naming the offset
// on bad magic / version / dtype / truncation.
TokenizedDataset read_dataset(const std::string& path);

// Synthetic-label sidecar: one "pixel_id,archetype_name" line per pixel.
void write_labels(const std::vector<std::string>& names, const std::string& path);
std::vector<std::string> read_labels(const std::string& path);

// Shared atomic-write helper (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace eopt
