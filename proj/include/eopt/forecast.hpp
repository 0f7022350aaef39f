#pragma once

// Autoregressive rollout past a divergence date, the phase-folded
// historical-average baseline, and median-L1/IQR evaluation per lead time.

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "eopt/dataset.hpp"
#include "eopt/model.hpp"

namespace eopt {

struct AlignmentError : std::runtime_error {
    explicit AlignmentError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ForecastRequest {
    int64_t pixel_begin = 0;
    int64_t pixel_end = 0;        // half-open
    int64_t divergence_day = 0;   // days since epoch; first unseen date
    int64_t horizon = 0;          // steps
    int cadence_days = 5;         // for dates beyond the dataset span

    void validate(const TokenizedDataset& data) const;
    // The H forecast dates: dataset dates from the divergence on, extended
    // by the cadence when the horizon runs past the span.
    std::vector<int32_t> future_dates(const TokenizedDataset& data) const;
};

// Predicts the next observation's normalized bands from a [T x 14] context.
using LastStepPredictor = std::function<std::array<float, kNumBands>(const float*, int64_t)>;

// Feeds each prediction back as the next input token's band channels; date
// channels come from the supplied future dates. True future observations are
// never an input. Returns normalized bands [H x 10].
std::vector<float> rollout(const LastStepPredictor& predict, int64_t block_size,
                           const float* history, int64_t history_len,
                           const int32_t* future_days, int64_t horizon, int64_t epoch_day);

LastStepPredictor model_predictor(ModelParams& params);

// ----------------------------- trajectories -----------------------------

struct Trajectories {
    std::string method;            // "model" or "baseline"
    std::vector<int64_t> pixel_ids;
    std::vector<int32_t> dates;              // [H], days since epoch
    int64_t epoch_day = kDefaultEpochDay;
    int64_t divergence_day = 0;
    std::vector<float> bands;      // [n_pixels x H x 10], raw scale
};

Trajectories forecast_pixels(ModelParams& params, const TokenizedDataset& data,
                             const ForecastRequest& request);

// Averages history by day-of-period (365 days, 73 five-day bins) and replays
// the average at each future date via circular linear interpolation between
// bin centers. Returns raw bands [H x 10].
std::vector<float> phase_fold_baseline(const ObservationSeries& history,
                                       const int32_t* future_days, int64_t horizon);

Trajectories baseline_pixels(const TokenizedDataset& data, const ForecastRequest& request);

// "pixel_id,date,band_0..band_9" with ISO dates, raw scale.
void write_trajectories_csv(const Trajectories& t, const std::string& path);
Trajectories read_trajectories_csv(const std::string& path, int64_t epoch_day);

// ----------------------------- evaluation -----------------------------

struct ForecastBucket {
    int64_t lead_days = 0;  // date - divergence date
    double median_l1 = 0.0;
    double p25 = 0.0;
    double p75 = 0.0;
    int64_t count = 0;
};

struct ForecastReport {
    std::string method;
    std::string index;
    std::vector<ForecastBucket> buckets;  // ascending lead
};

// Percentile rule: linear interpolation between closest ranks,
// rank = p * (n - 1) over the ascending sample.
double percentile(std::vector<double> values, double p);

// Errors are computed in index space on raw-scale bands; truth comes from
// the dataset at the matching dates (throws AlignmentError when a predicted
// date is not in the dataset).
ForecastReport evaluate_l1(const Trajectories& predictions, const TokenizedDataset& truth,
                           const std::string& index_name);

// "method,index,lead_days,median_l1,p25,p75,count"
void write_report_csv(const std::vector<ForecastReport>& reports, const std::string& path);

}  // namespace eopt
