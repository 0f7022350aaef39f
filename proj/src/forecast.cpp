#include "eopt/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace eopt {

void ForecastRequest::validate(const TokenizedDataset& data) const {
    if (horizon < 1) throw ConfigError("forecast horizon must be >= 1");
    if (cadence_days < 1) throw ConfigError("cadence must be >= 1");
    if (pixel_begin < 0 || pixel_end > data.n_index || pixel_begin >= pixel_end)
        throw ConfigError("pixel range [" + std::to_string(pixel_begin) + ", " +
                          std::to_string(pixel_end) + ") invalid for " +
                          std::to_string(data.n_index) + " pixels");
    if (data.n_time < 1) throw HistoryError("dataset holds no observations");
    if (divergence_day <= data.dates.front())
        throw ConfigError("divergence date must fall strictly after the first observation");
    if (divergence_day > data.dates.back() + cadence_days)
        throw ConfigError("divergence date lies beyond the dataset span");
}

std::vector<int32_t> ForecastRequest::future_dates(const TokenizedDataset& data) const {
    std::vector<int32_t> days;
    days.reserve(static_cast<size_t>(horizon));
    // dataset dates from the divergence on
    for (int32_t d : data.dates) {
        if (d >= divergence_day && static_cast<int64_t>(days.size()) < horizon)
            days.push_back(d);
    }
    while (static_cast<int64_t>(days.size()) < horizon) {
        const int32_t last = days.empty() ? static_cast<int32_t>(divergence_day - cadence_days)
                                          : days.back();
        days.push_back(last + cadence_days);
    }
    return days;
}

std::vector<float> rollout(const LastStepPredictor& predict, int64_t block_size,
                           const float* history, int64_t history_len,
                           const int32_t* future_days, int64_t horizon, int64_t epoch_day) {
    if (history_len < 1) throw HistoryError("insufficient history: rollout needs >= 1 token");
    if (horizon < 1) throw ConfigError("rollout horizon must be >= 1");
    if (horizon >= block_size)
        throw ConfigError("horizon " + std::to_string(horizon) +
                          " does not fit the block size " + std::to_string(block_size));

    // keep the most recent block_size - H real tokens
    const int64_t keep = std::min<int64_t>(history_len, block_size - horizon);
    std::vector<float> context(static_cast<size_t>((keep + horizon - 1) * kNumChannels));
    std::copy(history + (history_len - keep) * kNumChannels,
              history + history_len * kNumChannels, context.begin());

    // the caller supplies the next date explicitly for the last history token
    {
        const auto emb = date_embedding(day_of_year(epoch_day + future_days[0]));
        float* last = context.data() + (keep - 1) * kNumChannels;
        last[12] = static_cast<float>(emb[0]);
        last[13] = static_cast<float>(emb[1]);
    }

    std::vector<float> out(static_cast<size_t>(horizon * kNumBands));
    int64_t len = keep;
    for (int64_t h = 0; h < horizon; ++h) {
        const std::array<float, kNumBands> pred = predict(context.data(), len);
        std::copy(pred.begin(), pred.end(), out.begin() + h * kNumBands);
        if (h + 1 == horizon) break;
        // append the prediction as the next token
        float* row = context.data() + len * kNumChannels;
        for (int b = 0; b < kNumBands; ++b) row[b] = pred[b];
        const auto cur = date_embedding(day_of_year(epoch_day + future_days[h]));
        const auto nxt = date_embedding(day_of_year(epoch_day + future_days[h + 1]));
        row[10] = static_cast<float>(cur[0]);
        row[11] = static_cast<float>(cur[1]);
        row[12] = static_cast<float>(nxt[0]);
        row[13] = static_cast<float>(nxt[1]);
        len += 1;
    }
    return out;
}

LastStepPredictor model_predictor(ModelParams& params) {
    return [&params](const float* tokens, int64_t t_len) {
        Tensor input({t_len, kNumChannels},
                     std::vector<float>(tokens, tokens + t_len * kNumChannels));
        const Tensor preds = forward(params, input);
        std::array<float, kNumBands> last{};
        const float* row = preds.data.data() + (t_len - 1) * kNumBands;
        std::copy(row, row + kNumBands, last.begin());
        return last;
    };
}

namespace {

int64_t history_length(const TokenizedDataset& data, int64_t divergence_day) {
    int64_t n = 0;
    while (n < data.n_time && data.dates[static_cast<size_t>(n)] < divergence_day) ++n;
    if (n < 1)
        throw HistoryError("no observations precede the divergence date");
    return n;
}

}  // namespace

Trajectories forecast_pixels(ModelParams& params, const TokenizedDataset& data,
                             const ForecastRequest& request) {
    request.validate(data);
    const std::vector<int32_t> days = request.future_dates(data);
    const int64_t hist = history_length(data, request.divergence_day);

    Trajectories out;
    out.method = "model";
    out.dates = days;
    out.epoch_day = data.epoch_day;
    out.divergence_day = request.divergence_day;
    const LastStepPredictor predict = model_predictor(params);
    for (int64_t pixel = request.pixel_begin; pixel < request.pixel_end; ++pixel) {
        out.pixel_ids.push_back(pixel);
        const std::vector<float> normalized =
            rollout(predict, params.config.block_size, data.row(pixel, 0), hist, days.data(),
                    request.horizon, data.epoch_day);
        for (float v : normalized)
            out.bands.push_back(static_cast<float>(denormalize_reflectance(v)));
    }
    return out;
}

std::vector<float> phase_fold_baseline(const ObservationSeries& history,
                                       const int32_t* future_days, int64_t horizon) {
    if (history.dates.empty() || history.dates.back() - history.dates.front() < 365)
        throw HistoryError("phase-folded baseline needs at least one full year of history");

    constexpr int kBins = 73;  // five-day bins over a 365-day period
    std::array<std::array<double, kNumBands>, kBins> sums{};
    std::array<double, kBins> phase_sums{};
    std::array<int64_t, kBins> counts{};
    for (size_t i = 0; i < history.dates.size(); ++i) {
        const int64_t phase = ((history.dates[i] % 365) + 365) % 365;
        const int bin = static_cast<int>(phase / 5);
        counts[bin] += 1;
        phase_sums[bin] += static_cast<double>(phase);
        for (int b = 0; b < kNumBands; ++b) sums[bin][b] += history.reflectances[i][b];
    }

    // non-empty bins become (empirical center, mean value) knots; using the
    // observed mean phase instead of the nominal bin midpoint keeps
    // cadence-aligned histories free of a half-bin phase shift
    struct Knot {
        double phase;
        std::array<double, kNumBands> mean;
    };
    std::vector<Knot> knots;
    for (int bin = 0; bin < kBins; ++bin) {
        if (counts[bin] == 0) continue;
        Knot k;
        k.phase = phase_sums[bin] / static_cast<double>(counts[bin]);
        for (int b = 0; b < kNumBands; ++b)
            k.mean[b] = sums[bin][b] / static_cast<double>(counts[bin]);
        knots.push_back(k);
    }
    if (knots.empty()) throw HistoryError("phase-folded baseline has no observations");

    // circular linear interpolation between adjacent knots
    std::vector<float> out(static_cast<size_t>(horizon * kNumBands));
    const size_t nk = knots.size();
    for (int64_t h = 0; h < horizon; ++h) {
        const double p = static_cast<double>(((future_days[h] % 365) + 365) % 365);
        std::array<double, kNumBands> value{};
        if (nk == 1) {
            value = knots[0].mean;
        } else {
            size_t hi = 0;
            while (hi < nk && knots[hi].phase <= p) ++hi;
            const size_t lo = (hi + nk - 1) % nk;
            double lo_phase = knots[lo % nk].phase;
            double hi_phase = knots[hi % nk].phase;
            if (hi == 0 || hi == nk) {  // wraps across the year boundary
                if (p < knots[0].phase) lo_phase -= 365.0;
                else hi_phase += 365.0;
            }
            const double span = hi_phase - lo_phase;
            const double w = span > 0 ? (p - lo_phase) / span : 0.0;
            for (int b = 0; b < kNumBands; ++b)
                value[b] = knots[lo % nk].mean[b] * (1.0 - w) + knots[hi % nk].mean[b] * w;
        }
        for (int b = 0; b < kNumBands; ++b) out[h * kNumBands + b] = static_cast<float>(value[b]);
    }
    return out;
}

Trajectories baseline_pixels(const TokenizedDataset& data, const ForecastRequest& request) {
    request.validate(data);
    const std::vector<int32_t> days = request.future_dates(data);
    const int64_t hist = history_length(data, request.divergence_day);

    Trajectories out;
    out.method = "baseline";
    out.dates = days;
    out.epoch_day = data.epoch_day;
    out.divergence_day = request.divergence_day;
    for (int64_t pixel = request.pixel_begin; pixel < request.pixel_end; ++pixel) {
        out.pixel_ids.push_back(pixel);
        ObservationSeries series = series_from_dataset(data, pixel);
        series.dates.resize(static_cast<size_t>(hist));
        series.reflectances.resize(static_cast<size_t>(hist));
        const std::vector<float> pred = phase_fold_baseline(series, days.data(), request.horizon);
        out.bands.insert(out.bands.end(), pred.begin(), pred.end());
    }
    return out;
}

void write_trajectories_csv(const Trajectories& t, const std::string& path) {
    std::string out = "pixel_id,date,band_0,band_1,band_2,band_3,band_4,band_5,band_6,band_7,"
                      "band_8,band_9\n";
    char buf[64];
    const int64_t horizon = static_cast<int64_t>(t.dates.size());
    for (size_t p = 0; p < t.pixel_ids.size(); ++p) {
        for (int64_t h = 0; h < horizon; ++h) {
            out += std::to_string(t.pixel_ids[p]);
            out += ',';
            out += format_iso_date(t.epoch_day + t.dates[static_cast<size_t>(h)]);
            const float* row = t.bands.data() + (static_cast<int64_t>(p) * horizon + h) * kNumBands;
            for (int b = 0; b < kNumBands; ++b) {
                std::snprintf(buf, sizeof buf, ",%.3f", row[b]);
                out += buf;
            }
            out += '\n';
        }
    }
    write_file_atomic(path, out);
}

Trajectories read_trajectories_csv(const std::string& path, int64_t epoch_day) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open trajectories file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("pixel_id,date,band_0", 0) != 0)
        throw FormatError("bad trajectories header in " + path);

    Trajectories t;
    t.epoch_day = epoch_day;
    std::map<int64_t, size_t> pixel_index;
    std::vector<int32_t> first_dates;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        if (!std::getline(row, field, ',')) throw FormatError("bad trajectories row: " + line);
        const int64_t pixel = std::stoll(field);
        if (!std::getline(row, field, ',')) throw FormatError("bad trajectories row: " + line);
        const int32_t date = static_cast<int32_t>(parse_iso_date(field) - epoch_day);
        if (pixel_index.find(pixel) == pixel_index.end()) {
            pixel_index[pixel] = t.pixel_ids.size();
            t.pixel_ids.push_back(pixel);
        }
        if (t.pixel_ids.size() == 1) first_dates.push_back(date);
        for (int b = 0; b < kNumBands; ++b) {
            if (!std::getline(row, field, ','))
                throw FormatError("bad trajectories row (missing bands): " + line);
            t.bands.push_back(std::stof(field));
        }
    }
    t.dates = first_dates;
    const int64_t horizon = static_cast<int64_t>(t.dates.size());
    if (horizon == 0 || t.bands.size() != t.pixel_ids.size() * static_cast<size_t>(horizon) * kNumBands)
        throw FormatError("trajectories file is ragged: " + path);
    t.divergence_day = t.dates.empty() ? 0 : t.dates.front();
    return t;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ConfigError("percentile of an empty sample");
    std::sort(values.begin(), values.end());
    const double rank = p * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(rank);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + (values[lo + 1] - values[lo]) * frac;
}

ForecastReport evaluate_l1(const Trajectories& predictions, const TokenizedDataset& truth,
                           const std::string& index_name) {
    if (!is_index_name(index_name))
        throw ConfigError("unknown index '" + index_name +
                          "' (valid: ndvi, ndwi, bsi, gcvi, band_0..band_9)");
    std::map<int32_t, int64_t> date_index;
    for (int64_t t = 0; t < truth.n_time; ++t) date_index[truth.dates[static_cast<size_t>(t)]] = t;

    const int64_t horizon = static_cast<int64_t>(predictions.dates.size());
    std::vector<std::vector<double>> residuals(static_cast<size_t>(horizon));
    for (int64_t h = 0; h < horizon; ++h) {
        const auto it = date_index.find(predictions.dates[static_cast<size_t>(h)]);
        if (it == date_index.end())
            throw AlignmentError(
                "misaligned dates: no observation at " +
                format_iso_date(truth.epoch_day + predictions.dates[static_cast<size_t>(h)]));
        const int64_t t = it->second;
        for (size_t p = 0; p < predictions.pixel_ids.size(); ++p) {
            const int64_t pixel = predictions.pixel_ids[p];
            if (pixel < 0 || pixel >= truth.n_index)
                throw AlignmentError("pixel " + std::to_string(pixel) + " not in the dataset");
            const float* pred = predictions.bands.data() +
                                (static_cast<int64_t>(p) * horizon + h) * kNumBands;
            BandVector pb, tb;
            const float* row = truth.row(pixel, t);
            for (int b = 0; b < kNumBands; ++b) {
                pb[b] = pred[b];
                tb[b] = denormalize_reflectance(row[b]);
            }
            residuals[static_cast<size_t>(h)].push_back(
                std::fabs(compute_index(index_name, pb) - compute_index(index_name, tb)));
        }
    }

    ForecastReport report;
    report.method = predictions.method;
    report.index = index_name;
    for (int64_t h = 0; h < horizon; ++h) {
        auto& r = residuals[static_cast<size_t>(h)];
        if (r.empty()) continue;
        ForecastBucket bucket;
        bucket.lead_days = predictions.dates[static_cast<size_t>(h)] - predictions.divergence_day;
        bucket.median_l1 = percentile(r, 0.5);
        bucket.p25 = percentile(r, 0.25);
        bucket.p75 = percentile(r, 0.75);
        bucket.count = static_cast<int64_t>(r.size());
        report.buckets.push_back(bucket);
    }
    return report;
}

void write_report_csv(const std::vector<ForecastReport>& reports, const std::string& path) {
    std::string out = "method,index,lead_days,median_l1,p25,p75,count\n";
    char buf[160];
    for (const ForecastReport& r : reports) {
        for (const ForecastBucket& b : r.buckets) {
            std::snprintf(buf, sizeof buf, "%s,%s,%lld,%.6f,%.6f,%.6f,%lld\n", r.method.c_str(),
                          r.index.c_str(), static_cast<long long>(b.lead_days), b.median_l1, b.p25,
                          b.p75, static_cast<long long>(b.count));
            out += buf;
        }
    }
    write_file_atomic(path, out);
}

}  // namespace eopt
