#include "eopt/synth.hpp"

#include <cmath>

namespace eopt {

// Band order: Blue, Green, Red, RE1, RE2, RE3, RE4, NIR, SWIR1, SWIR2.
// Values are raw-scale reflectances; peaks in day-of-period (t mod 365).
const std::array<ArchetypeSpec, kNumArchetypes> kArchetypes = {{
    {"cropland",
     {{{450, -120, 196}, {750, 150, 196}, {900, -450, 196}, {1100, -200, 196}, {1800, 500, 196},
       {2200, 800, 196}, {2500, 1000, 196}, {2800, 1400, 196}, {2000, -600, 196},
       {1500, -500, 196}}}},
    {"grassland",
     {{{500, -80, 160}, {800, 120, 160}, {1000, -300, 160}, {1200, -100, 160}, {1700, 350, 160},
       {2000, 550, 160}, {2300, 700, 160}, {2600, 800, 160}, {2100, -400, 160},
       {1600, -350, 160}}}},
    {"water",
     {{{800, 60, 196}, {700, 50, 196}, {500, 40, 196}, {400, 30, 196}, {350, 25, 196},
       {320, 20, 196}, {300, 20, 196}, {250, 30, 196}, {120, 15, 196}, {80, 10, 196}}}},
    {"bare",
     {{{900, 60, 196}, {1200, 90, 196}, {1800, 150, 196}, {2000, 140, 196}, {2100, 130, 196},
       {2200, 120, 196}, {2250, 110, 196}, {2300, 100, 196}, {3200, 150, 196},
       {2900, 140, 196}}}},
    {"urban",
     {{{1100, 30, 196}, {1300, 40, 196}, {1550, 50, 196}, {1600, 50, 196}, {1700, 60, 196},
       {1750, 60, 196}, {1800, 70, 196}, {1800, 80, 196}, {2200, 70, 196}, {2000, 60, 196}}}},
}};

const char* archetype_name(int archetype) { return kArchetypes[archetype].name; }

void SynthConfig::validate() const {
    if (n_pixels <= 0) throw ConfigError("n_pixels must be positive");
    if (end_day <= start_day) throw ConfigError("end date must be after start date");
    if (cadence_days < 1) throw ConfigError("cadence must be at least 1 day");
    if (noise_sigma < 0) throw ConfigError("noise sigma must be >= 0");
    if (trend_range < 0) throw ConfigError("trend range must be >= 0");
    if (regime_switch_prob < 0 || regime_switch_prob > 1)
        throw ConfigError("regime switch probability must be in [0, 1]");
    double total = 0;
    for (double w : archetype_weights) {
        if (w < 0) throw ConfigError("archetype weights must be >= 0");
        total += w;
    }
    if (std::fabs(total - 1.0) > 1e-9)
        throw ConfigError("archetype weights must sum to 1, got " + std::to_string(total));
    if (dtype != 1 && dtype != 2) throw ConfigError("dtype must be 1 (f16) or 2 (f32)");
}

std::vector<int32_t> SynthConfig::observation_dates() const {
    std::vector<int32_t> dates;
    for (int64_t d = start_day; d <= end_day; d += cadence_days)
        dates.push_back(static_cast<int32_t>(d));
    return dates;
}

namespace {

// Per-pixel draw of seasonal parameters, trend, and the optional switch.
struct PixelPlan {
    int archetype;
    std::array<double, kNumBands> base, amp, slope_per_day;  // post-jitter
    double phase_shift;                                      // days
    // regime switch: from switch_day on, amp/phase are re-drawn
    int64_t switch_day;  // < 0 when absent
    std::array<double, kNumBands> amp2;
    double phase_shift2;
};

PixelPlan plan_pixel(const SynthConfig& cfg, Rng& rng) {
    PixelPlan p{};
    // archetype from the weight mixture
    double u = rng.next_double(), acc = 0.0;
    p.archetype = kNumArchetypes - 1;
    for (int a = 0; a < kNumArchetypes; ++a) {
        acc += cfg.archetype_weights[a];
        if (u < acc) {
            p.archetype = a;
            break;
        }
    }
    const ArchetypeSpec& spec = kArchetypes[p.archetype];
    for (int b = 0; b < kNumBands; ++b) {
        p.base[b] = spec.bands[b].base * (1.0 + cfg.level_jitter * rng.uniform(-1.0, 1.0));
        p.amp[b] = spec.bands[b].amp * (1.0 + cfg.level_jitter * rng.uniform(-1.0, 1.0));
        p.slope_per_day[b] = rng.uniform(-cfg.trend_range, cfg.trend_range) / 365.0;
    }
    p.phase_shift = rng.uniform(-cfg.phase_jitter_days, cfg.phase_jitter_days);

    p.switch_day = -1;
    const int64_t n_years = (cfg.end_day - cfg.start_day) / 365;
    for (int64_t y = 1; y < n_years; ++y) {
        if (rng.next_double() < cfg.regime_switch_prob) {
            p.switch_day = cfg.start_day + y * 365 + static_cast<int64_t>(rng.uniform(0.0, 365.0));
            break;
        }
    }
    // the post-switch regime: same archetype, re-drawn amplitude and phase
    for (int b = 0; b < kNumBands; ++b) p.amp2[b] = p.amp[b] * rng.uniform(0.55, 1.45);
    p.phase_shift2 = p.phase_shift + rng.uniform(-30.0, 30.0);
    return p;
}

double band_value(const PixelPlan& p, const SynthConfig& cfg, int band, int64_t day, Rng& rng) {
    const ArchetypeSpec& spec = kArchetypes[p.archetype];
    const bool switched = p.switch_day >= 0 && day >= p.switch_day;
    const double amp = switched ? p.amp2[band] : p.amp[band];
    const double shift = switched ? p.phase_shift2 : p.phase_shift;
    // integer day-of-period keeps noise-free pixels bit-exactly 365-periodic
    const int64_t phase_day = ((day % 365) + 365) % 365;
    constexpr double two_pi = 6.283185307179586476925287;
    const double season =
        amp * std::cos(two_pi * (static_cast<double>(phase_day) - spec.bands[band].peak - shift) / 365.0);
    double v = p.base[band] + season + p.slope_per_day[band] * static_cast<double>(day - cfg.start_day);
    if (cfg.noise_sigma > 0) v += rng.gauss(0.0, cfg.noise_sigma);
    return std::min(10000.0, std::max(0.0, v));
}

}  // namespace

ObservationSeries synth_series(const SynthConfig& cfg, int64_t pixel, int* archetype_out) {
    cfg.validate();
    Rng rng = Rng(cfg.seed).fork(static_cast<uint64_t>(pixel));
    PixelPlan plan = plan_pixel(cfg, rng);
    if (archetype_out) *archetype_out = plan.archetype;

    ObservationSeries s;
    s.pixel_id = pixel;
    s.dates = cfg.observation_dates();
    s.reflectances.resize(s.dates.size());
    for (size_t t = 0; t < s.dates.size(); ++t) {
        for (int b = 0; b < kNumBands; ++b)
            s.reflectances[t][b] = static_cast<float>(band_value(plan, cfg, b, s.dates[t], rng));
    }
    return s;
}

SynthResult synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::vector<int32_t> dates = cfg.observation_dates();
    const int64_t n_time = static_cast<int64_t>(dates.size());

    SynthResult out;
    out.dataset.n_index = cfg.n_pixels;
    out.dataset.n_time = n_time;
    out.dataset.n_channel = kNumChannels;
    out.dataset.dtype = cfg.dtype;
    out.dataset.epoch_day = cfg.epoch_day;
    out.dataset.dates = dates;
    out.dataset.data.resize(static_cast<size_t>(cfg.n_pixels * n_time * kNumChannels));
    out.labels.resize(static_cast<size_t>(cfg.n_pixels));

    for (int64_t pixel = 0; pixel < cfg.n_pixels; ++pixel) {
        int archetype = 0;
        ObservationSeries series = synth_series(cfg, pixel, &archetype);
        out.labels[static_cast<size_t>(pixel)] = archetype;
        for (int64_t t = 0; t < n_time; ++t) {
            // the final observation has no successor; extrapolate its next
            // date by one cadence so the date channels stay on the unit circle
            const int64_t next =
                t + 1 < n_time ? dates[t + 1] : dates[t] + cfg.cadence_days;
            fill_token_row(out.dataset.row(pixel, t), series.reflectances[t], dates[t], next,
                           cfg.epoch_day);
        }
    }

    // round the payload through the storage dtype so the in-memory dataset is
    // bit-identical to a write/read round trip
    if (cfg.dtype == 1) {
        for (float& v : out.dataset.data) v = f16_to_f32(f32_to_f16(v));
    }
    return out;
}

std::vector<std::string> SynthResult::label_names() const {
    std::vector<std::string> names;
    names.reserve(labels.size());
    for (int a : labels) names.emplace_back(kArchetypes[a].name);
    return names;
}

}  // namespace eopt
