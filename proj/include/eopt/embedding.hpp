#pragma once

// Per-pixel embedding extraction, PCA projection to k dimensions, the
// per-index summary columns, and SVG scatter export.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eopt/dataset.hpp"
#include "eopt/model.hpp"

namespace eopt {

struct IndexSummary {
    double ndvi_mean = 0, ndvi_std = 0;
    double ndvi_peak_doy = 0;  // calendar day of year of the NDVI argmax
    double ndwi_mean = 0, ndwi_std = 0;
    double bsi_mean = 0, bsi_std = 0;
    double gcvi_mean = 0, gcvi_std = 0;
    int r = 0, g = 0, b = 0;  // raw mid-summer RGB scaled 0..3000 -> 0..255
};

struct EmbeddingTable {
    std::vector<int64_t> pixel_ids;
    int64_t width = 0;
    std::vector<float> embeddings;           // [n x width]
    std::vector<std::array<double, 2>> coords;  // empty until projected
    std::vector<IndexSummary> summaries;
};

struct PcaModel {
    int64_t dim = 0;
    int k = 0;  // components actually returned
    bool rank_deficient = false;
    std::vector<double> mean;       // [dim]
    std::vector<double> axes;       // [k x dim], orthonormal rows
    std::vector<double> variances;  // [k], descending
};

// Year window is [window_begin_day, window_end_day] in days since epoch,
// inclusive. Sequences longer than the model block are chunked; the result
// is the mean over every output step.
EmbeddingTable embed_pixels(ModelParams& params, const TokenizedDataset& data,
                            int64_t pixel_begin, int64_t pixel_end, int64_t window_begin_day,
                            int64_t window_end_day);

// Centers the data and extracts the top-k covariance eigenpairs by
// orthogonal iteration (tolerance 1e-9, at most 1000 sweeps). Axes follow
// the sign convention that their largest-magnitude component is positive.
// Directions whose variance falls below 1e-9 of the leading one are dropped
// and the model is flagged rank-deficient.
PcaModel fit_pca(const float* data, int64_t n, int64_t dim, int k, uint64_t seed = 1);
PcaModel fit_pca(const EmbeddingTable& table, int k, uint64_t seed = 1);

// (x - mean) . axes^T -> [n x k]
std::vector<double> project(const PcaModel& pca, const float* data, int64_t n);
void project_into(const PcaModel& pca, EmbeddingTable& table);

// Window must cover at least 3 observations. Mid-summer is day-of-year 196.
IndexSummary index_summaries(const ObservationSeries& series, int64_t epoch_day,
                             int64_t window_begin_day, int64_t window_end_day);

// Valid colorings: the numeric summary columns plus "rgb".
std::vector<std::string> scatter_colorings();

// Deterministic SVG 1.1 output, one <circle> per pixel.
void emit_scatter(const EmbeddingTable& table, const std::string& coloring,
                  const std::string& path);

// "pixel_id,pc1,pc2,ndvi_mean,...,r,g,b"
void write_embedding_csv(const EmbeddingTable& table, const std::string& path);

}  // namespace eopt
