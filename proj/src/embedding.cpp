#include "eopt/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace eopt {

EmbeddingTable embed_pixels(ModelParams& params, const TokenizedDataset& data,
                            int64_t pixel_begin, int64_t pixel_end, int64_t window_begin_day,
                            int64_t window_end_day) {
    if (pixel_begin < 0 || pixel_end > data.n_index || pixel_begin >= pixel_end)
        throw ConfigError("pixel range invalid for " + std::to_string(data.n_index) + " pixels");
    int64_t first = -1, last = -1;
    for (int64_t t = 0; t < data.n_time; ++t) {
        const int32_t d = data.dates[static_cast<size_t>(t)];
        if (d >= window_begin_day && d <= window_end_day) {
            if (first < 0) first = t;
            last = t;
        }
    }
    if (first < 0) throw ConfigError("no observations inside the requested window");
    const int64_t steps = last - first + 1;
    const int64_t width = params.config.n_embd;
    const int64_t block = params.config.block_size;

    EmbeddingTable table;
    table.width = width;
    for (int64_t pixel = pixel_begin; pixel < pixel_end; ++pixel) {
        std::vector<double> acc(static_cast<size_t>(width), 0.0);
        for (int64_t chunk = 0; chunk < steps; chunk += block) {
            const int64_t len = std::min<int64_t>(block, steps - chunk);
            Tensor tokens({len, kNumChannels});
            for (int64_t s = 0; s < len; ++s) {
                const float* row = data.row(pixel, first + chunk + s);
                std::copy(row, row + kNumChannels,
                          tokens.data.begin() + s * kNumChannels);
            }
            Tape tape;
            ModelGraph g = model_forward(tape, params, tokens, false);
            const Tensor& pen = tape.value(g.penultimate);
            for (int64_t s = 0; s < len; ++s)
                for (int64_t j = 0; j < width; ++j) acc[static_cast<size_t>(j)] += pen.data[s * width + j];
        }
        table.pixel_ids.push_back(pixel);
        for (int64_t j = 0; j < width; ++j)
            table.embeddings.push_back(
                static_cast<float>(acc[static_cast<size_t>(j)] / static_cast<double>(steps)));
        table.summaries.push_back(index_summaries(series_from_dataset(data, pixel), data.epoch_day,
                                                  window_begin_day, window_end_day));
    }
    return table;
}

// ----------------------------- pca -----------------------------

namespace {

// Gram-Schmidt with re-normalization; columns of q are [dim x k] flattened
// row-major as [k x dim] rows here.
void orthonormalize_rows(std::vector<double>& q, int k, int64_t dim) {
    for (int i = 0; i < k; ++i) {
        double* qi = q.data() + static_cast<int64_t>(i) * dim;
        for (int j = 0; j < i; ++j) {
            const double* qj = q.data() + static_cast<int64_t>(j) * dim;
            double dot = 0;
            for (int64_t d = 0; d < dim; ++d) dot += qi[d] * qj[d];
            for (int64_t d = 0; d < dim; ++d) qi[d] -= dot * qj[d];
        }
        double norm = 0;
        for (int64_t d = 0; d < dim; ++d) norm += qi[d] * qi[d];
        norm = std::sqrt(norm);
        if (norm < 1e-300) norm = 1.0;
        for (int64_t d = 0; d < dim; ++d) qi[d] /= norm;
    }
}

// Jacobi eigendecomposition of a small symmetric matrix (k x k).
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs) {
    eigvecs.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[static_cast<size_t>(i) * n + i] = 1.0;
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[static_cast<size_t>(p) * n + q] * a[static_cast<size_t>(p) * n + q];
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<size_t>(p) * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double app = a[static_cast<size_t>(p) * n + p];
                const double aqq = a[static_cast<size_t>(q) * n + q];
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a[static_cast<size_t>(i) * n + p];
                    const double aiq = a[static_cast<size_t>(i) * n + q];
                    a[static_cast<size_t>(i) * n + p] = c * aip - s * aiq;
                    a[static_cast<size_t>(i) * n + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a[static_cast<size_t>(p) * n + i];
                    const double aqi = a[static_cast<size_t>(q) * n + i];
                    a[static_cast<size_t>(p) * n + i] = c * api - s * aqi;
                    a[static_cast<size_t>(q) * n + i] = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = eigvecs[static_cast<size_t>(i) * n + p];
                    const double viq = eigvecs[static_cast<size_t>(i) * n + q];
                    eigvecs[static_cast<size_t>(i) * n + p] = c * vip - s * viq;
                    eigvecs[static_cast<size_t>(i) * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    eigvals.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) eigvals[static_cast<size_t>(i)] = a[static_cast<size_t>(i) * n + i];
}

}  // namespace

PcaModel fit_pca(const float* data, int64_t n, int64_t dim, int k, uint64_t seed) {
    if (k < 1) throw ConfigError("fit_pca needs k >= 1");
    if (n <= k) throw ConfigError("fit_pca needs more rows than components (" +
                                  std::to_string(n) + " rows, k=" + std::to_string(k) + ")");
    PcaModel model;
    model.dim = dim;
    model.mean.assign(static_cast<size_t>(dim), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t d = 0; d < dim; ++d) model.mean[static_cast<size_t>(d)] += data[i * dim + d];
    for (double& m : model.mean) m /= static_cast<double>(n);

    // sample covariance, dim x dim
    std::vector<double> cov(static_cast<size_t>(dim) * dim, 0.0);
    std::vector<double> centered(static_cast<size_t>(dim));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t d = 0; d < dim; ++d)
            centered[static_cast<size_t>(d)] = data[i * dim + d] - model.mean[static_cast<size_t>(d)];
        for (int64_t a = 0; a < dim; ++a) {
            const double ca = centered[static_cast<size_t>(a)];
            double* row = cov.data() + a * dim;
            for (int64_t b = a; b < dim; ++b) row[b] += ca * centered[static_cast<size_t>(b)];
        }
    }
    for (int64_t a = 0; a < dim; ++a)
        for (int64_t b = a; b < dim; ++b) {
            cov[static_cast<size_t>(a) * dim + b] /= static_cast<double>(n - 1);
            cov[static_cast<size_t>(b) * dim + a] = cov[static_cast<size_t>(a) * dim + b];
        }

    const int kk = static_cast<int>(std::min<int64_t>(k, dim));
    std::vector<double> q(static_cast<size_t>(kk) * dim);
    Rng rng(seed);
    for (double& v : q) v = rng.gauss(0.0, 1.0);
    orthonormalize_rows(q, kk, dim);

    std::vector<double> z(q.size());
    std::vector<double> prev_eigs(static_cast<size_t>(kk), 0.0);
    for (int sweep = 0; sweep < 1000; ++sweep) {
        // z = cov . q (rows of q are candidate axes)
        for (int i = 0; i < kk; ++i) {
            const double* qi = q.data() + static_cast<int64_t>(i) * dim;
            double* zi = z.data() + static_cast<int64_t>(i) * dim;
            for (int64_t a = 0; a < dim; ++a) {
                double acc = 0;
                const double* row = cov.data() + a * dim;
                for (int64_t b = 0; b < dim; ++b) acc += row[b] * qi[b];
                zi[a] = acc;
            }
        }
        // Rayleigh estimates before orthonormalization
        std::vector<double> eigs(static_cast<size_t>(kk));
        for (int i = 0; i < kk; ++i) {
            const double* qi = q.data() + static_cast<int64_t>(i) * dim;
            const double* zi = z.data() + static_cast<int64_t>(i) * dim;
            double acc = 0;
            for (int64_t d = 0; d < dim; ++d) acc += qi[d] * zi[d];
            eigs[static_cast<size_t>(i)] = acc;
        }
        q = z;
        orthonormalize_rows(q, kk, dim);
        double delta = 0, scale = 0;
        for (int i = 0; i < kk; ++i) {
            delta = std::max(delta, std::fabs(eigs[static_cast<size_t>(i)] - prev_eigs[static_cast<size_t>(i)]));
            scale = std::max(scale, std::fabs(eigs[static_cast<size_t>(i)]));
        }
        prev_eigs = eigs;
        if (sweep > 0 && delta <= 1e-9 * std::max(scale, 1e-30)) break;
    }

    // rotate the converged subspace onto exact eigenvectors via the small
    // projected matrix b = q . cov . q^T
    std::vector<double> b(static_cast<size_t>(kk) * kk, 0.0);
    for (int i = 0; i < kk; ++i) {
        const double* qi = q.data() + static_cast<int64_t>(i) * dim;
        double* zi = z.data() + static_cast<int64_t>(i) * dim;
        for (int64_t a = 0; a < dim; ++a) {
            double acc = 0;
            const double* row = cov.data() + a * dim;
            for (int64_t d = 0; d < dim; ++d) acc += row[d] * qi[d];
            zi[a] = acc;
        }
    }
    for (int i = 0; i < kk; ++i)
        for (int j = 0; j < kk; ++j) {
            const double* qi = q.data() + static_cast<int64_t>(i) * dim;
            const double* zj = z.data() + static_cast<int64_t>(j) * dim;
            double acc = 0;
            for (int64_t d = 0; d < dim; ++d) acc += qi[d] * zj[d];
            b[static_cast<size_t>(i) * kk + j] = acc;
        }
    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(b, kk, eigvals, eigvecs);

    std::vector<int> order(static_cast<size_t>(kk));
    for (int i = 0; i < kk; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int a2, int b2) { return eigvals[static_cast<size_t>(a2)] > eigvals[static_cast<size_t>(b2)]; });

    std::vector<double> axes;
    std::vector<double> variances;
    const double lead = std::max(eigvals[static_cast<size_t>(order[0])], 0.0);
    for (int oi = 0; oi < kk; ++oi) {
        const int col = order[static_cast<size_t>(oi)];
        const double var = eigvals[static_cast<size_t>(col)];
        if (oi > 0 && (var <= 0 || var < 1e-9 * std::max(lead, 1e-30))) {
            model.rank_deficient = true;
            break;
        }
        std::vector<double> axis(static_cast<size_t>(dim), 0.0);
        for (int i = 0; i < kk; ++i) {
            const double w = eigvecs[static_cast<size_t>(i) * kk + col];
            const double* qi = q.data() + static_cast<int64_t>(i) * dim;
            for (int64_t d = 0; d < dim; ++d) axis[static_cast<size_t>(d)] += w * qi[d];
        }
        // sign convention: the largest-magnitude component is positive
        int64_t arg = 0;
        for (int64_t d = 1; d < dim; ++d)
            if (std::fabs(axis[static_cast<size_t>(d)]) > std::fabs(axis[static_cast<size_t>(arg)])) arg = d;
        if (axis[static_cast<size_t>(arg)] < 0)
            for (double& v : axis) v = -v;
        axes.insert(axes.end(), axis.begin(), axis.end());
        variances.push_back(std::max(var, 0.0));
    }
    if (static_cast<int>(variances.size()) < k) model.rank_deficient = true;
    model.k = static_cast<int>(variances.size());
    model.axes = std::move(axes);
    model.variances = std::move(variances);
    return model;
}

PcaModel fit_pca(const EmbeddingTable& table, int k, uint64_t seed) {
    return fit_pca(table.embeddings.data(), static_cast<int64_t>(table.pixel_ids.size()),
                   table.width, k, seed);
}

std::vector<double> project(const PcaModel& pca, const float* data, int64_t n) {
    std::vector<double> out(static_cast<size_t>(n) * pca.k);
    for (int64_t i = 0; i < n; ++i) {
        for (int c = 0; c < pca.k; ++c) {
            const double* axis = pca.axes.data() + static_cast<int64_t>(c) * pca.dim;
            double acc = 0;
            for (int64_t d = 0; d < pca.dim; ++d)
                acc += (data[i * pca.dim + d] - pca.mean[static_cast<size_t>(d)]) * axis[d];
            out[static_cast<size_t>(i) * pca.k + c] = acc;
        }
    }
    return out;
}

void project_into(const PcaModel& pca, EmbeddingTable& table) {
    if (pca.dim != table.width)
        throw DimensionError("projection width " + std::to_string(pca.dim) +
                             " does not match embeddings of width " + std::to_string(table.width));
    const int64_t n = static_cast<int64_t>(table.pixel_ids.size());
    const std::vector<double> coords = project(pca, table.embeddings.data(), n);
    table.coords.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        table.coords[static_cast<size_t>(i)][0] = coords[static_cast<size_t>(i) * pca.k + 0];
        table.coords[static_cast<size_t>(i)][1] =
            pca.k > 1 ? coords[static_cast<size_t>(i) * pca.k + 1] : 0.0;
    }
}

// ----------------------------- summaries -----------------------------

IndexSummary index_summaries(const ObservationSeries& series, int64_t epoch_day,
                             int64_t window_begin_day, int64_t window_end_day) {
    std::vector<size_t> in_window;
    for (size_t i = 0; i < series.dates.size(); ++i)
        if (series.dates[i] >= window_begin_day && series.dates[i] <= window_end_day)
            in_window.push_back(i);
    if (in_window.size() < 3)
        throw ConfigError("index summaries need at least 3 observations in the window, got " +
                          std::to_string(in_window.size()));

    auto stats = [&](const std::string& name, double* mean_out, double* std_out) {
        double mean = 0;
        std::vector<double> vals;
        vals.reserve(in_window.size());
        for (size_t i : in_window) {
            BandVector b;
            for (int c = 0; c < kNumBands; ++c) b[c] = series.reflectances[i][c];
            vals.push_back(compute_index(name, b));
            mean += vals.back();
        }
        mean /= static_cast<double>(vals.size());
        double var = 0;
        for (double v : vals) var += (v - mean) * (v - mean);
        *mean_out = mean;
        *std_out = std::sqrt(var / static_cast<double>(vals.size()));
    };

    IndexSummary s;
    stats("ndvi", &s.ndvi_mean, &s.ndvi_std);
    stats("ndwi", &s.ndwi_mean, &s.ndwi_std);
    stats("bsi", &s.bsi_mean, &s.bsi_std);
    stats("gcvi", &s.gcvi_mean, &s.gcvi_std);

    // NDVI peak: argmax, earliest date on ties
    double best = -1e300;
    size_t best_i = in_window.front();
    for (size_t i : in_window) {
        BandVector b;
        for (int c = 0; c < kNumBands; ++c) b[c] = series.reflectances[i][c];
        const double v = ndvi(b);
        if (v > best) {
            best = v;
            best_i = i;
        }
    }
    s.ndvi_peak_doy = day_of_year(epoch_day + series.dates[best_i]);

    // RGB at the observation nearest mid-summer (day of year 196)
    size_t rgb_i = in_window.front();
    int rgb_dist = 1 << 30;
    for (size_t i : in_window) {
        const int doy = day_of_year(epoch_day + series.dates[i]);
        const int dist = std::abs(doy - 196);
        if (dist < rgb_dist) {
            rgb_dist = dist;
            rgb_i = i;
        }
    }
    auto scale_rgb = [](double v) {
        const double x = v / 3000.0 * 255.0;
        return static_cast<int>(std::lround(std::min(255.0, std::max(0.0, x))));
    };
    s.r = scale_rgb(series.reflectances[rgb_i][kRed]);
    s.g = scale_rgb(series.reflectances[rgb_i][kGreen]);
    s.b = scale_rgb(series.reflectances[rgb_i][kBlue]);
    return s;
}

// ----------------------------- export -----------------------------

namespace {

double summary_column(const IndexSummary& s, const std::string& name) {
    if (name == "ndvi_mean") return s.ndvi_mean;
    if (name == "ndvi_std") return s.ndvi_std;
    if (name == "ndvi_peak_doy") return s.ndvi_peak_doy;
    if (name == "ndwi_mean") return s.ndwi_mean;
    if (name == "ndwi_std") return s.ndwi_std;
    if (name == "bsi_mean") return s.bsi_mean;
    if (name == "bsi_std") return s.bsi_std;
    if (name == "gcvi_mean") return s.gcvi_mean;
    if (name == "gcvi_std") return s.gcvi_std;
    throw ConfigError("unknown column '" + name + "'");
}

// compact 5-stop ramp, dark blue -> green -> yellow
void ramp_color(double u, int* r, int* g, int* b) {
    static const double stops[5][3] = {{68, 13, 84}, {59, 82, 139}, {33, 145, 140},
                                       {94, 201, 98}, {253, 231, 37}};
    u = std::min(1.0, std::max(0.0, u));
    const double x = u * 4.0;
    const int lo = std::min(3, static_cast<int>(x));
    const double f = x - lo;
    *r = static_cast<int>(std::lround(stops[lo][0] + (stops[lo + 1][0] - stops[lo][0]) * f));
    *g = static_cast<int>(std::lround(stops[lo][1] + (stops[lo + 1][1] - stops[lo][1]) * f));
    *b = static_cast<int>(std::lround(stops[lo][2] + (stops[lo + 1][2] - stops[lo][2]) * f));
}

}  // namespace

std::vector<std::string> scatter_colorings() {
    return {"ndvi_mean", "ndvi_std", "ndvi_peak_doy", "ndwi_mean", "ndwi_std",
            "bsi_mean",  "bsi_std",  "gcvi_mean",     "gcvi_std",  "rgb"};
}

void emit_scatter(const EmbeddingTable& table, const std::string& coloring,
                  const std::string& path) {
    const auto valid = scatter_colorings();
    if (std::find(valid.begin(), valid.end(), coloring) == valid.end()) {
        std::string names;
        for (const auto& v : valid) names += (names.empty() ? "" : ", ") + v;
        throw ConfigError("unknown coloring '" + coloring + "' (valid: " + names + ")");
    }
    const size_t n = table.pixel_ids.size();
    if (!table.coords.empty() && table.coords.size() != n)
        throw DimensionError("coordinate count does not match pixel count");
    if (n > 0 && table.coords.empty())
        throw ConfigError("emit_scatter needs projected coordinates");

    double x0 = -1, x1 = 1, y0 = -1, y1 = 1;
    if (n > 0) {
        x0 = y0 = 1e300;
        x1 = y1 = -1e300;
        for (const auto& c : table.coords) {
            x0 = std::min(x0, c[0]);
            x1 = std::max(x1, c[0]);
            y0 = std::min(y0, c[1]);
            y1 = std::max(y1, c[1]);
        }
        if (x1 - x0 < 1e-12) x1 = x0 + 1;
        if (y1 - y0 < 1e-12) y1 = y0 + 1;
    }
    double c0 = 0, c1 = 1;
    if (coloring != "rgb" && n > 0) {
        c0 = 1e300;
        c1 = -1e300;
        for (const auto& s : table.summaries) {
            const double v = summary_column(s, coloring);
            c0 = std::min(c0, v);
            c1 = std::max(c1, v);
        }
        if (c1 - c0 < 1e-12) c1 = c0 + 1;
    }

    constexpr double kSize = 720, kMargin = 40;
    std::string out;
    char buf[256];
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"%g\" "
                  "height=\"%g\" viewBox=\"0 0 %g %g\">\n",
                  kSize, kSize, kSize, kSize);
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"0\" y=\"0\" width=\"%g\" height=\"%g\" fill=\"white\"/>\n", kSize,
                  kSize);
    out += buf;
    std::snprintf(buf, sizeof buf, "<title>%s</title>\n", coloring.c_str());
    out += buf;
    for (size_t i = 0; i < n; ++i) {
        const double px =
            kMargin + (table.coords[i][0] - x0) / (x1 - x0) * (kSize - 2 * kMargin);
        const double py =
            kSize - kMargin - (table.coords[i][1] - y0) / (y1 - y0) * (kSize - 2 * kMargin);
        int r, g, b;
        if (coloring == "rgb") {
            r = table.summaries[i].r;
            g = table.summaries[i].g;
            b = table.summaries[i].b;
        } else {
            ramp_color((summary_column(table.summaries[i], coloring) - c0) / (c1 - c0), &r, &g, &b);
        }
        std::snprintf(buf, sizeof buf,
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"rgb(%d,%d,%d)\"/>\n", px,
                      py, r, g, b);
        out += buf;
    }
    out += "</svg>\n";
    write_file_atomic(path, out);
}

void write_embedding_csv(const EmbeddingTable& table, const std::string& path) {
    std::string out =
        "pixel_id,pc1,pc2,ndvi_mean,ndvi_std,ndvi_peak_doy,ndwi_mean,ndwi_std,bsi_mean,bsi_std,"
        "gcvi_mean,gcvi_std,r,g,b\n";
    char buf[512];
    for (size_t i = 0; i < table.pixel_ids.size(); ++i) {
        const IndexSummary& s = table.summaries[i];
        const double pc1 = table.coords.empty() ? 0.0 : table.coords[i][0];
        const double pc2 = table.coords.empty() ? 0.0 : table.coords[i][1];
        std::snprintf(buf, sizeof buf,
                      "%lld,%.6f,%.6f,%.6f,%.6f,%.0f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%d,%d\n",
                      static_cast<long long>(table.pixel_ids[i]), pc1, pc2, s.ndvi_mean,
                      s.ndvi_std, s.ndvi_peak_doy, s.ndwi_mean, s.ndwi_std, s.bsi_mean, s.bsi_std,
                      s.gcvi_mean, s.gcvi_std, s.r, s.g, s.b);
        out += buf;
    }
    write_file_atomic(path, out);
}

}  // namespace eopt
