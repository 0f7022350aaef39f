#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "eopt/embedding.hpp"
#include "eopt/synth.hpp"

using namespace eopt;

namespace {

// dense Jacobi eigendecomposition oracle, independent of fit_pca
void eigen_oracle(const std::vector<double>& cov, int64_t dim, std::vector<double>* eigvals,
                  std::vector<double>* eigvecs_rows) {
    std::vector<double> a = cov;
    std::vector<double> v(static_cast<size_t>(dim) * dim, 0.0);
    for (int64_t i = 0; i < dim; ++i) v[static_cast<size_t>(i) * dim + i] = 1.0;
    for (int sweep = 0; sweep < 300; ++sweep) {
        double off = 0;
        for (int64_t p = 0; p < dim; ++p)
            for (int64_t q = p + 1; q < dim; ++q)
                off += a[static_cast<size_t>(p) * dim + q] * a[static_cast<size_t>(p) * dim + q];
        if (off < 1e-26) break;
        for (int64_t p = 0; p < dim; ++p)
            for (int64_t q = p + 1; q < dim; ++q) {
                const double apq = a[static_cast<size_t>(p) * dim + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double theta =
                    0.5 * (a[static_cast<size_t>(q) * dim + q] - a[static_cast<size_t>(p) * dim + p]) / apq;
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
                for (int64_t i = 0; i < dim; ++i) {
                    const double aip = a[static_cast<size_t>(i) * dim + p];
                    const double aiq = a[static_cast<size_t>(i) * dim + q];
                    a[static_cast<size_t>(i) * dim + p] = c * aip - s * aiq;
                    a[static_cast<size_t>(i) * dim + q] = s * aip + c * aiq;
                }
                for (int64_t i = 0; i < dim; ++i) {
                    const double api = a[static_cast<size_t>(p) * dim + i];
                    const double aqi = a[static_cast<size_t>(q) * dim + i];
                    a[static_cast<size_t>(p) * dim + i] = c * api - s * aqi;
                    a[static_cast<size_t>(q) * dim + i] = s * api + c * aqi;
                }
                for (int64_t i = 0; i < dim; ++i) {
                    const double vip = v[static_cast<size_t>(i) * dim + p];
                    const double viq = v[static_cast<size_t>(i) * dim + q];
                    v[static_cast<size_t>(i) * dim + p] = c * vip - s * viq;
                    v[static_cast<size_t>(i) * dim + q] = s * vip + c * viq;
                }
            }
    }
    eigvals->assign(static_cast<size_t>(dim), 0.0);
    eigvecs_rows->assign(static_cast<size_t>(dim) * dim, 0.0);
    std::vector<int64_t> order(static_cast<size_t>(dim));
    for (int64_t i = 0; i < dim; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
        return a[static_cast<size_t>(x) * dim + x] > a[static_cast<size_t>(y) * dim + y];
    });
    for (int64_t r = 0; r < dim; ++r) {
        const int64_t col = order[static_cast<size_t>(r)];
        (*eigvals)[static_cast<size_t>(r)] = a[static_cast<size_t>(col) * dim + col];
        for (int64_t i = 0; i < dim; ++i)
            (*eigvecs_rows)[static_cast<size_t>(r) * dim + i] = v[static_cast<size_t>(i) * dim + col];
    }
}

std::vector<double> sample_covariance(const std::vector<float>& data, int64_t n, int64_t dim) {
    std::vector<double> mean(static_cast<size_t>(dim), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t d = 0; d < dim; ++d) mean[static_cast<size_t>(d)] += data[i * dim + d];
    for (double& m : mean) m /= static_cast<double>(n);
    std::vector<double> cov(static_cast<size_t>(dim) * dim, 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t a = 0; a < dim; ++a)
            for (int64_t b = 0; b < dim; ++b)
                cov[static_cast<size_t>(a) * dim + b] +=
                    (data[i * dim + a] - mean[static_cast<size_t>(a)]) *
                    (data[i * dim + b] - mean[static_cast<size_t>(b)]);
    for (double& c : cov) c /= static_cast<double>(n - 1);
    return cov;
}

std::vector<float> random_rows(int64_t n, int64_t dim, uint64_t seed) {
    Rng rng(seed);
    std::vector<float> data(static_cast<size_t>(n) * dim);
    // anisotropic so the spectrum is well separated
    for (int64_t i = 0; i < n; ++i)
        for (int64_t d = 0; d < dim; ++d)
            data[i * dim + d] =
                static_cast<float>(rng.gauss(0.0, 1.0) * (1.0 + static_cast<double>(d) * 0.35) +
                                   0.2 * d);
    return data;
}

}  // namespace

TEST_CASE("fit_pca reduces an exact line to one component") {
    const int64_t n = 30;
    std::vector<float> data(static_cast<size_t>(n) * 3);
    const double direction[3] = {2.0, -1.0, 0.5};
    Rng rng(3);
    double total_var;
    {
        std::vector<double> ts;
        for (int64_t i = 0; i < n; ++i) {
            const double t = rng.uniform(-2.0, 2.0);
            ts.push_back(t);
            for (int64_t d = 0; d < 3; ++d)
                data[i * 3 + d] = static_cast<float>(5.0 + t * direction[d]);
        }
        (void)ts;
        const std::vector<double> cov = sample_covariance(data, n, 3);
        total_var = cov[0] + cov[4] + cov[8];
    }
    const PcaModel pca = fit_pca(data.data(), n, 3, 2);
    CHECK(pca.rank_deficient);
    CHECK(pca.k == 1);
    CHECK(pca.variances[0] == doctest::Approx(total_var).epsilon(1e-6));
}

TEST_CASE("fit_pca axes are orthonormal and variances sorted") {
    const auto data = random_rows(50, 8, 5);
    const PcaModel pca = fit_pca(data.data(), 50, 8, 3);
    REQUIRE(pca.k == 3);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double dot = 0;
            for (int64_t d = 0; d < 8; ++d)
                dot += pca.axes[static_cast<size_t>(i) * 8 + d] * pca.axes[static_cast<size_t>(j) * 8 + d];
            if (i == j) CHECK(dot == doctest::Approx(1.0).epsilon(1e-6));
            else CHECK(std::fabs(dot) < 1e-6);
        }
    }
    CHECK(pca.variances[0] >= pca.variances[1]);
    CHECK(pca.variances[1] >= pca.variances[2]);
}

TEST_CASE("fit_pca matches the dense eigendecomposition oracle") {
    for (auto [n, dim] : std::vector<std::pair<int64_t, int64_t>>{{50, 8}, {64, 16}, {40, 5}}) {
        const auto data = random_rows(n, dim, static_cast<uint64_t>(n * 100 + dim));
        const int k = 3;
        const PcaModel pca = fit_pca(data.data(), n, dim, k);
        REQUIRE(pca.k == k);

        std::vector<double> eigvals, eigvecs;
        eigen_oracle(sample_covariance(data, n, dim), dim, &eigvals, &eigvecs);
        for (int i = 0; i < k; ++i) {
            CHECK(pca.variances[static_cast<size_t>(i)] ==
                  doctest::Approx(eigvals[static_cast<size_t>(i)]).epsilon(1e-6));
            double dot = 0;
            for (int64_t d = 0; d < dim; ++d)
                dot += pca.axes[static_cast<size_t>(i) * dim + d] *
                       eigvecs[static_cast<size_t>(i) * dim + d];
            CHECK(std::fabs(dot) == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("projection basics") {
    const auto data = random_rows(40, 6, 9);
    const PcaModel pca = fit_pca(data.data(), 40, 6, 2);

    // the mean vector projects to the origin
    std::vector<float> mean_row(6);
    for (int64_t d = 0; d < 6; ++d) mean_row[static_cast<size_t>(d)] = static_cast<float>(pca.mean[static_cast<size_t>(d)]);
    const std::vector<double> at_mean = project(pca, mean_row.data(), 1);
    CHECK(std::fabs(at_mean[0]) < 1e-5);
    CHECK(std::fabs(at_mean[1]) < 1e-5);

    // per-axis zero mean and ordered variance on the training data
    const std::vector<double> coords = project(pca, data.data(), 40);
    double m1 = 0, m2 = 0, v1 = 0, v2 = 0;
    for (int64_t i = 0; i < 40; ++i) {
        m1 += coords[static_cast<size_t>(i) * 2];
        m2 += coords[static_cast<size_t>(i) * 2 + 1];
    }
    m1 /= 40;
    m2 /= 40;
    const double data_scale = std::sqrt(pca.variances[0]);
    CHECK(std::fabs(m1) / data_scale < 1e-6);
    CHECK(std::fabs(m2) / data_scale < 1e-6);
    for (int64_t i = 0; i < 40; ++i) {
        v1 += (coords[static_cast<size_t>(i) * 2] - m1) * (coords[static_cast<size_t>(i) * 2] - m1);
        v2 += (coords[static_cast<size_t>(i) * 2 + 1] - m2) * (coords[static_cast<size_t>(i) * 2 + 1] - m2);
    }
    CHECK(v1 >= v2);
}

TEST_CASE("complete basis reconstructs exactly") {
    const int64_t dim = 5;
    const auto data = random_rows(30, dim, 10);
    const PcaModel pca = fit_pca(data.data(), 30, dim, static_cast<int>(dim));
    REQUIRE(pca.k == dim);
    const std::vector<double> coords = project(pca, data.data(), 30);
    for (int64_t i = 0; i < 30; ++i)
        for (int64_t d = 0; d < dim; ++d) {
            double recon = pca.mean[static_cast<size_t>(d)];
            for (int64_t c = 0; c < dim; ++c)
                recon += coords[static_cast<size_t>(i) * dim + c] *
                         pca.axes[static_cast<size_t>(c) * dim + d];
            CHECK(recon == doctest::Approx(data[i * dim + d]).epsilon(1e-5));
        }
}

TEST_CASE("index summaries on a constant series") {
    ObservationSeries series;
    for (int i = 0; i < 20; ++i) {
        series.dates.push_back(i * 5);
        std::array<float, kNumBands> bands{};
        bands[kBlue] = 300;
        bands[kGreen] = 600;
        bands[kRed] = 900;
        bands[kNir] = 3000;
        bands[kSwir1] = 1500;
        series.reflectances.push_back(bands);
    }
    const IndexSummary s = index_summaries(series, kDefaultEpochDay, 0, 100);
    CHECK(s.ndvi_std == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.ndvi_mean == doctest::Approx((3000.0 - 900.0) / 3900.0).epsilon(1e-9));
    CHECK(s.g == doctest::Approx(600.0 / 3000.0 * 255.0).epsilon(0.01));

    CHECK_THROWS_AS(index_summaries(series, kDefaultEpochDay, 0, 6), ConfigError);
}

TEST_CASE("cropland NDVI peaks near its construction peak") {
    SynthConfig config;
    config.n_pixels = 6;
    config.start_day = 0;
    config.end_day = 364;
    config.noise_sigma = 5;
    config.trend_range = 0;
    config.regime_switch_prob = 0;
    config.phase_jitter_days = 0;
    config.archetype_weights = {1, 0, 0, 0, 0};
    config.seed = 71;
    const TokenizedDataset data = synth_generate(config).dataset;
    for (int64_t pixel = 0; pixel < config.n_pixels; ++pixel) {
        const IndexSummary s =
            index_summaries(series_from_dataset(data, pixel), data.epoch_day, 0, 364);
        CHECK(std::fabs(s.ndvi_peak_doy - 196.0) <= 10.0);
    }
}

TEST_CASE("embed_pixels determinism and width") {
    SynthConfig config;
    config.n_pixels = 3;
    config.end_day = 420;
    config.seed = 81;
    TokenizedDataset data = synth_generate(config).dataset;
    // make pixel 1 a byte-for-byte copy of pixel 0
    for (int64_t t = 0; t < data.n_time; ++t)
        std::copy(data.row(0, t), data.row(0, t) + kNumChannels, data.row(1, t));

    ModelParams params = build_model(model_preset("toy-32"), 7);
    const EmbeddingTable table = embed_pixels(params, data, 0, 3, 0, 420);
    CHECK(table.width == 32);
    REQUIRE(table.pixel_ids.size() == 3);
    for (int64_t j = 0; j < 32; ++j)
        CHECK(table.embeddings[0 * 32 + j] == table.embeddings[1 * 32 + j]);

    CHECK_THROWS_AS(embed_pixels(params, data, 0, 3, 5000, 6000), ConfigError);
}

TEST_CASE("svg scatter output") {
    EmbeddingTable table;
    table.width = 4;
    const std::string empty_path = "/tmp/eopt_test_empty.svg";
    emit_scatter(table, "ndvi_mean", empty_path);
    std::ifstream in(empty_path);
    std::string svg((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<circle") == std::string::npos);
    std::remove(empty_path.c_str());

    Rng rng(4);
    for (int i = 0; i < 10; ++i) {
        table.pixel_ids.push_back(i);
        table.coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        IndexSummary s;
        s.ndvi_mean = rng.uniform(0, 1);
        s.r = 10 * i;
        s.g = 5 * i;
        s.b = 2 * i;
        table.summaries.push_back(s);
    }
    const std::string path_a = "/tmp/eopt_test_a.svg";
    const std::string path_b = "/tmp/eopt_test_b.svg";
    emit_scatter(table, "ndvi_mean", path_a);
    emit_scatter(table, "ndvi_mean", path_b);
    std::ifstream ia(path_a), ib(path_b);
    std::string sa((std::istreambuf_iterator<char>(ia)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(ib)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    size_t count = 0, pos = 0;
    while ((pos = sa.find("<circle", pos)) != std::string::npos) {
        ++count;
        pos += 7;
    }
    CHECK(count == 10);
    CHECK_THROWS_WITH_AS(emit_scatter(table, "altitude", path_a), doctest::Contains("ndvi_mean"),
                         ConfigError);
    std::remove(path_a.c_str());
    std::remove(path_b.c_str());
}

TEST_CASE("embedding csv header") {
    EmbeddingTable table;
    table.width = 2;
    table.pixel_ids = {7};
    table.embeddings = {1.0f, 2.0f};
    table.coords.push_back({0.5, -0.5});
    table.summaries.push_back({});
    const std::string path = "/tmp/eopt_test_embed.csv";
    write_embedding_csv(table, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "pixel_id,pc1,pc2,ndvi_mean,ndvi_std,ndvi_peak_doy,ndwi_mean,ndwi_std,bsi_mean,bsi_std,"
          "gcvi_mean,gcvi_std,r,g,b");
    std::string row;
    std::getline(in, row);
    CHECK(row.rfind("7,0.5", 0) == 0);
    std::remove(path.c_str());
}
