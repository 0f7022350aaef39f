#include <cmath>

#include "doctest.h"
#include "eopt/common.hpp"
#include "eopt/dataset.hpp"
#include "eopt/indices.hpp"

using namespace eopt;

namespace {

BandVector bands(double blue, double green, double red, double nir, double swir1) {
    BandVector b{};
    b[kBlue] = blue;
    b[kGreen] = green;
    b[kRed] = red;
    b[kRedEdge1] = red * 1.1;
    b[kRedEdge2] = red * 1.3;
    b[kRedEdge3] = nir * 0.8;
    b[kRedEdge4] = nir * 0.9;
    b[kNir] = nir;
    b[kSwir1] = swir1;
    b[kSwir2] = swir1 * 0.9;
    return b;
}

}  // namespace

TEST_CASE("ndvi") {
    CHECK(ndvi(bands(400, 700, 1000, 1000, 2000)) == 0.0);
    CHECK(ndvi(bands(400, 700, 1000, 8000, 2000)) == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
    CHECK(ndvi(bands(400, 700, 1000, 0, 2000)) == -1.0);
}

TEST_CASE("ndwi, bsi, gcvi") {
    CHECK(ndwi(bands(400, 1500, 1000, 1500, 2000)) == 0.0);

    BandVector b{};
    b[kSwir1] = 3000;
    b[kRed] = 2000;
    b[kNir] = 2500;
    b[kBlue] = 500;
    CHECK(bsi(b) == doctest::Approx(0.25).epsilon(1e-12));

    CHECK(gcvi(bands(400, 1500, 1000, 1500, 2000)) == 0.0);
    CHECK(gcvi(bands(400, 1000, 1000, 3000, 2000)) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("zero denominators return 0 and raise the flag") {
    IndexFlags flags;
    BandVector zero{};
    CHECK(ndvi(zero, &flags) == 0.0);
    CHECK(ndwi(zero, &flags) == 0.0);
    CHECK(bsi(zero, &flags) == 0.0);
    CHECK(gcvi(zero, &flags) == 0.0);
    CHECK(flags.zero_denominator == 4);
}

TEST_CASE("normalized-difference indices are scale invariant") {
    Rng rng(12);
    for (int i = 0; i < 50; ++i) {
        BandVector b{};
        for (int c = 0; c < kNumBands; ++c) b[c] = rng.uniform(10.0, 9000.0);
        const double k = rng.uniform(0.1, 7.0);
        BandVector kb = b;
        for (int c = 0; c < kNumBands; ++c) kb[c] *= k;
        CHECK(ndvi(kb) == doctest::Approx(ndvi(b)).epsilon(1e-9));
        CHECK(ndwi(kb) == doctest::Approx(ndwi(b)).epsilon(1e-9));
        CHECK(bsi(kb) == doctest::Approx(bsi(b)).epsilon(1e-9));
        CHECK(gcvi(kb) == doctest::Approx(gcvi(b)).epsilon(1e-9));
    }
}

TEST_CASE("ndvi and ndwi are antisymmetric under band swap") {
    Rng rng(13);
    for (int i = 0; i < 20; ++i) {
        BandVector b{};
        for (int c = 0; c < kNumBands; ++c) b[c] = rng.uniform(10.0, 9000.0);
        BandVector swapped_vi = b;
        std::swap(swapped_vi[kNir], swapped_vi[kRed]);
        CHECK(ndvi(swapped_vi) == doctest::Approx(-ndvi(b)).epsilon(1e-12));
        BandVector swapped_wi = b;
        std::swap(swapped_wi[kGreen], swapped_wi[kNir]);
        CHECK(ndwi(swapped_wi) == doctest::Approx(-ndwi(b)).epsilon(1e-12));
    }
}

TEST_CASE("indices survive the tokenization round trip") {
    Rng rng(14);
    for (int i = 0; i < 50; ++i) {
        BandVector raw{};
        BandVector round{};
        for (int c = 0; c < kNumBands; ++c) {
            raw[c] = rng.uniform(50.0, 9000.0);
            round[c] = denormalize_reflectance(normalize_reflectance(raw[c]));
        }
        CHECK(std::fabs(ndvi(round) - ndvi(raw)) < 1e-3);
        CHECK(std::fabs(ndwi(round) - ndwi(raw)) < 1e-3);
        CHECK(std::fabs(bsi(round) - bsi(raw)) < 1e-3);
        CHECK(std::fabs(gcvi(round) - gcvi(raw)) < 1e-3);
    }
}

TEST_CASE("compute_index dispatch and error listing") {
    BandVector b = bands(400, 700, 1000, 3000, 2000);
    CHECK(compute_index("ndvi", b) == ndvi(b));
    CHECK(compute_index("band_7", b) == b[kNir]);
    CHECK(is_index_name("band_0"));
    CHECK(!is_index_name("band_x"));
    CHECK_THROWS_WITH_AS(compute_index("evi", b), doctest::Contains("ndvi"), ConfigError);
}
