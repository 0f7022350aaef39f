#pragma once

// Band-ratio remote-sensing indices over raw-scale reflectances.
//
// Band-to-formula mapping (frozen; see README for the variant table):
//   NDVI = (NIR - Red) / (NIR + Red)
//   NDWI = (Green - NIR) / (Green + NIR)
//   BSI  = ((SWIR1 + Red) - (NIR + Blue)) / ((SWIR1 + Red) + (NIR + Blue))
//   GCVI = NIR / Green - 1
// Zero denominators return 0 and bump the flagged counter instead of
// propagating NaN, so aggregate statistics stay well defined.

#include <array>
#include <cstdint>
#include <string>

namespace eopt {

enum Band : int {
    kBlue = 0,
    kGreen = 1,
    kRed = 2,
    kRedEdge1 = 3,
    kRedEdge2 = 4,
    kRedEdge3 = 5,
    kRedEdge4 = 6,
    kNir = 7,
    kSwir1 = 8,
    kSwir2 = 9,
};

constexpr int kNumBands = 10;

using BandVector = std::array<double, kNumBands>;

struct IndexFlags {
    int64_t zero_denominator = 0;
};

double ndvi(const BandVector& b, IndexFlags* flags = nullptr);
double ndwi(const BandVector& b, IndexFlags* flags = nullptr);
double bsi(const BandVector& b, IndexFlags* flags = nullptr);
double gcvi(const BandVector& b, IndexFlags* flags = nullptr);

// name in {ndvi, ndwi, bsi, gcvi, band_0 .. band_9}; throws ConfigError on
// anything else, listing the valid names.
double compute_index(const std::string& name, const BandVector& b, IndexFlags* flags = nullptr);
bool is_index_name(const std::string& name);

}  // namespace eopt
