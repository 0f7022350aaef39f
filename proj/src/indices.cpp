#include "eopt/indices.hpp"

#include "eopt/common.hpp"

namespace eopt {

namespace {
double ratio(double num, double den, IndexFlags* flags) {
    if (den == 0.0) {
        if (flags) flags->zero_denominator += 1;
        return 0.0;
    }
    return num / den;
}
}  // namespace

double ndvi(const BandVector& b, IndexFlags* flags) {
    return ratio(b[kNir] - b[kRed], b[kNir] + b[kRed], flags);
}

double ndwi(const BandVector& b, IndexFlags* flags) {
    return ratio(b[kGreen] - b[kNir], b[kGreen] + b[kNir], flags);
}

double bsi(const BandVector& b, IndexFlags* flags) {
    const double plus = b[kSwir1] + b[kRed];
    const double minus = b[kNir] + b[kBlue];
    return ratio(plus - minus, plus + minus, flags);
}

double gcvi(const BandVector& b, IndexFlags* flags) {
    if (b[kGreen] == 0.0) {
        if (flags) flags->zero_denominator += 1;
        return 0.0;
    }
    return b[kNir] / b[kGreen] - 1.0;
}

bool is_index_name(const std::string& name) {
    if (name == "ndvi" || name == "ndwi" || name == "bsi" || name == "gcvi") return true;
    if (name.rfind("band_", 0) == 0 && name.size() == 6) {
        char c = name[5];
        return c >= '0' && c <= '9';
    }
    return false;
}

double compute_index(const std::string& name, const BandVector& b, IndexFlags* flags) {
    if (name == "ndvi") return ndvi(b, flags);
    if (name == "ndwi") return ndwi(b, flags);
    if (name == "bsi") return bsi(b, flags);
    if (name == "gcvi") return gcvi(b, flags);
    if (is_index_name(name)) return b[name[5] - '0'];
    throw ConfigError("unknown index '" + name +
                      "' (valid: ndvi, ndwi, bsi, gcvi, band_0..band_9)");
}

}  // namespace eopt
