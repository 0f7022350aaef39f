#pragma once

// Shared plumbing: error taxonomy, deterministic RNG, thread pool, checksums.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace eopt {

// ----------------------------- errors -----------------------------
// Exit-code contract (see cli): config/format/usage -> 2, numerical -> 3.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct HistoryError : std::runtime_error {
    explicit HistoryError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// ----------------------------- rng -----------------------------
// SplitMix64 core with Box-Muller gaussians. Self-contained so that seeded
// runs are bit-identical across platforms and standard libraries.

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    double gauss(double mu = 0.0, double sigma = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mu + sigma * spare_;
        }
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mu + sigma * r * std::cos(theta);
    }

    // Independent derived stream, e.g. one per pixel. Result does not depend
    // on how many draws were taken from the parent.
    Rng fork(uint64_t tag) const {
        uint64_t z = state_ ^ (0xD1B54A32D192ED03ull * (tag + 1));
        return Rng(z);
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ----------------------------- parallel_for -----------------------------
// Static row partition over a persistent pool; every index is processed by
// exactly one thread, so float results are bit-identical for any thread count.
// Worker count defaults to hardware_concurrency, capped by EOPT_THREADS.

int worker_count();
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

// ----------------------------- checksum -----------------------------

uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xCBF29CE484222325ull);
uint64_t fnv1a_file(const std::string& path);
std::string hex64(uint64_t v);

}  // namespace eopt
