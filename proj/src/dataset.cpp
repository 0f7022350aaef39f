#include "eopt/dataset.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace eopt {

std::array<double, 2> date_embedding(double day_of_year_value) {
    constexpr double two_pi = 6.283185307179586476925287;
    const double arg = two_pi * day_of_year_value / 365.0;
    return {std::sin(arg), std::cos(arg)};
}

// ----------------------------- float16 -----------------------------

uint16_t f32_to_f16(float v) {
    const uint32_t x = std::bit_cast<uint32_t>(v);
    const uint32_t sign = (x >> 16) & 0x8000u;
    uint32_t mant = x & 0x7FFFFFu;
    const int32_t exp = static_cast<int32_t>((x >> 23) & 0xFFu);
    if (exp == 255) {  // inf / nan
        if (mant == 0) return static_cast<uint16_t>(sign | 0x7C00u);
        uint32_t nm = mant >> 13;
        if (nm == 0) nm = 0x200u;  // keep NaN-ness
        return static_cast<uint16_t>(sign | 0x7C00u | nm);
    }
    const int32_t e = exp - 127 + 15;
    if (e >= 31) return static_cast<uint16_t>(sign | 0x7C00u);  // overflow -> inf
    if (e <= 0) {
        if (e < -10) return static_cast<uint16_t>(sign);  // underflows to zero
        mant |= 0x800000u;                                // implicit leading bit
        const uint32_t shift = static_cast<uint32_t>(14 - e);
        uint32_t half = mant >> shift;
        const uint32_t rem = mant & ((1u << shift) - 1u);
        const uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1u))) half += 1;
        return static_cast<uint16_t>(sign | half);
    }
    uint32_t half = (static_cast<uint32_t>(e) << 10) | (mant >> 13);
    const uint32_t rem = mant & 0x1FFFu;
    // round to nearest even; a carry may bump the exponent, which is correct
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) half += 1;
    return static_cast<uint16_t>(sign | half);
}

float f16_to_f32(uint16_t h) {
    const uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
    const uint32_t exp = (h >> 10) & 0x1Fu;
    uint32_t mant = h & 0x3FFu;
    uint32_t x;
    if (exp == 0) {
        if (mant == 0) {
            x = sign;
        } else {
            int shift = 0;
            while (!(mant & 0x400u)) {
                mant <<= 1;
                ++shift;
            }
            x = sign | (static_cast<uint32_t>(113 - shift) << 23) | ((mant & 0x3FFu) << 13);
        }
    } else if (exp == 31) {
        x = sign | 0x7F800000u | (mant << 13);
    } else {
        x = sign | ((exp + 112u) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(x);
}

// ----------------------------- assembly -----------------------------

void fill_token_row(float* out, const std::array<float, kNumBands>& raw, int64_t date_cur,
                    int64_t date_next, int64_t epoch_day, NormStats* stats) {
    for (int b = 0; b < kNumBands; ++b) {
        out[b] = stats ? normalize_reflectance(raw[b], *stats) : normalize_reflectance(raw[b]);
    }
    const auto cur = date_embedding(day_of_year(epoch_day + date_cur));
    const auto nxt = date_embedding(day_of_year(epoch_day + date_next));
    out[10] = static_cast<float>(cur[0]);
    out[11] = static_cast<float>(cur[1]);
    out[12] = static_cast<float>(nxt[0]);
    out[13] = static_cast<float>(nxt[1]);
}

TokenMatrix assemble_tokens(const ObservationSeries& series, int64_t epoch_day) {
    const int64_t t = static_cast<int64_t>(series.dates.size());
    if (t < 2)
        throw HistoryError("insufficient history: need at least 2 observations, got " +
                           std::to_string(t));
    TokenMatrix out;
    out.steps = t - 1;
    out.tokens.resize(static_cast<size_t>(out.steps) * kNumChannels);
    out.targets.resize(static_cast<size_t>(out.steps) * kNumBands);
    for (int64_t i = 0; i < out.steps; ++i) {
        fill_token_row(out.tokens.data() + i * kNumChannels, series.reflectances[i],
                       series.dates[i], series.dates[i + 1], epoch_day);
        for (int b = 0; b < kNumBands; ++b)
            out.targets[i * kNumBands + b] = normalize_reflectance(series.reflectances[i + 1][b]);
    }
    return out;
}

ObservationSeries series_from_dataset(const TokenizedDataset& ds, int64_t pixel) {
    ObservationSeries s;
    s.pixel_id = pixel;
    s.dates = ds.dates;
    s.reflectances.resize(static_cast<size_t>(ds.n_time));
    for (int64_t t = 0; t < ds.n_time; ++t) {
        const float* r = ds.row(pixel, t);
        for (int b = 0; b < kNumBands; ++b)
            s.reflectances[t][b] = static_cast<float>(denormalize_reflectance(r[b]));
    }
    return s;
}

// ----------------------------- persistence -----------------------------

namespace {

constexpr char kMagic[4] = {'E', 'O', 'P', 'T'};
constexpr uint32_t kVersion = 1;
constexpr int64_t kHeaderBytes = 48;

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

struct MappedFile {
    int fd = -1;
    size_t size = 0;
    const unsigned char* bytes = nullptr;

    explicit MappedFile(const std::string& path) {
        fd = ::open(path.c_str(), O_RDONLY);
        if (fd < 0) throw FormatError("cannot open dataset file: " + path);
        struct stat st{};
        if (::fstat(fd, &st) != 0) {
            ::close(fd);
            throw FormatError("cannot stat dataset file: " + path);
        }
        size = static_cast<size_t>(st.st_size);
        if (size > 0) {
            void* p = ::mmap(nullptr, size, PROT_READ, MAP_PRIVATE, fd, 0);
            if (p == MAP_FAILED) {
                ::close(fd);
                throw FormatError("cannot map dataset file: " + path);
            }
            bytes = static_cast<const unsigned char*>(p);
        }
    }
    ~MappedFile() {
        if (bytes) ::munmap(const_cast<unsigned char*>(bytes), size);
        if (fd >= 0) ::close(fd);
    }
    MappedFile(const MappedFile&) = delete;
    MappedFile& operator=(const MappedFile&) = delete;

    template <typename T>
    T read(size_t offset) const {
        T v;
        std::memcpy(&v, bytes + offset, sizeof(T));
        return v;
    }
};

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw FormatError("cannot rename " + tmp + " to " + path);
}

void write_dataset(const TokenizedDataset& ds, const std::string& path) {
    if (ds.dtype != 1 && ds.dtype != 2)
        throw FormatError("unknown dtype code " + std::to_string(ds.dtype));
    if (static_cast<int64_t>(ds.dates.size()) != ds.n_time)
        throw DimensionError("date vector length " + std::to_string(ds.dates.size()) +
                             " does not match n_time " + std::to_string(ds.n_time));
    const int64_t values = ds.n_index * ds.n_time * ds.n_channel;
    if (static_cast<int64_t>(ds.data.size()) != values)
        throw DimensionError("payload length does not match header sizes");

    std::string out;
    out.reserve(static_cast<size_t>(kHeaderBytes + 4 * ds.n_time + values * (ds.dtype == 1 ? 2 : 4)));
    out.append(kMagic, 4);
    put<uint32_t>(out, kVersion);
    put<uint64_t>(out, static_cast<uint64_t>(ds.n_index));
    put<uint64_t>(out, static_cast<uint64_t>(ds.n_time));
    put<uint64_t>(out, static_cast<uint64_t>(ds.n_channel));
    put<uint8_t>(out, ds.dtype);
    for (int i = 0; i < 7; ++i) put<uint8_t>(out, 0);
    put<int64_t>(out, ds.epoch_day);
    for (int32_t d : ds.dates) put<int32_t>(out, d);
    if (ds.dtype == 1) {
        for (float v : ds.data) put<uint16_t>(out, f32_to_f16(v));
    } else {
        for (float v : ds.data) put<float>(out, v);
    }
    write_file_atomic(path, out);
}

TokenizedDataset read_dataset(const std::string& path) {
    MappedFile file(path);
    if (file.size < static_cast<size_t>(kHeaderBytes))
        throw FormatError("file truncated: header needs " + std::to_string(kHeaderBytes) +
                          " bytes, found " + std::to_string(file.size) + " (at offset 0)");
    if (std::memcmp(file.bytes, kMagic, 4) != 0) throw FormatError("bad magic at offset 0");
    const uint32_t version = file.read<uint32_t>(4);
    if (version != kVersion)
        throw FormatError("unsupported version " + std::to_string(version) + " at offset 4");

    TokenizedDataset ds;
    ds.n_index = static_cast<int64_t>(file.read<uint64_t>(8));
    ds.n_time = static_cast<int64_t>(file.read<uint64_t>(16));
    ds.n_channel = static_cast<int64_t>(file.read<uint64_t>(24));
    ds.dtype = file.read<uint8_t>(32);
    if (ds.dtype != 1 && ds.dtype != 2)
        throw FormatError("unknown dtype code " + std::to_string(ds.dtype) + " at offset 32");
    if (ds.n_index < 0 || ds.n_time < 0 || ds.n_channel <= 0)
        throw FormatError("nonsensical header sizes at offset 8");
    ds.epoch_day = file.read<int64_t>(40);

    const int64_t dates_bytes = 4 * ds.n_time;
    const int64_t values = ds.n_index * ds.n_time * ds.n_channel;
    const int64_t value_bytes = values * (ds.dtype == 1 ? 2 : 4);
    const int64_t expected = kHeaderBytes + dates_bytes + value_bytes;
    if (static_cast<int64_t>(file.size) != expected)
        throw FormatError("file truncated: expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(file.size) + " (at offset " +
                          std::to_string(std::min<int64_t>(static_cast<int64_t>(file.size), expected)) +
                          ")");

    ds.dates.resize(static_cast<size_t>(ds.n_time));
    std::memcpy(ds.dates.data(), file.bytes + kHeaderBytes, static_cast<size_t>(dates_bytes));
    ds.data.resize(static_cast<size_t>(values));
    const unsigned char* payload = file.bytes + kHeaderBytes + dates_bytes;
    if (ds.dtype == 1) {
        const uint16_t* p = reinterpret_cast<const uint16_t*>(payload);
        for (int64_t i = 0; i < values; ++i) ds.data[static_cast<size_t>(i)] = f16_to_f32(p[i]);
    } else {
        std::memcpy(ds.data.data(), payload, static_cast<size_t>(value_bytes));
    }
    return ds;
}

void write_labels(const std::vector<std::string>& names, const std::string& path) {
    std::string out;
    for (size_t i = 0; i < names.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += names[i];
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<std::string> read_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open labels file: " + path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const size_t comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("bad labels line: " + line);
        names.push_back(line.substr(comma + 1));
    }
    return names;
}

}  // namespace eopt
