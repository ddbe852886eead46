#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

namespace steerkit {

// PCG32 (pcg_setseq_64_xsh_rr_32_random_r from the PCG reference
// implementation). Fixed here so that seeded generation traces are
// reproducible across implementations and platforms.
class Pcg32 {
public:
    Pcg32() { seed(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL); }

    // initseq selects one of 2^63 independent streams.
    Pcg32(uint64_t initstate, uint64_t initseq = 0) { seed(initstate, initseq); }

    void seed(uint64_t initstate, uint64_t initseq) {
        state_ = 0u;
        inc_ = (initseq << 1u) | 1u;
        next_u32();
        state_ += initstate;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t oldstate = state_;
        state_ = oldstate * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((oldstate >> 18u) ^ oldstate) >> 27u);
        uint32_t rot = static_cast<uint32_t>(oldstate >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // Uniform in [0, 1), 32 bits of resolution.
    double next_double() { return next_u32() * 0x1.0p-32; }

    // Standard normal via Box-Muller; deterministic, unlike
    // std::normal_distribution whose algorithm is implementation-defined.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-12) u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Sub-seed for item k of a batch run: documented as base seed plus item
// index so batch results are reproducible item by item.
inline uint64_t derive_seed(uint64_t base_seed, uint64_t item_index) {
    return base_seed + item_index;
}

// FNV-1a 64-bit, used for model fingerprints and corpus ids.
class Fnv1a64 {
public:
    void update(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            hash_ ^= p[i];
            hash_ *= 1099511628211ULL;
        }
    }
    void update_u32(uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
        update(b, 4);
    }
    void update_str(const std::string& s) { update(s.data(), s.size()); }

    uint64_t value() const { return hash_; }

    std::string hex() const {
        static const char* digits = "0123456789abcdef";
        std::string out(16, '0');
        uint64_t v = hash_;
        for (int i = 15; i >= 0; --i) {
            out[static_cast<size_t>(i)] = digits[v & 0xf];
            v >>= 4;
        }
        return out;
    }

private:
    uint64_t hash_ = 14695981039346656037ULL;
};

}  // namespace steerkit
