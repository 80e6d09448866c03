#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace ebsde {

// Philox4x32-10 counter-based generator. One call produces a 128-bit block
// addressed by (key = seed, counter = (block_index, stream_index)); distinct
// addresses give statistically independent blocks, so any increment of any
// path can be regenerated in O(1) without storing generator state.
struct Philox4x32 {
    static constexpr uint32_t kMul0 = 0xD2511F53u;
    static constexpr uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<uint32_t, 4> block(uint64_t seed, uint64_t stream, uint64_t index) {
        uint32_t c0 = static_cast<uint32_t>(index);
        uint32_t c1 = static_cast<uint32_t>(index >> 32);
        uint32_t c2 = static_cast<uint32_t>(stream);
        uint32_t c3 = static_cast<uint32_t>(stream >> 32);
        uint32_t k0 = static_cast<uint32_t>(seed);
        uint32_t k1 = static_cast<uint32_t>(seed >> 32);
        for (int round = 0; round < 10; ++round) {
            uint64_t p0 = static_cast<uint64_t>(kMul0) * c0;
            uint64_t p1 = static_cast<uint64_t>(kMul1) * c2;
            uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
            uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
            uint32_t n0 = hi1 ^ c1 ^ k0;
            uint32_t n1 = lo1;
            uint32_t n2 = hi0 ^ c3 ^ k1;
            uint32_t n3 = lo0;
            c0 = n0; c1 = n1; c2 = n2; c3 = n3;
            k0 += kWeyl0; k1 += kWeyl1;
        }
        return {c0, c1, c2, c3};
    }
};

inline double u64_to_unit(uint64_t x) {
    // (0, 1]; never zero so it is safe under log()
    return (static_cast<double>(x >> 11) + 1.0) * (1.0 / 9007199254740992.0);
}

// Two standard normals from one Philox block via Box-Muller.
inline std::array<double, 2> normal_pair(uint64_t seed, uint64_t stream, uint64_t block_index) {
    auto w = Philox4x32::block(seed, stream, block_index);
    uint64_t a = (static_cast<uint64_t>(w[0]) << 32) | w[1];
    uint64_t b = (static_cast<uint64_t>(w[2]) << 32) | w[3];
    double u1 = u64_to_unit(a);
    double u2 = u64_to_unit(b);
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

inline std::array<double, 2> uniform_pair(uint64_t seed, uint64_t stream, uint64_t block_index) {
    auto w = Philox4x32::block(seed, stream, block_index);
    uint64_t a = (static_cast<uint64_t>(w[0]) << 32) | w[1];
    uint64_t b = (static_cast<uint64_t>(w[2]) << 32) | w[3];
    return {u64_to_unit(a), u64_to_unit(b)};
}

// Per-path normal stream: step j owns blocks [j*blocks_per_step, (j+1)*blocks_per_step).
class PathNormals {
  public:
    PathNormals(uint64_t seed, uint64_t path_index, int normals_per_step)
        : seed_(seed), path_(path_index), per_step_(normals_per_step),
          blocks_per_step_((normals_per_step + 1) / 2) {}

    void fill_step(uint64_t step, double* out) const {
        for (int b = 0; b < blocks_per_step_; ++b) {
            auto z = normal_pair(seed_, path_, step * blocks_per_step_ + b);
            out[2 * b] = z[0];
            if (2 * b + 1 < per_step_) out[2 * b + 1] = z[1];
        }
    }
    int normals_per_step() const { return per_step_; }

  private:
    uint64_t seed_;
    uint64_t path_;
    int per_step_;
    int blocks_per_step_;
};

}  // namespace ebsde
