// Deterministic, platform-independent RNG: xoshiro256++ seeded through
// splitmix64, plus the gaussian / uniform draws the rest of the code needs.
// Everything is integer-exact across platforms; doubles are derived from the
// top 53 bits only, so streams replay bit-identically for a given seed.

#pragma once

#include <cstdint>
#include <vector>

namespace iclab {

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // uniform in [0, 1)
    double uniform();

    // uniform in (0, 1] — never returns 0, safe under log()
    double uniform_pos();

    // standard normal via Box-Muller; second value of each pair is cached
    double gaussian();

    void fill_gaussian(double* out, std::size_t n);
    std::vector<double> gaussian_vec(std::size_t n);

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// splitmix64 step; also the seed-expansion primitive
std::uint64_t splitmix64(std::uint64_t& state);

// Stable sub-seed for a (base, a, b) context, so per-item streams don't
// depend on evaluation order.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace iclab
