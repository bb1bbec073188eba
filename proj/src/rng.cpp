#include "iclab/rng.hpp"

#include <cmath>

namespace iclab {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    // three dependent splitmix64 steps mix the inputs thoroughly
    std::uint64_t s = base;
    std::uint64_t h = splitmix64(s);
    s ^= a * 0xff51afd7ed558ccdULL;
    h ^= splitmix64(s);
    s ^= b * 0xc4ceb9fe1a85ec53ULL;
    h ^= splitmix64(s);
    return h;
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::next_u64() {
    // xoshiro256++
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

void Rng::fill_gaussian(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = gaussian();
}

std::vector<double> Rng::gaussian_vec(std::size_t n) {
    std::vector<double> v(n);
    fill_gaussian(v.data(), n);
    return v;
}

std::uint64_t Rng::below(std::uint64_t n) {
    // rejection to kill modulo bias
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

}  // namespace iclab
