#include "fan/rng.hpp"

#include <cmath>

#include "fan/error.hpp"

namespace fan {

namespace {

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr uint64_t kFnvPrime = 0x100000001b3ull;

uint64_t fnv1a(uint64_t h, const void* bytes, size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace

Rng Rng::stream(const std::string& name) const {
    uint64_t h = fnv1a(kFnvOffset, &state_, sizeof(state_));
    h = fnv1a(h, name.data(), name.size());
    return Rng(h);
}

Rng Rng::stream(uint64_t index) const {
    uint64_t h = fnv1a(kFnvOffset, &state_, sizeof(state_));
    h = fnv1a(h, &index, sizeof(index));
    return Rng(h);
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
    // 53-bit mantissa from the top bits.
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int n) {
    if (n <= 0) throw ContractError("uniform_int: n must be positive, got " + std::to_string(n));
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

double Rng::normal() {
    // Box-Muller; u1 bounded away from 0 so log stays finite.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void Rng::fill_normal(std::vector<double>& out, double mean, double stddev) {
    for (auto& v : out) v = normal(mean, stddev);
}

}  // namespace fan
