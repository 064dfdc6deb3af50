#include "archdiff/rng.hpp"

#include <cmath>

namespace archdiff {

namespace {

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Rng Rng::substream(std::uint64_t tag) const {
    return Rng(seed_, mix64(stream_ ^ mix64(tag + 0x632be59bd9b4e019ULL)));
}

std::uint64_t Rng::next_u64() {
    std::uint64_t h = mix64(seed_ ^ mix64(stream_));
    return mix64(h + counter_++ * 0x9e3779b97f4a7c15ULL);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    // u1 in (0, 1] so the log is finite
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

int Rng::uniform_int(int n) {
    // modulo bias is < 2^-50 for desk-scale n; acceptable here
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
}

}  // namespace archdiff
