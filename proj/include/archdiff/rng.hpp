#pragma once

#include <cstdint>

namespace archdiff {

// Counter-based deterministic generator. Each (seed, stream) pair is an
// independent stream; draws depend only on (seed, stream, counter), so
// results are reproducible regardless of thread scheduling as long as each
// concurrent unit owns its own stream. Normal variates use Box-Muller.
class Rng {
  public:
    Rng() : Rng(0, 0) {}
    Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    // Derives an independent stream from this one; `tag` names the substream.
    Rng substream(std::uint64_t tag) const;

    std::uint64_t next_u64();
    double uniform();                    // [0, 1)
    double normal();                     // standard normal, two uniforms per draw
    int uniform_int(int n);              // {0, ..., n-1}, n >= 1

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace archdiff
