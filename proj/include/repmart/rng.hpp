#pragma once

#include <cstdint>

namespace repmart {

// splitmix64 step; used for seed derivation and hashing.
std::uint64_t splitmix64(std::uint64_t& state);

// Derive a child seed from (parent, tag). Chaining calls gives independent
// substreams, e.g. derive_seed(derive_seed(master, path), stream).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag);

// Inverse standard normal CDF, accurate to ~1e-15 (rational approximation
// plus one Halley refinement). u must lie in (0,1).
double normal_icdf(double u);

// Standard normal CDF and density.
double normal_cdf(double x);
double normal_pdf(double x);

// xoshiro256** stream seeded via splitmix64. Normal draws use the inverse
// CDF so one uniform maps to one normal, which keeps substreams aligned.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Stream for a given (master seed, path index, stream tag).
    static Rng substream(std::uint64_t master, std::uint64_t path, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    double next_uniform(); // (0,1)
    double next_normal();

private:
    std::uint64_t s_[4];
};

} // namespace repmart
