#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mgp {

/// Mixes a master seed with a path of integer tags into a child seed.
/// Used to give every (setup, rule, repetition, ...) its own reproducible seed.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept;

/// Reproducible random stream keyed by (seed, stream_id).
///
/// The underlying engine is a 64-bit Mersenne twister whose state is expanded
/// from both keys through std::seed_seq, so streams sharing a seed but not a
/// stream id are decorrelated. Uniform and normal variates are produced from raw
/// engine output without going through library distributions, which keeps draw
/// sequences identical across standard library implementations.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on the open interval (0, 1).
    double uniform_open();
    /// Standard normal by inversion of uniform_open().
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    /// Uniform integer on [0, n); n must be positive.
    std::uint64_t index(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    /// Access for std:: distributions that have no portable closed form here
    /// (gamma, Student t).
    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
};

}  // namespace mgp
