#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "tmdit/tensor.hpp"

namespace tmdit {

// Counter-based generator: draw i of a stream is a pure function of
// (key, i), so identical (seed, counter) pairs give identical draws on every
// platform. Distributions are implemented here rather than taken from
// <random>, whose distribution algorithms are implementation-defined.
class RngStream {
public:
    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    // Independent stream derived from a seed and a stream name plus optional index.
    static RngStream named(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();
    double uniform();                       // [0, 1)
    double normal();                        // N(0, 1)
    bool bernoulli(double p);
    std::uint64_t uniform_int(std::uint64_t n);  // [0, n)

    std::vector<double> normals(std::size_t n);
    Tensor normal_tensor(Shape shape, double stddev = 1.0);

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace tmdit
