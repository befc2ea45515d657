#include "tmdit/rng.hpp"

#include <cmath>
#include <numbers>

namespace tmdit {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

RngStream RngStream::named(std::uint64_t seed, std::string_view name, std::uint64_t index) {
    const std::uint64_t key = mix64(mix64(seed ^ fnv1a(name)) + 0x9e3779b97f4a7c15ULL * (index + 1));
    return RngStream(key, 0);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t x = mix64(seed_ + 0x9e3779b97f4a7c15ULL * (counter_ + 1));
    ++counter_;
    return mix64(x ^ 0xd1b54a32d192ed03ULL);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    // Box-Muller; one output per pair keeps the stream position predictable.
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool RngStream::bernoulli(double p) { return uniform() < p; }

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
    if (n == 0) return 0;
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

std::vector<double> RngStream::normals(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal();
    return out;
}

Tensor RngStream::normal_tensor(Shape shape, double stddev) {
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : values) v = stddev * normal();
    return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace tmdit
