#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "tmdit/layers.hpp"

namespace tmdit {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Binary tensor container, little-endian throughout:
//
//   char[4]  magic        "TMCK" (checkpoint) or "TMLT" (latents)
//   u32      version      1
//   u32      config_len, then config_len bytes of UTF-8 config echo
//   u32      tensor count
//   per tensor:
//     u32 name_len, name bytes, u32 rank, rank x u32 dims, numel x f32 values
//   u64      rng seed
//   u64      rng counter
enum class ContainerKind { checkpoint, latents };

struct Container {
    std::string config;
    NamedParams tensors;
    std::uint64_t rng_seed = 0;
    std::uint64_t rng_counter = 0;

    const Tensor& get(const std::string& name) const;
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(const std::filesystem::path& path, ContainerKind kind, const Container& c);
Container read_container(const std::filesystem::path& path, ContainerKind kind);

}  // namespace tmdit
