#pragma once

#include <array>
#include <span>

#include "tmdit/layers.hpp"

namespace tmdit {

// Sinusoidal features of the flow time followed by a two-layer SiLU MLP.
struct TimeEmbedder {
    static constexpr int kFrequencies = 256;
    static constexpr double kTimeScale = 1000.0;  // sigma in [0,1] is spread over a DiT-style timestep range

    Linear fc1;  // 2*kFrequencies -> D
    Linear fc2;  // D -> D

    static TimeEmbedder init(std::int64_t dim, RngStream& rng);

    // sigma: one value per batch element -> [B, D]
    Tensor operator()(std::span<const double> sigma) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

// cos/sin features, [B, 2*kFrequencies]. No parameters, no gradient.
Tensor sinusoidal_features(std::span<const double> sigma);

// Shift, scale and gate for the attention branch then the MLP branch.
struct ModulationSlots {
    enum Slot { kShiftMsa, kScaleMsa, kGateMsa, kShiftMlp, kScaleMlp, kGateMlp };

    std::array<Tensor, 6> slot;  // each [B, 1, D]

    const Tensor& shift_msa() const { return slot[kShiftMsa]; }
    const Tensor& scale_msa() const { return slot[kScaleMsa]; }
    const Tensor& gate_msa() const { return slot[kGateMsa]; }
    const Tensor& shift_mlp() const { return slot[kShiftMlp]; }
    const Tensor& scale_mlp() const { return slot[kScaleMlp]; }
    const Tensor& gate_mlp() const { return slot[kGateMlp]; }
};

// SiLU then a linear map D -> 6D, split in slot order.
struct SlotMlp {
    Linear proj;

    // Final layer starts at zero: every slot, gates included, is exactly 0.
    static SlotMlp init(std::int64_t dim);

    ModulationSlots operator()(const Tensor& t_emb) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

// Splits a [B, 6D] vector into six [B, 1, D] slots.
ModulationSlots split_slots(const Tensor& packed);

// (1 + scale) * LN(h) + shift, slots broadcast over tokens.
Tensor modulated_ln(const Tensor& h, const Tensor& shift, const Tensor& scale);

// h + gate * delta
Tensor gated_residual(const Tensor& h, const Tensor& delta, const Tensor& gate);

}  // namespace tmdit
