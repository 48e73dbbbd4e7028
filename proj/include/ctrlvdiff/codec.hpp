#pragma once

#include <cstdint>
#include <vector>

#include "ctrlvdiff/hmcs.hpp"
#include "ctrlvdiff/modality.hpp"

namespace ctrlvdiff {

/// A clip in the shared latent space: [T, H/p, W/p, 3p^2].
struct LatentTensor {
    Modality modality = Modality::rgb;
    LatentGrid grid;
    int patch = 1;
    std::vector<double> data;
};

/// Exactly invertible stand-in for a learned video autoencoder:
/// space-to-depth with patch p followed by one orthonormal channel mix Q,
/// shared by every modality. No temporal compression.
class Codec {
public:
    /// Q drawn from a seeded Gaussian matrix via Householder QR.
    Codec(int patch, std::uint64_t seed);
    /// Q = I.
    static Codec identity(int patch);

    int patch() const { return patch_; }
    int channels() const { return 3 * patch_ * patch_; }
    std::uint64_t seed() const { return seed_; }
    bool is_identity() const { return identity_; }
    /// Row-major channels x channels.
    const std::vector<double>& mixing() const { return q_; }

    LatentGrid grid_for(const Shape& color_shape) const;

    LatentTensor encode_clip(const ModalityTensor& color) const;
    ModalityTensor decode_clip(const LatentTensor& z) const;

    /// Diffusion-space helpers: color in [0,1] is mapped to [-1,1] before
    /// encoding and back after decoding (no clamping).
    LatentTensor encode_centered(const ModalityTensor& color) const;
    ModalityTensor decode_centered(const LatentTensor& z) const;

private:
    Codec(int patch, std::uint64_t seed, bool identity);

    int patch_;
    std::uint64_t seed_;
    bool identity_;
    std::vector<double> q_;
};

inline constexpr std::uint64_t kDefaultCodecSeed = 1234;

}  // namespace ctrlvdiff
