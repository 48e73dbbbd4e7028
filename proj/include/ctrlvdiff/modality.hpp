#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctrlvdiff/common.hpp"

namespace ctrlvdiff {

/// The eight visual modalities, in registry order. The numeric value is the
/// on-disk modality id and the channel-slice position in the model input.
enum class Modality : std::uint32_t {
    rgb = 0,
    depth = 1,
    normal = 2,
    albedo = 3,
    roughness = 4,
    metallic = 5,
    segmentation = 6,
    canny = 7,
};

inline constexpr int kNumModalities = 8;
inline constexpr int kPaletteSize = 256;

inline constexpr std::array<Modality, kNumModalities> kAllModalities = {
    Modality::rgb,       Modality::depth,    Modality::normal,       Modality::albedo,
    Modality::roughness, Modality::metallic, Modality::segmentation, Modality::canny};

inline constexpr int index_of(Modality m) { return static_cast<int>(m); }

enum class ColorCodec { identity, depth_minmax, normal_affine, scalar_replicate, palette };

enum class Space { native, color, latent };

struct ModalitySpec {
    Modality id;
    std::string_view name;
    int native_channels;
    double lo;  // per-channel closed range; depth uses (0, +inf)
    double hi;
    ColorCodec codec;
};

const std::array<ModalitySpec, kNumModalities>& registry();
const ModalitySpec& spec_of(Modality m);
std::string_view name_of(Modality m);
/// Throws ValidationError naming the bad token.
Modality parse_modality(std::string_view name);
std::vector<Modality> parse_modality_list(std::string_view csv);
/// Stable hash of the registry order, recorded in checkpoints.
std::uint64_t registry_hash();

/// One modality's clip as a dense [T, H, W, C] float array.
struct ModalityTensor {
    Modality modality = Modality::rgb;
    Space space = Space::native;
    Shape shape;
    std::vector<float> data;

    ModalityTensor() = default;
    ModalityTensor(Modality m, Space s, Shape sh, float fill = 0.0f)
        : modality(m), space(s), shape(sh), data(sh.numel(), fill) {}

    float& at(int t, int y, int x, int c) { return data[shape.index(t, y, x, c)]; }
    float at(int t, int y, int x, int c) const { return data[shape.index(t, y, x, c)]; }
};

struct DepthRange {
    double min = 0.0;
    double max = 0.0;
};

/// Side information needed to invert to_color_space.
struct ColorMeta {
    std::optional<DepthRange> depth;
};

struct ColorEncoded {
    ModalityTensor tensor;
    ColorMeta meta;
};

/// Checks native-space invariants (finite, channel count, depth > 0, unit normals,
/// palette ids). Throws ValidationError.
void validate_native(const ModalityTensor& m);

ColorEncoded to_color_space(const ModalityTensor& native);
ModalityTensor from_color_space(const ModalityTensor& color, const ColorMeta& meta);

struct Rgb {
    float r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

/// Fixed golden-ratio hue palette: hue = frac(id * 0.61803), s = 0.75, v = 0.95.
Rgb palette_color(int id);
/// Nearest palette entry to a color; also reports the Euclidean residual.
int snap_to_palette(float r, float g, float b, double* residual = nullptr);

Rgb hsv_to_rgb(double h, double s, double v);

}  // namespace ctrlvdiff
