#include "ctrlvdiff/modality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ctrlvdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::array<ModalitySpec, kNumModalities> kRegistry = {{
    {Modality::rgb, "rgb", 3, 0.0, 1.0, ColorCodec::identity},
    {Modality::depth, "depth", 1, 0.0, kInf, ColorCodec::depth_minmax},
    {Modality::normal, "normal", 3, -1.0, 1.0, ColorCodec::normal_affine},
    {Modality::albedo, "albedo", 3, 0.0, 1.0, ColorCodec::identity},
    {Modality::roughness, "roughness", 1, 0.0, 1.0, ColorCodec::scalar_replicate},
    {Modality::metallic, "metallic", 1, 0.0, 1.0, ColorCodec::scalar_replicate},
    {Modality::segmentation, "segmentation", 1, 0.0, kPaletteSize - 1, ColorCodec::palette},
    {Modality::canny, "canny", 3, 0.0, 1.0, ColorCodec::identity},
}};

const std::array<Rgb, kPaletteSize>& palette_table() {
    static const std::array<Rgb, kPaletteSize> table = [] {
        std::array<Rgb, kPaletteSize> t{};
        for (int id = 0; id < kPaletteSize; ++id) {
            double hue = id * 0.61803;
            hue -= std::floor(hue);
            t[static_cast<std::size_t>(id)] = hsv_to_rgb(hue, 0.75, 0.95);
        }
        return t;
    }();
    return table;
}

ModalityTensor make_color(const ModalityTensor& native) {
    Shape s = native.shape;
    s.channels = 3;
    return ModalityTensor(native.modality, Space::color, s);
}

}  // namespace

const std::array<ModalitySpec, kNumModalities>& registry() { return kRegistry; }

const ModalitySpec& spec_of(Modality m) { return kRegistry[static_cast<std::size_t>(index_of(m))]; }

std::string_view name_of(Modality m) { return spec_of(m).name; }

Modality parse_modality(std::string_view name) {
    for (const auto& s : kRegistry)
        if (s.name == name) return s.id;
    throw ValidationError("unknown modality '" + std::string(name) + "'");
}

std::vector<Modality> parse_modality_list(std::string_view csv) {
    std::vector<Modality> out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string_view::npos) comma = csv.size();
        std::string_view tok = csv.substr(pos, comma - pos);
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        if (!tok.empty()) {
            Modality m = parse_modality(tok);
            if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
        }
        pos = comma + 1;
    }
    return out;
}

std::uint64_t registry_hash() {
    // FNV-1a over "name:channels;" for each entry in order.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ULL;
    };
    for (const auto& s : kRegistry) {
        for (char c : s.name) feed(static_cast<unsigned char>(c));
        feed(':');
        feed(static_cast<unsigned char>('0' + s.native_channels));
        feed(';');
    }
    return h;
}

Rgb hsv_to_rgb(double h, double s, double v) {
    h = (h - std::floor(h)) * 6.0;
    const int sector = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r = 0, g = 0, b = 0;
    switch (sector) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
    return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

Rgb palette_color(int id) {
    require(id >= 0 && id < kPaletteSize, "palette id " + std::to_string(id) + " out of range [0,256)");
    return palette_table()[static_cast<std::size_t>(id)];
}

int snap_to_palette(float r, float g, float b, double* residual) {
    const auto& table = palette_table();
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int id = 0; id < kPaletteSize; ++id) {
        const Rgb& c = table[static_cast<std::size_t>(id)];
        const double dr = double(r) - c.r, dg = double(g) - c.g, db = double(b) - c.b;
        const double d2 = dr * dr + dg * dg + db * db;
        if (d2 < best_d2) {
            best_d2 = d2;
            best = id;
        }
    }
    if (residual) *residual = std::sqrt(best_d2);
    return best;
}

void validate_native(const ModalityTensor& m) {
    const ModalitySpec& spec = spec_of(m.modality);
    require(m.space == Space::native, std::string(spec.name) + ": expected native-space tensor");
    require(m.shape.channels == spec.native_channels,
            std::string(spec.name) + ": expected " + std::to_string(spec.native_channels) +
                " native channels, got " + std::to_string(m.shape.channels));
    require(m.data.size() == m.shape.numel(), std::string(spec.name) + ": data size does not match shape");
    for (float v : m.data)
        require(std::isfinite(v), std::string(spec.name) + ": non-finite value");
    switch (m.modality) {
        case Modality::depth:
            for (float v : m.data) require(v > 0.0f, "depth: values must be strictly positive");
            break;
        case Modality::segmentation:
            for (float v : m.data)
                require(v >= 0.0f && v < kPaletteSize && v == std::floor(v),
                        "segmentation: id outside palette [0,256)");
            break;
        case Modality::normal:
            for (std::size_t i = 0; i < m.data.size(); i += 3) {
                const double n = std::sqrt(double(m.data[i]) * m.data[i] + double(m.data[i + 1]) * m.data[i + 1] +
                                           double(m.data[i + 2]) * m.data[i + 2]);
                require(std::abs(n - 1.0) <= 1e-4, "normal: vectors must be unit length");
            }
            break;
        default:
            break;
    }
}

ColorEncoded to_color_space(const ModalityTensor& native) {
    validate_native(native);
    ColorEncoded out{make_color(native), {}};
    auto& dst = out.tensor.data;
    const auto& src = native.data;
    const std::size_t px = native.shape.pixels();
    switch (spec_of(native.modality).codec) {
        case ColorCodec::identity:
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::clamp(src[i], 0.0f, 1.0f);
            break;
        case ColorCodec::depth_minmax: {
            const auto [lo_it, hi_it] = std::minmax_element(src.begin(), src.end());
            const double lo = *lo_it, hi = *hi_it;
            out.meta.depth = DepthRange{lo, hi};
            for (std::size_t i = 0; i < px; ++i) {
                double c = 0.5;
                if (hi > lo) c = std::clamp((double(src[i]) - lo) / (hi - lo), 0.0, 1.0);
                dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = static_cast<float>(c);
            }
            break;
        }
        case ColorCodec::normal_affine:
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] = std::clamp(static_cast<float>((double(src[i]) + 1.0) * 0.5), 0.0f, 1.0f);
            break;
        case ColorCodec::scalar_replicate:
            for (std::size_t i = 0; i < px; ++i) dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
            break;
        case ColorCodec::palette:
            for (std::size_t i = 0; i < px; ++i) {
                const Rgb c = palette_color(static_cast<int>(src[i]));
                dst[3 * i] = c.r, dst[3 * i + 1] = c.g, dst[3 * i + 2] = c.b;
            }
            break;
    }
    return out;
}

ModalityTensor from_color_space(const ModalityTensor& color, const ColorMeta& meta) {
    const ModalitySpec& spec = spec_of(color.modality);
    require(color.space == Space::color, std::string(spec.name) + ": expected color-space tensor");
    require(color.shape.channels == 3, std::string(spec.name) + ": color-space tensors have 3 channels");
    require(color.data.size() == color.shape.numel(), std::string(spec.name) + ": data size does not match shape");
    for (float v : color.data) require(std::isfinite(v), std::string(spec.name) + ": non-finite value");

    Shape s = color.shape;
    s.channels = spec.native_channels;
    ModalityTensor out(color.modality, Space::native, s);
    const auto& src = color.data;
    auto& dst = out.data;
    const std::size_t px = color.shape.pixels();
    switch (spec.codec) {
        case ColorCodec::identity:
            dst = src;
            break;
        case ColorCodec::depth_minmax: {
            require(meta.depth.has_value(), "depth: missing (min,max) metadata for inversion");
            const double lo = meta.depth->min, hi = meta.depth->max;
            for (std::size_t i = 0; i < px; ++i) {
                const double c = (double(src[3 * i]) + src[3 * i + 1] + src[3 * i + 2]) / 3.0;
                dst[i] = static_cast<float>(hi > lo ? lo + c * (hi - lo) : lo);
            }
            break;
        }
        case ColorCodec::normal_affine:
            for (std::size_t i = 0; i < px; ++i) {
                double n[3];
                for (int c = 0; c < 3; ++c) n[c] = 2.0 * src[3 * i + c] - 1.0;
                const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
                if (len < 1e-12) {
                    n[0] = 0, n[1] = 0, n[2] = 1;
                } else {
                    for (double& v : n) v /= len;
                }
                for (int c = 0; c < 3; ++c) dst[3 * i + c] = static_cast<float>(n[c]);
            }
            break;
        case ColorCodec::scalar_replicate:
            for (std::size_t i = 0; i < px; ++i)
                dst[i] = static_cast<float>((double(src[3 * i]) + src[3 * i + 1] + src[3 * i + 2]) / 3.0);
            break;
        case ColorCodec::palette:
            for (std::size_t i = 0; i < px; ++i)
                dst[i] = static_cast<float>(snap_to_palette(src[3 * i], src[3 * i + 1], src[3 * i + 2]));
            break;
    }
    return out;
}

}  // namespace ctrlvdiff
