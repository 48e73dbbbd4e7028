#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctrlvdiff/modality.hpp"

namespace ctrlvdiff {

namespace fs = std::filesystem;

// ---- .tensor files -------------------------------------------------------
//
// 32-byte little-endian header followed by the raw payload:
//   [0,4)   magic "MMV1"
//   [4,20)  u32 T, H, W, C
//   [20,24) u32 modality id (registry order), 0xFFFFFFFF for model parameters
//   [24,32) reserved; zero in clip files. Checkpoints store a dtype code in
//           byte 24 (0 = float32, 1 = float64).

inline constexpr std::size_t kTensorHeaderBytes = 32;
inline constexpr std::uint32_t kParameterTensorId = 0xFFFFFFFFu;

enum class TensorDtype : std::uint8_t { f32 = 0, f64 = 1 };

struct TensorHeader {
    Shape shape;
    std::uint32_t modality_id = 0;
    TensorDtype dtype = TensorDtype::f32;
};

std::array<unsigned char, kTensorHeaderBytes> encode_tensor_header(const TensorHeader& h);
/// Throws FormatError on bad magic or nonzero reserved bytes (other than the dtype code).
TensorHeader decode_tensor_header(std::span<const unsigned char, kTensorHeaderBytes> bytes);

void write_tensor(std::ostream& os, const TensorHeader& h, std::span<const float> payload);
void write_tensor(std::ostream& os, const TensorHeader& h, std::span<const double> payload);
TensorHeader read_tensor_header(std::istream& is);
std::vector<float> read_f32_payload(std::istream& is, const TensorHeader& h);
std::vector<double> read_f64_payload(std::istream& is, const TensorHeader& h);

void write_tensor_file(const fs::path& path, const ModalityTensor& m);
ModalityTensor read_tensor_file(const fs::path& path);

// ---- clips ---------------------------------------------------------------

inline constexpr int kFormatVersion = 1;
inline constexpr double kDefaultFps = 16.0;

struct ClipMeta {
    int frames = 0;
    int height = 0;
    int width = 0;
    double fps = kDefaultFps;
    std::uint64_t seed = 0;
    std::uint64_t scene_hash = 0;
    std::vector<std::string> tags;
    std::vector<Modality> modalities;
    int format_version = kFormatVersion;
};

struct ClipRecord {
    std::string clip_id;
    std::map<Modality, ModalityTensor> tensors;
    std::string caption;
    ClipMeta meta;

    bool has(Modality m) const { return tensors.count(m) != 0; }
    const ModalityTensor& get(Modality m) const;
    /// All eight modalities, identical [T,H,W], non-empty caption, meta consistent.
    void validate(bool allow_partial = false) const;
};

struct WriteOptions {
    bool overwrite = false;
    bool allow_partial = false;
};

struct ReadOptions {
    /// Invoked with every file path the reader opens.
    std::function<void(const fs::path&)> on_open;
};

/// Writes <root>/<clip_id>/{<modality>.tensor, caption.txt, meta.json} through a
/// temporary directory that is renamed into place.
fs::path write_clip(const ClipRecord& record, const fs::path& root, const WriteOptions& opts = {});

/// Loads only the requested modalities (all listed in meta when empty).
ClipRecord read_clip(const fs::path& root, const std::string& clip_id, const std::vector<Modality>& modalities = {},
                     const ReadOptions& opts = {});
ClipMeta read_clip_meta(const fs::path& clip_dir);

/// Sorted ids of subdirectories that carry a meta.json.
std::vector<std::string> list_clips(const fs::path& root);

// ---- manifests -----------------------------------------------------------

enum class Split { train, val, test };
std::string_view name_of(Split s);

struct Manifest {
    fs::path root;
    std::vector<std::string> clip_ids;
    std::map<Split, std::vector<std::string>> splits;
    int format_version = kFormatVersion;

    const std::vector<std::string>& ids(Split s) const;
};

/// Seeded shuffle then split by fractions (train, val, test); writes manifest.json.
Manifest build_manifest(const fs::path& root, std::array<double, 3> fractions, std::uint64_t seed);
Manifest read_manifest(const fs::path& root);

}  // namespace ctrlvdiff
