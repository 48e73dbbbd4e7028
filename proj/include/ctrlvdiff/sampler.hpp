#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctrlvdiff/codec.hpp"
#include "ctrlvdiff/datastore.hpp"
#include "ctrlvdiff/denoiser.hpp"
#include "ctrlvdiff/hmcs.hpp"
#include "ctrlvdiff/scenegen.hpp"

namespace ctrlvdiff {

/// Everything inference needs: network weights, the latent codec and the
/// training noise schedule.
struct Model {
    DenoiserParams params;
    Codec codec = Codec::identity(2);
    NoiseSchedule schedule;

    /// Native [T,H,W] shape the model was trained at for a given frame count.
    Shape native_shape(int frames, int channels) const;
};

/// Reads a checkpoint and rebuilds codec and schedule from its recorded state.
Model load_model(const std::filesystem::path& checkpoint);

struct GenerationRequest {
    /// Native-space condition tensors (any subset, possibly empty).
    std::map<Modality, ModalityTensor> conditions;
    std::string caption;
    std::vector<Modality> targets;
    int steps = 50;
    std::uint64_t seed = 0;
    /// Required when there are no conditions; otherwise taken from them.
    int frames = 0;
};

struct GenerationResult {
    /// Decoded native-space targets.
    ModalityMap native;
    /// Color-space renderings of the targets before snapping/renormalizing.
    ModalityMap color;
};

/// Evenly spaced descending timesteps used by strided sampling.
std::vector<int> sampling_timesteps(int num_steps, int steps);

GenerationResult generate(const Model& model, const GenerationRequest& req);

/// Conditions {rgb}; targets are the other seven modalities.
GenerationResult understand(const Model& model, const ModalityTensor& rgb, const std::string& caption, int steps,
                            std::uint64_t seed = 0);

/// Nominal range that decoded depth is mapped into; its scale and shift are
/// arbitrary and get removed by affine alignment downstream.
inline constexpr DepthRange kNominalDepthRange{1.0, 2.0};

enum class EditKind { relight, material, insert };
std::string_view name_of(EditKind k);
EditKind parse_edit_kind(std::string_view name);

/// Disk stamped into albedo and normal on every frame.
struct InsertStamp {
    double cx = 0;  // pixel coordinates of the center
    double cy = 0;
    double radius = 4;
    Rgb albedo{0.9f, 0.1f, 0.1f};
};

struct EditPayload {
    std::string caption;  // relight: replacement caption; otherwise empty keeps the clip's
    /// material: [T,H,W] mask (nonzero = edited), same grid as the clip; empty means no-op.
    std::vector<std::uint8_t> mask;
    std::optional<Rgb> albedo;
    std::optional<double> roughness;
    std::optional<double> metallic;
    /// insert
    std::vector<InsertStamp> stamps;
    bool regenerate_depth = false;
};

struct EditRequest {
    EditKind kind = EditKind::relight;
    EditPayload payload;
    int steps = 50;
    std::uint64_t seed = 0;
};

/// Applies the edit to the clip's conditioning layers and regenerates rgb
/// (and depth for inserts when requested). `conditions` receives the edited
/// condition tensors that were fed to the sampler.
GenerationResult edit_and_rerender(const Model& model, const ClipRecord& clip, const EditRequest& req,
                                   ModalityMap* conditions = nullptr);

}  // namespace ctrlvdiff
