#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ctrlvdiff/codec.hpp"
#include "ctrlvdiff/datastore.hpp"
#include "ctrlvdiff/denoiser.hpp"
#include "ctrlvdiff/hmcs.hpp"
#include "ctrlvdiff/sampler.hpp"

namespace ctrlvdiff {

// ---- schedules ------------------------------------------------------------

inline constexpr double kBetaStart = 1e-4;
inline constexpr double kBetaEnd = 0.02;
inline constexpr int kDefaultScheduleSteps = 1000;

/// Linear beta from 1e-4 to 0.02, or the cosine alpha-bar curve (offset 0.008).
NoiseSchedule make_schedule(ScheduleKind kind, int num_steps);
ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view name_of(ScheduleKind kind);

/// x0 recovered from a noised sample and its noise at step t.
std::vector<double> predict_x0(const std::vector<double>& x_t, const std::vector<double>& eps, double alpha_bar);

// ---- masked loss ----------------------------------------------------------

/// Clean latents and caption tokens of one training clip.
struct TrainSample {
    LatentGrid grid;
    LatentSet latents;
    std::vector<std::string> caption_tokens;
};

/// Encodes every available modality of a clip into the centered latent space.
TrainSample encode_sample(const ClipRecord& clip, const Codec& codec);

struct LossReport {
    double total = 0.0;
    /// Mean squared error of each modality over the samples that supervise it
    /// (0 when no sample does).
    std::array<double, kNumModalities> per_modality{};
    /// Share of the (sample, modality) pairs that belong to each modality;
    /// total = sum of weight * per_modality.
    std::array<double, kNumModalities> weight{};
    /// True iff the modality is supervised (noisy) in at least one sample.
    std::array<bool, kNumModalities> mask{};
    int supervised_pairs = 0;
};

/// Pooled mean over every supervised (sample, modality) pair of the mean squared
/// error between the drawn noise and the prediction. Condition and none slices
/// contribute nothing. When `grads` is given, d total / d params is accumulated
/// into it.
LossReport masked_loss(const DenoiserParams& params, const std::vector<const TrainSample*>& batch,
                       const std::vector<RoleAssignment>& roles, const std::vector<int>& timesteps,
                       const NoiseSchedule& schedule, Rng& rng,
                       std::vector<double>* grads = nullptr);

// ---- optimizer ------------------------------------------------------------

struct AdamWConfig {
    double lr = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    int warmup_steps = 100;
    double clip_norm = 1.0;
};

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
};

/// Linear warmup to cfg.lr over warmup_steps (step counts from 1).
double learning_rate(const AdamWConfig& cfg, std::int64_t step);

/// Clips the global gradient norm, then one decoupled-weight-decay Adam update.
/// Returns the pre-clip gradient norm.
double adamw_step(DenoiserParams& params, std::vector<double>& grads, AdamWState& state, const AdamWConfig& cfg);

// ---- training -------------------------------------------------------------

enum class Stage { I = 1, II = 2, III = 3 };
std::string_view name_of(Stage s);
Stage parse_stage(std::string_view name);

/// Stage III filters. A pseudo-labelled clip survives when its depth/normal
/// disagreement is at most max_angle_deg, its segmentation palette residual is
/// at most max_seg_residual and the rgb regenerated from its labels reaches
/// min_psnr_db.
struct AugmentThresholds {
    double max_angle_deg = 35.0;
    double max_seg_residual = 0.05;
    double min_psnr_db = 18.0;

    static AugmentThresholds unbounded() {
        const double inf = std::numeric_limits<double>::infinity();
        return {inf, inf, -inf};
    }
    static AugmentThresholds closed() { return {0.0, 0.0, std::numeric_limits<double>::infinity()}; }
};

struct TrainConfig {
    DenoiserConfig model;
    std::uint64_t codec_seed = kDefaultCodecSeed;
    ScheduleKind schedule_kind = ScheduleKind::linear_beta;
    int schedule_steps = kDefaultScheduleSteps;
    std::array<int, 3> stage_steps{2000, 2000, 200};
    int batch_size = 4;
    AdamWConfig optimizer;
    double p_text = kDefaultTextProbability;
    std::uint64_t seed = 0;
    int checkpoint_every = 100;
    AugmentThresholds thresholds;
    int augment_sampling_steps = 50;

    int steps_for(Stage s) const { return stage_steps[static_cast<std::size_t>(static_cast<int>(s) - 1)]; }
    void validate() const;
    nlohmann::json to_json() const;
};

struct TrainInputs {
    /// Labelled clips used for every stage.
    std::filesystem::path data_root;
    std::vector<std::string> clip_ids;  // empty: the manifest's train split, else every clip
    /// Stage III only: unlabelled pool (only rgb and caption are read).
    std::filesystem::path pool_root;
    std::vector<std::string> pool_ids;
    /// Output directory for checkpoints, metrics.csv and pseudo-labelled clips.
    std::filesystem::path out_dir;
    /// Checkpoint of the previous stage (required for II and III).
    std::optional<std::filesystem::path> init;
    /// Resume an interrupted run of the same stage.
    std::optional<std::filesystem::path> resume;
    /// Stop after this many steps of the stage (for interruption tests); the
    /// checkpoint is written as incomplete.
    std::optional<int> stop_after;
};

struct StepLog {
    std::int64_t step = 0;
    Stage stage = Stage::I;
    LossReport loss;
    double lr = 0.0;
};

struct TrainResult {
    std::filesystem::path checkpoint;
    std::vector<StepLog> log;
    int survivors = -1;  // Stage III only
    bool completed = false;
};

/// Checkpoint path written for a stage inside out_dir.
std::filesystem::path stage_checkpoint_path(const std::filesystem::path& out_dir, Stage s);

using StepCallback = std::function<void(const StepLog&)>;

TrainResult train(const TrainConfig& config, Stage stage, const TrainInputs& inputs, const StepCallback& on_step = {});

// ---- self-augmentation ----------------------------------------------------

struct AugmentScores {
    std::string clip_id;
    double angle_deg = 0.0;
    double seg_residual = 0.0;
    double psnr_db = 0.0;
    bool survived = false;
};

/// Mean angle between the image-space direction of increasing depth and the
/// projected normal direction. Pixels on depth discontinuities and pixels with
/// near-frontal normals are skipped; 0 when no pixel qualifies.
/// Invariant to positive affine rescaling of depth.
double depth_normal_disagreement(const ModalityTensor& depth, const ModalityTensor& normal);

/// Mean distance from each color-space segmentation pixel to its nearest palette entry.
double palette_residual(const ModalityTensor& seg_color);

struct AugmentResult {
    std::vector<ClipRecord> survivors;
    std::vector<AugmentScores> scores;
};

/// Pseudo-labels every pool clip with `understand`, scores it with the three
/// filters and returns the survivors tagged "pseudo".
AugmentResult self_augment(const Model& model, const std::vector<ClipRecord>& pool, const AugmentThresholds& thresholds,
                           int sampling_steps, std::uint64_t seed);

}  // namespace ctrlvdiff
