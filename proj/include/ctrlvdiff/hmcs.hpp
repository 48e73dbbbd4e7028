#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ctrlvdiff/common.hpp"
#include "ctrlvdiff/modality.hpp"
#include "ctrlvdiff/rng.hpp"

namespace ctrlvdiff {

enum class Role : std::uint8_t { condition = 0, none = 1, noisy = 2 };

inline constexpr int kNumRoles = 3;

std::string_view name_of(Role r);
Role parse_role(std::string_view name);

/// Per-sample role of every modality (registry order) plus the text-only flag
/// and the sizes that were drawn for the condition and drop sets.
struct RoleAssignment {
    std::array<Role, kNumModalities> roles{};
    bool text_only = false;
    int k = 0;  // |C| as sampled, before any text-only demotion
    int d = 0;  // |D| as sampled
    double p_text = 0.0;

    Role of(Modality m) const { return roles[static_cast<std::size_t>(index_of(m))]; }
    int count(Role r) const;
    /// Checks partition, liveness, and text-only consistency. Throws ValidationError.
    void validate() const;

    /// One-line log record: "seed=<s> text_only=<0|1> rgb:noisy depth:condition ..."
    std::string to_record(std::uint64_t seed) const;
    static RoleAssignment from_record(const std::string& line, std::uint64_t* seed = nullptr);

    static RoleAssignment all(Role r);
    bool operator==(const RoleAssignment&) const = default;
};

inline constexpr double kDefaultTextProbability = 0.1;

/// Stochastic role assignment over the full modality set (N = 8).
RoleAssignment assign_roles(Rng& rng, double p_text = kDefaultTextProbability);

/// Role sampler over the first `n` registry modalities; modalities beyond
/// `n` get role none. Exposed for the minimal-N cases.
RoleAssignment assign_roles(Rng& rng, int n, double p_text);

enum class ScheduleKind { linear_beta, cosine };

/// Cumulative signal-retention coefficients, strictly decreasing in t.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::linear_beta;
    std::vector<double> alpha_bar;

    int num_steps() const { return static_cast<int>(alpha_bar.size()); }
    double at(int t) const;
};

/// sqrt(abar_t) * x + sqrt(1 - abar_t) * eps, elementwise.
std::vector<double> apply_forward_noise(const std::vector<double>& x, int t, const std::vector<double>& eps,
                                        const NoiseSchedule& schedule);

/// Same closed form with an explicit coefficient; used by tests and the sampler.
std::vector<double> apply_forward_noise_abar(const std::vector<double>& x, double alpha_bar,
                                             const std::vector<double>& eps);

/// Latent grid shared by every modality slice: [frames, rows, cols, channels].
struct LatentGrid {
    int frames = 0;
    int rows = 0;
    int cols = 0;
    int channels = 0;  // per modality

    int tokens() const { return frames * rows * cols; }
    std::size_t slice_numel() const { return static_cast<std::size_t>(tokens()) * channels; }
    bool operator==(const LatentGrid&) const = default;
};

/// Channel-concatenated input to the noise predictor.
///
/// `stack` is [tokens, kNumModalities * channels] in registry order; `absent`
/// holds the per-modality absent flag; `noise` keeps the eps drawn for each
/// noisy slice (empty for the others) so the loss can use it.
struct ModelInput {
    LatentGrid grid;
    std::vector<double> stack;
    std::array<float, kNumModalities> absent{};
    std::array<Role, kNumModalities> roles{};
    int t = 0;
    std::vector<std::string> caption_tokens;
    std::array<std::vector<double>, kNumModalities> noise;

    std::size_t stride() const { return static_cast<std::size_t>(kNumModalities) * grid.channels; }
    /// Copies one modality slice out of the stack ([tokens, channels]).
    std::vector<double> slice(Modality m) const;
    void set_slice(Modality m, const std::vector<double>& values);
};

/// Clean latents keyed by registry index; entries may be empty for modalities
/// whose role is none.
using LatentSet = std::array<std::optional<std::vector<double>>, kNumModalities>;

/// Builds the model input: conditions pass through clean, noisy slices get
/// forward noise at step t (eps drawn from rng in registry order), none
/// slices are zeroed with the absent flag raised.
ModelInput build_model_input(const LatentSet& latents, const LatentGrid& grid, const RoleAssignment& roles, int t,
                             const NoiseSchedule& schedule, Rng& rng, std::vector<std::string> caption_tokens = {});

}  // namespace ctrlvdiff
