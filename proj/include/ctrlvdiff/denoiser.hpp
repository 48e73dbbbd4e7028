#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ctrlvdiff/hmcs.hpp"

namespace ctrlvdiff {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

struct DenoiserConfig {
    int dim = 128;
    int layers = 4;
    int heads = 4;
    int patch = 2;
    int max_frames = 8;
    int grid_rows = 16;  // latent rows (H / patch)
    int grid_cols = 16;
    int caption_buckets = 1024;
    int mlp_ratio = 4;
    std::uint64_t seed = 0;

    int latent_channels() const { return 3 * patch * patch; }
    int input_features() const { return kNumModalities * latent_channels() + kNumModalities; }
    void validate() const;
    nlohmann::json to_json() const;
    static DenoiserConfig from_json(const nlohmann::json& j);
    bool operator==(const DenoiserConfig&) const = default;
};

/// Flat parameter storage with named row-major matrix views. Gradients and
/// optimizer moments share the same layout.
class ParamStore {
public:
    struct Entry {
        std::string name;
        int rows = 0;
        int cols = 0;
        std::size_t offset = 0;
        bool decay = false;  // weight matrices get weight decay; norms, biases and embeddings do not
        std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
    };

    std::size_t add(const std::string& name, int rows, int cols, bool decay);
    const std::vector<Entry>& entries() const { return entries_; }
    const Entry& entry(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t size() const { return total_; }

    MapRM view(std::vector<double>& buf, const std::string& name) const;
    ConstMapRM view(const std::vector<double>& buf, const std::string& name) const;

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
    std::size_t total_ = 0;
};

struct DenoiserParams {
    DenoiserConfig config;
    ParamStore layout;
    std::vector<double> values;

    std::size_t count() const { return values.size(); }
    MapRM operator[](const std::string& name) { return layout.view(values, name); }
    ConstMapRM operator[](const std::string& name) const { return layout.view(values, name); }
};

std::string head_prefix(Modality m);

/// Builds the layout and draws a deterministic initialization: truncated
/// normal (sigma 0.02) weights, zero biases, unit norm gains. The rgb output
/// head is drawn first and copied into the other seven heads.
DenoiserParams init_params(const DenoiserConfig& config);

/// Bucket index of a caption token (FNV-1a mod buckets).
int caption_bucket(const std::string& token, int buckets);

using SliceSet = std::array<std::vector<double>, kNumModalities>;

struct ForwardCache;

/// Noise prediction for every modality slice ([tokens, channels] each).
SliceSet predict_eps(const DenoiserParams& params, const ModelInput& input);

/// Forward pass that keeps the activations needed by `backward`.
class DenoiserTape {
public:
    DenoiserTape();
    ~DenoiserTape();
    DenoiserTape(DenoiserTape&&) noexcept;
    DenoiserTape& operator=(DenoiserTape&&) noexcept;

    SliceSet forward(const DenoiserParams& params, const ModelInput& input);

    /// Accumulates parameter gradients into `grads` (same layout as params.values).
    /// Slices whose upstream gradient is empty are treated as unsupervised: their
    /// heads are skipped, so their gradient stays exactly zero.
    void backward(const DenoiserParams& params, const SliceSet& d_out, std::vector<double>& grads) const;

private:
    std::unique_ptr<ForwardCache> cache_;
};

// ---- checkpoints ----------------------------------------------------------

/// Model parameters plus optional named auxiliary tensors (optimizer moments)
/// and free-form JSON state (training step, rng state, stage).
struct Checkpoint {
    DenoiserParams params;
    std::uint64_t codec_seed = 0;
    nlohmann::json state = nlohmann::json::object();
    std::map<std::string, std::vector<double>> extra;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ctrlvdiff
