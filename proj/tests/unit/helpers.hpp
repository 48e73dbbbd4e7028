#pragma once

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "ctrlvdiff/datastore.hpp"
#include "ctrlvdiff/denoiser.hpp"
#include "ctrlvdiff/hmcs.hpp"
#include "ctrlvdiff/rng.hpp"
#include "ctrlvdiff/scenegen.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("ctrlvdiff-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline ctrlvdiff::DenoiserConfig micro_config(int dim = 16, int layers = 1, int heads = 2) {
    ctrlvdiff::DenoiserConfig c;
    c.dim = dim;
    c.layers = layers;
    c.heads = heads;
    c.patch = 2;
    c.max_frames = 2;
    c.grid_rows = 4;
    c.grid_cols = 4;
    c.caption_buckets = 64;
    c.seed = 11;
    return c;
}

/// Random model input on the config's grid with the given roles.
inline ctrlvdiff::ModelInput random_input(const ctrlvdiff::DenoiserConfig& cfg, const ctrlvdiff::RoleAssignment& roles,
                                          std::uint64_t seed, int frames = 2) {
    using namespace ctrlvdiff;
    ModelInput in;
    in.grid = LatentGrid{frames, cfg.grid_rows, cfg.grid_cols, cfg.latent_channels()};
    in.roles = roles.roles;
    in.t = 17;
    in.caption_tokens = {"red", "sphere", "camera", "orbit"};
    in.stack.resize(static_cast<std::size_t>(in.grid.tokens()) * in.stride());
    Rng rng(seed);
    for (double& v : in.stack) v = rng.normal();
    for (Modality m : kAllModalities) {
        const auto i = static_cast<std::size_t>(index_of(m));
        if (roles.roles[i] == Role::none) {
            in.absent[i] = 1.0f;
            in.set_slice(m, std::vector<double>(in.grid.slice_numel(), 0.0));
        }
    }
    return in;
}

/// A rendered clip wrapped as a datastore record.
inline ctrlvdiff::ClipRecord make_record(const std::string& id, std::uint64_t seed, int frames = 2, int size = 16) {
    using namespace ctrlvdiff;
    const GeneratedClip g = generate_clip(seed, frames, RenderConfig{size, size, 50.0});
    ClipRecord r;
    r.clip_id = id;
    r.tensors = g.modalities;
    r.caption = g.caption;
    r.meta.frames = frames;
    r.meta.height = size;
    r.meta.width = size;
    r.meta.seed = seed;
    r.meta.scene_hash = g.scene.hash();
    return r;
}

/// Writes `n` rendered clips named clip-0000.. under root.
inline std::vector<std::string> write_dataset(const std::filesystem::path& root, int n, int frames = 2, int size = 8,
                                              std::uint64_t seed_base = 0) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "clip-%04d", i);
        ctrlvdiff::write_clip(make_record(id, seed_base + static_cast<std::uint64_t>(i), frames, size), root);
        ids.push_back(id);
    }
    return ids;
}

}  // namespace testing
