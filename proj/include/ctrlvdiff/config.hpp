#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "ctrlvdiff/diffusion.hpp"
#include "ctrlvdiff/scenegen.hpp"

namespace ctrlvdiff {

/// Flat "section.key" -> value settings. Built-in defaults are overlaid by an
/// INI file, then by command-line overrides; unknown keys are rejected.
class RunConfig {
public:
    /// Built-in defaults. The global seed honours CTRLVDIFF_SEED when set.
    static RunConfig defaults();

    void load_file(const std::filesystem::path& path);
    /// "section.key=value"
    void apply_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    /// Effective settings as INI text, sections and keys sorted.
    std::string echo() const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

inline constexpr const char* kSeedEnv = "CTRLVDIFF_SEED";

TrainConfig train_config_from(const RunConfig& cfg);
RenderConfig render_config_from(const RunConfig& cfg);

}  // namespace ctrlvdiff
