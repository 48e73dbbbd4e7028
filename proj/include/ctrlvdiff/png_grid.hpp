#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ctrlvdiff/datastore.hpp"

namespace ctrlvdiff {

struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

/// Contact sheet of a clip: one row per registry modality, one column per
/// frame, each cell the color-space rendering. Missing modalities stay black.
Image8 contact_sheet(const ClipRecord& clip);

void write_png(const std::filesystem::path& path, const Image8& image);
Image8 read_png(const std::filesystem::path& path);

}  // namespace ctrlvdiff
