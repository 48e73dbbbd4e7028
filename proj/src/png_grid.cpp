#include "ctrlvdiff/png_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

namespace ctrlvdiff {

Image8 contact_sheet(const ClipRecord& clip) {
    const int T = clip.meta.frames, H = clip.meta.height, W = clip.meta.width;
    require(T > 0 && H > 0 && W > 0, "contact sheet: clip " + clip.clip_id + " has an empty shape");
    Image8 img;
    img.width = T * W;
    img.height = kNumModalities * H;
    img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
    for (Modality m : kAllModalities) {
        if (!clip.has(m)) continue;
        const ModalityTensor color = to_color_space(clip.get(m)).tensor;
        const int row = index_of(m);
        for (int t = 0; t < T; ++t)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < 3; ++c) {
                        const double v = std::clamp(static_cast<double>(color.at(t, y, x, c)), 0.0, 1.0);
                        const std::size_t px = static_cast<std::size_t>(row * H + y) * img.width + t * W + x;
                        img.rgb[px * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
                    }
    }
    return img;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& image) {
    require(image.width > 0 && image.height > 0 &&
                image.rgb.size() == static_cast<std::size_t>(image.width) * image.height * 3,
            "write_png: image buffer does not match its size");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw RuntimeFailure("cannot create " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw RuntimeFailure("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw RuntimeFailure("PNG encoding failed for " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y)
        png_write_row(png, const_cast<png_bytep>(image.rgb.data() + static_cast<std::size_t>(y) * image.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image8 read_png(const std::filesystem::path& path) {
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.string().c_str()))
        throw FormatError("cannot read PNG " + path.string() + ": " + pi.message);
    pi.format = PNG_FORMAT_RGB;
    Image8 img;
    img.width = static_cast<int>(pi.width);
    img.height = static_cast<int>(pi.height);
    img.rgb.resize(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr)) {
        png_image_free(&pi);
        throw FormatError("cannot decode PNG " + path.string() + ": " + pi.message);
    }
    return img;
}

}  // namespace ctrlvdiff
