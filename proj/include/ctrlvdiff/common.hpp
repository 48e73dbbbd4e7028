#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ctrlvdiff {

/// Bad caller input: wrong shape, out-of-range value, broken precondition.
/// The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// On-disk data that does not parse (bad magic, truncated payload, header/meta mismatch).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure while doing work that was valid to request (I/O, diverged training).
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

/// Dense [T, H, W, C] layout shared by every clip tensor in the project.
struct Shape {
    int frames = 0;
    int height = 0;
    int width = 0;
    int channels = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(frames) * height * width * channels;
    }
    std::size_t pixels() const { return static_cast<std::size_t>(frames) * height * width; }
    bool same_grid(const Shape& o) const {
        return frames == o.frames && height == o.height && width == o.width;
    }
    bool operator==(const Shape&) const = default;
    std::size_t index(int t, int y, int x, int c) const {
        return ((static_cast<std::size_t>(t) * height + y) * width + x) * channels + c;
    }
};

std::string to_string(const Shape& s);

}  // namespace ctrlvdiff
