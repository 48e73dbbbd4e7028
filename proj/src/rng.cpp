#include "ctrlvdiff/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ctrlvdiff/common.hpp"

namespace ctrlvdiff {

std::string to_string(const Shape& s) {
    return "[" + std::to_string(s.frames) + "," + std::to_string(s.height) + "," +
           std::to_string(s.width) + "," + std::to_string(s.channels) + "]";
}

int Rng::uniform_int(int lo, int hi) {
    require(lo <= hi, "uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo) + 1;
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return static_cast<int>(static_cast<std::int64_t>(lo) + static_cast<std::int64_t>(r % span));
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::fork() { return Rng(mix_seed(engine_())); }

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::restore(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw FormatError("rng state does not parse");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace ctrlvdiff
