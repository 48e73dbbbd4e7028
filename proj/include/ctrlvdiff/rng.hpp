#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ctrlvdiff {

/// Seeded generator with distribution code we own, so draws are identical
/// across standard-library implementations. State round-trips through text
/// for resumable training.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on the closed range [lo, hi].
    int uniform_int(int lo, int hi);

    /// Standard normal via Box-Muller (one value per call, no cached pair).
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    /// Independent child stream; consumes one draw from this generator.
    Rng fork();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(0, i);
            using std::swap;
            swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

    std::string state() const;
    void restore(const std::string& state);

    bool operator==(const Rng& o) const { return engine_ == o.engine_; }

private:
    std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to derive per-item seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0);

}  // namespace ctrlvdiff
