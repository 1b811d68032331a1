#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lsplab {

/// Seed handle for every randomized operation. Identical seeds give
/// bit-identical splits, initializations and shuffles on any platform.
struct RngSeed {
    std::uint64_t value = 0;
};

namespace detail {
// splitmix64, used to scramble seeds and derive independent substreams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic random stream. Distributions are implemented by hand on
/// top of mt19937_64 so that sequences are identical across standard
/// library implementations.
class Rng {
  public:
    explicit Rng(RngSeed seed) : Rng(seed.value) {}
    explicit Rng(std::uint64_t seed)
        : base_(scramble(seed)), engine_(scramble(seed)) {}

    /// Independent substream for a labelled unit of work (sample index,
    /// model index, restart index, ...).
    Rng split(std::uint64_t stream_id) const {
        std::uint64_t s = base_;
        s ^= detail::splitmix64(stream_id) + 0xa0761d6478bd642fULL;
        return Rng(s);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive. Modulo bias is
    /// unobservable at the scales this project uses.
    std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform_index(
                        static_cast<std::uint64_t>(hi - lo + 1)));
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    static std::uint64_t scramble(std::uint64_t seed) {
        std::uint64_t s = seed;
        return detail::splitmix64(s);
    }

    std::uint64_t base_ = 0;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace lsplab
