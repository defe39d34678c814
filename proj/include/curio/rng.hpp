#ifndef CURIO_RNG_HPP
#define CURIO_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace curio {

// Deterministic random source. All sampling goes through the explicit
// methods below instead of std distributions, whose output is
// implementation-defined; mt19937_64 itself is pinned by the standard.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Unbiased integer in [0, n), rejection sampled.
    std::uint64_t below(std::uint64_t n);

    // Double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller (single branch, deterministic).
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// Stable sub-stream seed: mixes a tag string into a master seed so results
// cannot depend on the order unrelated sampling happens in.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);

}  // namespace curio

#endif
