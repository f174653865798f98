#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace tsit {

// splitmix64 finalizer; used to derive independent seeds from (root, stream) ids
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return mix_seed(mix_seed(root ^ 0x632be59bd9b4e019ULL) ^ mix_seed(a) ^ (b * 0xff51afd7ed558ccdULL));
}

// Deterministic RNG. mt19937_64 is bit-exact across platforms; the
// distributions below are implemented by hand because the std::*_distribution
// adapters are not specified bit-exactly by the standard.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1]
    double uniform01_open_low() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

    // standard normal via Box-Muller (cosine branch only, no cached spare,
    // so the state is exactly the engine state)
    double normal() {
        const double u1 = uniform01_open_low();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is irrelevant at the sizes used here (n << 2^64)
        return n == 0 ? 0 : eng_() % n;
    }

    std::string state() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
    }

    Rng derive(std::uint64_t stream_id) { return Rng(derive_seed(eng_(), stream_id)); }

  private:
    std::mt19937_64 eng_;
};

// deterministic permutation of 0..n-1 from a seed (Fisher-Yates)
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

}  // namespace tsit
