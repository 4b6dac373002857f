#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace feddhad {

// splitmix64 finalizer; used to derive independent stream seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives the seed of a named substream. Streams are keyed by purpose plus
// up to two indices (typically round and device) so that device-level
// parallelism and method-specific sampling cannot perturb each other.
inline uint64_t substream(uint64_t master, std::string_view purpose,
                          uint64_t a = 0, uint64_t b = 0) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : purpose) h = (h ^ static_cast<uint8_t>(c)) * 0x100000001b3ULL;
    return mix64(master ^ mix64(h) ^ mix64(a * 0x9e3779b97f4a7c15ULL + 1) ^
                 mix64(b * 0xc2b2ae3d27d4eb4fULL + 2));
}

// mt19937_64 with hand-rolled distributions. The standard distribution
// classes are implementation-defined, which would break byte-identical
// outputs across standard libraries; the engine itself is portable.
class RngStream {
  public:
    explicit RngStream(uint64_t seed) : gen_(seed) {}

    uint64_t raw() { return gen_(); }

    // in [0, 1)
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // in [0, n)
    uint64_t uniform_int(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = gen_(); } while (x >= limit);
        return x % n;
    }

    // Box-Muller, stateless form.
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Marsaglia-Tsang; shape < 1 handled by the boost trick.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double u = uniform01();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(std::size_t dim, double concentration) {
        std::vector<double> draw(dim);
        double total = 0.0;
        for (auto& g : draw) {
            g = gamma(concentration);
            total += g;
        }
        if (total <= 0.0) { // all-zero draws only at extreme concentrations
            for (auto& g : draw) g = 1.0 / static_cast<double>(dim);
            return draw;
        }
        for (auto& g : draw) g /= total;
        return draw;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i)
            std::swap(items[i - 1], items[uniform_int(i)]);
    }

    // Uniform sample of m distinct values from [0, n); partial Fisher-Yates.
    std::vector<int> sample_without_replacement(int n, int m) {
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < m; ++i) {
            const auto j = i + static_cast<int>(uniform_int(static_cast<uint64_t>(n - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(m));
        return pool;
    }

  private:
    std::mt19937_64 gen_;
};

} // namespace feddhad
