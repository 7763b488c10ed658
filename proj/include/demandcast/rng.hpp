#pragma once

// Self-contained deterministic random number generation (xoshiro256++ core,
// splitmix64 seeding). std:: distributions are implementation-defined, which
// would break the byte-identical reproducibility contract of the generator,
// so the few distributions we need are implemented explicitly.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace demandcast {

namespace detail {
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace detail

class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    // Independent stream derived from (seed, stream, substream); used for
    // per-article generation so ordering and thread fan-out cannot change
    // the output.
    static Rng derive(uint64_t seed, uint64_t stream, uint64_t substream = 0) {
        uint64_t sm = seed;
        uint64_t a = detail::splitmix64(sm) ^ (stream * 0xd1342543de82ef95ULL);
        uint64_t b = detail::splitmix64(sm) ^ (substream * 0xaf251af3b0f025b5ULL);
        Rng r(a ^ detail::rotl(b, 17));
        r.next_u64();
        return r;
    }

    uint64_t next_u64() {
        uint64_t* s = state_;
        const uint64_t result = detail::rotl(s[0] + s[3], 23) + s[0];
        const uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = detail::rotl(s[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
    }

    // Marsaglia polar method.
    double normal() {
        for (;;) {
            double u = 2.0 * uniform01() - 1.0;
            double v = 2.0 * uniform01() - 1.0;
            double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }

    double lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

    // Marsaglia-Tsang; unit scale.
    double gamma(double shape) {
        if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            double u = uniform01();
            while (u == 0.0) u = uniform01();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    int poisson(double lambda) {
        if (!(lambda >= 0.0)) throw std::invalid_argument("poisson: lambda must be >= 0");
        int n = 0;
        // Poisson(a+b) = Poisson(a) + Poisson(b); chunking keeps exp(-l) in range.
        while (lambda > 30.0) {
            n += poisson_knuth(30.0);
            lambda -= 30.0;
        }
        return n + poisson_knuth(lambda);
    }

    // Gamma-Poisson mixture: mean `mean`, variance mean + mean^2/dispersion.
    int negative_binomial(double mean, double dispersion) {
        if (mean <= 0.0) return 0;
        if (dispersion <= 0.0) throw std::invalid_argument("negative_binomial: dispersion must be positive");
        double rate = gamma(dispersion) * (mean / dispersion);
        return poisson(rate);
    }

    int binomial(int n, double p) {
        if (n < 0 || p < 0.0 || p > 1.0) throw std::invalid_argument("binomial: invalid arguments");
        int k = 0;
        for (int i = 0; i < n; ++i)
            if (uniform01() < p) ++k;
        return k;
    }

    std::vector<double> dirichlet(const std::vector<double>& alpha) {
        std::vector<double> g(alpha.size());
        double total = 0.0;
        for (size_t i = 0; i < alpha.size(); ++i) {
            g[i] = gamma(alpha[i]);
            total += g[i];
        }
        if (total <= 0.0) total = 1.0;
        for (double& v : g) v /= total;
        return g;
    }

    std::vector<int> multinomial(int n, const std::vector<double>& p) {
        std::vector<int> counts(p.size(), 0);
        if (p.empty()) return counts;
        double mass = 0.0;
        for (double v : p) mass += v;
        std::vector<double> cdf(p.size());
        double acc = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            acc += p[i] / mass;
            cdf[i] = acc;
        }
        cdf.back() = 1.0;
        for (int i = 0; i < n; ++i) {
            double u = uniform01();
            size_t s = 0;
            while (s + 1 < cdf.size() && u >= cdf[s]) ++s;
            ++counts[s];
        }
        return counts;
    }

private:
    int poisson_knuth(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        int k = 0;
        double prod = 1.0;
        do {
            ++k;
            prod *= uniform01();
        } while (prod > limit);
        return k - 1;
    }

    uint64_t state_[4];
};

}  // namespace demandcast
