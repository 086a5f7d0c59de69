#ifndef QFE_RNG_HPP
#define QFE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace qfe::rng {

// Counter-based generation: every draw is a pure function of (key, counter),
// so a stream replays identically no matter which thread consumes it.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

inline std::uint64_t key2(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a + kGolden) ^ (b * 0xD6E8FEB86659FD93ull));
}

inline std::uint64_t key3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return key2(key2(a, b), c);
}

/// SplitMix64 sequence anchored at `key`; counter state is explicit so the
/// stream can be reconstructed (and replayed) from (key, position).
class Stream {
  public:
    explicit Stream(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64() { return mix64(key_ + (++pos_) * kGolden); }

    /// Uniform on (0,1], suitable for log().
    double next_unit_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform on (0,1), endpoints excluded.
    double next_unit_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; consumes two counters, no spare cached.
    double next_normal() {
        const double u1 = next_unit_pos();
        const double u2 = next_unit_open();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    std::uint64_t position() const { return pos_; }

  private:
    std::uint64_t key_;
    std::uint64_t pos_ = 0;
};

/// Gamma(shape, 1) by Marsaglia-Tsang squeeze; exact rejection, deterministic
/// given the stream. shape == 0 returns 0.
inline double gamma_draw(Stream& s, double shape) {
    if (!(shape >= 0.0)) throw std::invalid_argument("gamma_draw: shape must be >= 0");
    if (shape == 0.0) return 0.0;
    double boost = 1.0;
    if (shape < 1.0) {
        boost = std::pow(s.next_unit_pos(), 1.0 / shape);
        shape += 1.0;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = s.next_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = s.next_unit_pos();
        if (u < 1.0 - 0.0331 * x * x * x * x) return boost * d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return boost * d * v;
    }
}

/// Chi-square with (possibly non-integer) dof >= 0.
inline double chi_square_draw(Stream& s, double dof) {
    return 2.0 * gamma_draw(s, 0.5 * dof);
}

/// Number of failures before the next success in Bernoulli(q) trials,
/// sampled by inversion. q in (0,1]; returns HUGE_VAL-like cap via double.
inline double geometric_skip(Stream& s, double q) {
    if (q >= 1.0) return 0.0;
    if (q <= 0.0) return std::numeric_limits<double>::infinity();
    return std::floor(std::log(s.next_unit_pos()) / std::log1p(-q));
}

/// Inverse standard normal CDF (Wichura's AS 241 PPND16, double precision).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                      2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                    3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                  4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
                (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                      1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                    6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                  2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                      1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                    2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                  5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
                (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                      1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                    1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                  5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -value : value;
}

/// z such that P(Z > z) = p; accurate for p down to ~1e-300.
inline double normal_upper_quantile(double p) { return -normal_quantile(p); }

}  // namespace qfe::rng

#endif
