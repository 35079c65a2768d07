#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>

#include <boost/random/binomial_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include <popsim/core.hpp>
#include <popsim/detail/math.hpp>
#include <popsim/error.hpp>

namespace popsim {

/// xoshiro256** seeded through splitmix64. Same seed, same stream.
class RngStream {
public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {
        std::uint64_t x = seed;
        for (auto &word : state_)
            word = splitmix64(x);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const auto result = rotl(state_[1] * 5, 7) * 9;
        const auto t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    std::uint64_t seed() const noexcept { return seed_; }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1).
    double uniform_open() noexcept {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound), bound > 0 (Lemire's rejection method).
    std::uint64_t below(std::uint64_t bound) noexcept {
        __extension__ using u128 = unsigned __int128;
        auto x = (*this)();
        auto m = static_cast<u128>(x) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const auto threshold = (0 - bound) % bound;
            while (low < threshold) {
                x = (*this)();
                m = static_cast<u128>(x) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    friend bool operator==(const RngStream &a, const RngStream &b) { return a.state_ == b.state_; }

private:
    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_;

    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    static std::uint64_t splitmix64(std::uint64_t &x) noexcept {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

/// Seed for independent sub-run `index` of a batch seeded with `seed`.
/// The RngStream constructor scrambles it through splitmix64.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return seed ^ index;
}

inline std::uint64_t entropy_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// ---------------------------------------------------------------------------
// Continuous samplers
// ---------------------------------------------------------------------------

inline double exp_sample(RngStream &rng, double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate))
        throw Error(Errc::non_positive_rate, "exponential rate must be positive");
    return -std::log(rng.uniform_open()) / rate;
}

inline double gamma_sample(RngStream &rng, double shape) {
    return boost::random::gamma_distribution<double>(shape, 1.0)(rng);
}

/// Beta(a, b) as a ratio of gammas.
inline double beta_sample(RngStream &rng, double a, double b) {
    const double x = gamma_sample(rng, a);
    const double y = gamma_sample(rng, b);
    return x / (x + y);
}

// ---------------------------------------------------------------------------
// Discrete samplers
// ---------------------------------------------------------------------------

/// Number of Bernoulli(p) trials up to and including the first success.
inline Count geometric_trials(RngStream &rng, double p) {
    if (!(p > 0.0) || p > 1.0)
        throw Error(Errc::invalid_probability, "geometric success probability outside (0, 1]");
    if (p == 1.0)
        return 1;
    const double t = std::ceil(std::log(rng.uniform_open()) / std::log1p(-p));
    if (!(t < 9.0e18))
        return std::numeric_limits<Count>::max();
    return std::max<Count>(1, static_cast<Count>(t));
}

inline Count poisson_sample(RngStream &rng, double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean))
        throw Error(Errc::invalid_argument, "poisson mean must be finite and non-negative");
    if (mean == 0.0)
        return 0;
    return boost::random::poisson_distribution<Count, double>(mean)(rng);
}

inline Count binomial_sample(RngStream &rng, Count trials, double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw Error(Errc::invalid_probability, "binomial probability outside [0, 1]");
    if (trials < 0)
        throw Error(Errc::invalid_argument, "negative trial count");
    if (trials == 0 || p == 0.0)
        return 0;
    if (p == 1.0)
        return trials;
    return boost::random::binomial_distribution<Count, double>(trials, p)(rng);
}

/// Splits `total` into out[i] ~ Multinomial(total, probs) by sequential
/// conditional binomials. Probabilities are normalized by their sum.
inline void multinomial_split(RngStream &rng, Count total, std::span<const double> probs,
                              std::span<Count> out) {
    if (probs.size() != out.size())
        throw Error(Errc::invalid_argument, "multinomial output size mismatch");
    double mass = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw Error(Errc::invalid_probability, "multinomial probabilities must be non-negative");
        mass += p;
    }
    std::fill(out.begin(), out.end(), 0);
    if (total == 0)
        return;
    if (!(mass > 0.0))
        throw Error(Errc::invalid_probability, "multinomial probabilities sum to zero");
    std::size_t last = probs.size() - 1;
    while (probs[last] == 0.0)
        --last;
    Count remaining = total;
    for (std::size_t i = 0; i < last && remaining > 0; ++i) {
        const double p = mass > 0.0 ? std::min(1.0, probs[i] / mass) : 1.0;
        out[i] = binomial_sample(rng, remaining, p);
        remaining -= out[i];
        mass -= probs[i];
    }
    out[last] += remaining;
}

namespace detail {

// Sequential draws; cost O(min(draws, total - draws)).
inline Count hypergeometric_small(RngStream &rng, Count good, Count bad, Count sample) {
    const Count total = good + bad;
    const bool flip = sample > total / 2;
    Count todo = flip ? total - sample : sample;
    Count remaining_total = total;
    Count remaining_good = good;
    while (todo > 0 && remaining_good > 0 && remaining_total > remaining_good) {
        if (static_cast<Count>(rng.below(static_cast<std::uint64_t>(remaining_total))) <
            remaining_good)
            --remaining_good;
        --remaining_total;
        --todo;
    }
    if (remaining_total == remaining_good)
        remaining_good -= todo;
    return flip ? remaining_good : good - remaining_good;
}

// Ratio-of-uniforms with a table-mountain hat (Stadlober's HRUA), following the
// structure of NumPy's implementation. Log-pmf differences go through
// log_factorial_ratio so that populations up to ~1e12 keep full precision.
inline Count hypergeometric_hrua(RngStream &rng, Count good, Count bad, Count sample) {
    constexpr double d1 = 1.7155277699214135;
    constexpr double d2 = 0.8989161620588988;

    const Count popsize = good + bad;
    const Count s = std::min(sample, popsize - sample);
    const Count lo = std::min(good, bad);
    const Count hi = std::max(good, bad);

    const double p = static_cast<double>(lo) / static_cast<double>(popsize);
    const double q = static_cast<double>(hi) / static_cast<double>(popsize);
    const double mu = static_cast<double>(s) * p;
    const double a = mu + 0.5;
    const double var = static_cast<double>(popsize - s) * static_cast<double>(s) * p * q /
                       static_cast<double>(popsize - 1);
    const double c = std::sqrt(var + 0.5);
    const double h = d1 * c + d2;
    const auto mode = static_cast<Count>(std::floor(static_cast<double>(s + 1) *
                                                    static_cast<double>(lo + 1) /
                                                    static_cast<double>(popsize + 2)));
    // Support is [0, min(s, lo)]; beyond 16 sd the mass is below double resolution.
    const double bound =
        std::min(static_cast<double>(std::min(s, lo) + 1), std::floor(a + 16.0 * c));

    Count k = 0;
    while (true) {
        const double u = rng.uniform_open();
        const double v = rng.uniform();
        const double x = a + h * (v - 0.5) / u;
        if (x < 0.0 || x >= bound)
            continue;
        k = static_cast<Count>(std::floor(x));
        // ln f(k) - ln f(mode) for the hypergeometric pmf f.
        const double t = popsim::detail::log_factorial_ratio(mode, k) +
                         popsim::detail::log_factorial_ratio(lo - mode, lo - k) +
                         popsim::detail::log_factorial_ratio(s - mode, s - k) +
                         popsim::detail::log_factorial_ratio(hi - s + mode, hi - s + k);
        if (u * (4.0 - u) - 3.0 <= t)
            break;
        if (u * (u - t) >= 1.0)
            continue;
        if (2.0 * std::log(u) <= t)
            break;
    }
    if (good > bad)
        k = s - k;
    if (s < sample)
        k = good - k;
    return k;
}

} // namespace detail

/// Number of successes in `draws` draws without replacement from an urn with
/// `successes` + `failures` balls.
inline Count hypergeometric_sample(RngStream &rng, Count successes, Count failures, Count draws) {
    if (successes < 0 || failures < 0 || draws < 0)
        throw Error(Errc::invalid_argument, "hypergeometric parameters must be non-negative");
    const Count total = successes + failures;
    if (draws > total)
        throw Error(Errc::draws_exceed_population, "cannot draw " + std::to_string(draws) +
                                                       " from " + std::to_string(total));
    if (draws == 0 || successes == 0)
        return 0;
    if (failures == 0)
        return draws;
    if (draws == total)
        return successes;
    if (draws >= 10 && draws <= total - 10)
        return detail::hypergeometric_hrua(rng, successes, failures, draws);
    return detail::hypergeometric_small(rng, successes, failures, draws);
}

/// Multivariate hypergeometric draw by sequential conditional hypergeometrics
/// over the coordinates in index order.
inline void multivariate_hypergeometric(RngStream &rng, std::span<const Count> urn, Count draws,
                                        std::span<Count> out) {
    if (urn.size() != out.size())
        throw Error(Errc::invalid_argument, "urn and output size mismatch");
    Count total = 0;
    for (auto c : urn) {
        if (c < 0)
            throw Error(Errc::invalid_argument, "negative urn count");
        total += c;
    }
    if (draws < 0 || draws > total)
        throw Error(Errc::draws_exceed_population, "cannot draw " + std::to_string(draws) +
                                                       " from " + std::to_string(total));
    std::fill(out.begin(), out.end(), 0);
    Count rest = total;
    for (std::size_t i = 0; i < urn.size() && draws > 0; ++i) {
        rest -= urn[i];
        const auto x = hypergeometric_sample(rng, urn[i], rest, draws);
        out[i] = x;
        draws -= x;
    }
}

/// Index of a single uniformly drawn ball, not removed.
inline StateId draw_one(RngStream &rng, std::span<const Count> urn, Count total) {
    auto r = static_cast<Count>(rng.below(static_cast<std::uint64_t>(total)));
    for (std::size_t i = 0; i < urn.size(); ++i) {
        if (r < urn[i])
            return static_cast<StateId>(i);
        r -= urn[i];
    }
    throw Error(Errc::invalid_argument, "urn total exceeds its contents");
}

} // namespace popsim
