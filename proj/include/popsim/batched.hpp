#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <popsim/core.hpp>
#include <popsim/detail/math.hpp>
#include <popsim/gillespie.hpp>
#include <popsim/rng.hpp>

namespace popsim {

// ---------------------------------------------------------------------------
// Collision length
// ---------------------------------------------------------------------------

/// Below this population the collision length is sampled by walking the exact
/// survival product; above it by binary search on the log-survival.
inline constexpr Count kCollisionProductLimit = 4096;

/// ln P(C > t) = ln(n! / ((n-t)! n^t)) for agent picks drawn uniformly with
/// replacement; -inf for t > n.
inline double collision_log_survival(Count n, Count t) {
    if (t <= 1)
        return 0.0;
    if (t > n)
        return -std::numeric_limits<double>::infinity();
    const Count rest = n - t;
    if (rest < detail::kLogFactorialTableSize || n < 2 * detail::kLogFactorialTableSize)
        return detail::log_factorial_ratio(n, rest) - static_cast<double>(t) * std::log(static_cast<double>(n));
    // Same Stirling rearrangement as log_factorial_ratio, with -t·ln n folded in
    // so the leading t terms cancel analytically.
    const double z1 = static_cast<double>(n) + 1.0;
    const double z2 = static_cast<double>(rest) + 1.0;
    const double d = static_cast<double>(t);
    return (z2 - 0.5) * std::log1p(d / z2) + d * std::log1p(1.0 / static_cast<double>(n)) - d +
           detail::stirling_correction(z1) - detail::stirling_correction(z2);
}

/// Index of the first agent pick (picks uniform over n, two per interaction)
/// that repeats an earlier pick. P(C > t) = n!/((n-t)!·n^t); C ∈ [2, n+1].
inline Count sample_collision_length(Count n, RngStream &rng) {
    if (n < 2)
        throw Error(Errc::population_too_small, "collision length needs n >= 2");
    const double u = rng.uniform_open();
    if (n <= kCollisionProductLimit) {
        // C = min{t : S(t) < u}, S(t+1) = S(t)·(n-t)/n.
        double survival = 1.0;
        const auto nd = static_cast<double>(n);
        for (Count t = 1; t <= n; ++t) {
            if (survival < u)
                return t;
            survival *= static_cast<double>(n - t) / nd;
        }
        return n + 1;
    }
    const double log_u = std::log(u);
    Count lo = 1;
    // u >= 2^-54 and ln S(t) ≈ -t²/2n, so 9·sqrt(n) is past the support in practice.
    Count hi = std::min<Count>(n + 1, static_cast<Count>(9.0 * std::sqrt(static_cast<double>(n))) + 2);
    if (!(collision_log_survival(n, hi) < log_u))
        hi = n + 1;
    while (hi - lo > 1) {
        const Count mid = lo + (hi - lo) / 2;
        if (collision_log_survival(n, mid) < log_u)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

// ---------------------------------------------------------------------------
// Urn
// ---------------------------------------------------------------------------

/// Multiset of agents by state.
class Urn {
public:
    Urn() = default;
    explicit Urn(std::size_t states) : counts_(states, 0) {}
    explicit Urn(std::span<const Count> counts) : counts_(counts.begin(), counts.end()) {
        for (auto c : counts_)
            total_ += c;
    }

    Count total() const noexcept { return total_; }
    std::size_t size() const noexcept { return counts_.size(); }
    Count operator[](StateId s) const { return counts_[s]; }
    std::span<const Count> counts() const noexcept { return counts_; }

    void add(StateId s, Count k) {
        counts_[s] += k;
        total_ += k;
    }

    void remove(StateId s, Count k) {
        assert(counts_[s] >= k);
        counts_[s] -= k;
        total_ -= k;
    }

    /// Removes one uniformly chosen agent and returns its state.
    StateId remove_one(RngStream &rng) {
        const auto s = draw_one(rng, counts_, total_);
        remove(s, 1);
        return s;
    }

    /// Removes `draws` agents uniformly without replacement; out[s] = number drawn.
    void remove_sample(RngStream &rng, Count draws, std::span<Count> out) {
        multivariate_hypergeometric(rng, counts_, draws, out);
        for (std::size_t s = 0; s < counts_.size(); ++s)
            counts_[s] -= out[s];
        total_ -= draws;
    }

    void reset(std::span<const Count> counts) {
        counts_.assign(counts.begin(), counts.end());
        total_ = 0;
        for (auto c : counts_)
            total_ += c;
    }

    void clear() {
        std::fill(counts_.begin(), counts_.end(), 0);
        total_ = 0;
    }

private:
    std::vector<Count> counts_;
    Count total_ = 0;
};

// ---------------------------------------------------------------------------
// Engines
// ---------------------------------------------------------------------------

/// One interaction of the sequential engine: (first, second) -> (out_first, out_second).
struct Interaction {
    StateId first = 0;
    StateId second = 0;
    StateId out_first = 0;
    StateId out_second = 0;
    bool changed = false;
};

/// One uniformly random ordered pair of distinct agents interacts.
inline Interaction sequential_interaction(Configuration &config, const Protocol &protocol, RngStream &rng) {
    const Count n = config.population();
    if (n < 2)
        throw Error(Errc::population_too_small, "interaction needs n >= 2");
    const auto counts = config.counts();
    Interaction it;
    it.first = draw_one(rng, counts, n);
    auto r = static_cast<Count>(rng.below(static_cast<std::uint64_t>(n - 1)));
    for (std::size_t s = 0; s < counts.size(); ++s) {
        const Count c = counts[s] - (s == it.first ? 1 : 0);
        if (r < c) {
            it.second = static_cast<StateId>(s);
            break;
        }
        r -= c;
    }
    const auto [out, changed] = sample_outcome(protocol, it.first, it.second, rng);
    it.out_first = out.first;
    it.out_second = out.second;
    it.changed = changed;
    if (changed)
        config.apply(it.first, it.second, out.first, out.second);
    return it;
}

/// Returns true when the sampled outcome was non-null.
inline bool sequential_step(Configuration &config, const Protocol &protocol, RngStream &rng) {
    return sequential_interaction(config, protocol, rng).changed;
}

struct BatchResult {
    Count interactions = 0;
    /// Interactions whose sampled outcome was non-null.
    Count nonnull = 0;
    Count collision_length = 0;
};

/// Collision-length batching. Picks are modelled as i.i.d. uniform agents;
/// a responder pick equal to its own initiator is redrawn, which reproduces
/// the uniform-distinct-pair scheduler exactly. One batch:
///  1. sample C; the first ell = floor((C-1)/2) interactions touch 2·ell
///     distinct agents and are applied together as a random matching;
///  2. pick C repeats one of the C-1 earlier picks and is resolved with the
///     current (post-batch) states of those agents;
///  3. all touched agents are merged back.
class BatchEngine {
public:
    explicit BatchEngine(const Protocol &protocol)
        : protocol_(&protocol), q_(protocol.size()), main_(q_), delayed_(q_), initiators_(q_),
          responders_(q_), partners_(q_), split_(q_ + 1), split_probs_() {}

    /// Simulates between 1 and `max_interactions` interactions.
    BatchResult step(Configuration &config, RngStream &rng,
                     Count max_interactions = std::numeric_limits<Count>::max()) {
        const Count n = config.population();
        if (n < 2)
            throw Error(Errc::population_too_small, "batch step needs n >= 2");
        if (max_interactions < 1)
            throw Error(Errc::invalid_argument, "batch needs room for one interaction");

        BatchResult result;
        const Count c = sample_collision_length(n, rng);
        result.collision_length = c;
        Count ell = (c - 1) / 2;
        bool resolve_collision = true;
        if (ell + 1 > max_interactions) {
            // Stop inside the collision-free prefix.
            ell = max_interactions;
            resolve_collision = false;
        }

        main_.reset(config.counts());
        delayed_.clear();

        main_.remove_sample(rng, ell, initiators_);
        main_.remove_sample(rng, ell, responders_);
        for (StateId i = 0; i < q_; ++i) {
            const Count ai = initiators_[i];
            if (ai == 0)
                continue;
            multivariate_hypergeometric(rng, responders_, ai, partners_);
            for (StateId j = 0; j < q_; ++j) {
                const Count d = partners_[j];
                if (d == 0)
                    continue;
                responders_[j] -= d;
                result.nonnull += apply_many(i, j, d, rng);
            }
        }
        result.interactions = ell;
        assert(main_.total() + delayed_.total() == n);

        if (resolve_collision) {
            StateId first = 0;
            StateId second = 0;
            const Count touched = 2 * ell;
            if (c % 2 == 0) {
                // Pick C is the responder of a fresh initiator (pick C-1).
                first = main_.remove_one(rng);
                assert(main_.total() + delayed_.total() + 1 == n);
                bool from_delayed;
                if (rng.below(static_cast<std::uint64_t>(touched + 1)) == 0) {
                    // Repeat of its own initiator: redraw among the other n-1 agents.
                    from_delayed = static_cast<Count>(rng.below(static_cast<std::uint64_t>(n - 1))) < touched;
                } else {
                    from_delayed = true;
                }
                second = from_delayed ? delayed_.remove_one(rng) : main_.remove_one(rng);
            } else {
                // Pick C is an initiator repeating one of the touched agents;
                // its responder is uniform over the other n-1 agents.
                first = delayed_.remove_one(rng);
                const bool from_delayed =
                    static_cast<Count>(rng.below(static_cast<std::uint64_t>(n - 1))) < touched - 1;
                second = from_delayed ? delayed_.remove_one(rng) : main_.remove_one(rng);
            }
            const auto [out, changed] = sample_outcome(*protocol_, first, second, rng);
            delayed_.add(out.first, 1);
            delayed_.add(out.second, 1);
            result.nonnull += changed ? 1 : 0;
            ++result.interactions;
        }

        for (StateId s = 0; s < q_; ++s)
            main_.add(s, delayed_[s]);
        config.assign(main_.counts());
        return result;
    }

private:
    const Protocol *protocol_;
    StateId q_;
    Urn main_;
    Urn delayed_;
    std::vector<Count> initiators_;
    std::vector<Count> responders_;
    std::vector<Count> partners_;
    std::vector<Count> split_;
    std::vector<double> split_probs_;

    /// d interactions of the ordered pair (i, j); outputs go to the delayed urn.
    Count apply_many(StateId i, StateId j, Count d, RngStream &rng) {
        const auto *dist = protocol_->find(i, j);
        if (!dist) {
            delayed_.add(i, d);
            delayed_.add(j, d);
            return 0;
        }
        if (dist->deterministic()) {
            delayed_.add(dist->entries[0].first, d);
            delayed_.add(dist->entries[0].second, d);
            return d;
        }
        // Declaration order, null last.
        const auto k = dist->entries.size();
        split_probs_.resize(k + 1);
        for (std::size_t e = 0; e < k; ++e)
            split_probs_[e] = dist->entries[e].prob;
        split_probs_[k] = dist->null_prob;
        multinomial_split(rng, d, std::span<const double>(split_probs_.data(), k + 1),
                          std::span<Count>(split_.data(), k + 1));
        Count nonnull = 0;
        for (std::size_t e = 0; e < k; ++e) {
            delayed_.add(dist->entries[e].first, split_[e]);
            delayed_.add(dist->entries[e].second, split_[e]);
            nonnull += split_[e];
        }
        delayed_.add(i, split_[k]);
        delayed_.add(j, split_[k]);
        return nonnull;
    }
};

inline BatchResult batch_step(Configuration &config, const Protocol &protocol, RngStream &rng,
                              Count max_interactions = std::numeric_limits<Count>::max()) {
    BatchEngine engine(protocol);
    return engine.step(config, rng, max_interactions);
}

} // namespace popsim
