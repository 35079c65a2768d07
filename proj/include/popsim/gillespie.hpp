#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <popsim/core.hpp>
#include <popsim/crn_compile.hpp>
#include <popsim/rng.hpp>

namespace popsim {

// ---------------------------------------------------------------------------
// Raw CRN kinetics
// ---------------------------------------------------------------------------

/// k·#X for X -> ..., k·#X·#Y/v for X + Y -> ..., k·#X·(#X-1)/(2v) for 2X -> ...
inline double crn_propensity(const Reaction &reaction, std::span<const Count> counts, double volume) {
    const auto x = static_cast<double>(counts[reaction.reactants[0]]);
    if (reaction.arity == 1)
        return reaction.rate * x;
    if (reaction.reactants[0] != reaction.reactants[1])
        return reaction.rate * x * static_cast<double>(counts[reaction.reactants[1]]) / volume;
    return reaction.rate * x * (x - 1.0) / (2.0 * volume);
}

struct PropensityTable {
    std::vector<double> per_reaction;
    double total = 0.0;
};

/// Propensities of irreversible reactions (see expand_reversible).
inline PropensityTable compute_propensities(std::span<const Reaction> reactions,
                                            std::span<const Count> counts, double volume) {
    PropensityTable table;
    table.per_reaction.reserve(reactions.size());
    for (const auto &r : reactions) {
        const double p = std::max(0.0, crn_propensity(r, counts, volume));
        table.per_reaction.push_back(p);
        table.total += p;
    }
    return table;
}

inline void apply_reaction(Configuration &config, const Reaction &r) {
    if (r.arity == 1) {
        config.apply(r.reactants[0], r.reactants[0], r.products[0], r.reactants[0]);
    } else {
        config.apply(r.reactants[0], r.reactants[1], r.products[0], r.products[1]);
    }
}

struct CrnEvent {
    double dt = 0.0;
    std::size_t reaction = 0;
};

/// One SSA step over irreversible reactions. nullopt signals deadlock
/// (total propensity zero); the configuration is then left untouched.
inline std::optional<CrnEvent> crn_step(Configuration &config, std::span<const Reaction> reactions,
                                        double volume, RngStream &rng) {
    const auto table = compute_propensities(reactions, config.counts(), volume);
    if (!(table.total > 0.0))
        return std::nullopt;
    CrnEvent event;
    event.dt = exp_sample(rng, table.total);
    double u = rng.uniform() * table.total;
    event.reaction = reactions.size();
    for (std::size_t i = 0; i < reactions.size(); ++i) {
        if (table.per_reaction[i] <= 0.0)
            continue;
        event.reaction = i;
        if (u < table.per_reaction[i])
            break;
        u -= table.per_reaction[i];
    }
    apply_reaction(config, reactions[event.reaction]);
    return event;
}

inline std::optional<CrnEvent> crn_step(Configuration &config, const Crn &crn, RngStream &rng) {
    const auto reactions = expand_reversible(crn);
    return crn_step(config, reactions, crn.volume(), rng);
}

/// Direct-method SSA driver over a CRN, used as the reference engine.
class CrnSimulator {
public:
    CrnSimulator(const Crn &crn, Configuration config, RngStream &rng)
        : reactions_(expand_reversible(crn)), volume_(crn.volume()), config_(std::move(config)),
          rng_(rng) {
        if (config_.size() != crn.species().size())
            throw Error(Errc::invalid_argument, "configuration does not match CRN species");
    }

    /// Runs until `t`; an event that would land past `t` is discarded
    /// (memoryless clock) and the time is set to `t`.
    void advance_to(double t) {
        if (t < time_)
            throw Error(Errc::negative_horizon, "cannot advance backwards in time");
        while (!deadlocked_) {
            const auto table = compute_propensities(reactions_, config_.counts(), volume_);
            if (!(table.total > 0.0)) {
                deadlocked_ = true;
                break;
            }
            const double dt = exp_sample(rng_, table.total);
            if (time_ + dt > t)
                break;
            time_ += dt;
            double u = rng_.uniform() * table.total;
            std::size_t chosen = 0;
            for (std::size_t i = 0; i < reactions_.size(); ++i) {
                if (table.per_reaction[i] <= 0.0)
                    continue;
                chosen = i;
                if (u < table.per_reaction[i])
                    break;
                u -= table.per_reaction[i];
            }
            apply_reaction(config_, reactions_[chosen]);
            ++events_;
        }
        time_ = t;
    }

    double time() const noexcept { return time_; }
    const Configuration &configuration() const noexcept { return config_; }
    bool deadlocked() const noexcept { return deadlocked_; }
    std::uint64_t events() const noexcept { return events_; }

private:
    std::vector<Reaction> reactions_;
    double volume_;
    Configuration config_;
    RngStream &rng_;
    double time_ = 0.0;
    bool deadlocked_ = false;
    std::uint64_t events_ = 0;
};

// ---------------------------------------------------------------------------
// Null-skipping protocol kinetics
// ---------------------------------------------------------------------------

/// W = Σ_(a,b) #a·(#b - [a=b])·(1 - null(a,b)), computed from scratch.
inline double protocol_nonnull_mass(const Configuration &config, const Protocol &protocol) {
    double w = 0.0;
    for (const auto &rule : protocol.rules()) {
        const auto ca = config[rule.first];
        const auto cb = config[rule.second] - (rule.first == rule.second ? 1 : 0);
        if (ca > 0 && cb > 0)
            w += static_cast<double>(ca) * static_cast<double>(cb) * rule.dist.nonnull_prob();
    }
    return w;
}

/// Incrementally maintained W with per-state row and column sums:
/// row[a] = Σ_b w(a,b)·#b and col[b] = Σ_a w(a,b)·#a.
class NonNullMass {
public:
    NonNullMass(const Protocol &protocol, const Configuration &config)
        : protocol_(&protocol), row_(protocol.size()), col_(protocol.size()) {
        recompute(config);
    }

    double total() const noexcept { return total_; }
    double row(StateId a) const { return row_[a]; }
    double column(StateId b) const { return col_[b]; }

    void recompute(const Configuration &config) {
        std::fill(row_.begin(), row_.end(), 0.0);
        std::fill(col_.begin(), col_.end(), 0.0);
        for (const auto &rule : protocol_->rules()) {
            const double w = rule.dist.nonnull_prob();
            row_[rule.first] += w * static_cast<double>(config[rule.second]);
            col_[rule.second] += w * static_cast<double>(config[rule.first]);
        }
        total_ = protocol_nonnull_mass(config, *protocol_);
    }

    /// Account for #s having changed by `delta` (call after each change).
    void update(StateId s, Count delta) {
        if (delta == 0)
            return;
        const auto d = static_cast<double>(delta);
        const double w_ss = protocol_->weight(s, s);
        total_ += d * (row_[s] + col_[s]) + d * d * w_ss - d * w_ss;
        for (const auto &e : protocol_->column(s))
            row_[e.other] += e.weight * d;
        for (const auto &e : protocol_->row(s))
            col_[e.other] += e.weight * d;
    }

    void update_pair(StateId a, StateId b, StateId c, StateId d) {
        update(a, -1);
        update(b, -1);
        update(c, 1);
        update(d, 1);
    }

    /// Exact silence check; resyncs the incremental sums when W looks tiny.
    bool silent(const Configuration &config) {
        if (total_ > 0.5 * protocol_->min_weight())
            return false;
        recompute(config);
        return total_ == 0.0;
    }

private:
    const Protocol *protocol_;
    std::vector<double> row_;
    std::vector<double> col_;
    double total_ = 0.0;
};

/// Outcome of the ordered pair (a, b); returns the output pair and whether it
/// differs from the input.
inline std::pair<std::pair<StateId, StateId>, bool> sample_outcome(const Protocol &protocol, StateId a,
                                                                   StateId b, RngStream &rng) {
    const auto *dist = protocol.find(a, b);
    if (!dist)
        return {{a, b}, false};
    if (dist->deterministic())
        return {{dist->entries[0].first, dist->entries[0].second}, true};
    double u = rng.uniform();
    for (const auto &o : dist->entries) {
        if (u < o.prob)
            return {{o.first, o.second}, true};
        u -= o.prob;
    }
    return {{a, b}, false};
}

/// Samples an ordered pair with probability ∝ #a·(#b-[a=b])·w(a,b) and one of
/// its non-null outcomes, applies it, and updates `mass`.
inline void apply_nonnull_interaction(Configuration &config, const Protocol &protocol,
                                      NonNullMass &mass, RngStream &rng) {
    const auto q = protocol.size();
    for (int attempt = 0; attempt < 2; ++attempt) {
        double total = 0.0;
        for (StateId a = 0; a < q; ++a) {
            const auto ca = config[a];
            if (ca > 0)
                total += static_cast<double>(ca) *
                         std::max(0.0, mass.row(a) - protocol.weight(a, a));
        }
        double u = rng.uniform() * total;
        StateId a = 0;
        bool found = false;
        for (StateId s = 0; s < q; ++s) {
            const auto cs = config[s];
            if (cs <= 0)
                continue;
            const double ws = static_cast<double>(cs) * std::max(0.0, mass.row(s) - protocol.weight(s, s));
            if (ws <= 0.0)
                continue;
            a = s;
            found = true;
            if (u < ws)
                break;
            u -= ws;
        }
        if (found) {
            // Exact responder weights for the chosen initiator.
            double row_total = 0.0;
            for (const auto &e : protocol.row(a)) {
                const auto cb = config[e.other] - (e.other == a ? 1 : 0);
                if (cb > 0)
                    row_total += e.weight * static_cast<double>(cb);
            }
            if (row_total > 0.0) {
                double v = rng.uniform() * row_total;
                StateId b = 0;
                for (const auto &e : protocol.row(a)) {
                    const auto cb = config[e.other] - (e.other == a ? 1 : 0);
                    if (cb <= 0)
                        continue;
                    const double wb = e.weight * static_cast<double>(cb);
                    b = e.other;
                    if (v < wb)
                        break;
                    v -= wb;
                }
                const auto *dist = protocol.find(a, b);
                double x = rng.uniform() * dist->nonnull_prob();
                const Outcome *chosen = &dist->entries.back();
                for (const auto &o : dist->entries) {
                    if (x < o.prob) {
                        chosen = &o;
                        break;
                    }
                    x -= o.prob;
                }
                config.apply(a, b, chosen->first, chosen->second);
                mass.update_pair(a, b, chosen->first, chosen->second);
                return;
            }
        }
        mass.recompute(config);
    }
    throw Error(Errc::no_applicable_interaction, "no non-null interaction is applicable");
}

struct GillespieStep {
    /// Elapsed time in reported units (protocol time / m).
    double dt = 0.0;
    /// Interactions consumed, including skipped nulls (discrete model only).
    Count interactions = 0;
};

/// One null-skipping step. Continuous: dt ~ Exp(m·W/(n-1)). Discrete: the
/// non-null interaction is the G-th, G ~ Geometric(W/(n(n-1))), dt = G/n.
inline GillespieStep protocol_gillespie_step(Configuration &config, const Protocol &protocol,
                                             NonNullMass &mass, TimeModel model, RngStream &rng) {
    if (mass.silent(config))
        throw Error(Errc::no_applicable_interaction, "configuration is silent");
    const auto n = static_cast<double>(config.population());
    GillespieStep step;
    if (model == TimeModel::continuous) {
        step.dt = exp_sample(rng, protocol.time_scale() * mass.total() / (n - 1.0));
    } else {
        const double p = std::min(1.0, mass.total() / (n * (n - 1.0)));
        step.interactions = geometric_trials(rng, p);
        step.dt = static_cast<double>(step.interactions) / n;
    }
    apply_nonnull_interaction(config, protocol, mass, rng);
    return step;
}

inline GillespieStep protocol_gillespie_step(Configuration &config, const Protocol &protocol,
                                             TimeModel model, RngStream &rng) {
    NonNullMass mass(protocol, config);
    return protocol_gillespie_step(config, protocol, mass, model, rng);
}

/// Histogram of CRN configurations at time t over independent SSA runs.
inline std::map<std::vector<Count>, std::uint64_t>
sample_crn_endpoint(const Configuration &config, const Crn &crn, double t, std::uint64_t trials,
                    std::uint64_t seed) {
    std::map<std::vector<Count>, std::uint64_t> histogram;
    for (std::uint64_t i = 0; i < trials; ++i) {
        RngStream rng(derive_seed(seed, i));
        CrnSimulator sim(crn, config, rng);
        sim.advance_to(t);
        const auto counts = sim.configuration().counts();
        ++histogram[std::vector<Count>(counts.begin(), counts.end())];
    }
    return histogram;
}

} // namespace popsim
