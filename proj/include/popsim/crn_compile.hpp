#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include <popsim/core.hpp>
#include <popsim/error.hpp>

namespace popsim {

/// (in.first, in.second) --rate--> (out.first, out.second)
struct OrderedRatedTransition {
    StateId in_first = 0;
    StateId in_second = 0;
    StateId out_first = 0;
    StateId out_second = 0;
    double rate = 0.0;

    friend bool operator==(const OrderedRatedTransition &, const OrderedRatedTransition &) = default;
};

/// Splits every reversible reaction into forward and reverse irreversible
/// reactions, keeping input order (forward immediately before reverse).
inline std::vector<Reaction> expand_reversible(std::span<const Reaction> reactions) {
    std::vector<Reaction> out;
    out.reserve(reactions.size() * 2);
    for (const auto &r : reactions) {
        auto forward = r;
        forward.reverse_rate.reset();
        out.push_back(forward);
        if (r.reversible()) {
            Reaction reverse = forward;
            reverse.reactants = r.products;
            reverse.products = r.reactants;
            reverse.rate = *r.reverse_rate;
            out.push_back(reverse);
        }
    }
    return out;
}

inline std::vector<Reaction> expand_reversible(const Crn &crn) {
    return expand_reversible(crn.reactions());
}

/// Bimolecular rates are scaled by (n-1)/(2v); an unequal-reactant reaction
/// also yields its swapped ordered copy. A unimolecular X -> Y becomes
/// (X, Z) -> (Y, Z) for every species Z, at the uncorrected rate.
inline std::vector<OrderedRatedTransition>
to_ordered_transitions(std::span<const Reaction> reactions, Count n, double volume,
                       std::size_t species_count) {
    if (n < 2)
        throw Error(Errc::population_too_small, "compilation needs n >= 2, got " + std::to_string(n));
    if (!(volume > 0.0))
        throw Error(Errc::invalid_argument, "volume must be positive");
    const double factor = static_cast<double>(n - 1) / (2.0 * volume);
    std::vector<OrderedRatedTransition> out;
    for (const auto &r : reactions) {
        if (r.reversible())
            throw Error(Errc::invalid_argument, "expand reversible reactions before ordering");
        if (r.arity == 2) {
            const double k = r.rate * factor;
            out.push_back({r.reactants[0], r.reactants[1], r.products[0], r.products[1], k});
            if (r.reactants[0] != r.reactants[1])
                out.push_back({r.reactants[1], r.reactants[0], r.products[1], r.products[0], k});
        } else {
            for (std::size_t z = 0; z < species_count; ++z) {
                const auto other = static_cast<StateId>(z);
                out.push_back({r.reactants[0], other, r.products[0], other, r.rate});
            }
        }
    }
    return out;
}

/// Converts rated transitions to a protocol with time scale m, the largest
/// total rate leaving any ordered pair. Each outcome gets probability rate/m;
/// transitions sharing input and output are merged by adding rates.
inline Protocol normalize(std::span<const OrderedRatedTransition> transitions, const StateTable &states,
                          std::optional<CompileOrigin> origin = std::nullopt) {
    if (transitions.empty())
        throw Error(Errc::empty_transition_set, "nothing to normalize");

    std::vector<std::pair<std::pair<StateId, StateId>, std::vector<OrderedRatedTransition>>> groups;
    std::map<std::pair<StateId, StateId>, std::size_t> group_of;
    for (const auto &t : transitions) {
        if (!(t.rate > 0.0))
            throw Error(Errc::non_positive_rate, "transition rates must be positive");
        const auto key = std::pair(t.in_first, t.in_second);
        auto [it, inserted] = group_of.emplace(key, groups.size());
        if (inserted)
            groups.push_back({key, {}});
        auto &members = groups[it->second].second;
        auto same = std::find_if(members.begin(), members.end(), [&](const auto &m) {
            return m.out_first == t.out_first && m.out_second == t.out_second;
        });
        if (same == members.end())
            members.push_back(t);
        else
            same->rate += t.rate;
    }

    double m = 0.0;
    for (const auto &[key, members] : groups) {
        double sum = 0.0;
        for (const auto &t : members)
            sum += t.rate;
        m = std::max(m, sum);
    }

    std::vector<Protocol::Rule> rules;
    rules.reserve(groups.size());
    for (const auto &[key, members] : groups) {
        Protocol::Rule rule{key.first, key.second, {}};
        for (const auto &t : members)
            rule.dist.entries.push_back({t.out_first, t.out_second, t.rate / m});
        rules.push_back(std::move(rule));
    }
    return Protocol(states, std::move(rules), m, origin);
}

/// CRN to continuous-time protocol for population size n at the CRN's volume.
inline Protocol compile(const Crn &crn, Count n) {
    const auto reactions = expand_reversible(crn);
    const auto transitions =
        to_ordered_transitions(reactions, n, crn.volume(), crn.species().size());
    return normalize(transitions, crn.species(), CompileOrigin{n, crn.volume()});
}

} // namespace popsim
