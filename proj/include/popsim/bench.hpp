#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <popsim/core.hpp>
#include <popsim/error.hpp>
#include <popsim/rng.hpp>
#include <popsim/scheduler.hpp>

namespace popsim {

using InitialWeights = std::vector<std::pair<std::string, double>>;

/// Splits n agents in proportion to `weights` (largest remainder, ties to the
/// earlier entry). Empty weights mean uniform over all states.
inline Configuration scale_configuration(const InitialWeights &weights, Count n, const StateTable &states) {
    if (n < 2)
        throw Error(Errc::population_too_small, "population must be at least 2");
    std::vector<double> w(states.size(), 0.0);
    if (weights.empty()) {
        std::fill(w.begin(), w.end(), 1.0);
    } else {
        for (const auto &[name, value] : weights) {
            if (!(value >= 0.0) || !std::isfinite(value))
                throw Error(Errc::invalid_argument, "weights must be finite and non-negative");
            w[states.at(name)] += value;
        }
    }
    double total = 0.0;
    for (double x : w)
        total += x;
    if (!(total > 0.0))
        throw Error(Errc::empty_population, "weights sum to zero");

    std::vector<Count> counts(w.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    Count assigned = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double exact = static_cast<double>(n) * w[i] / total;
        counts[i] = static_cast<Count>(std::floor(exact));
        assigned += counts[i];
        remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto &a, const auto &b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned)
        ++counts[remainders[k % remainders.size()].second];
    return Configuration(std::move(counts));
}

struct BenchRow {
    Count n = 0;
    Method method = Method::automatic;
    double wall_seconds = 0.0;
    /// Interactions simulated; for continuous-time Gillespie, non-null events.
    Count interactions = 0;
};

struct BenchSpec {
    std::vector<Count> n_list;
    double time = 1.0;
    unsigned reps = 1;
    std::vector<Method> methods{Method::batch, Method::gillespie};
    TimeModel time_model = TimeModel::continuous;
    std::uint64_t seed = 0;
};

/// One timed run per (n, method, rep); rep r at size index i uses seed
/// derive_seed(seed, i·reps + r) for every method.
inline std::vector<BenchRow> run_benchmark(const Protocol &protocol, const InitialWeights &weights,
                                           const BenchSpec &spec) {
    if (spec.reps == 0)
        throw Error(Errc::invalid_argument, "need at least one repetition");
    if (spec.time < 0.0)
        throw Error(Errc::negative_horizon, "benchmark time must be non-negative");
    std::vector<BenchRow> rows;
    for (std::size_t i = 0; i < spec.n_list.size(); ++i) {
        const auto config = scale_configuration(weights, spec.n_list[i], protocol.states());
        for (auto method : spec.methods) {
            for (unsigned r = 0; r < spec.reps; ++r) {
                RngStream rng(derive_seed(spec.seed, i * spec.reps + r));
                const auto start = std::chrono::steady_clock::now();
                Simulation sim(protocol, config, rng, method, spec.time_model);
                sim.advance_to(spec.time);
                const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
                const auto &stats = sim.stats();
                const bool events_only = method == Method::gillespie && spec.time_model == TimeModel::continuous;
                rows.push_back({spec.n_list[i], method, wall.count(), events_only ? stats.nonnull : stats.interactions});
            }
        }
    }
    return rows;
}

/// Least-squares slope of ln y against ln x.
inline double loglog_slope(const std::vector<double> &x, const std::vector<double> &y) {
    if (x.size() != y.size() || x.size() < 2)
        throw Error(Errc::invalid_argument, "slope needs at least two points");
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0)
        throw Error(Errc::invalid_argument, "slope needs two distinct x values");
    return sxy / sxx;
}

inline double median(std::vector<double> v) {
    if (v.empty())
        throw Error(Errc::invalid_argument, "median of nothing");
    std::sort(v.begin(), v.end());
    const auto mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

} // namespace popsim
