#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <popsim/batched.hpp>
#include <popsim/core.hpp>
#include <popsim/error.hpp>
#include <popsim/gillespie.hpp>
#include <popsim/rng.hpp>

namespace popsim {

enum class Method { automatic, batch, gillespie, sequential };

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::automatic:
        return "auto";
    case Method::batch:
        return "batch";
    case Method::gillespie:
        return "gillespie";
    case Method::sequential:
        return "sequential";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
    if (s == "auto")
        return Method::automatic;
    if (s == "batch")
        return Method::batch;
    if (s == "gillespie")
        return Method::gillespie;
    if (s == "sequential")
        return Method::sequential;
    return std::nullopt;
}

inline std::optional<TimeModel> parse_time_model(std::string_view s) {
    if (s == "discrete")
        return TimeModel::discrete;
    if (s == "continuous")
        return TimeModel::continuous;
    return std::nullopt;
}

/// ⌊x⌋, except that values within 1e-9 (relative) of an integer round to it,
/// so t = 0.3 at n = 10 gives 3 interactions rather than 2.
inline Count floor_with_tolerance(double x) {
    const double r = std::round(x);
    if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x)))
        return static_cast<Count>(r);
    return static_cast<Count>(std::floor(x));
}

/// Simulated time. Discrete: derived from the integer interaction count.
/// Continuous: tracked directly, in reported units (protocol time / m).
class SimClock {
public:
    SimClock(TimeModel model, Count n) : model_(model), n_(n) {}

    TimeModel model() const noexcept { return model_; }
    Count population() const noexcept { return n_; }
    Count interactions() const noexcept { return interactions_; }

    double time() const noexcept {
        if (model_ == TimeModel::discrete)
            return static_cast<double>(interactions_) / static_cast<double>(n_);
        return t_;
    }

    void add_interactions(Count k) noexcept { interactions_ += k; }
    void set_time(double t) noexcept { t_ = t; }

private:
    TimeModel model_;
    Count n_;
    Count interactions_ = 0;
    double t_ = 0.0;
};

/// Number of interactions that happen between the clock's time and t_target.
inline Count interactions_until(double t_target, const SimClock &clock, const Protocol &protocol,
                                RngStream &rng) {
    const auto n = static_cast<double>(clock.population());
    if (clock.model() == TimeModel::discrete) {
        const Count target = floor_with_tolerance(n * t_target);
        if (target < clock.interactions())
            throw Error(Errc::negative_horizon, "target time lies in the past");
        return target - clock.interactions();
    }
    const double dt = t_target - clock.time();
    if (dt < 0.0)
        throw Error(Errc::negative_horizon, "target time lies in the past");
    const double mean = protocol.time_scale() * n * dt;
    if (!(mean < 4.0e18))
        throw Error(Errc::invalid_argument, "time span needs more than 4e18 interactions");
    return poisson_sample(rng, mean);
}

struct RunSpec {
    double horizon = 0.0;
    double snapshot_interval = 0.0;
    Method method = Method::automatic;
    double switch_factor = 2.0;
    TimeModel time_model = TimeModel::continuous;
};

struct RunStats {
    std::uint64_t batches = 0;
    std::uint64_t gillespie_events = 0;
    std::uint64_t sequential_steps = 0;
    /// Interactions simulated, nulls included (not tracked by the continuous
    /// Gillespie path, which never materializes null interactions).
    Count interactions = 0;
    Count nonnull = 0;
};

struct Snapshot {
    double time = 0.0;
    std::vector<Count> counts;
};

struct TrajectoryMetadata {
    std::uint64_t seed = 0;
    Count n = 0;
    Method method = Method::automatic;
    TimeModel time_model = TimeModel::continuous;
    double time_scale = 1.0;
    /// "crn" for compiled protocols (time divided by m), "protocol" otherwise.
    std::string time_unit = "protocol";
    std::string protocol_hash;
    bool silent = false;
    std::optional<double> silent_time;
    RunStats stats;
};

struct Trajectory {
    TrajectoryMetadata metadata;
    std::vector<std::string> states;
    std::vector<Snapshot> snapshots;
};

/// 0, Δ, 2Δ, ... up to the horizon, with the horizon itself appended when it
/// is off the grid. Grid points are i·Δ.
inline std::vector<double> snapshot_times(double horizon, double interval) {
    if (horizon < 0.0 || !std::isfinite(horizon))
        throw Error(Errc::negative_horizon, "horizon must be finite and non-negative");
    if (!(interval > 0.0) || !std::isfinite(interval))
        throw Error(Errc::invalid_argument, "snapshot interval must be positive");
    const double steps = horizon / interval;
    if (steps > 1e8)
        throw Error(Errc::invalid_argument, "more than 1e8 snapshots requested");
    const auto last = static_cast<std::size_t>(std::floor(steps + 1e-9));
    std::vector<double> times;
    times.reserve(last + 2);
    for (std::size_t i = 0; i <= last; ++i)
        times.push_back(static_cast<double>(i) * interval);
    const double tol = 1e-9 * std::max(1.0, horizon);
    if (std::abs(times.back() - horizon) <= tol)
        times.back() = horizon;
    else if (times.back() < horizon)
        times.push_back(horizon);
    return times;
}

/// Hybrid run loop over one configuration.
class Simulation {
public:
    Simulation(const Protocol &protocol, Configuration config, RngStream &rng,
               Method method = Method::automatic, TimeModel model = TimeModel::continuous,
               double switch_factor = 2.0)
        : protocol_(&protocol), config_(checked(protocol, std::move(config))), rng_(&rng), method_(method),
          alpha_(switch_factor), clock_(model, config_.population()), mass_(protocol, config_),
          engine_(protocol) {
        if (!(switch_factor > 0.0))
            throw Error(Errc::invalid_argument, "switch factor must be positive");
        if (model == TimeModel::discrete && protocol.origin())
            throw Error(Errc::unsupported_time_model,
                        "discrete time is not supported for protocols compiled from a CRN");
        check_silent(0.0);
    }

    const Configuration &configuration() const noexcept { return config_; }
    const SimClock &clock() const noexcept { return clock_; }
    double time() const noexcept { return clock_.time(); }
    bool silent() const noexcept { return silent_; }
    std::optional<double> silent_time() const noexcept { return silent_time_; }
    const RunStats &stats() const noexcept { return stats_; }

    /// Advances simulated time to t. A silent configuration stays put.
    void advance_to(double t) {
        if (t < clock_.time())
            throw Error(Errc::negative_horizon, "cannot move the clock backwards");
        if (method_ == Method::gillespie && clock_.model() == TimeModel::continuous) {
            advance_exponential(t);
            return;
        }
        const double start = clock_.time();
        const Count base = clock_.interactions();
        const Count k = interactions_until(t, clock_, *protocol_, *rng_);
        const Count done = consume(k);
        if (clock_.model() == TimeModel::continuous) {
            if (silent_ && !silent_time_)
                silent_time_ = start + (t - start) * beta_sample(*rng_, static_cast<double>(done),
                                                                  static_cast<double>(k - done + 1));
            clock_.set_time(t);
        } else {
            if (silent_ && !silent_time_)
                silent_time_ = static_cast<double>(base + done) / static_cast<double>(config_.population());
            clock_.add_interactions(k);
        }
    }

    /// Records snapshots from the current time up to current time + horizon.
    Trajectory record(double horizon, double snapshot_interval) {
        Trajectory traj;
        traj.states = protocol_->states().names();
        const double start = clock_.time();
        for (double offset : snapshot_times(horizon, snapshot_interval)) {
            const double t = start + offset;
            if (t > clock_.time())
                advance_to(t);
            const auto counts = config_.counts();
            traj.snapshots.push_back({t, std::vector<Count>(counts.begin(), counts.end())});
        }
        auto &meta = traj.metadata;
        meta.seed = rng_->seed();
        meta.n = config_.population();
        meta.method = method_;
        meta.time_model = clock_.model();
        meta.time_scale = protocol_->time_scale();
        meta.time_unit = protocol_->origin() ? "crn" : "protocol";
        meta.protocol_hash = protocol_fingerprint(*protocol_);
        meta.silent = silent_;
        meta.silent_time = silent_time_;
        meta.stats = stats_;
        return traj;
    }

private:
    const Protocol *protocol_;
    Configuration config_;
    RngStream *rng_;
    Method method_;
    double alpha_;
    SimClock clock_;
    NonNullMass mass_;
    BatchEngine engine_;
    bool silent_ = false;
    std::optional<double> silent_time_;
    RunStats stats_;

    static Configuration checked(const Protocol &protocol, Configuration config) {
        if (config.size() != protocol.size())
            throw Error(Errc::invalid_argument, "configuration and protocol disagree on state count");
        if (config.population() < 2)
            throw Error(Errc::population_too_small, "simulation needs n >= 2");
        return config;
    }

    bool check_silent(double when) {
        if (silent_)
            return true;
        if (!mass_.silent(config_))
            return false;
        silent_ = true;
        if (std::isfinite(when))
            silent_time_ = when;
        return true;
    }

    bool prefer_gillespie() const {
        const auto n = static_cast<double>(config_.population());
        const double w = mass_.total();
        if (!(w > 0.0))
            return true;
        return n * (n - 1.0) / w > alpha_ * std::sqrt(n);
    }

    // Continuous-time Gillespie with exponential holding times. The holding
    // time is memoryless, so an event overshooting t is discarded.
    void advance_exponential(double t) {
        const auto n = static_cast<double>(config_.population());
        while (!check_silent(clock_.time())) {
            const double rate = protocol_->time_scale() * mass_.total() / (n - 1.0);
            const double next = clock_.time() + exp_sample(*rng_, rate);
            if (next > t)
                break;
            apply_nonnull_interaction(config_, *protocol_, mass_, *rng_);
            clock_.set_time(next);
            ++stats_.gillespie_events;
            ++stats_.nonnull;
        }
        clock_.set_time(std::max(clock_.time(), t));
    }

    // Simulates up to k interactions; returns how many happened before the
    // configuration went silent (k if it did not). For a silent stop the
    // return value is the index of the last non-null interaction.
    Count consume(Count k) {
        if (silent_)
            return 0;
        Count done = 0;
        while (done < k) {
            Method mode = method_;
            if (mode == Method::automatic)
                mode = prefer_gillespie() ? Method::gillespie : Method::batch;
            if (mode == Method::gillespie) {
                const auto n = static_cast<double>(config_.population());
                const double p = std::min(1.0, mass_.total() / (n * (n - 1.0)));
                const Count g = geometric_trials(*rng_, p);
                if (g > k - done) {
                    stats_.interactions += k - done;
                    done = k;
                    break;
                }
                done += g;
                stats_.interactions += g;
                apply_nonnull_interaction(config_, *protocol_, mass_, *rng_);
                ++stats_.gillespie_events;
                ++stats_.nonnull;
            } else if (mode == Method::batch) {
                const auto r = engine_.step(config_, *rng_, k - done);
                done += r.interactions;
                stats_.interactions += r.interactions;
                stats_.nonnull += r.nonnull;
                ++stats_.batches;
                if (r.nonnull > 0)
                    mass_.recompute(config_);
            } else {
                const auto it = sequential_interaction(config_, *protocol_, *rng_);
                ++done;
                ++stats_.interactions;
                ++stats_.sequential_steps;
                if (it.changed) {
                    ++stats_.nonnull;
                    mass_.update_pair(it.first, it.second, it.out_first, it.out_second);
                }
            }
            if (check_silent(std::numeric_limits<double>::quiet_NaN()))
                return done;
        }
        return k;
    }
};

inline Trajectory run(const Configuration &config, const Protocol &protocol, const RunSpec &spec,
                      RngStream &rng) {
    Simulation sim(protocol, config, rng, spec.method, spec.time_model, spec.switch_factor);
    return sim.record(spec.horizon, spec.snapshot_interval);
}

struct SampleOptions {
    Method method = Method::automatic;
    TimeModel time_model = TimeModel::continuous;
    double switch_factor = 2.0;
    unsigned threads = 1;
};

using EndpointHistogram = std::map<std::vector<Count>, std::uint64_t>;

namespace detail {

template <class Record>
void for_each_trial(std::uint64_t trials, unsigned threads, const Record &record) {
    if (trials == 0)
        throw Error(Errc::invalid_argument, "need at least one trial");
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::uint64_t>(trials, 256))));
    if (threads == 1) {
        for (std::uint64_t i = 0; i < trials; ++i)
            record(0u, i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::uint64_t i = w; i < trials; i += threads)
                    record(w, i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto &th : pool)
        th.join();
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace detail

/// Histogram of configurations at time t over independent runs; trial i uses
/// RngStream(derive_seed(seed, i)). The result does not depend on `threads`.
inline EndpointHistogram sample_endpoint(const Configuration &config, const Protocol &protocol, double t,
                                         std::uint64_t trials, std::uint64_t seed,
                                         const SampleOptions &options = {}) {
    const unsigned threads = std::max(1u, options.threads);
    std::vector<EndpointHistogram> partial(threads);
    detail::for_each_trial(trials, threads, [&](unsigned w, std::uint64_t i) {
        RngStream rng(derive_seed(seed, i));
        Simulation sim(protocol, config, rng, options.method, options.time_model, options.switch_factor);
        sim.advance_to(t);
        const auto counts = sim.configuration().counts();
        ++partial[w][std::vector<Count>(counts.begin(), counts.end())];
    });
    EndpointHistogram merged;
    for (const auto &h : partial)
        for (const auto &[key, count] : h)
            merged[key] += count;
    return merged;
}

/// Histogram of #state at time t.
inline std::map<Count, std::uint64_t> sample_endpoint_state(const Configuration &config, const Protocol &protocol,
                                                           double t, std::uint64_t trials, std::uint64_t seed,
                                                           StateId state, const SampleOptions &options = {}) {
    if (state >= protocol.size())
        throw Error(Errc::unknown_state, "state index out of range");
    std::map<Count, std::uint64_t> out;
    for (const auto &[key, count] : sample_endpoint(config, protocol, t, trials, seed, options))
        out[key[state]] += count;
    return out;
}

} // namespace popsim
