#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <popsim/core.hpp>
#include <popsim/scheduler.hpp>

namespace popsim {

/// State ids ordered by name.
inline std::vector<StateId> name_order(const std::vector<std::string> &names) {
    std::vector<StateId> order(names.size());
    std::iota(order.begin(), order.end(), StateId{0});
    std::sort(order.begin(), order.end(), [&](StateId a, StateId b) { return names[a] < names[b]; });
    return order;
}

inline std::string format_time(double t) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", t);
    return buf;
}

/// `time,<states in name order>` followed by one row per snapshot.
inline void write_csv(std::ostream &out, const Trajectory &traj) {
    const auto order = name_order(traj.states);
    out << "time";
    for (auto s : order)
        out << ',' << traj.states[s];
    out << '\n';
    for (const auto &snap : traj.snapshots) {
        out << format_time(snap.time);
        for (auto s : order)
            out << ',' << snap.counts[s];
        out << '\n';
    }
}

inline nlohmann::ordered_json to_json(const Trajectory &traj) {
    const auto order = name_order(traj.states);
    const auto &meta = traj.metadata;
    nlohmann::ordered_json m;
    m["seed"] = meta.seed;
    m["n"] = meta.n;
    m["method"] = std::string(to_string(meta.method));
    m["time_model"] = std::string(to_string(meta.time_model));
    m["time_scale"] = meta.time_scale;
    m["time_unit"] = meta.time_unit;
    m["protocol_hash"] = meta.protocol_hash;
    m["silent"] = meta.silent;
    m["silent_time"] = meta.silent_time ? nlohmann::ordered_json(*meta.silent_time) : nlohmann::ordered_json();
    m["batches"] = meta.stats.batches;
    m["gillespie_events"] = meta.stats.gillespie_events;
    m["sequential_steps"] = meta.stats.sequential_steps;
    m["interactions"] = meta.stats.interactions;
    m["nonnull_interactions"] = meta.stats.nonnull;

    nlohmann::ordered_json states = nlohmann::ordered_json::array();
    for (auto s : order)
        states.push_back(traj.states[s]);

    nlohmann::ordered_json snaps = nlohmann::ordered_json::array();
    for (const auto &snap : traj.snapshots) {
        nlohmann::ordered_json counts = nlohmann::ordered_json::array();
        for (auto s : order)
            counts.push_back(snap.counts[s]);
        snaps.push_back({{"time", snap.time}, {"counts", std::move(counts)}});
    }

    nlohmann::ordered_json doc;
    doc["metadata"] = std::move(m);
    doc["states"] = std::move(states);
    doc["snapshots"] = std::move(snaps);
    return doc;
}

/// `value,count` rows in increasing value order.
inline void write_histogram_csv(std::ostream &out, const std::map<Count, std::uint64_t> &hist) {
    out << "value,count\n";
    for (const auto &[value, count] : hist)
        out << value << ',' << count << '\n';
}

/// Full-configuration histogram with counts listed in name order.
inline nlohmann::ordered_json histogram_to_json(const std::vector<std::string> &names, const EndpointHistogram &hist,
                                                double at, std::uint64_t seed) {
    const auto order = name_order(names);
    nlohmann::ordered_json doc;
    doc["at"] = at;
    doc["seed"] = seed;
    nlohmann::ordered_json states = nlohmann::ordered_json::array();
    for (auto s : order)
        states.push_back(names[s]);
    doc["states"] = std::move(states);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto &[config, count] : hist) {
        nlohmann::ordered_json counts = nlohmann::ordered_json::array();
        for (auto s : order)
            counts.push_back(config[s]);
        rows.push_back({{"counts", std::move(counts)}, {"count", count}});
    }
    doc["histogram"] = std::move(rows);
    return doc;
}

} // namespace popsim
