#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <popsim/error.hpp>

namespace popsim {

/// Dense state index in 0..q-1.
using StateId = std::uint32_t;
/// Agent / molecule count. Signed so that deltas share the type.
using Count = std::int64_t;

enum class TimeModel { discrete, continuous };

constexpr std::string_view to_string(TimeModel model) noexcept {
    return model == TimeModel::discrete ? "discrete" : "continuous";
}

/// Probability tolerance applied when a distribution is stored.
inline constexpr double kProbabilityTolerance = 0x1.0p-40;

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// Bijection between display names and dense ids.
class StateTable {
public:
    StateTable() = default;

    explicit StateTable(const std::vector<std::string> &names) {
        for (const auto &name : names) {
            if (find(name))
                throw Error(Errc::invalid_argument, "duplicate state name '" + name + "'");
            intern(name);
        }
    }

    /// Returns the id of `name`, adding it if it is new.
    StateId intern(std::string_view name) {
        std::string key(name);
        if (auto it = index_.find(key); it != index_.end())
            return it->second;
        const auto id = static_cast<StateId>(names_.size());
        names_.push_back(key);
        index_.emplace(std::move(key), id);
        return id;
    }

    std::optional<StateId> find(std::string_view name) const {
        if (auto it = index_.find(std::string(name)); it != index_.end())
            return it->second;
        return std::nullopt;
    }

    StateId at(std::string_view name) const {
        if (auto id = find(name))
            return *id;
        throw Error(Errc::unknown_state, "no state named '" + std::string(name) + "'");
    }

    const std::string &name(StateId id) const { return names_.at(id); }
    const std::vector<std::string> &names() const noexcept { return names_; }
    std::size_t size() const noexcept { return names_.size(); }

    friend bool operator==(const StateTable &a, const StateTable &b) { return a.names_ == b.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, StateId> index_;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Count vector indexed by StateId. The population size is fixed at
/// construction; every mutator preserves it.
class Configuration {
public:
    Configuration() = default;

    explicit Configuration(std::vector<Count> counts) : counts_(std::move(counts)) {
        for (auto c : counts_) {
            if (c < 0)
                throw Error(Errc::invalid_argument, "negative count in configuration");
            n_ += c;
        }
    }

    Count population() const noexcept { return n_; }
    std::size_t size() const noexcept { return counts_.size(); }
    Count operator[](StateId s) const { return counts_[s]; }
    std::span<const Count> counts() const noexcept { return counts_; }

    /// Replaces the input pair (a, b) by the output pair (c, d).
    void apply(StateId a, StateId b, StateId c, StateId d) noexcept {
        --counts_[a];
        --counts_[b];
        ++counts_[c];
        ++counts_[d];
    }

    /// Overwrites all counts; the new vector must describe the same population.
    void assign(std::span<const Count> counts) {
        if (counts.size() != counts_.size())
            throw Error(Errc::invalid_argument, "configuration size mismatch");
        Count total = 0;
        for (auto c : counts) {
            if (c < 0)
                throw Error(Errc::invalid_argument, "negative count in configuration");
            total += c;
        }
        if (total != n_)
            throw Error(Errc::invalid_argument, "population size changed");
        std::copy(counts.begin(), counts.end(), counts_.begin());
    }

    friend bool operator==(const Configuration &a, const Configuration &b) {
        return a.counts_ == b.counts_;
    }

private:
    std::vector<Count> counts_;
    Count n_ = 0;
};

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

struct Outcome {
    StateId first = 0;
    StateId second = 0;
    double prob = 0.0;

    friend bool operator==(const Outcome &, const Outcome &) = default;
};

/// Randomized output of one ordered input pair. Null is stored as the
/// residual probability, never as an explicit self-loop entry.
struct OutputDistribution {
    std::vector<Outcome> entries;
    double null_prob = 1.0;

    double nonnull_prob() const noexcept { return 1.0 - null_prob; }
    bool deterministic() const noexcept { return entries.size() == 1 && null_prob == 0.0; }
};

/// (n, v) recorded on protocols produced by the CRN compiler.
struct CompileOrigin {
    Count n = 0;
    double volume = 0.0;

    friend bool operator==(const CompileOrigin &, const CompileOrigin &) = default;
};

class Protocol {
public:
    struct Rule {
        StateId first = 0;
        StateId second = 0;
        OutputDistribution dist;
    };

    struct Edge {
        StateId other = 0;
        double weight = 0.0;
    };

    Protocol() = default;

    /// Validates and normalizes `rules`. Outcomes equal to their input are
    /// folded into the null mass, repeated outcomes are merged, rules that end
    /// up entirely null are dropped.
    Protocol(StateTable states, std::vector<Rule> rules, double time_scale = 1.0,
             std::optional<CompileOrigin> origin = std::nullopt)
        : states_(std::move(states)), time_scale_(time_scale), origin_(origin) {
        if (!(time_scale_ > 0.0) || !std::isfinite(time_scale_))
            throw Error(Errc::invalid_argument, "time scale must be positive and finite");
        const auto q = states_.size();
        for (auto &rule : rules) {
            if (rule.first >= q || rule.second >= q)
                throw Error(Errc::invalid_argument, "rule input references unknown state");
            normalize(rule);
            if (!rule.dist.entries.empty())
                rules_.push_back(std::move(rule));
        }
        std::sort(rules_.begin(), rules_.end(), [](const Rule &x, const Rule &y) {
            return std::pair(x.first, x.second) < std::pair(y.first, y.second);
        });
        for (std::size_t i = 1; i < rules_.size(); ++i) {
            if (rules_[i].first == rules_[i - 1].first && rules_[i].second == rules_[i - 1].second)
                throw Error(Errc::conflicting_ordered_rules,
                            "two rules for ordered pair (" + states_.name(rules_[i].first) + ", " +
                                states_.name(rules_[i].second) + ")");
        }
        build_index();
    }

    const StateTable &states() const noexcept { return states_; }
    std::size_t size() const noexcept { return states_.size(); }
    double time_scale() const noexcept { return time_scale_; }
    const std::optional<CompileOrigin> &origin() const noexcept { return origin_; }
    std::span<const Rule> rules() const noexcept { return rules_; }

    /// nullptr when the ordered pair is entirely null.
    const OutputDistribution *find(StateId a, StateId b) const {
        const auto idx = rule_index(a, b);
        return idx < 0 ? nullptr : &rules_[static_cast<std::size_t>(idx)].dist;
    }

    /// Non-null probability of the ordered pair (a, b).
    double weight(StateId a, StateId b) const {
        const auto *dist = find(a, b);
        return dist ? dist->nonnull_prob() : 0.0;
    }

    /// Non-null pairs (a, ·) with their weights.
    std::span<const Edge> row(StateId a) const { return rows_[a]; }
    /// Non-null pairs (·, b) with their weights.
    std::span<const Edge> column(StateId b) const { return columns_[b]; }

    /// Smallest positive pair weight, 1 for an all-null protocol.
    double min_weight() const noexcept { return min_weight_; }

    friend bool operator==(const Protocol &a, const Protocol &b) {
        if (!(a.states_ == b.states_) || a.origin_ != b.origin_ || a.rules_.size() != b.rules_.size())
            return false;
        if (std::abs(a.time_scale_ - b.time_scale_) > 1e-15 * a.time_scale_)
            return false;
        for (std::size_t i = 0; i < a.rules_.size(); ++i) {
            const auto &x = a.rules_[i];
            const auto &y = b.rules_[i];
            if (x.first != y.first || x.second != y.second || !same_distribution(x.dist, y.dist))
                return false;
        }
        return true;
    }

    /// Outcome multisets equal up to 1e-15 absolute probability difference.
    static bool same_distribution(const OutputDistribution &x, const OutputDistribution &y,
                                  double tol = 1e-15) {
        if (x.entries.size() != y.entries.size())
            return false;
        auto key = [](const Outcome &o) { return std::pair(o.first, o.second); };
        auto xs = x.entries;
        auto ys = y.entries;
        auto by_key = [&](const Outcome &l, const Outcome &r) { return key(l) < key(r); };
        std::sort(xs.begin(), xs.end(), by_key);
        std::sort(ys.begin(), ys.end(), by_key);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (key(xs[i]) != key(ys[i]) || std::abs(xs[i].prob - ys[i].prob) > tol)
                return false;
        }
        return std::abs(x.null_prob - y.null_prob) <= tol;
    }

private:
    static constexpr std::size_t kDenseLimit = 1024;

    StateTable states_;
    std::vector<Rule> rules_;
    double time_scale_ = 1.0;
    std::optional<CompileOrigin> origin_;
    std::vector<std::int32_t> dense_;
    std::unordered_map<std::uint64_t, std::int32_t> sparse_;
    std::vector<std::vector<Edge>> rows_;
    std::vector<std::vector<Edge>> columns_;
    double min_weight_ = 1.0;

    static std::uint64_t pair_key(StateId a, StateId b) noexcept {
        return (static_cast<std::uint64_t>(a) << 32) | b;
    }

    std::int64_t rule_index(StateId a, StateId b) const {
        const auto q = states_.size();
        if (q <= kDenseLimit)
            return dense_[static_cast<std::size_t>(a) * q + b];
        auto it = sparse_.find(pair_key(a, b));
        return it == sparse_.end() ? -1 : it->second;
    }

    void normalize(Rule &rule) const {
        const auto q = states_.size();
        std::vector<Outcome> merged;
        for (const auto &o : rule.dist.entries) {
            if (o.first >= q || o.second >= q)
                throw Error(Errc::invalid_argument, "rule output references unknown state");
            if (!(o.prob > 0.0) || o.prob > 1.0 + kProbabilityTolerance)
                throw Error(Errc::invalid_probability, "outcome probability outside (0, 1]");
            if (o.first == rule.first && o.second == rule.second)
                continue;
            auto it = std::find_if(merged.begin(), merged.end(), [&](const Outcome &m) {
                return m.first == o.first && m.second == o.second;
            });
            if (it == merged.end())
                merged.push_back(o);
            else
                it->prob += o.prob;
        }
        // Sum including identity outcomes: they are null mass, not missing mass.
        double total = 0.0;
        for (const auto &o : rule.dist.entries)
            total += o.prob;
        if (total > 1.0 + kProbabilityTolerance)
            throw Error(Errc::probability_overflow,
                        "outcome probabilities for (" + states_.name(rule.first) + ", " +
                            states_.name(rule.second) + ") sum to more than 1");
        double nonnull = 0.0;
        for (const auto &o : merged)
            nonnull += o.prob;
        rule.dist.entries = std::move(merged);
        rule.dist.null_prob = std::max(0.0, 1.0 - nonnull);
    }

    void build_index() {
        const auto q = states_.size();
        rows_.assign(q, {});
        columns_.assign(q, {});
        if (q <= kDenseLimit)
            dense_.assign(q * q, -1);
        min_weight_ = 1.0;
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            const auto &rule = rules_[i];
            if (q <= kDenseLimit)
                dense_[static_cast<std::size_t>(rule.first) * q + rule.second] =
                    static_cast<std::int32_t>(i);
            else
                sparse_.emplace(pair_key(rule.first, rule.second), static_cast<std::int32_t>(i));
            const double w = rule.dist.nonnull_prob();
            rows_[rule.first].push_back({rule.second, w});
            columns_[rule.second].push_back({rule.first, w});
            min_weight_ = std::min(min_weight_, w);
        }
    }
};

/// FNV-1a over the canonical content of a protocol, as 16 hex digits.
inline std::string protocol_fingerprint(const Protocol &protocol) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&](const void *data, std::size_t len) {
        const auto *p = static_cast<const unsigned char *>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    auto mix_u64 = [&](std::uint64_t v) { mix_bytes(&v, sizeof v); };
    auto mix_double = [&](double v) {
        std::uint64_t bits;
        static_assert(sizeof bits == sizeof v);
        std::memcpy(&bits, &v, sizeof v);
        mix_u64(bits);
    };
    for (const auto &name : protocol.states().names()) {
        mix_bytes(name.data(), name.size());
        mix_u64(0xff);
    }
    mix_double(protocol.time_scale());
    for (const auto &rule : protocol.rules()) {
        mix_u64((static_cast<std::uint64_t>(rule.first) << 32) | rule.second);
        for (const auto &o : rule.dist.entries) {
            mix_u64((static_cast<std::uint64_t>(o.first) << 32) | o.second);
            mix_double(o.prob);
        }
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

enum class RuleOrder { ordered, unordered };

/// Raised by ProtocolBuilder::build; `origin` is the caller-supplied tag of
/// the offending rule (the DSL passes line numbers).
class RuleError : public Error {
public:
    RuleError(Errc code, const std::string &message, std::size_t origin)
        : Error(code, message), origin_(origin) {}
    std::size_t origin() const noexcept { return origin_; }

private:
    std::size_t origin_;
};

/// Accumulates ordered and unordered rules and resolves them into ordered
/// pairs. An unordered rule on (a, b) also defines (b, a) with swapped outputs.
/// When two sources define the same ordered pair they must agree.
class ProtocolBuilder {
public:
    /// Slack allowed on the outcome sum of one written left side.
    static constexpr double kSumSlack = 0x1.0p-20;

    ProtocolBuilder() = default;
    explicit ProtocolBuilder(StateTable states) : states_(std::move(states)) {}

    StateTable &states() noexcept { return states_; }

    void set_time_scale(double m) { time_scale_ = m; }
    void set_origin(CompileOrigin origin) { origin_ = origin; }

    void add(StateId a, StateId b, StateId c, StateId d, double prob, RuleOrder order,
             std::size_t origin = 0) {
        const Key key{a, b, order};
        auto [it, inserted] = group_index_.emplace(key, groups_.size());
        if (inserted)
            groups_.push_back(Group{key, {}, 0.0, origin});
        auto &group = groups_[it->second];
        group.last_origin = origin;
        group.sum += prob;
        auto entry = std::find_if(group.entries.begin(), group.entries.end(),
                                  [&](const Outcome &o) { return o.first == c && o.second == d; });
        if (entry == group.entries.end())
            group.entries.push_back({c, d, prob});
        else
            entry->prob += prob;
    }

    Protocol build() const {
        struct Resolved {
            OutputDistribution dist;
            std::size_t origin;
        };
        std::map<std::pair<StateId, StateId>, Resolved> resolved;
        auto define = [&](StateId a, StateId b, const OutputDistribution &dist, std::size_t origin) {
            auto [it, inserted] = resolved.emplace(std::pair(a, b), Resolved{dist, origin});
            if (!inserted && !Protocol::same_distribution(it->second.dist, dist, 1e-12))
                throw RuleError(Errc::conflicting_ordered_rules,
                                "conflicting rules for ordered pair (" + states_.name(a) + ", " +
                                    states_.name(b) + ")",
                                origin);
        };
        for (const auto &group : groups_) {
            if (group.sum > 1.0 + kSumSlack)
                throw RuleError(Errc::probability_overflow,
                                "probabilities for (" + states_.name(group.key.a) + ", " +
                                    states_.name(group.key.b) + ") sum to " +
                                    std::to_string(group.sum),
                                group.last_origin);
            OutputDistribution dist;
            dist.entries = group.entries;
            if (group.sum > 1.0 + kProbabilityTolerance) {
                for (auto &o : dist.entries)
                    o.prob /= group.sum;
            }
            dist.null_prob = std::max(0.0, 1.0 - std::min(group.sum, 1.0));
            define(group.key.a, group.key.b, dist, group.last_origin);
            if (group.key.order == RuleOrder::unordered && group.key.a != group.key.b) {
                OutputDistribution mirror = dist;
                for (auto &o : mirror.entries)
                    std::swap(o.first, o.second);
                define(group.key.b, group.key.a, mirror, group.last_origin);
            }
        }
        std::vector<Protocol::Rule> rules;
        rules.reserve(resolved.size());
        for (auto &[pair, res] : resolved)
            rules.push_back({pair.first, pair.second, res.dist});
        return Protocol(states_, std::move(rules), time_scale_, origin_);
    }

private:
    struct Key {
        StateId a;
        StateId b;
        RuleOrder order;
        friend auto operator<=>(const Key &, const Key &) = default;
    };
    struct Group {
        Key key;
        std::vector<Outcome> entries;
        double sum;
        std::size_t last_origin;
    };

    StateTable states_;
    std::vector<Group> groups_;
    std::map<Key, std::size_t> group_index_;
    double time_scale_ = 1.0;
    std::optional<CompileOrigin> origin_;
};

// ---------------------------------------------------------------------------
// State enumeration for programmatic transition functions
// ---------------------------------------------------------------------------

using TransitionFn =
    std::function<std::pair<std::string, std::string>(const std::string &, const std::string &)>;

struct EnumerateOptions {
    std::size_t state_cap = 1'000'000;
    /// Treat the callback as unordered: a non-null output on (a, b) also
    /// defines (b, a) with the outputs swapped.
    bool symmetric = false;
};

/// Builds the protocol over the closure of `initial` under `fn`. The callback
/// is evaluated twice per ordered pair to catch nondeterminism.
inline Protocol enumerate_states(std::span<const std::string> initial, const TransitionFn &fn,
                                 const EnumerateOptions &options = {}) {
    ProtocolBuilder builder;
    auto &table = builder.states();
    auto intern = [&](const std::string &name) {
        const auto before = table.size();
        const auto id = table.intern(name);
        if (table.size() > before && table.size() > options.state_cap)
            throw Error(Errc::state_cap_exceeded,
                        "state closure exceeds cap of " + std::to_string(options.state_cap));
        return id;
    };
    for (const auto &name : initial)
        intern(name);

    const auto order = options.symmetric ? RuleOrder::unordered : RuleOrder::ordered;
    auto process = [&](StateId a, StateId b) {
        const std::string name_a = table.name(a);
        const std::string name_b = table.name(b);
        auto out = fn(name_a, name_b);
        if (fn(name_a, name_b) != out)
            throw Error(Errc::nondeterministic_callback,
                        "transition function disagrees with itself on (" + name_a + ", " + name_b +
                            ")");
        const auto c = intern(out.first);
        const auto d = intern(out.second);
        if (c != a || d != b)
            builder.add(a, b, c, d, 1.0, order);
    };

    for (StateId i = 0; i < table.size(); ++i) {
        for (StateId j = 0; j <= i; ++j) {
            process(i, j);
            if (j != i)
                process(j, i);
        }
    }
    return builder.build();
}

// ---------------------------------------------------------------------------
// Chemical reaction networks
// ---------------------------------------------------------------------------

/// Unimolecular (arity 1) or bimolecular (arity 2) reaction with equal
/// reactant and product arity.
struct Reaction {
    std::array<StateId, 2> reactants{};
    std::array<StateId, 2> products{};
    std::uint8_t arity = 1;
    double rate = 1.0;
    std::optional<double> reverse_rate;

    bool reversible() const noexcept { return reverse_rate.has_value(); }

    static Reaction unimolecular(StateId from, StateId to, double k) {
        return Reaction{{from, 0}, {to, 0}, 1, k, std::nullopt};
    }
    static Reaction bimolecular(StateId a, StateId b, StateId c, StateId d, double k) {
        return Reaction{{a, b}, {c, d}, 2, k, std::nullopt};
    }

    Reaction with_reverse(double k_rev) const {
        auto r = *this;
        r.reverse_rate = k_rev;
        return r;
    }

    friend bool operator==(const Reaction &, const Reaction &) = default;
};

class Crn {
public:
    Crn() = default;

    Crn(StateTable species, std::vector<Reaction> reactions, double volume = 1.0)
        : species_(std::move(species)), reactions_(std::move(reactions)), volume_(volume) {
        if (!(volume_ > 0.0) || !std::isfinite(volume_))
            throw Error(Errc::invalid_argument, "volume must be positive and finite");
        for (const auto &r : reactions_) {
            if (r.arity != 1 && r.arity != 2)
                throw Error(Errc::arity_mismatch, "reactions must be unimolecular or bimolecular");
            for (std::uint8_t i = 0; i < r.arity; ++i) {
                if (r.reactants[i] >= species_.size() || r.products[i] >= species_.size())
                    throw Error(Errc::unknown_state, "reaction references unknown species");
            }
            if (!(r.rate > 0.0) || !std::isfinite(r.rate) ||
                (r.reverse_rate && (!(*r.reverse_rate > 0.0) || !std::isfinite(*r.reverse_rate))))
                throw Error(Errc::non_positive_rate, "rate constants must be positive");
        }
    }

    const StateTable &species() const noexcept { return species_; }
    std::span<const Reaction> reactions() const noexcept { return reactions_; }
    double volume() const noexcept { return volume_; }

    Crn with_volume(double v) const { return Crn(species_, reactions_, v); }

private:
    StateTable species_;
    std::vector<Reaction> reactions_;
    double volume_ = 1.0;
};

// ---------------------------------------------------------------------------
// Initial configurations
// ---------------------------------------------------------------------------

using InitialCounts = std::vector<std::pair<std::string, Count>>;

inline Configuration make_configuration(const InitialCounts &init, const StateTable &states) {
    std::vector<Count> counts(states.size(), 0);
    std::vector<bool> seen(states.size(), false);
    for (const auto &[name, count] : init) {
        const auto id = states.at(name);
        if (seen[id])
            throw Error(Errc::invalid_argument, "state '" + name + "' listed twice");
        if (count < 0)
            throw Error(Errc::invalid_argument, "negative count for '" + name + "'");
        seen[id] = true;
        counts[id] = count;
    }
    Configuration config(std::move(counts));
    if (config.population() == 0)
        throw Error(Errc::empty_population, "initial configuration has no agents");
    if (config.population() < 2)
        throw Error(Errc::population_too_small, "pairwise interactions need at least 2 agents");
    return config;
}

inline Configuration make_configuration(const InitialCounts &init, const Protocol &protocol) {
    return make_configuration(init, protocol.states());
}

inline Configuration make_configuration(const InitialCounts &init, const Crn &crn) {
    return make_configuration(init, crn.species());
}

} // namespace popsim
