#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace popsim {

enum class Errc {
    invalid_argument,
    unknown_state,
    empty_population,
    population_too_small,
    state_cap_exceeded,
    nondeterministic_callback,
    non_positive_rate,
    invalid_probability,
    draws_exceed_population,
    empty_transition_set,
    no_applicable_interaction,
    negative_horizon,
    unsupported_time_model,
    syntax,
    arity_mismatch,
    missing_reverse_rate,
    probability_overflow,
    conflicting_ordered_rules,
};

constexpr std::string_view errc_name(Errc code) noexcept {
    switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::unknown_state: return "UnknownState";
    case Errc::empty_population: return "EmptyPopulation";
    case Errc::population_too_small: return "PopulationTooSmall";
    case Errc::state_cap_exceeded: return "StateCapExceeded";
    case Errc::nondeterministic_callback: return "NonDeterministicCallback";
    case Errc::non_positive_rate: return "NonPositiveRate";
    case Errc::invalid_probability: return "InvalidProbability";
    case Errc::draws_exceed_population: return "DrawsExceedPopulation";
    case Errc::empty_transition_set: return "EmptyTransitionSet";
    case Errc::no_applicable_interaction: return "NoApplicableInteraction";
    case Errc::negative_horizon: return "NegativeHorizon";
    case Errc::unsupported_time_model: return "UnsupportedTimeModel";
    case Errc::syntax: return "SyntaxError";
    case Errc::arity_mismatch: return "ArityMismatch";
    case Errc::missing_reverse_rate: return "MissingReverseRate";
    case Errc::probability_overflow: return "ProbabilityOverflow";
    case Errc::conflicting_ordered_rules: return "ConflictingOrderedRules";
    }
    return "Error";
}

/// Every failure raised by the library. The code identifies the failure
/// class; the message carries the human-readable context.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string &message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace popsim
