#pragma once

#include <cctype>
#include <cmath>
#include <charconv>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <popsim/core.hpp>
#include <popsim/error.hpp>

namespace popsim {

/// 1-based line, 1-based columns, end exclusive.
struct SourceSpan {
    std::size_t line = 0;
    std::size_t col_begin = 0;
    std::size_t col_end = 0;

    friend bool operator==(const SourceSpan &, const SourceSpan &) = default;
};

class ParseError : public Error {
public:
    ParseError(Errc code, const std::string &message, SourceSpan span, std::vector<std::string> expected = {})
        : Error(code, describe(message, span, expected)), span_(span), expected_(std::move(expected)) {}

    const SourceSpan &span() const noexcept { return span_; }
    const std::vector<std::string> &expected() const noexcept { return expected_; }

private:
    SourceSpan span_;
    std::vector<std::string> expected_;

    static std::string describe(const std::string &message, SourceSpan span,
                                const std::vector<std::string> &expected) {
        std::string out = "line " + std::to_string(span.line) + ", column " + std::to_string(span.col_begin) +
                          ": " + message;
        if (!expected.empty()) {
            out += " (expected ";
            for (std::size_t i = 0; i < expected.size(); ++i) {
                if (i > 0)
                    out += i + 1 == expected.size() ? " or " : ", ";
                out += expected[i];
            }
            out += ")";
        }
        return out;
    }
};

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

namespace detail {

struct SourceLine {
    std::size_t number = 0;
    std::string_view text;
};

inline std::vector<SourceLine> split_lines(std::string_view text) {
    std::vector<SourceLine> lines;
    std::size_t number = 1;
    while (!text.empty()) {
        const auto end = text.find('\n');
        auto line = text.substr(0, end);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        lines.push_back({number++, line});
        if (end == std::string_view::npos)
            break;
        text.remove_prefix(end + 1);
    }
    return lines;
}

class Cursor {
public:
    explicit Cursor(SourceLine line) : line_(line) {}

    std::size_t pos() const noexcept { return pos_; }
    std::size_t line() const noexcept { return line_.number; }

    void skip_space() {
        while (pos_ < line_.text.size() && (line_.text[pos_] == ' ' || line_.text[pos_] == '\t'))
            ++pos_;
    }

    /// End of line or the start of a trailing comment.
    bool at_end() {
        skip_space();
        return pos_ >= line_.text.size() || line_.text[pos_] == '#';
    }

    char peek() {
        skip_space();
        return pos_ < line_.text.size() ? line_.text[pos_] : '\0';
    }

    bool accept(std::string_view token) {
        skip_space();
        if (line_.text.substr(pos_).starts_with(token)) {
            pos_ += token.size();
            return true;
        }
        return false;
    }

    /// Identifier; `leading_digit` admits names such as 0 or 12.
    std::optional<std::string_view> name(bool leading_digit) {
        skip_space();
        const auto start = pos_;
        auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
        if (pos_ >= line_.text.size())
            return std::nullopt;
        const char first = line_.text[pos_];
        if (!(std::isalpha(static_cast<unsigned char>(first)) || first == '_' ||
              (leading_digit && std::isdigit(static_cast<unsigned char>(first)))))
            return std::nullopt;
        while (pos_ < line_.text.size() && word(line_.text[pos_]))
            ++pos_;
        return line_.text.substr(start, pos_ - start);
    }

    std::optional<double> number() {
        skip_space();
        const auto *begin = line_.text.data() + pos_;
        const auto *end = line_.text.data() + line_.text.size();
        double value = 0.0;
        const auto res = std::from_chars(begin, end, value, std::chars_format::general);
        if (res.ec != std::errc())
            return std::nullopt;
        pos_ += static_cast<std::size_t>(res.ptr - begin);
        return value;
    }

    SourceSpan here(std::size_t width = 1) const {
        const auto begin = std::min(pos_, line_.text.size());
        return {line_.number, begin + 1, begin + 1 + width};
    }

    SourceSpan from(std::size_t start) const {
        return {line_.number, start + 1, std::max(pos_, start + 1) + 1};
    }

    SourceSpan whole() const { return {line_.number, 1, std::max<std::size_t>(line_.text.size(), 1) + 1}; }

    /// Span of the token under the cursor, for error reports.
    SourceSpan token_span() {
        skip_space();
        auto end = pos_;
        while (end < line_.text.size() && line_.text[end] != ' ' && line_.text[end] != '\t')
            ++end;
        return {line_.number, pos_ + 1, std::max(end, pos_ + 1) + 1};
    }

    [[noreturn]] void fail(const std::string &message, std::vector<std::string> expected) {
        throw ParseError(Errc::syntax, message, token_span(), std::move(expected));
    }

private:
    SourceLine line_;
    std::size_t pos_ = 0;
};

inline bool blank_or_comment(std::string_view line) {
    for (char c : line) {
        if (c == '#')
            return true;
        if (c != ' ' && c != '\t')
            return false;
    }
    return true;
}

// side := term ('+' term)? ; term := ('2' '*'?)? species
inline std::vector<StateId> parse_side(Cursor &cur, StateTable &species) {
    std::vector<StateId> molecules;
    const auto start = cur.pos();
    while (true) {
        cur.skip_space();
        std::size_t copies = 1;
        if (std::isdigit(static_cast<unsigned char>(cur.peek()))) {
            if (!cur.accept("2"))
                cur.fail("coefficient must be 1 or 2", {"2", "species"});
            copies = 2;
            cur.accept("*");
        }
        const auto name = cur.name(false);
        if (!name)
            cur.fail("expected a species name", {"species"});
        const auto id = species.intern(*name);
        molecules.insert(molecules.end(), copies, id);
        if (!cur.accept("+"))
            break;
    }
    if (molecules.size() > 2)
        throw ParseError(Errc::arity_mismatch, "at most two molecules per side", cur.from(start));
    return molecules;
}

} // namespace detail

/// Line-oriented CRN text:
///   A + B -> 2U
///   A + U -> 2A @ 3
///   B + U <-> 2B @ 4, 5
inline Crn parse_crn(std::string_view text, double volume = 1.0) {
    StateTable species;
    std::vector<Reaction> reactions;
    for (const auto &line : detail::split_lines(text)) {
        if (detail::blank_or_comment(line.text))
            continue;
        detail::Cursor cur(line);
        const auto reactants = detail::parse_side(cur, species);
        bool reversible = false;
        if (cur.accept("<->"))
            reversible = true;
        else if (!cur.accept("->"))
            cur.fail("expected a reaction arrow", reactants.size() == 1
                                                      ? std::vector<std::string>{"+", "->", "<->"}
                                                      : std::vector<std::string>{"->", "<->"});
        const auto products = detail::parse_side(cur, species);

        double k = 1.0;
        std::optional<double> k_rev;
        if (cur.accept("@")) {
            const auto rate_at = cur.pos();
            const auto value = cur.number();
            if (!value)
                cur.fail("expected a rate constant", {"number"});
            k = *value;
            if (!(k > 0.0) || !std::isfinite(k))
                throw ParseError(Errc::non_positive_rate, "rate constants must be positive", cur.from(rate_at));
            const auto comma = cur.pos();
            if (cur.accept(",")) {
                if (!reversible)
                    throw ParseError(Errc::syntax, "reverse rate given for an irreversible reaction",
                                     {line.number, comma + 1, comma + 2}, {"end of line"});
                const auto rev_at = cur.pos();
                const auto rev = cur.number();
                if (!rev)
                    cur.fail("expected a reverse rate constant", {"number"});
                if (!(*rev > 0.0) || !std::isfinite(*rev))
                    throw ParseError(Errc::non_positive_rate, "rate constants must be positive",
                                     cur.from(rev_at));
                k_rev = *rev;
            }
        }
        if (!cur.at_end())
            cur.fail("unexpected text after reaction",
                     k_rev || !reversible ? std::vector<std::string>{"end of line"}
                                          : std::vector<std::string>{",", "end of line"});
        if (reversible && !k_rev)
            throw ParseError(Errc::missing_reverse_rate, "'<->' needs both rates, as in '@ k, k_rev'",
                             cur.whole(), {"@ k, k_rev"});
        if (reactants.size() != products.size())
            throw ParseError(Errc::arity_mismatch,
                             std::to_string(reactants.size()) + " reactant(s) but " +
                                 std::to_string(products.size()) + " product(s)",
                             cur.whole());

        Reaction r = reactants.size() == 1
                         ? Reaction::unimolecular(reactants[0], products[0], k)
                         : Reaction::bimolecular(reactants[0], reactants[1], products[0], products[1], k);
        if (k_rev)
            r = r.with_reverse(*k_rev);
        reactions.push_back(r);
    }
    return Crn(std::move(species), std::move(reactions), volume);
}

/// Protocol text:
///   A B -> C D        unordered, also defines (B, A) -> (D, C)
///   A B => C D : 0.5  ordered, with probability
/// Header comments `# states = ...`, `# m = ...`, `# n = ...`, `# v = ...`
/// fix the state order, time scale and compile origin.
inline Protocol parse_protocol(std::string_view text) {
    const auto lines = detail::split_lines(text);

    StateTable states;
    std::optional<double> m;
    std::optional<double> origin_n;
    std::optional<double> origin_v;
    for (const auto &line : lines) {
        detail::Cursor cur(line);
        if (!cur.accept("#"))
            continue;
        const auto key = cur.name(false);
        if (!key || !cur.accept("="))
            continue;
        if (*key == "states") {
            while (auto name = cur.name(true)) {
                if (states.find(*name))
                    throw ParseError(Errc::syntax, "state listed twice", cur.here(), {});
                states.intern(*name);
            }
            if (cur.peek() != '\0')
                cur.fail("invalid state name", {"state name"});
        } else if (*key == "m" || *key == "n" || *key == "v") {
            const auto at = cur.pos();
            const auto value = cur.number();
            if (!value || !(*value > 0.0) || !std::isfinite(*value))
                throw ParseError(Errc::syntax, "header value must be a positive number", cur.from(at), {"number"});
            (*key == "m" ? m : *key == "n" ? origin_n : origin_v) = *value;
        }
    }

    ProtocolBuilder builder(std::move(states));
    if (m)
        builder.set_time_scale(*m);
    if (origin_n && origin_v) {
        if (*origin_n != std::floor(*origin_n))
            throw ParseError(Errc::syntax, "header n must be an integer", {0, 0, 0});
        builder.set_origin({static_cast<Count>(*origin_n), *origin_v});
    }

    std::vector<SourceSpan> line_spans(lines.size() + 1);
    for (const auto &line : lines) {
        if (detail::blank_or_comment(line.text))
            continue;
        detail::Cursor cur(line);
        line_spans[line.number] = cur.whole();
        StateId ids[4];
        RuleOrder order = RuleOrder::unordered;
        for (int i = 0; i < 4; ++i) {
            if (i == 2) {
                if (cur.accept("=>"))
                    order = RuleOrder::ordered;
                else if (!cur.accept("->"))
                    cur.fail("expected a rule arrow", {"->", "=>"});
            }
            const auto name = cur.name(true);
            if (!name)
                cur.fail("expected a state name", {"state name"});
            ids[i] = builder.states().intern(*name);
        }
        double prob = 1.0;
        if (cur.accept(":")) {
            const auto at = cur.pos();
            const auto value = cur.number();
            if (!value)
                cur.fail("expected a probability", {"number"});
            if (!(*value > 0.0) || *value > 1.0)
                throw ParseError(Errc::invalid_probability, "probability must lie in (0, 1]", cur.from(at));
            prob = *value;
        }
        if (!cur.at_end())
            cur.fail("unexpected text after rule", {":", "end of line"});
        builder.add(ids[0], ids[1], ids[2], ids[3], prob, order, line.number);
    }
    try {
        return builder.build();
    } catch (const RuleError &e) {
        const std::string_view what = e.what();
        const auto colon = what.find(": ");
        throw ParseError(e.code(), std::string(colon == std::string_view::npos ? what : what.substr(colon + 2)),
                         line_spans.at(e.origin()));
    }
}

/// Ordered-rule text for `protocol`, one line per outcome. The header always
/// records the state order and m; compiled protocols also record n and v.
inline std::string emit_protocol(const Protocol &protocol) {
    std::string out = "# states =";
    for (const auto &name : protocol.states().names())
        out += " " + name;
    out += "\n# m = " + format_double(protocol.time_scale()) + "\n";
    if (const auto &origin = protocol.origin()) {
        out += "# n = " + std::to_string(origin->n) + "\n";
        out += "# v = " + format_double(origin->volume) + "\n";
    }
    const auto &st = protocol.states();
    for (const auto &rule : protocol.rules()) {
        for (const auto &o : rule.dist.entries) {
            out += st.name(rule.first) + " " + st.name(rule.second) + " => " + st.name(o.first) + " " +
                   st.name(o.second);
            if (o.prob != 1.0)
                out += " : " + format_double(o.prob);
            out += "\n";
        }
    }
    return out;
}

} // namespace popsim
