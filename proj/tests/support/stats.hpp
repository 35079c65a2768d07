#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace popsim::testing {

struct ChiSquare {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

inline double chi_square_sf(double x, int dof) {
    if (dof <= 0)
        return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), x));
}

/// Two-sample chi-square homogeneity test on histograms keyed by outcome.
/// Bins whose combined count is below `min_bin` are pooled together.
template <class Key>
ChiSquare chi_square_two_sample(const std::map<Key, std::uint64_t> &a, const std::map<Key, std::uint64_t> &b,
                                double min_bin = 20.0) {
    double na = 0.0;
    double nb = 0.0;
    std::map<Key, std::pair<double, double>> joint;
    for (const auto &[k, c] : a) {
        joint[k].first += static_cast<double>(c);
        na += static_cast<double>(c);
    }
    for (const auto &[k, c] : b) {
        joint[k].second += static_cast<double>(c);
        nb += static_cast<double>(c);
    }
    std::vector<std::pair<double, double>> bins;
    std::pair<double, double> pooled{0.0, 0.0};
    for (const auto &[k, v] : joint) {
        if (v.first + v.second < min_bin) {
            pooled.first += v.first;
            pooled.second += v.second;
        } else {
            bins.push_back(v);
        }
    }
    if (pooled.first + pooled.second > 0.0) {
        if (pooled.first + pooled.second >= min_bin || bins.empty()) {
            bins.push_back(pooled);
        } else {
            auto smallest = std::min_element(bins.begin(), bins.end(), [](const auto &x, const auto &y) {
                return x.first + x.second < y.first + y.second;
            });
            smallest->first += pooled.first;
            smallest->second += pooled.second;
        }
    }
    ChiSquare out;
    const double ka = std::sqrt(nb / na);
    const double kb = std::sqrt(na / nb);
    for (const auto &[x, y] : bins) {
        const double d = ka * x - kb * y;
        out.statistic += d * d / (x + y);
    }
    out.dof = static_cast<int>(bins.size()) - 1;
    out.p_value = chi_square_sf(out.statistic, out.dof);
    return out;
}

/// Goodness of fit of observed counts against probabilities `pmf`; cells with
/// expected count below `min_expected` are pooled.
template <class Key>
ChiSquare chi_square_one_sample(const std::map<Key, std::uint64_t> &observed, const std::map<Key, double> &pmf,
                                double min_expected = 5.0) {
    double total = 0.0;
    for (const auto &[k, c] : observed)
        total += static_cast<double>(c);
    std::map<Key, std::pair<double, double>> cells; // observed, expected
    for (const auto &[k, p] : pmf)
        cells[k].second += p * total;
    for (const auto &[k, c] : observed)
        cells[k].first += static_cast<double>(c);
    std::vector<std::pair<double, double>> bins;
    std::pair<double, double> pooled{0.0, 0.0};
    for (const auto &[k, v] : cells) {
        if (v.second < min_expected) {
            pooled.first += v.first;
            pooled.second += v.second;
        } else {
            bins.push_back(v);
        }
    }
    if (pooled.second > 0.0 || pooled.first > 0.0) {
        if (pooled.second >= min_expected || bins.empty()) {
            bins.push_back(pooled);
        } else {
            auto smallest = std::min_element(bins.begin(), bins.end(),
                                             [](const auto &x, const auto &y) { return x.second < y.second; });
            smallest->first += pooled.first;
            smallest->second += pooled.second;
        }
    }
    ChiSquare out;
    for (const auto &[o, e] : bins) {
        if (e <= 0.0) {
            out.statistic = o > 0.0 ? INFINITY : out.statistic;
            continue;
        }
        out.statistic += (o - e) * (o - e) / e;
    }
    out.dof = static_cast<int>(bins.size()) - 1;
    out.p_value = chi_square_sf(out.statistic, out.dof);
    return out;
}

/// sup |F_a - F_b| for two samples.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x)
            ++i;
        while (j < b.size() && b[j] == x)
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

/// sup |F_emp - F| for an integer-valued sample against a discrete CDF.
inline double ks_discrete(const std::map<std::int64_t, std::uint64_t> &hist,
                          const std::function<double(std::int64_t)> &cdf, std::int64_t lo, std::int64_t hi) {
    double total = 0.0;
    for (const auto &[k, c] : hist)
        total += static_cast<double>(c);
    double acc = 0.0;
    double d = 0.0;
    auto it = hist.begin();
    for (std::int64_t x = lo; x <= hi; ++x) {
        while (it != hist.end() && it->first <= x) {
            acc += static_cast<double>(it->second);
            ++it;
        }
        d = std::max(d, std::abs(acc / total - cdf(x)));
    }
    return d;
}

/// Total variation distance between an empirical histogram and a pmf.
template <class Key>
double total_variation(const std::map<Key, std::uint64_t> &observed, const std::map<Key, double> &pmf) {
    double total = 0.0;
    for (const auto &[k, c] : observed)
        total += static_cast<double>(c);
    std::map<Key, double> diff = pmf;
    for (const auto &[k, c] : observed)
        diff[k] -= static_cast<double>(c) / total;
    double tv = 0.0;
    for (const auto &[k, v] : diff)
        tv += std::abs(v);
    return 0.5 * tv;
}

} // namespace popsim::testing
