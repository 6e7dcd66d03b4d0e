#include "postdae/error.hpp"
#include "postdae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace postdae::metrics {

namespace {

struct RankedDifferences {
    std::vector<int> doubled_ranks; // 2 * mid-rank, always an integer
    std::vector<bool> positive;
    double tie_term = 0.0;          // sum over tie groups of t^3 - t
};

RankedDifferences rank_differences(std::span<const double> x, std::span<const double> y)
{
    std::vector<double> diffs;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        if (d != 0.0) {
            diffs.push_back(d);
        }
    }
    const std::size_t n = diffs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });

    RankedDifferences out;
    out.doubled_ranks.resize(n);
    out.positive.resize(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) {
            ++j;
        }
        // ranks i+1 .. j+1 share their mean; doubled that is (i+1)+(j+1)
        const int doubled = static_cast<int>(i + j + 2);
        for (std::size_t k = i; k <= j; ++k) {
            out.doubled_ranks[order[k]] = doubled;
        }
        const double t = static_cast<double>(j - i + 1);
        out.tie_term += t * t * t - t;
        i = j + 1;
    }
    for (std::size_t k = 0; k < n; ++k) {
        out.positive[k] = diffs[k] > 0.0;
    }
    return out;
}

} // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) {
        throw ContractError("wilcoxon_signed_rank: samples differ in length");
    }
    const auto ranked = rank_differences(x, y);
    const int n = static_cast<int>(ranked.doubled_ranks.size());
    if (n < 5) {
        throw InsufficientDataError("wilcoxon_signed_rank: only " + std::to_string(n) +
                                    " nonzero differences (need at least 5)");
    }

    int observed = 0; // doubled W+
    for (int i = 0; i < n; ++i) {
        if (ranked.positive[i]) {
            observed += ranked.doubled_ranks[i];
        }
    }

    WilcoxonResult result;
    result.n = n;
    result.statistic = observed / 2.0;

    if (n <= kWilcoxonExactLimit) {
        // Null distribution of the doubled signed-rank sum: each rank joins W+
        // with probability 1/2 independently.
        const int total = std::accumulate(ranked.doubled_ranks.begin(), ranked.doubled_ranks.end(), 0);
        std::vector<std::uint64_t> ways(static_cast<std::size_t>(total) + 1, 0);
        ways[0] = 1;
        int reach = 0;
        for (int r : ranked.doubled_ranks) {
            reach += r;
            for (int s = reach; s >= r; --s) {
                ways[s] += ways[s - r];
            }
        }
        std::uint64_t lower = 0;
        std::uint64_t upper = 0;
        for (int s = 0; s <= total; ++s) {
            if (s <= observed) {
                lower += ways[s];
            }
            if (s >= observed) {
                upper += ways[s];
            }
        }
        const double denom = std::ldexp(1.0, n);
        const double tail = static_cast<double>(std::min(lower, upper)) / denom;
        result.p_value = std::min(1.0, 2.0 * tail);
        result.exact = true;
        return result;
    }

    const double nn = n;
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - ranked.tie_term / 48.0;
    if (var <= 0.0) {
        result.p_value = 1.0;
        return result;
    }
    const double dev = std::abs(result.statistic - mean);
    const double z = std::max(0.0, dev - 0.5) / std::sqrt(var);
    result.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return result;
}

} // namespace postdae::metrics
