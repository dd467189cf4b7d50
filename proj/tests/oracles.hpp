// Test-only brute-force oracles. These deliberately avoid the library code
// paths they certify: ranks are computed by O(n^2) counting and the
// correlation by the raw product-moment formula in long double.

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace testing_oracles {

inline std::vector<long double> counting_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<long double> ranks(n, 0.0L);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (xs[j] < xs[i]) ++less;
            else if (xs[j] == xs[i]) ++equal;
        }
        ranks[i] = static_cast<long double>(less) + (static_cast<long double>(equal) + 1.0L) / 2.0L;
    }
    return ranks;
}

inline double spearman_bruteforce(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto rx = counting_ranks(xs);
    const auto ry = counting_ranks(ys);
    const long double n = static_cast<long double>(xs.size());
    long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += rx[i];
        sy += ry[i];
        sxx += rx[i] * rx[i];
        syy += ry[i] * ry[i];
        sxy += rx[i] * ry[i];
    }
    const long double num = n * sxy - sx * sy;
    const long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    return static_cast<double>(num / den);
}

}  // namespace testing_oracles
