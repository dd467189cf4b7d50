// Rank statistics used by the evaluation harness.

#pragma once

#include <span>
#include <vector>

namespace swapnas::eval {

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> xs);

// Spearman rank correlation with average ranks for ties. Throws
// std::invalid_argument on length mismatch, fewer than 3 observations, or
// a constant vector ("undefined correlation").
double spearman(std::span<const double> xs, std::span<const double> ys);

double mean_of(std::span<const double> xs);
double sample_std(std::span<const double> xs);  // n-1 denominator, 0 for n < 2
double std_error(std::span<const double> xs);   // sample_std / sqrt(n)

}  // namespace swapnas::eval
