#pragma once

#include <cstddef>
#include <span>

namespace stormcast::metrics {

double mae(std::span<const double> x, std::span<const double> forecast);
double rmse(std::span<const double> x, std::span<const double> forecast);
/// 1 - SSE / SST with SST around the mean of x. Constant x -> DataError.
double r2(std::span<const double> x, std::span<const double> forecast);

/// (1/S) sum |s_i - x| - (1/(2 S^2)) sum_i sum_j |s_i - s_j|, via the sorted
/// form sum_ij |s_i - s_j| = 2 sum_k (2k - S - 1) s_(k). O(S log S).
double crps(std::span<const double> samples, double x);
/// Same estimator as the literal double sum. Exactly equal to crps().
double crps_naive(std::span<const double> samples, double x);

/// Samples are S rows of length d stored back to back.
/// (1/S) sum ||x - s_i|| - (1/(2 S^2)) sum_i sum_j ||s_i - s_j||
double energy_score(std::span<const double> samples, std::size_t count, std::span<const double> x);

/// sum_{i<j} (|x_i - x_j|^p - (1/S) sum_s |s_i - s_j|^p)^2 over the d variables; d >= 2.
double variogram_score(std::span<const double> samples, std::size_t count, std::span<const double> x,
                       double p = 0.5);

namespace reference {
/// Serial double sum over sample rows (the parallel path splits rows across threads).
double crps_naive(std::span<const double> samples, double x);
double energy_score(std::span<const double> samples, std::size_t count, std::span<const double> x);
}  // namespace reference

}  // namespace stormcast::metrics
