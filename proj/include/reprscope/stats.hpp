#pragma once

#include <span>
#include <vector>

namespace reprscope {

/// 1-based ranks; tied values share the average of their positions.
/// 1-based average ranks. Neighbouring sorted values within tie_slack (relative
/// to max(1, |value|)) share a rank; 0 means exact ties only.
std::vector<double> average_ranks(std::span<const double> values, double tie_slack = 0.0);

/// True when the values are constant up to rounding.
bool has_zero_variance(std::span<const double> values);

/// Pearson correlation clamped to [-1, 1]. Throws ZeroVariance if either input is constant.
double pearson_correlation(std::span<const double> a, std::span<const double> b);

/// Pearson correlation of average ranks.
double spearman_correlation(std::span<const double> a, std::span<const double> b);

/// Cosine of the angle between a and b, clamped to [-1, 1]. Caller guarantees nonzero norms.
double cosine(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> values);

}  // namespace reprscope
