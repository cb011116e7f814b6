#pragma once

#include <string>

#include "reprscope/activation_store.hpp"

namespace reprscope {

enum class Metric { minkowski, pearson, spearman, ea_pairwise, ea_layerwise };

struct MetricParams {
  Metric metric = Metric::minkowski;
  double p = 1.0;  // Minkowski degree, >= 1
};

Metric parse_metric(const std::string& name);
std::string metric_name(Metric metric);

/// d_ij = (sum_t |a_ti - a_tj|^p)^(1/p), summed over all N rows without 1/N
/// normalization, so matrices from different N are not comparable.
/// Requires a standardized matrix.
DistanceMatrix minkowski(const ActivationMatrix& matrix, double p);

/// d_ij = sqrt(1 - rho_pearson(a_i, a_j)) / sqrt(2), in [0, 1].
DistanceMatrix pearson(const ActivationMatrix& matrix);

/// Same form with Spearman's rho (average ranks for ties).
DistanceMatrix spearman(const ActivationMatrix& matrix);

/// Extreme-Activation distance from pairwise RAVs:
/// d_ij = sqrt(1 - cos(r_ij, r_ji)) / sqrt(2), diagonal 0.
DistanceMatrix ea_pairwise(const AmsTensor& tensor);

/// Extreme-Activation distance from layer-wise RAVs r_i*, r_j*.
DistanceMatrix ea_layerwise(const AmsTensor& tensor);

/// Root mean square difference over the k(k-1)/2 strict-upper-triangle pairs.
double matrix_rmse(const DistanceMatrix& a, const DistanceMatrix& b);

/// sqrt(1 - c) / sqrt(2) for a cosine or correlation c in [-1, 1].
double angular_distance(double c);

}  // namespace reprscope
