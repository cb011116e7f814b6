#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reprscope/activation_store.hpp"

namespace reprscope {

enum class OutlierMethod { lof, knn };

OutlierMethod parse_outlier_method(const std::string& name);
std::string outlier_method_name(OutlierMethod m);

struct OutlierReport {
  std::vector<double> scores;        // higher = more anomalous
  std::vector<std::size_t> flagged;  // ascending
  OutlierMethod method = OutlierMethod::lof;
  std::size_t k_neighbors = 20;
  double contamination = 0.01;
};

nlohmann::json to_json(const OutlierReport& r);

/// Local Outlier Factor on a precomputed distance matrix. The k-neighborhood
/// of i excludes i and includes every point tied with the k-th distance.
/// lrd uses a 1e-12 floor on the mean reachability distance, so duplicate points
/// still give finite scores.
std::vector<double> lof_scores(const DistanceMatrix& d, std::size_t k_neighbors);

/// Distance to the k-th nearest other point.
std::vector<double> knn_score(const DistanceMatrix& d, std::size_t k_neighbors);

/// Number of representations flagged at a contamination level: ceil(c * k).
std::size_t flag_count(std::size_t k, double contamination);

/// Flags the flag_count highest scores (ties go to the lower index).
OutlierReport flag(std::span<const double> scores, double contamination);

OutlierReport detect_outliers(const DistanceMatrix& d, OutlierMethod method, std::size_t k_neighbors,
                              double contamination);

}  // namespace reprscope
