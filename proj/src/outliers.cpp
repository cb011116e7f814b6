#include "reprscope/outliers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reprscope/error.hpp"
#include "reprscope/parallel.hpp"

namespace reprscope {

OutlierMethod parse_outlier_method(const std::string& name) {
  if (name == "lof") return OutlierMethod::lof;
  if (name == "knn") return OutlierMethod::knn;
  fail(ErrorKind::InvalidArgument, "unknown outlier method '" + name + "'");
}

std::string outlier_method_name(OutlierMethod m) { return m == OutlierMethod::lof ? "lof" : "knn"; }

nlohmann::json to_json(const OutlierReport& r) {
  return {{"method", outlier_method_name(r.method)},
          {"params", {{"k_neighbors", r.k_neighbors}, {"contamination", r.contamination}}},
          {"scores", r.scores},
          {"flagged", r.flagged}};
}

namespace {

void check_input(const DistanceMatrix& d, std::size_t k_neighbors) {
  if (auto e = d.invariant_violation()) fail(ErrorKind::NotADistanceMatrix, *e);
  require(d.size() >= 3, ErrorKind::TooFewPoints, "need at least 3 points");
  require(k_neighbors >= 1 && k_neighbors < d.size(), ErrorKind::TooFewPoints,
          "k_neighbors=" + std::to_string(k_neighbors) + " needs more than " +
              std::to_string(k_neighbors) + " points, have " + std::to_string(d.size()));
}

double kth_distance(const DistanceMatrix& d, std::size_t i, std::size_t k_neighbors) {
  std::vector<double> row;
  row.reserve(d.size() - 1);
  for (std::size_t j = 0; j < d.size(); ++j)
    if (j != i) row.push_back(d(i, j));
  std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k_neighbors - 1), row.end());
  return row[k_neighbors - 1];
}

constexpr double kReachFloor = 1e-12;

}  // namespace

std::vector<double> lof_scores(const DistanceMatrix& d, std::size_t k_neighbors) {
  check_input(d, k_neighbors);
  const std::size_t k = d.size();
  std::vector<double> kdist(k);
  std::vector<std::vector<std::size_t>> neighbors(k);
  parallel_for(k, [&](std::size_t i) {
    kdist[i] = kth_distance(d, i, k_neighbors);
    for (std::size_t j = 0; j < k; ++j)
      if (j != i && d(i, j) <= kdist[i]) neighbors[i].push_back(j);
  });
  std::vector<double> lrd(k);
  for (std::size_t i = 0; i < k; ++i) {
    double reach = 0.0;
    for (std::size_t j : neighbors[i]) reach += std::max(kdist[j], d(i, j));
    reach /= static_cast<double>(neighbors[i].size());
    lrd[i] = 1.0 / std::max(reach, kReachFloor);
  }
  std::vector<double> scores(k);
  for (std::size_t i = 0; i < k; ++i) {
    double ratio = 0.0;
    for (std::size_t j : neighbors[i]) ratio += lrd[j] / lrd[i];
    scores[i] = ratio / static_cast<double>(neighbors[i].size());
  }
  return scores;
}

std::vector<double> knn_score(const DistanceMatrix& d, std::size_t k_neighbors) {
  check_input(d, k_neighbors);
  std::vector<double> scores(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) scores[i] = kth_distance(d, i, k_neighbors);
  return scores;
}

std::size_t flag_count(std::size_t k, double contamination) {
  require(contamination > 0.0 && contamination < 1.0, ErrorKind::BadContamination,
          "contamination must lie in (0, 1)");
  // The small slack stops products such as 0.07 * 100 = 7.000000000000001 from rounding up.
  const double raw = contamination * static_cast<double>(k);
  const auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::size_t>(count, 1, k);
}

OutlierReport flag(std::span<const double> scores, double contamination) {
  require(!scores.empty(), ErrorKind::TooFewPoints, "no scores to flag");
  const std::size_t count = flag_count(scores.size(), contamination);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  OutlierReport report;
  report.scores.assign(scores.begin(), scores.end());
  report.flagged.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(report.flagged.begin(), report.flagged.end());
  report.contamination = contamination;
  return report;
}

OutlierReport detect_outliers(const DistanceMatrix& d, OutlierMethod method, std::size_t k_neighbors,
                              double contamination) {
  const auto scores = method == OutlierMethod::lof ? lof_scores(d, k_neighbors) : knn_score(d, k_neighbors);
  OutlierReport report = flag(scores, contamination);
  report.method = method;
  report.k_neighbors = k_neighbors;
  return report;
}

}  // namespace reprscope
