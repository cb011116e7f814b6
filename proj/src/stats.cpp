#include "reprscope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reprscope/error.hpp"

namespace reprscope {

std::vector<double> average_ranks(std::span<const double> values, double tie_slack) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    // Ties chain through neighbours within the slack.
    while (end < n) {
      const double lo = values[order[end - 1]];
      const double hi = values[order[end]];
      if (hi - lo > tie_slack * std::max({1.0, std::abs(lo), std::abs(hi)})) break;
      ++end;
    }
    // positions start..end-1 hold 1-based ranks start+1..end
    const double avg = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t p = start; p < end; ++p) ranks[order[p]] = avg;
    start = end;
  }
  return ranks;
}

double mean(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

namespace {

// Sum of squared deviations and the mean, two-pass.
std::pair<double, double> centered_ss(std::span<const double> v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, ss};
}

bool degenerate(double m, double ss, std::size_t n) {
  const double sd = std::sqrt(ss / static_cast<double>(n));
  return sd == 0.0 || sd <= 1e-12 * std::abs(m);
}

}  // namespace

bool has_zero_variance(std::span<const double> values) {
  if (values.empty()) return true;
  const auto [m, ss] = centered_ss(values);
  return degenerate(m, ss, values.size());
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::SizeMismatch, "correlation inputs differ in length");
  require(a.size() >= 2, ErrorKind::TooSmall, "correlation needs at least 2 values");
  const auto [ma, ssa] = centered_ss(a);
  const auto [mb, ssb] = centered_ss(b);
  if (degenerate(ma, ssa, a.size()) || degenerate(mb, ssb, b.size())) {
    fail(ErrorKind::ZeroVariance, "correlation of a constant vector is undefined");
  }
  double cross = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cross += (a[i] - ma) * (b[i] - mb);
  return std::clamp(cross / std::sqrt(ssa * ssb), -1.0, 1.0);
}

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson_correlation(ra, rb);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

}  // namespace reprscope
