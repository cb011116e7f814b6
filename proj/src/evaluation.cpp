#include "reprscope/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "reprscope/error.hpp"
#include "reprscope/parallel.hpp"
#include "reprscope/random.hpp"
#include "reprscope/stats.hpp"

namespace reprscope {

CorrelationKind parse_correlation_kind(const std::string& name) {
  if (name == "pearson") return CorrelationKind::pearson;
  if (name == "spearman") return CorrelationKind::spearman;
  fail(ErrorKind::InvalidArgument, "unknown correlation kind '" + name + "'");
}

std::string correlation_kind_name(CorrelationKind kind) {
  return kind == CorrelationKind::pearson ? "pearson" : "spearman";
}

nlohmann::json to_json(const MantelResult& r) {
  return {{"rho", r.rho},
          {"p_value", r.p_value},
          {"n_permutations", r.n_permutations},
          {"kind", correlation_kind_name(r.kind)},
          {"seed", r.seed}};
}

namespace {

// Upper-triangle values of a k x k matrix (given as a flat vector), centered.
struct CenteredTriangle {
  std::vector<double> values;
  double sum_squares = 0.0;
};

CenteredTriangle center(std::vector<double> v) {
  const double m = mean(v);
  CenteredTriangle out;
  for (double& x : v) {
    x -= m;
    out.sum_squares += x * x;
  }
  out.values = std::move(v);
  return out;
}

}  // namespace

MantelResult mantel(const DistanceMatrix& a, const DistanceMatrix& b, std::size_t n_permutations,
                    std::uint64_t seed, CorrelationKind kind) {
  require(a.size() == b.size(), ErrorKind::SizeMismatch,
          "matrices of size " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  const std::size_t k = a.size();
  require(k >= 3, ErrorKind::TooSmall, "Mantel test needs k >= 3");
  require(n_permutations >= 1, ErrorKind::InvalidArgument, "n_permutations must be >= 1");

  auto tri_a = a.upper_triangle();
  auto tri_b = b.upper_triangle();
  require(!has_zero_variance(tri_a), ErrorKind::ConstantTriangle, "first matrix has a constant triangle");
  require(!has_zero_variance(tri_b), ErrorKind::ConstantTriangle, "second matrix has a constant triangle");
  if (kind == CorrelationKind::spearman) {
    tri_a = average_ranks(tri_a, kMantelTieSlack);
    tri_b = average_ranks(tri_b, kMantelTieSlack);
  }
  const CenteredTriangle ca = center(std::move(tri_a));
  const CenteredTriangle cb = center(std::move(tri_b));

  // Centered b values laid out as a full symmetric matrix, so a permuted
  // triangle is a gather through the permutation.
  std::vector<double> b_full(k * k, 0.0);
  {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j, ++idx) {
        b_full[i * k + j] = cb.values[idx];
        b_full[j * k + i] = cb.values[idx];
      }
  }
  const double denom = std::sqrt(ca.sum_squares * cb.sum_squares);
  auto statistic = [&](const std::vector<std::size_t>& perm) {
    double cross = 0.0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j, ++idx) cross += ca.values[idx] * b_full[perm[i] * k + perm[j]];
    return std::clamp(cross / denom, -1.0, 1.0);
  };

  std::vector<std::size_t> identity(k);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  const double rho = statistic(identity);

  std::vector<char> exceeds(n_permutations, 0);
  parallel_for(n_permutations, [&](std::size_t p) {
    Rng rng(derive_seed(seed, {p}));
    std::vector<std::size_t> perm = identity;
    rng.shuffle(std::span<std::size_t>(perm));
    exceeds[p] = statistic(perm) >= rho - kMantelTieSlack ? 1 : 0;
  });
  const auto count = static_cast<std::size_t>(std::count(exceeds.begin(), exceeds.end(), 1));
  return MantelResult{rho, static_cast<double>(count + 1) / static_cast<double>(n_permutations + 1),
                      n_permutations, kind, seed};
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::LengthMismatch, "scores and labels differ in length");
  std::vector<double> negatives;
  std::vector<double> positives;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorKind::InvalidArgument, "labels must be 0 or 1");
    require(std::isfinite(scores[i]), ErrorKind::NonFiniteValue, "score " + std::to_string(i));
    (labels[i] == 1 ? positives : negatives).push_back(scores[i]);
  }
  if (positives.empty() || negatives.empty()) {
    fail(ErrorKind::SingleClass, "AUC needs both classes present");
  }
  std::sort(negatives.begin(), negatives.end());
  // Integer counts keep the statistic exact; 2*wins + ties over 2*P*N.
  std::uint64_t twice_credit = 0;
  for (double s : positives) {
    const auto lo = std::lower_bound(negatives.begin(), negatives.end(), s);
    const auto hi = std::upper_bound(lo, negatives.end(), s);
    twice_credit += 2 * static_cast<std::uint64_t>(lo - negatives.begin()) +
                    static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(positives.size()) * static_cast<double>(negatives.size());
  return static_cast<double>(twice_credit) / (2.0 * pairs);
}

std::vector<double> probe_auc(const ActivationMatrix& clean, const ActivationMatrix& artifacted) {
  require(clean.cols() == artifacted.cols(), ErrorKind::ShapeMismatch,
          "clean has " + std::to_string(clean.cols()) + " representations, artifacted has " +
              std::to_string(artifacted.cols()));
  require(clean.rows() > 0 && artifacted.rows() > 0, ErrorKind::ShapeMismatch, "empty probing set");
  std::vector<int> labels(clean.rows(), 0);
  labels.resize(clean.rows() + artifacted.rows(), 1);
  std::vector<double> out(clean.cols());
  for (std::size_t c = 0; c < clean.cols(); ++c) {
    auto scores = clean.column(c);
    const auto art = artifacted.column(c);
    scores.insert(scores.end(), art.begin(), art.end());
    out[c] = auc_roc(scores, labels);
  }
  return out;
}

std::string probe_auc_csv(const std::vector<double>& aucs, const std::vector<std::string>& labels) {
  std::ostringstream os;
  os.precision(17);
  os << "index,label,auc\n";
  for (std::size_t i = 0; i < aucs.size(); ++i) {
    os << i << ',' << (i < labels.size() ? labels[i] : std::to_string(i)) << ',' << aucs[i] << '\n';
  }
  return os.str();
}

}  // namespace reprscope
