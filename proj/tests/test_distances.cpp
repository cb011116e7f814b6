#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "reprscope/distances.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace reprscope;
using oracles::ea_closed_form;
using testing::throws_kind;

namespace {

ActivationMatrix random_standardized(Rng& rng, std::size_t rows, std::size_t cols) {
  return standardize(ActivationMatrix(rows, cols, testing::normals(rng, rows * cols)));
}

double brute_minkowski(const ActivationMatrix& m, std::size_t i, std::size_t j, double p) {
  double s = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) s += std::pow(std::abs(m(r, i) - m(r, j)), p);
  return std::pow(s, 1.0 / p);
}

double brute_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    ma += a[t] / n;
    mb += b[t] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    sab += (a[t] - ma) * (b[t] - mb);
    saa += (a[t] - ma) * (a[t] - ma);
    sbb += (b[t] - mb) * (b[t] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// O(n^2) average ranks.
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) ++less;
      if (w == v[i]) ++equal;
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

void check_axioms(const DistanceMatrix& d, bool bounded) {
  CHECK_FALSE(d.invariant_violation().has_value());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d(i, i) == 0.0);
    for (std::size_t j = 0; j < d.size(); ++j) {
      CHECK(d(i, j) == d(j, i));
      CHECK(d(i, j) >= 0.0);
      if (bounded) CHECK(d(i, j) <= 1.0);
    }
  }
}

}  // namespace

TEST_CASE("Minkowski on a 3-4-5 difference") {
  // Two columns differing by (3, 4) over two rows; the flag is set by hand.
  ActivationMatrix m(2, 2, {3, 0, 4, 0}, {}, true);
  CHECK(minkowski(m, 2.0)(0, 1) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(minkowski(m, 1.0)(0, 1) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("Minkowski matches a brute-force sum without normalization") {
  Rng rng(31);
  for (double p : {1.0, 1.5, 2.0, 3.0}) {
    const auto m = random_standardized(rng, 40, 5);
    const auto d = minkowski(m, p);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        if (i != j) CHECK(d(i, j) == doctest::Approx(brute_minkowski(m, i, j, p)).epsilon(1e-12));
  }
  // Doubling N by repeating every row scales d by 2^(1/p): no 1/N factor.
  const auto m = random_standardized(rng, 30, 3);
  std::vector<double> twice(m.values().begin(), m.values().end());
  twice.insert(twice.end(), m.values().begin(), m.values().end());
  const auto d1 = minkowski(m, 2.0);
  const auto d2 = minkowski(ActivationMatrix(60, 3, twice, {}, true), 2.0);
  CHECK(d2(0, 1) == doctest::Approx(std::sqrt(2.0) * d1(0, 1)).epsilon(1e-12));
}

TEST_CASE("Minkowski errors") {
  ActivationMatrix raw(3, 2, {1, 2, 3, 4, 5, 7});
  CHECK(throws_kind([&] { minkowski(raw, 2); }, ErrorKind::NotStandardized));
  CHECK(throws_kind([&] { minkowski(standardize(raw), 0.5); }, ErrorKind::InvalidArgument));
}

TEST_CASE("Pearson distance of related columns") {
  // identical, negated, and uncorrelated columns
  ActivationMatrix m(4, 4, {1, 1, -1, 1, 2, 2, -2, -1, 3, 3, -3, -1, 4, 4, -4, 1});
  const auto d = pearson(m);
  CHECK(d(0, 1) == 0.0);
  CHECK(d(0, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d(0, 3) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(throws_kind([] { pearson(ActivationMatrix(3, 2, {1, 5, 2, 5, 3, 5})); }, ErrorKind::ZeroVariance));
}

TEST_CASE("Pearson and Spearman agree with brute-force correlation") {
  Rng rng(32);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t rows = 5 + rng.below(30), cols = 2 + rng.below(4);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = static_cast<double>(rng.below(6));  // ties
    ActivationMatrix m(rows, cols, v);
    bool constant = false;
    for (std::size_t c = 0; c < cols; ++c) {
      const auto col = m.column(c);
      constant |= std::all_of(col.begin(), col.end(), [&](double x) { return x == col[0]; });
    }
    if (constant) continue;
    const auto dp = pearson(m);
    const auto ds = spearman(m);
    for (std::size_t i = 0; i < cols; ++i) {
      for (std::size_t j = i + 1; j < cols; ++j) {
        const double rp = brute_pearson(m.column(i), m.column(j));
        const double rs = brute_pearson(brute_ranks(m.column(i)), brute_ranks(m.column(j)));
        CHECK(dp(i, j) == doctest::Approx(std::sqrt(std::max(0.0, 1 - rp)) / std::sqrt(2.0)).epsilon(1e-9));
        CHECK(ds(i, j) == doctest::Approx(std::sqrt(std::max(0.0, 1 - rs)) / std::sqrt(2.0)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("Spearman ignores monotone transforms") {
  Rng rng(33);
  auto v = testing::normals(rng, 50 * 3);
  std::vector<double> w = v;
  for (auto& x : w) x = std::exp(3 * x);
  CHECK(spearman(ActivationMatrix(50, 3, v)).values().size() == 9);
  const auto a = spearman(ActivationMatrix(50, 3, v));
  const auto b = spearman(ActivationMatrix(50, 3, w));
  for (std::size_t i = 0; i < 9; ++i) CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-12));
}

TEST_CASE("EA distance matches the closed form from oracle RAVs") {
  for (double ratio : {0.5, 1.0, 2.0, 4.0}) {
    const double g = std::exp(-ratio * ratio / 2);
    // n = 1 tensor holding r_01 = (1, g) and r_10 = (g, 1) exactly
    AmsTensor t(2, 1, {1.0, g, g, 1.0}, AmsKind::synthetic);
    CHECK(std::abs(ea_pairwise(t)(0, 1) - ea_closed_form(g)) < 1e-12);
    CHECK(std::abs(ea_layerwise(t)(0, 1) - ea_closed_form(g)) < 1e-12);
  }
}

TEST_CASE("EA distance examples") {
  // identical RAVs give 0, orthogonal sqrt(1/2), opposite 1
  AmsTensor same(2, 1, {1, 1, 1, 1}, AmsKind::natural);
  CHECK(ea_pairwise(same)(0, 1) == 0.0);
  AmsTensor ortho(2, 1, {1, 0, 0, 1}, AmsKind::natural);
  CHECK(ea_pairwise(ortho)(0, 1) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  AmsTensor flipped(2, 1, {1, -1, -1, 1}, AmsKind::natural);
  CHECK(ea_pairwise(flipped)(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ea_pairwise(flipped).metric_tag().find("natural") != std::string::npos);

  AmsTensor zero(2, 1, {0, 0, 1, 1}, AmsKind::natural);
  CHECK(throws_kind([&] { ea_pairwise(zero); }, ErrorKind::DegenerateRav));
  CHECK(throws_kind([&] { ea_layerwise(zero); }, ErrorKind::DegenerateRav));
}

TEST_CASE("layer-wise EA equals the angular distance of mean vectors") {
  Rng rng(34);
  const std::size_t k = 5, n = 4;
  const auto v = testing::normals(rng, k * n * k);
  AmsTensor t(k, n, v, AmsKind::natural);
  const auto d = ea_layerwise(t);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double dot = 0, ni = 0, nj = 0;
      for (std::size_t b = 0; b < k; ++b) {
        double mi = 0, mj = 0;
        for (std::size_t s = 0; s < n; ++s) {
          mi += t(i, s, b) / n;
          mj += t(j, s, b) / n;
        }
        dot += mi * mj;
        ni += mi * mi;
        nj += mj * mj;
      }
      const double c = dot / std::sqrt(ni * nj);
      CHECK(d(i, j) == doctest::Approx(std::sqrt(1 - c) / std::sqrt(2.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: metric axioms on random inputs") {
  Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 3 + rng.below(30), k = 2 + rng.below(6);
    const auto m = random_standardized(rng, rows, k);
    check_axioms(minkowski(m, 1.0 + 3.0 * rng.uniform()), false);
    check_axioms(pearson(m), true);
    check_axioms(spearman(m), true);
    const std::size_t n = 1 + rng.below(4);
    AmsTensor t(k, n, testing::normals(rng, k * n * k), AmsKind::natural);
    check_axioms(ea_pairwise(t), true);
    check_axioms(ea_layerwise(t), true);
  }
}

TEST_CASE("matrix RMSE over the strict upper triangle") {
  DistanceMatrix a(3, {0, 1, 2, 1, 0, 3, 2, 3, 0}, "a");
  DistanceMatrix b(3, {0, 1, 1, 1, 0, 1, 1, 1, 0}, "b");
  // differences 0, 1, 2 over 3 pairs
  CHECK(matrix_rmse(a, b) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
  CHECK(matrix_rmse(a, a) == 0.0);
  CHECK(throws_kind([&] { matrix_rmse(a, DistanceMatrix(2, {0, 1, 1, 0}, "c")); }, ErrorKind::SizeMismatch));
  CHECK(throws_kind([&] { matrix_rmse(DistanceMatrix(1, {0}, "x"), DistanceMatrix(1, {0}, "y")); }, ErrorKind::TooSmall));
}

TEST_CASE("metric names parse") {
  for (auto m : {Metric::minkowski, Metric::pearson, Metric::spearman, Metric::ea_pairwise, Metric::ea_layerwise})
    CHECK(parse_metric(metric_name(m)) == m);
  CHECK(throws_kind([] { parse_metric("cosine"); }, ErrorKind::InvalidArgument));
  CHECK(angular_distance(1.0) == 0.0);
  CHECK(angular_distance(1.5) == 0.0);  // clamped
  CHECK(angular_distance(-1.0) == doctest::Approx(1.0).epsilon(1e-15));
}
