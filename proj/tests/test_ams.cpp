#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "reprscope/ams.hpp"
#include "reprscope/parallel.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace reprscope;
using oracles::brute_nams;
using testing::throws_kind;

namespace {

ActivationMatrix integer_matrix(Rng& rng, std::size_t rows, std::size_t cols, std::uint64_t range) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = static_cast<double>(rng.below(range));
  return ActivationMatrix(rows, cols, v);
}

// Layer whose gradient blows up after a few evaluations of rep 1.
class ExplodingLayer final : public DifferentiableLayer {
 public:
  std::size_t input_dim() const override { return 1; }
  std::size_t reps() const override { return 2; }
  std::vector<double> eval(std::span<const double> x) const override { return {x[0], x[0] * x[0]}; }
  std::vector<double> grad(std::size_t rep, std::span<const double> x) const override {
    if (rep == 0) return {1.0};
    return {x[0] * 1e300};
  }
};

}  // namespace

TEST_CASE("select_nams hand example and single block") {
  ActivationMatrix m(6, 1, {3, 1, 2, 5, 4, 0});
  CHECK(select_nams(m, 2, 3).rows[0] == std::vector<std::size_t>{0, 3});
  CHECK(select_nams(m, 1, 6).rows[0] == std::vector<std::size_t>{3});
  CHECK(throws_kind([&] { select_nams(m, 3, 3); }, ErrorKind::InsufficientData));
}

TEST_CASE("select_nams ties go to the lowest row and the tail is ignored") {
  ActivationMatrix m(5, 1, {1, 7, 7, 2, 100});
  CHECK(select_nams(m, 1, 4).rows[0] == std::vector<std::size_t>{1});
  CHECK(select_nams(m, 2, 2).rows[0] == std::vector<std::size_t>{1, 2});
}

TEST_CASE("property: select_nams matches the brute-force argmax") {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(5);
    const std::size_t d = 1 + rng.below(8);
    const std::size_t rows = n * d + rng.below(5);
    const std::size_t cols = 1 + rng.below(4);
    const auto m = integer_matrix(rng, rows, cols, 1 + rng.below(6));  // small range forces ties
    CHECK(select_nams(m, n, d) == brute_nams(m, n, d));
  }
}

TEST_CASE("property: permuting the unused tail leaves the index unchanged") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(4), d = 1 + rng.below(5), tail = 2 + rng.below(6), cols = 2;
    auto m = integer_matrix(rng, n * d + tail, cols, 10);
    std::vector<double> v(m.values().begin(), m.values().end());
    std::vector<std::size_t> order(tail);
    for (std::size_t i = 0; i < tail; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<double> w = v;
    for (std::size_t i = 0; i < tail; ++i)
      for (std::size_t c = 0; c < cols; ++c) w[(n * d + i) * cols + c] = v[(n * d + order[i]) * cols + c];
    CHECK(select_nams(m, n, d) == select_nams(ActivationMatrix(m.rows(), cols, w), n, d));
  }
}

TEST_CASE("nams_tensor gathers rows") {
  ActivationMatrix m(4, 2, {0, 1, 2, 3, 4, 5, 6, 7});
  NamsIndex idx{2, 1, {{3}, {0}}};
  const auto t = nams_tensor(m, idx);
  CHECK(t.kind() == AmsKind::natural);
  CHECK(t.reps() == 2);
  CHECK(t.signals_per_rep() == 1);
  CHECK(t(0, 0, 0) == 6);
  CHECK(t(0, 0, 1) == 7);
  CHECK(t(1, 0, 0) == 0);
  CHECK(t(1, 0, 1) == 1);
  NamsIndex bad{2, 1, {{4}, {0}}};
  CHECK(throws_kind([&] { nams_tensor(m, bad); }, ErrorKind::IndexOutOfRange));
}

TEST_CASE("ascent converges to the prototype of a unimodal bump") {
  const auto layer = make_unimodal_layer({{1.0, -0.5}, {4.0, 4.0}}, 1.0, 1.0);
  const auto x = ascend(layer, 0, {-0.5, 0.5}, 1000, 0.1);  // starts within 2 sigma
  CHECK(std::hypot(x[0] - 1.0, x[1] + 0.5) < 1e-3);
  CHECK(layer.eval_rep(0, x) > 0.999);
}

TEST_CASE("property: ascent never moves downhill for step <= sigma^2 / 4") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const double sigma = 0.5 + rng.uniform();
    const std::size_t q = 1 + rng.below(4);
    const auto layer = make_unimodal_layer({testing::normals(rng, q), testing::normals(rng, q)}, sigma, 1.0);
    std::vector<double> trace;
    ascend(layer, trial % 2, testing::normals(rng, q, 2.0), 200, sigma * sigma / 4, &trace);
    REQUIRE(trace.size() == 201);
    for (std::size_t s = 1; s < trace.size(); ++s) CHECK(trace[s] >= trace[s - 1]);
  }
}

TEST_CASE("synthetic activations match the closed-form oracle") {
  for (double delta : {0.5, 1.0, 2.0}) {
    const auto layer = make_unimodal_layer({{0.0, 0.0}, {delta, 0.0}}, 1.0, 1.0);
    SamsConfig cfg{3, 1000, 0.25, 0.1, 5};
    const auto r = generate_sams(layer, cfg);
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(std::abs(r.tensor(0, t, 1) - oracle_sams_activation(layer, 0, 1)) < 1e-3);
      CHECK(std::abs(r.tensor(1, t, 0) - oracle_sams_activation(layer, 1, 0)) < 1e-3);
      CHECK(r.tensor(0, t, 0) > 0.999);
    }
  }
}

TEST_CASE("generate_sams is bit identical across runs and worker counts") {
  Rng rng(24);
  const auto layer = make_unimodal_layer(
      {testing::normals(rng, 3), testing::normals(rng, 3), testing::normals(rng, 3), testing::normals(rng, 3)});
  SamsConfig cfg{4, 50, 0.2, 0.5, 77};
  set_worker_count(1);
  const auto a = generate_sams(layer, cfg);
  set_worker_count(4);
  const auto b = generate_sams(layer, cfg);
  set_worker_count(0);
  CHECK(a.tensor == b.tensor);
  CHECK(a.signals == b.signals);
  CHECK(a.tensor.kind() == AmsKind::synthetic);
  cfg.seed = 78;
  CHECK_FALSE(generate_sams(layer, cfg).signals == a.signals);
  // signal() slices agree with raw evaluation
  CHECK(layer.eval(a.signal(2, 1))[3] == a.tensor(2, 1, 3));
}

TEST_CASE("non-finite ascent is reported with its location") {
  ExplodingLayer layer;
  SamsConfig cfg{2, 50, 1.0, 1.0, 1};
  try {
    generate_sams(layer, cfg);
    FAIL("expected NonFiniteAscent");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteAscent);
    const std::string msg = e.what();
    CHECK(msg.find("rep 1") != std::string::npos);
    CHECK(msg.find("restart 0") != std::string::npos);
    CHECK(msg.find("step") != std::string::npos);
  }
  CHECK(throws_kind([&] { generate_sams(layer, {0, 1, 1.0, 1.0, 0}); }, ErrorKind::InvalidArgument));
  CHECK(throws_kind([&] { generate_sams(layer, {1, 1, -1.0, 1.0, 0}); }, ErrorKind::InvalidArgument));
}

TEST_CASE("RAVs from constant tensors") {
  // A[0][.][.] = [[1,0],[1,0]], A[1][.][.] = [[0.2,0.9],[0.4,0.7]]
  AmsTensor t(2, 2, {1, 0, 1, 0, 0.2, 0.9, 0.4, 0.7}, AmsKind::natural);
  const auto [r01, r10] = pairwise_ravs(t, 0, 1);
  CHECK(r01.values == std::vector<double>{1.0, 0.0});
  CHECK(r10.values[0] == doctest::Approx(0.3));
  CHECK(r10.values[1] == doctest::Approx(0.8));
  CHECK(r01.source_rep == 0);
  CHECK(r01.partner == 1);
  CHECK(layerwise_rav(t, 0).values == std::vector<double>{1.0, 0.0});
  CHECK(throws_kind([&] { pairwise_ravs(t, 1, 1); }, ErrorKind::SameIndex));
  CHECK(throws_kind([&] { pairwise_ravs(t, 0, 2); }, ErrorKind::IndexOutOfRange));
  CHECK(throws_kind([&] { layerwise_rav(t, 2); }, ErrorKind::IndexOutOfRange));

  AmsTensor single(2, 1, {0.5, 0.25, 0.125, 1.0}, AmsKind::synthetic);
  CHECK(layerwise_rav(single, 1).values == std::vector<double>{0.125, 1.0});
}

TEST_CASE("symmetric unimodal harness gives r_ij = (1, g)") {
  const double delta = 1.5;
  const auto layer = make_unimodal_layer({{0.0}, {delta}}, 1.0, 1.0);
  const auto r = generate_sams(layer, {3, 1000, 0.25, 0.1, 3});
  const auto [rij, rji] = pairwise_ravs(r.tensor, 0, 1);
  const double g = std::exp(-delta * delta / 2);
  CHECK(rij.values[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rij.values[1] == doctest::Approx(g).epsilon(1e-6));
  CHECK(rji.values[0] == doctest::Approx(g).epsilon(1e-6));
  CHECK(rji.values[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("property: RAVs are invariant to signal order") {
  Rng rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(4), n = 1 + rng.below(6);
    auto v = testing::normals(rng, k * n * k);
    AmsTensor t(k, n, v, AmsKind::natural);
    // Shuffle the signals of every source representation independently.
    std::vector<double> w = v;
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<std::size_t> order(n);
      for (std::size_t s = 0; s < n; ++s) order[s] = s;
      rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t b = 0; b < k; ++b) w[(i * n + s) * k + b] = v[(i * n + order[s]) * k + b];
    }
    AmsTensor u(k, n, w, AmsKind::natural);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(layerwise_rav(t, i).values == layerwise_rav(u, i).values);
      for (std::size_t j = 0; j < k; ++j) {
        if (i == j) continue;
        CHECK(pairwise_ravs(t, i, j).first.values == pairwise_ravs(u, i, j).first.values);
      }
    }
  }
}

TEST_CASE("signal variance diagnostic") {
  AmsTensor t(2, 2, {1, 0, 3, 2, 0, 0, 0, 0}, AmsKind::natural);
  const auto v = rav_signal_variance(t, 0);
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(1.0));
  CHECK(rav_signal_variance(t, 1) == std::vector<double>{0.0, 0.0});
}
