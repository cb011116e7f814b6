#include "reprscope/ams.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "reprscope/error.hpp"
#include "reprscope/parallel.hpp"
#include "reprscope/random.hpp"

namespace reprscope {

NamsIndex select_nams(const ActivationMatrix& matrix, std::size_t blocks, std::size_t block_depth) {
  require(blocks >= 1 && block_depth >= 1, ErrorKind::InvalidArgument, "n and d must be >= 1");
  if (blocks * block_depth > matrix.rows()) {
    fail(ErrorKind::InsufficientData, std::to_string(blocks) + " blocks of depth " +
                                          std::to_string(block_depth) + " need " +
                                          std::to_string(blocks * block_depth) + " rows, have " +
                                          std::to_string(matrix.rows()));
  }
  NamsIndex index{block_depth, blocks, std::vector<std::vector<std::size_t>>(matrix.cols())};
  for (std::size_t c = 0; c < matrix.cols(); ++c) {
    auto& picks = index.rows[c];
    picks.reserve(blocks);
    for (std::size_t t = 0; t < blocks; ++t) {
      std::size_t best = t * block_depth;
      for (std::size_t r = best + 1; r < (t + 1) * block_depth; ++r) {
        if (matrix(r, c) > matrix(best, c)) best = r;
      }
      picks.push_back(best);
    }
  }
  return index;
}

AmsTensor nams_tensor(const ActivationMatrix& matrix, const NamsIndex& index) {
  const std::size_t k = matrix.cols();
  require(index.rows.size() == k, ErrorKind::IndexOutOfRange,
          "index covers " + std::to_string(index.rows.size()) + " representations, matrix has " +
              std::to_string(k));
  const std::size_t n = index.blocks;
  std::vector<double> data(k * n * k);
  for (std::size_t i = 0; i < k; ++i) {
    require(index.rows[i].size() == n, ErrorKind::IndexOutOfRange,
            "representation " + std::to_string(i) + " has a wrong signal count");
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t r = index.rows[i][t];
      require(r < matrix.rows(), ErrorKind::IndexOutOfRange,
              "row " + std::to_string(r) + " outside matrix of " + std::to_string(matrix.rows()));
      for (std::size_t b = 0; b < k; ++b) data[(i * n + t) * k + b] = matrix(r, b);
    }
  }
  return AmsTensor(k, n, std::move(data), AmsKind::natural, matrix.labels());
}

namespace {

struct AscentFailure {
  std::size_t step;
};

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Throws AscentFailure carrying the step at which the iterate went non-finite.
std::vector<double> ascend_checked(const DifferentiableLayer& layer, std::size_t rep,
                                   std::vector<double> x, std::size_t steps, double step_size,
                                   std::vector<double>* trace) {
  for (std::size_t s = 0; s < steps; ++s) {
    if (trace) trace->push_back(layer.eval(x)[rep]);
    const auto g = layer.grad(rep, x);
    if (!all_finite(g)) throw AscentFailure{s};
    for (std::size_t d = 0; d < x.size(); ++d) x[d] += step_size * g[d];
    if (!all_finite(x)) throw AscentFailure{s};
  }
  if (trace) trace->push_back(layer.eval(x)[rep]);
  return x;
}

}  // namespace

std::vector<double> ascend(const DifferentiableLayer& layer, std::size_t rep, std::vector<double> x,
                           std::size_t steps, double step_size, std::vector<double>* trace) {
  require(rep < layer.reps(), ErrorKind::IndexOutOfRange, "representation " + std::to_string(rep));
  require(x.size() == layer.input_dim(), ErrorKind::DimensionMismatch, "start point dimension");
  try {
    return ascend_checked(layer, rep, std::move(x), steps, step_size, trace);
  } catch (const AscentFailure& f) {
    fail(ErrorKind::NonFiniteAscent,
         "rep " + std::to_string(rep) + " went non-finite at step " + std::to_string(f.step));
  }
}

SamsResult generate_sams(const DifferentiableLayer& layer, const SamsConfig& cfg) {
  require(cfg.restarts >= 1, ErrorKind::InvalidArgument, "restarts must be >= 1");
  require(cfg.steps >= 1, ErrorKind::InvalidArgument, "steps must be >= 1");
  require(cfg.step_size > 0.0 && std::isfinite(cfg.step_size), ErrorKind::InvalidArgument,
          "step_size must be > 0");
  require(cfg.init_spread > 0.0 && std::isfinite(cfg.init_spread), ErrorKind::InvalidArgument,
          "init_spread must be > 0");
  const std::size_t k = layer.reps();
  const std::size_t n = cfg.restarts;
  const std::size_t q = layer.input_dim();
  std::vector<double> signals(k * n * q);
  std::vector<double> data(k * n * k);

  parallel_for(k * n, [&](std::size_t job) {
    const std::size_t rep = job / n;
    const std::size_t restart = job % n;
    Rng rng(derive_seed(cfg.seed, {rep, restart}));
    std::vector<double> x(q);
    for (double& v : x) v = cfg.init_spread * rng.normal();
    std::vector<double> final_x;
    try {
      final_x = ascend_checked(layer, rep, std::move(x), cfg.steps, cfg.step_size, nullptr);
    } catch (const AscentFailure& f) {
      fail(ErrorKind::NonFiniteAscent, "rep " + std::to_string(rep) + ", restart " +
                                           std::to_string(restart) + ", step " +
                                           std::to_string(f.step));
    }
    const auto acts = layer.eval(final_x);
    if (!all_finite(acts)) {
      fail(ErrorKind::NonFiniteAscent, "rep " + std::to_string(rep) + ", restart " +
                                           std::to_string(restart) + ", step " +
                                           std::to_string(cfg.steps));
    }
    std::copy(final_x.begin(), final_x.end(), signals.begin() + static_cast<std::ptrdiff_t>(job * q));
    std::copy(acts.begin(), acts.end(), data.begin() + static_cast<std::ptrdiff_t>(job * k));
  });

  return SamsResult{AmsTensor(k, n, std::move(data), AmsKind::synthetic), std::move(signals), q};
}

double mean_activation(const AmsTensor& tensor, std::size_t source, std::size_t evaluated) {
  require(source < tensor.reps() && evaluated < tensor.reps(), ErrorKind::IndexOutOfRange,
          "representation index out of range");
  const std::size_t n = tensor.signals_per_rep();
  std::vector<double> v(n);
  for (std::size_t t = 0; t < n; ++t) v[t] = tensor(source, t, evaluated);
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(n);
}

std::pair<Rav, Rav> pairwise_ravs(const AmsTensor& tensor, std::size_t i, std::size_t j) {
  require(i < tensor.reps() && j < tensor.reps(), ErrorKind::IndexOutOfRange,
          "pair (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
  require(i != j, ErrorKind::SameIndex, "pairwise RAVs need two distinct representations");
  Rav rij{{mean_activation(tensor, i, i), mean_activation(tensor, i, j)}, i, RavKind::pairwise, j};
  Rav rji{{mean_activation(tensor, j, i), mean_activation(tensor, j, j)}, j, RavKind::pairwise, i};
  return {std::move(rij), std::move(rji)};
}

Rav layerwise_rav(const AmsTensor& tensor, std::size_t i) {
  require(i < tensor.reps(), ErrorKind::IndexOutOfRange, "representation " + std::to_string(i));
  Rav r{std::vector<double>(tensor.reps()), i, RavKind::layerwise, i};
  for (std::size_t b = 0; b < tensor.reps(); ++b) r.values[b] = mean_activation(tensor, i, b);
  return r;
}

std::vector<double> rav_signal_variance(const AmsTensor& tensor, std::size_t i) {
  require(i < tensor.reps(), ErrorKind::IndexOutOfRange, "representation " + std::to_string(i));
  const std::size_t n = tensor.signals_per_rep();
  std::vector<double> out(tensor.reps());
  for (std::size_t b = 0; b < tensor.reps(); ++b) {
    const double mu = mean_activation(tensor, i, b);
    double ss = 0.0;
    for (std::size_t t = 0; t < n; ++t) ss += (tensor(i, t, b) - mu) * (tensor(i, t, b) - mu);
    out[b] = ss / static_cast<double>(n);
  }
  return out;
}

}  // namespace reprscope
