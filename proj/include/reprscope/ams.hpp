#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "reprscope/activation_store.hpp"
#include "reprscope/synth_harness.hpp"

namespace reprscope {

/// Natural activation-maximization signals: for representation i, rows[i][t]
/// is the dataset row maximizing column i inside block t = rows [t*d, (t+1)*d).
struct NamsIndex {
  std::size_t block_depth = 0;
  std::size_t blocks = 0;
  std::vector<std::vector<std::size_t>> rows;

  friend bool operator==(const NamsIndex&, const NamsIndex&) = default;
};

/// Per-block argmax of every column. Ties go to the lowest row; rows past
/// blocks*block_depth are ignored.
NamsIndex select_nams(const ActivationMatrix& matrix, std::size_t blocks, std::size_t block_depth);

/// Gathers A[i][t][b] = matrix(rows[i][t], b).
AmsTensor nams_tensor(const ActivationMatrix& matrix, const NamsIndex& index);

struct SamsConfig {
  std::size_t restarts = 3;   // n
  std::size_t steps = 500;    // m
  double step_size = 0.1;     // eta
  double init_spread = 1.0;   // sigma_0
  std::uint64_t seed = 0;
};

struct SamsResult {
  AmsTensor tensor;             // raw activations, kind = synthetic
  std::vector<double> signals;  // k x n x q, row-major
  std::size_t input_dim = 0;

  std::span<const double> signal(std::size_t rep, std::size_t restart) const {
    return {signals.data() + (rep * tensor.signals_per_rep() + restart) * input_dim, input_dim};
  }
};

/// Plain gradient ascent x <- x + eta * grad_rep(x) for `steps` iterations.
/// When trace is given, the activation of rep before each step and after the
/// last one is appended.
std::vector<double> ascend(const DifferentiableLayer& layer, std::size_t rep, std::vector<double> x,
                           std::size_t steps, double step_size, std::vector<double>* trace = nullptr);

/// Synthetic signals: per (rep, restart) an ascent from x0 ~ N(0, sigma_0^2 I)
/// seeded by (seed, rep, restart), then every representation evaluated at the
/// result. Bit-identical for a given config regardless of worker count.
SamsResult generate_sams(const DifferentiableLayer& layer, const SamsConfig& config);

enum class RavKind { pairwise, layerwise };

struct Rav {
  std::vector<double> values;
  std::size_t source_rep = 0;
  RavKind kind = RavKind::layerwise;
  std::size_t partner = 0;  // the other representation of a pairwise RAV
};

/// r_ij = (mu^i_i, mu^i_j) and r_ji = (mu^j_i, mu^j_j), mu^a_b = mean_t A[a][t][b].
std::pair<Rav, Rav> pairwise_ravs(const AmsTensor& tensor, std::size_t i, std::size_t j);

/// r_i* = (mu^i_1, ..., mu^i_k).
Rav layerwise_rav(const AmsTensor& tensor, std::size_t i);

/// mu^a_b; the mean is taken over the sorted values so it does not depend on signal order.
double mean_activation(const AmsTensor& tensor, std::size_t source, std::size_t evaluated);

/// Population variance over signals of A[i][t][b] for every b. Diagnostic only,
/// multimodal representations tend to show large values here.
std::vector<double> rav_signal_variance(const AmsTensor& tensor, std::size_t i);

}  // namespace reprscope
