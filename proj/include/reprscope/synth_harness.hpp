#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "reprscope/activation_store.hpp"

namespace reprscope {

/// Anything with per-representation activations and analytic input gradients.
/// Activation-maximization ascent only needs this surface.
class DifferentiableLayer {
 public:
  virtual ~DifferentiableLayer() = default;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t reps() const = 0;
  /// Activations of all representations at x.
  virtual std::vector<double> eval(std::span<const double> x) const = 0;
  /// Gradient of representation rep with respect to x.
  virtual std::vector<double> grad(std::size_t rep, std::span<const double> x) const = 0;
};

struct BumpComponent {
  std::vector<double> prototype;
  double width = 1.0;
  double amplitude = 1.0;
};

/// Each representation is a sum of isotropic Gaussian bumps:
///   f(x) = sum_c a_c * exp(-|x - p_c|^2 / (2 sigma_c^2)).
class SyntheticLayer final : public DifferentiableLayer {
 public:
  SyntheticLayer(std::size_t input_dim, std::vector<std::vector<BumpComponent>> reps);

  std::size_t input_dim() const override { return input_dim_; }
  std::size_t reps() const override { return reps_.size(); }
  std::vector<double> eval(std::span<const double> x) const override;
  std::vector<double> grad(std::size_t rep, std::span<const double> x) const override;

  double eval_rep(std::size_t rep, std::span<const double> x) const;
  const std::vector<BumpComponent>& components(std::size_t rep) const;
  bool unimodal(std::size_t rep) const { return components(rep).size() == 1; }

 private:
  void check_input(std::span<const double> x) const;

  std::size_t input_dim_;
  std::vector<std::vector<BumpComponent>> reps_;
};

/// Unimodal layer with one shared width and amplitude.
SyntheticLayer make_unimodal_layer(const std::vector<std::vector<double>>& prototypes,
                                   double width = 1.0, double amplitude = 1.0);

SyntheticLayer load_layer(const std::filesystem::path& path);
void save_layer(const SyntheticLayer& layer, const std::filesystem::path& path);

struct InputSet {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // rows x dim, row-major
  std::uint64_t seed = 0;

  std::span<const double> row(std::size_t r) const { return {values.data() + r * dim, dim}; }
  friend bool operator==(const InputSet&, const InputSet&) = default;
};

/// Applies the layer to every row; activations are left unstandardized.
ActivationMatrix evaluate(const DifferentiableLayer& layer, const InputSet& inputs);

/// M inputs drawn i.i.d. from N(0, spread^2 I) using a single stream seeded by seed.
std::pair<InputSet, ActivationMatrix> sample_dataset(const SyntheticLayer& layer, std::size_t samples,
                                                     double spread, std::uint64_t seed);

/// Closed-form activation of representation b at the global maximizer of
/// representation i (both unimodal): a_b * exp(-|p_i - p_b|^2 / (2 sigma_b^2)).
double oracle_sams_activation(const SyntheticLayer& layer, std::size_t i, std::size_t b);

/// Adds artifact to every row.
InputSet inject_artifact(const InputSet& inputs, std::span<const double> artifact);

}  // namespace reprscope
