#include "reprscope/synth_harness.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "reprscope/error.hpp"
#include "reprscope/parallel.hpp"
#include "reprscope/random.hpp"

namespace reprscope {

namespace {

double squared_distance(std::span<const double> x, std::span<const double> p) {
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) s += (x[d] - p[d]) * (x[d] - p[d]);
  return s;
}

}  // namespace

SyntheticLayer::SyntheticLayer(std::size_t input_dim, std::vector<std::vector<BumpComponent>> reps)
    : input_dim_(input_dim), reps_(std::move(reps)) {
  require(input_dim_ >= 1, ErrorKind::InvalidArgument, "input_dim must be >= 1");
  require(reps_.size() >= 2, ErrorKind::InvalidArgument, "a layer needs at least 2 representations");
  for (std::size_t r = 0; r < reps_.size(); ++r) {
    require(!reps_[r].empty(), ErrorKind::InvalidArgument,
            "representation " + std::to_string(r) + " has no components");
    for (const auto& c : reps_[r]) {
      require(c.prototype.size() == input_dim_, ErrorKind::DimensionMismatch,
              "prototype of representation " + std::to_string(r) + " has dimension " +
                  std::to_string(c.prototype.size()) + ", layer has " + std::to_string(input_dim_));
      require(c.width > 0.0 && std::isfinite(c.width), ErrorKind::InvalidArgument, "width must be > 0");
      require(c.amplitude > 0.0 && std::isfinite(c.amplitude), ErrorKind::InvalidArgument,
              "amplitude must be > 0");
      for (double v : c.prototype) {
        require(std::isfinite(v), ErrorKind::InvalidArgument, "prototype must be finite");
      }
    }
  }
}

void SyntheticLayer::check_input(std::span<const double> x) const {
  require(x.size() == input_dim_, ErrorKind::DimensionMismatch,
          "input has dimension " + std::to_string(x.size()) + ", layer expects " +
              std::to_string(input_dim_));
}

const std::vector<BumpComponent>& SyntheticLayer::components(std::size_t rep) const {
  require(rep < reps_.size(), ErrorKind::IndexOutOfRange, "representation " + std::to_string(rep));
  return reps_[rep];
}

double SyntheticLayer::eval_rep(std::size_t rep, std::span<const double> x) const {
  check_input(x);
  double value = 0.0;
  for (const auto& c : components(rep)) {
    value += c.amplitude * std::exp(-squared_distance(x, c.prototype) / (2.0 * c.width * c.width));
  }
  return value;
}

std::vector<double> SyntheticLayer::eval(std::span<const double> x) const {
  check_input(x);
  std::vector<double> out(reps_.size());
  for (std::size_t r = 0; r < reps_.size(); ++r) out[r] = eval_rep(r, x);
  return out;
}

std::vector<double> SyntheticLayer::grad(std::size_t rep, std::span<const double> x) const {
  check_input(x);
  std::vector<double> g(input_dim_, 0.0);
  for (const auto& c : components(rep)) {
    const double s2 = c.width * c.width;
    const double weight = c.amplitude * std::exp(-squared_distance(x, c.prototype) / (2.0 * s2)) / s2;
    for (std::size_t d = 0; d < input_dim_; ++d) g[d] += weight * (c.prototype[d] - x[d]);
  }
  return g;
}

SyntheticLayer make_unimodal_layer(const std::vector<std::vector<double>>& prototypes, double width,
                                   double amplitude) {
  require(!prototypes.empty(), ErrorKind::InvalidArgument, "no prototypes");
  std::vector<std::vector<BumpComponent>> reps;
  reps.reserve(prototypes.size());
  for (const auto& p : prototypes) reps.push_back({BumpComponent{p, width, amplitude}});
  return SyntheticLayer(prototypes.front().size(), std::move(reps));
}

SyntheticLayer load_layer(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, path.string());
  nlohmann::json j;
  try {
    in >> j;
    const auto q = j.at("input_dim").get<std::size_t>();
    std::vector<std::vector<BumpComponent>> reps;
    for (const auto& rep : j.at("reps")) {
      std::vector<BumpComponent> comps;
      for (const auto& c : rep) {
        comps.push_back({c.at("prototype").get<std::vector<double>>(), c.at("width").get<double>(),
                         c.at("amplitude").get<double>()});
      }
      reps.push_back(std::move(comps));
    }
    return SyntheticLayer(q, std::move(reps));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

void save_layer(const SyntheticLayer& layer, const std::filesystem::path& path) {
  nlohmann::json j;
  j["input_dim"] = layer.input_dim();
  j["reps"] = nlohmann::json::array();
  for (std::size_t r = 0; r < layer.reps(); ++r) {
    nlohmann::json rep = nlohmann::json::array();
    for (const auto& c : layer.components(r)) {
      rep.push_back({{"prototype", c.prototype}, {"width", c.width}, {"amplitude", c.amplitude}});
    }
    j["reps"].push_back(std::move(rep));
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

ActivationMatrix evaluate(const DifferentiableLayer& layer, const InputSet& inputs) {
  require(inputs.dim == layer.input_dim(), ErrorKind::DimensionMismatch,
          "inputs have dimension " + std::to_string(inputs.dim));
  const std::size_t k = layer.reps();
  std::vector<double> acts(inputs.rows * k);
  parallel_for(inputs.rows, [&](std::size_t r) {
    const auto v = layer.eval(inputs.row(r));
    std::copy(v.begin(), v.end(), acts.begin() + static_cast<std::ptrdiff_t>(r * k));
  });
  return ActivationMatrix(inputs.rows, k, std::move(acts));
}

std::pair<InputSet, ActivationMatrix> sample_dataset(const SyntheticLayer& layer, std::size_t samples,
                                                     double spread, std::uint64_t seed) {
  require(samples >= 1, ErrorKind::InvalidArgument, "sample count must be >= 1");
  require(spread > 0.0 && std::isfinite(spread), ErrorKind::InvalidArgument, "spread must be > 0");
  InputSet inputs{samples, layer.input_dim(), std::vector<double>(samples * layer.input_dim()), seed};
  Rng rng(seed);
  for (double& v : inputs.values) v = spread * rng.normal();
  auto acts = evaluate(layer, inputs);
  return {std::move(inputs), std::move(acts)};
}

double oracle_sams_activation(const SyntheticLayer& layer, std::size_t i, std::size_t b) {
  require(i < layer.reps() && b < layer.reps(), ErrorKind::IndexOutOfRange,
          "representation index out of range");
  if (!layer.unimodal(i) || !layer.unimodal(b)) {
    fail(ErrorKind::MultimodalUnsupported,
         "closed-form maximizer needs unimodal representations " + std::to_string(i) + ", " +
             std::to_string(b));
  }
  if (i == b) return layer.components(b).front().amplitude;
  const auto& src = layer.components(i).front();
  const auto& dst = layer.components(b).front();
  return dst.amplitude *
         std::exp(-squared_distance(src.prototype, dst.prototype) / (2.0 * dst.width * dst.width));
}

InputSet inject_artifact(const InputSet& inputs, std::span<const double> artifact) {
  require(artifact.size() == inputs.dim, ErrorKind::DimensionMismatch,
          "artifact has dimension " + std::to_string(artifact.size()) + ", inputs have " +
              std::to_string(inputs.dim));
  InputSet out = inputs;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t d = 0; d < out.dim; ++d) out.values[r * out.dim + d] += artifact[d];
  return out;
}

}  // namespace reprscope
