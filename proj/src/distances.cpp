#include "reprscope/distances.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "reprscope/ams.hpp"
#include "reprscope/error.hpp"
#include "reprscope/parallel.hpp"
#include "reprscope/stats.hpp"

namespace reprscope {

Metric parse_metric(const std::string& name) {
  if (name == "minkowski") return Metric::minkowski;
  if (name == "pearson") return Metric::pearson;
  if (name == "spearman") return Metric::spearman;
  if (name == "ea_pairwise") return Metric::ea_pairwise;
  if (name == "ea_layerwise") return Metric::ea_layerwise;
  fail(ErrorKind::InvalidArgument, "unknown metric '" + name + "'");
}

std::string metric_name(Metric metric) {
  switch (metric) {
    case Metric::minkowski: return "minkowski";
    case Metric::pearson: return "pearson";
    case Metric::spearman: return "spearman";
    case Metric::ea_pairwise: return "ea_pairwise";
    case Metric::ea_layerwise: return "ea_layerwise";
  }
  return "unknown";
}

double angular_distance(double c) {
  return std::sqrt(1.0 - std::clamp(c, -1.0, 1.0)) / std::numbers::sqrt2;
}

namespace {

std::vector<std::vector<double>> columns_of(const ActivationMatrix& m) {
  std::vector<std::vector<double>> cols(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) cols[c] = m.column(c);
  return cols;
}

// Row-parallel fill of the upper triangle; each cell is owned by one worker.
template <typename CellFn>
DistanceMatrix parallel_upper(std::size_t k, CellFn cell, std::string tag,
                              const std::vector<std::string>& labels) {
  std::vector<double> data(k * k, 0.0);
  parallel_for(k, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < k; ++j) data[i * k + j] = cell(i, j);
  });
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) data[j * k + i] = data[i * k + j];
  return DistanceMatrix(k, std::move(data), std::move(tag), labels);
}

std::string format_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

const char* tensor_kind(const AmsTensor& t) {
  return t.kind() == AmsKind::synthetic ? "synthetic" : "natural";
}

}  // namespace

DistanceMatrix minkowski(const ActivationMatrix& matrix, double p) {
  require(matrix.standardized(), ErrorKind::NotStandardized,
          "minkowski distance expects standardized activations");
  require(p >= 1.0 && std::isfinite(p), ErrorKind::InvalidArgument, "minkowski p must be >= 1");
  const auto cols = columns_of(matrix);
  const std::size_t n = matrix.rows();
  auto cell = [&](std::size_t i, std::size_t j) {
    const auto& a = cols[i];
    const auto& b = cols[j];
    double s = 0.0;
    if (p == 1.0) {
      for (std::size_t t = 0; t < n; ++t) s += std::abs(a[t] - b[t]);
      return s;
    }
    if (p == 2.0) {
      for (std::size_t t = 0; t < n; ++t) s += (a[t] - b[t]) * (a[t] - b[t]);
      return std::sqrt(s);
    }
    for (std::size_t t = 0; t < n; ++t) s += std::pow(std::abs(a[t] - b[t]), p);
    return std::pow(s, 1.0 / p);
  };
  return parallel_upper(matrix.cols(), cell,
                        "minkowski(p=" + format_double(p) + ",N=" + std::to_string(n) +
                            ",unnormalized)",
                        matrix.labels());
}

DistanceMatrix pearson(const ActivationMatrix& matrix) {
  const auto cols = columns_of(matrix);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    require(!has_zero_variance(cols[c]), ErrorKind::ZeroVariance,
            "column " + std::to_string(c) + " is constant");
  }
  auto cell = [&](std::size_t i, std::size_t j) {
    return angular_distance(pearson_correlation(cols[i], cols[j]));
  };
  return parallel_upper(matrix.cols(), cell, "pearson", matrix.labels());
}

DistanceMatrix spearman(const ActivationMatrix& matrix) {
  require(matrix.rows() >= 2, ErrorKind::TooSmall, "spearman distance needs N >= 2");
  std::vector<std::vector<double>> ranks(matrix.cols());
  for (std::size_t c = 0; c < matrix.cols(); ++c) {
    const auto col = matrix.column(c);
    require(!has_zero_variance(col), ErrorKind::ZeroVariance,
            "column " + std::to_string(c) + " is constant");
    ranks[c] = average_ranks(col);
  }
  auto cell = [&](std::size_t i, std::size_t j) {
    return angular_distance(pearson_correlation(ranks[i], ranks[j]));
  };
  return parallel_upper(matrix.cols(), cell, "spearman", matrix.labels());
}

DistanceMatrix ea_pairwise(const AmsTensor& tensor) {
  const std::size_t k = tensor.reps();
  std::vector<std::vector<double>> mu(k, std::vector<double>(k));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) mu[a][b] = mean_activation(tensor, a, b);
  // Validate serially so the reported pair is deterministic.
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double ni = mu[i][i] * mu[i][i] + mu[i][j] * mu[i][j];
      const double nj = mu[j][i] * mu[j][i] + mu[j][j] * mu[j][j];
      if (ni == 0.0 || nj == 0.0) {
        fail(ErrorKind::DegenerateRav,
             "zero-norm RAV for pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
  auto cell = [&](std::size_t i, std::size_t j) {
    const double rij[2] = {mu[i][i], mu[i][j]};
    const double rji[2] = {mu[j][i], mu[j][j]};
    return angular_distance(cosine(rij, rji));
  };
  return parallel_upper(k, cell, std::string("ea_pairwise(") + tensor_kind(tensor) + ",n=" +
                                     std::to_string(tensor.signals_per_rep()) + ")",
                        tensor.labels());
}

DistanceMatrix ea_layerwise(const AmsTensor& tensor) {
  const std::size_t k = tensor.reps();
  std::vector<std::vector<double>> ravs(k);
  for (std::size_t i = 0; i < k; ++i) {
    ravs[i] = layerwise_rav(tensor, i).values;
    double norm = 0.0;
    for (double v : ravs[i]) norm += v * v;
    if (norm == 0.0) fail(ErrorKind::DegenerateRav, "zero-norm layer-wise RAV " + std::to_string(i));
  }
  auto cell = [&](std::size_t i, std::size_t j) { return angular_distance(cosine(ravs[i], ravs[j])); };
  return parallel_upper(k, cell, std::string("ea_layerwise(") + tensor_kind(tensor) + ",n=" +
                                     std::to_string(tensor.signals_per_rep()) + ")",
                        tensor.labels());
}

double matrix_rmse(const DistanceMatrix& a, const DistanceMatrix& b) {
  require(a.size() == b.size(), ErrorKind::SizeMismatch,
          "matrices of size " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  require(a.size() >= 2, ErrorKind::TooSmall, "RMSE needs at least one pair");
  const std::size_t k = a.size();
  double ss = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) ss += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  return std::sqrt(ss / (static_cast<double>(k) * static_cast<double>(k - 1) / 2.0));
}

}  // namespace reprscope
