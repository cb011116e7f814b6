#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace reprscope {

/// N x k activations: one row per datapoint, one column per representation.
/// Values are held in binary64; persistence narrows them to binary32.
class ActivationMatrix {
 public:
  ActivationMatrix() = default;
  ActivationMatrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                   std::vector<std::string> labels = {}, bool standardized = false);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t row, std::size_t col) const { return data_[row * cols_ + col]; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double> column(std::size_t c) const;
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  bool standardized() const noexcept { return standardized_; }

  /// Empty when every type invariant holds, otherwise a description of the first violation.
  std::optional<std::string> invariant_violation() const;

  friend bool operator==(const ActivationMatrix&, const ActivationMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
  std::vector<std::string> labels_;
  bool standardized_ = false;
};

enum class AmsKind { natural, synthetic };

/// A[i][t][b]: activation of representation b on the t-th AMS of representation i.
/// Index order is [source_rep][signal][evaluated_rep], row-major.
class AmsTensor {
 public:
  AmsTensor() = default;
  AmsTensor(std::size_t reps, std::size_t signals_per_rep, std::vector<double> data, AmsKind kind,
            std::vector<std::string> labels = {});

  std::size_t reps() const noexcept { return reps_; }
  std::size_t signals_per_rep() const noexcept { return signals_; }
  AmsKind kind() const noexcept { return kind_; }
  double operator()(std::size_t source, std::size_t signal, std::size_t evaluated) const {
    return data_[(source * signals_ + signal) * reps_ + evaluated];
  }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::optional<std::string> invariant_violation() const;

  friend bool operator==(const AmsTensor&, const AmsTensor&) = default;

 private:
  std::size_t reps_ = 0;
  std::size_t signals_ = 0;
  std::vector<double> data_;
  AmsKind kind_ = AmsKind::natural;
  std::vector<std::string> labels_;
};

/// Symmetric k x k matrix with zero diagonal.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::size_t size, std::vector<double> data, std::string metric_tag,
                 std::vector<std::string> labels = {});

  /// Fills the strict upper triangle from cell(i, j), i < j, and mirrors it,
  /// so symmetry is exact by construction.
  template <typename CellFn>
  static DistanceMatrix from_upper(std::size_t size, CellFn&& cell, std::string metric_tag) {
    std::vector<double> data(size * size, 0.0);
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = i + 1; j < size; ++j) {
        const double v = cell(i, j);
        data[i * size + j] = v;
        data[j * size + i] = v;
      }
    }
    return DistanceMatrix(size, std::move(data), std::move(metric_tag));
  }

  std::size_t size() const noexcept { return size_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * size_ + j]; }
  std::span<const double> values() const noexcept { return data_; }
  const std::string& metric_tag() const noexcept { return metric_tag_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  DistanceMatrix with_labels(std::vector<std::string> labels) const;

  /// Strict upper triangle in row-major order (i < j).
  std::vector<double> upper_triangle() const;

  std::optional<std::string> invariant_violation() const;

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<double> data_;
  std::string metric_tag_;
  std::vector<std::string> labels_;
};

using StoredObject = std::variant<ActivationMatrix, AmsTensor, DistanceMatrix>;

/// Reads manifest.json plus its raw f32le data file.
StoredObject load(const std::filesystem::path& manifest_path);
ActivationMatrix load_activation_matrix(const std::filesystem::path& manifest_path);
AmsTensor load_ams_tensor(const std::filesystem::path& manifest_path);
DistanceMatrix load_distance_matrix(const std::filesystem::path& manifest_path);

/// Writes `manifest.json` and `data.bin` into dir (created if needed) and
/// returns the manifest path. Values are narrowed to binary32.
std::filesystem::path save(const StoredObject& object, const std::filesystem::path& dir);

/// Column-wise (x - mean) / sd with the population sd (divisor N).
/// ignore_flag re-standardizes an already standardized matrix instead of failing.
ActivationMatrix standardize(const ActivationMatrix& matrix, bool ignore_flag = false);

}  // namespace reprscope
