#include "reprscope/activation_store.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "reprscope/error.hpp"

namespace reprscope {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MalformedManifest: return "MalformedManifest";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::AlreadyStandardized: return "AlreadyStandardized";
    case ErrorKind::NotStandardized: return "NotStandardized";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::MultimodalUnsupported: return "MultimodalUnsupported";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::NonFiniteAscent: return "NonFiniteAscent";
    case ErrorKind::SameIndex: return "SameIndex";
    case ErrorKind::DegenerateRav: return "DegenerateRav";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::Disconnected: return "Disconnected";
    case ErrorKind::MissingRoot: return "MissingRoot";
    case ErrorKind::DuplicateEdge: return "DuplicateEdge";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownConcept: return "UnknownConcept";
    case ErrorKind::DegenerateTaxonomy: return "DegenerateTaxonomy";
    case ErrorKind::RootPair: return "RootPair";
    case ErrorKind::UnknownToken: return "UnknownToken";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::ConstantTriangle: return "ConstantTriangle";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::NotADistanceMatrix: return "NotADistanceMatrix";
    case ErrorKind::BadContamination: return "BadContamination";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace {

std::optional<std::string> first_non_finite(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) return "non-finite value at flat index " + std::to_string(i);
  }
  return std::nullopt;
}

std::optional<std::string> check_labels(const std::vector<std::string>& labels, std::size_t expected) {
  if (labels.empty()) return std::nullopt;
  if (labels.size() != expected) {
    return "expected " + std::to_string(expected) + " labels, got " + std::to_string(labels.size());
  }
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) return "duplicate label '" + l + "'";
  }
  return std::nullopt;
}

void require_size(std::size_t actual, std::size_t expected, const char* what) {
  if (actual != expected) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": data holds " + std::to_string(actual) +
                                       " values, shape needs " + std::to_string(expected));
  }
}

// Population moments with two passes.
std::pair<double, double> mean_sd(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

constexpr double kStandardizedTolerance = 1e-6;
// Stored values are binary32, so a reloaded standardized matrix is only
// standardized to single precision.
constexpr double kStoredStandardizedTolerance = 1e-5;

std::optional<std::string> check_standardized(const ActivationMatrix& m, double tol) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    const auto col = m.column(c);
    const auto [mean, sd] = mean_sd(col);
    if (std::abs(mean) > tol || std::abs(sd - 1.0) > tol) {
      return "column " + std::to_string(c) + " flagged standardized but has mean " +
             std::to_string(mean) + ", sd " + std::to_string(sd);
    }
  }
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// ActivationMatrix

ActivationMatrix::ActivationMatrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                                   std::vector<std::string> labels, bool standardized)
    : rows_(rows), cols_(cols), data_(std::move(data)), labels_(std::move(labels)),
      standardized_(standardized) {
  require_size(data_.size(), rows_ * cols_, "activation matrix");
}

std::vector<double> ActivationMatrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = data_[r * cols_ + c];
  return out;
}

std::optional<std::string> ActivationMatrix::invariant_violation() const {
  if (rows_ == 0 || cols_ == 0) return "activation matrix must be non-empty";
  if (auto e = first_non_finite(data_)) return e;
  if (auto e = check_labels(labels_, cols_)) return e;
  if (standardized_) return check_standardized(*this, kStandardizedTolerance);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// AmsTensor

AmsTensor::AmsTensor(std::size_t reps, std::size_t signals_per_rep, std::vector<double> data,
                     AmsKind kind, std::vector<std::string> labels)
    : reps_(reps), signals_(signals_per_rep), data_(std::move(data)), kind_(kind),
      labels_(std::move(labels)) {
  require_size(data_.size(), reps_ * signals_ * reps_, "ams tensor");
}

std::optional<std::string> AmsTensor::invariant_violation() const {
  if (reps_ == 0 || signals_ == 0) return "ams tensor must be non-empty";
  if (auto e = first_non_finite(data_)) return e;
  return check_labels(labels_, reps_);
}

// ---------------------------------------------------------------------------
// DistanceMatrix

DistanceMatrix::DistanceMatrix(std::size_t size, std::vector<double> data, std::string metric_tag,
                               std::vector<std::string> labels)
    : size_(size), data_(std::move(data)), metric_tag_(std::move(metric_tag)),
      labels_(std::move(labels)) {
  require_size(data_.size(), size_ * size_, "distance matrix");
}

DistanceMatrix DistanceMatrix::with_labels(std::vector<std::string> labels) const {
  DistanceMatrix copy = *this;
  copy.labels_ = std::move(labels);
  return copy;
}

std::vector<double> DistanceMatrix::upper_triangle() const {
  std::vector<double> out;
  out.reserve(size_ * (size_ - (size_ > 0 ? 1 : 0)) / 2);
  for (std::size_t i = 0; i < size_; ++i)
    for (std::size_t j = i + 1; j < size_; ++j) out.push_back(data_[i * size_ + j]);
  return out;
}

std::optional<std::string> DistanceMatrix::invariant_violation() const {
  if (size_ == 0) return "distance matrix must be non-empty";
  if (auto e = first_non_finite(data_)) return e;
  for (std::size_t i = 0; i < size_; ++i) {
    if (data_[i * size_ + i] != 0.0) return "nonzero diagonal at " + std::to_string(i);
    for (std::size_t j = 0; j < size_; ++j) {
      const double v = data_[i * size_ + j];
      if (v < 0.0) return "negative entry at (" + std::to_string(i) + ", " + std::to_string(j) + ")";
      if (v != data_[j * size_ + i]) {
        return "asymmetric entry at (" + std::to_string(i) + ", " + std::to_string(j) + ")";
      }
    }
  }
  return check_labels(labels_, size_);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::vector<double> decode_f32le(const std::string& bytes) {
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(bytes[i * 4 + b]);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

std::string encode_f32le(std::span<const double> values) {
  std::string out(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

[[noreturn]] void malformed(const std::string& msg) { fail(ErrorKind::MalformedManifest, msg); }

std::size_t positive_count(const json& m, const char* field) {
  if (!m.contains(field)) malformed(std::string("missing field '") + field + "'");
  const auto& v = m.at(field);
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0) {
    malformed(std::string("field '") + field + "' must be a positive integer");
  }
  return v.get<std::size_t>();
}

std::string required_string(const json& m, const char* field) {
  if (!m.contains(field)) malformed(std::string("missing field '") + field + "'");
  if (!m.at(field).is_string()) malformed(std::string("field '") + field + "' must be a string");
  return m.at(field).get<std::string>();
}

std::vector<std::string> optional_labels(const json& m, std::size_t expected) {
  if (!m.contains("labels")) return {};
  const auto& v = m.at("labels");
  if (!v.is_array()) malformed("field 'labels' must be an array of strings");
  std::vector<std::string> labels;
  for (const auto& l : v) {
    if (!l.is_string()) malformed("field 'labels' must be an array of strings");
    labels.push_back(l.get<std::string>());
  }
  if (auto e = check_labels(labels, expected)) malformed(*e);
  return labels;
}

const char* kind_name(const StoredObject& o) {
  switch (o.index()) {
    case 0: return "activation_matrix";
    case 1: return "ams_tensor";
    default: return "distance_matrix";
  }
}

}  // namespace

StoredObject load(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) fail(ErrorKind::MissingFile, manifest_path.string());
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    malformed(manifest_path.string() + ": " + e.what());
  }
  if (!m.is_object()) malformed("manifest must be a JSON object");
  if (!m.contains("version") || !m.at("version").is_number_integer() || m.at("version").get<long>() != 1) {
    malformed("field 'version' must be 1");
  }
  if (required_string(m, "dtype") != "f32le") malformed("field 'dtype' must be \"f32le\"");
  if (required_string(m, "layout") != "row-major") malformed("field 'layout' must be \"row-major\"");
  const std::string kind = required_string(m, "kind");
  const std::string data_file = required_string(m, "data_file");
  if (data_file.empty() || fs::path(data_file).is_absolute()) {
    malformed("field 'data_file' must be a relative path");
  }

  std::size_t expected = 0;
  std::size_t label_count = 0;
  if (kind == "activation_matrix") {
    expected = positive_count(m, "rows") * positive_count(m, "cols");
    label_count = positive_count(m, "cols");
  } else if (kind == "ams_tensor") {
    const std::size_t k = positive_count(m, "reps");
    expected = k * positive_count(m, "signals_per_rep") * k;
    label_count = k;
  } else if (kind == "distance_matrix") {
    const std::size_t k = positive_count(m, "size");
    expected = k * k;
    label_count = k;
  } else {
    malformed("unknown kind '" + kind + "'");
  }
  auto labels = optional_labels(m, label_count);
  if (m.contains("standardized") && !m.at("standardized").is_boolean()) {
    malformed("field 'standardized' must be a boolean");
  }
  if (m.contains("metric_tag") && !m.at("metric_tag").is_string()) {
    malformed("field 'metric_tag' must be a string");
  }

  const fs::path data_path = manifest_path.parent_path() / data_file;
  if (!fs::exists(data_path)) fail(ErrorKind::MissingFile, data_path.string());
  const std::string bytes = read_file(data_path);
  if (bytes.size() != expected * 4) {
    fail(ErrorKind::ShapeMismatch, data_path.string() + " has " + std::to_string(bytes.size()) +
                                       " bytes, shape requires " + std::to_string(expected * 4));
  }
  auto values = decode_f32le(bytes);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorKind::NonFiniteValue, "first non-finite value at flat index " + std::to_string(i));
    }
  }

  if (kind == "activation_matrix") {
    const bool standardized = m.value("standardized", false);
    ActivationMatrix out(m.at("rows").get<std::size_t>(), m.at("cols").get<std::size_t>(),
                         std::move(values), std::move(labels), standardized);
    if (standardized) {
      if (auto e = check_standardized(out, kStoredStandardizedTolerance)) {
        fail(ErrorKind::InvariantViolation, *e);
      }
    }
    return out;
  }
  if (kind == "ams_tensor") {
    AmsKind tk = AmsKind::natural;
    if (m.contains("tensor_kind")) {
      const auto& v = m.at("tensor_kind");
      if (v == "synthetic") {
        tk = AmsKind::synthetic;
      } else if (v != "natural") {
        malformed("field 'tensor_kind' must be \"natural\" or \"synthetic\"");
      }
    }
    return AmsTensor(m.at("reps").get<std::size_t>(), m.at("signals_per_rep").get<std::size_t>(),
                     std::move(values), tk, std::move(labels));
  }
  DistanceMatrix out(m.at("size").get<std::size_t>(), std::move(values), m.value("metric_tag", ""),
                     std::move(labels));
  if (auto e = out.invariant_violation()) fail(ErrorKind::InvariantViolation, *e);
  return out;
}

namespace {

template <typename T>
T load_as(const fs::path& path, const char* expected) {
  auto obj = load(path);
  if (auto* p = std::get_if<T>(&obj)) return std::move(*p);
  malformed(path.string() + " holds " + kind_name(obj) + ", expected " + expected);
}

}  // namespace

ActivationMatrix load_activation_matrix(const fs::path& p) {
  return load_as<ActivationMatrix>(p, "activation_matrix");
}
AmsTensor load_ams_tensor(const fs::path& p) { return load_as<AmsTensor>(p, "ams_tensor"); }
DistanceMatrix load_distance_matrix(const fs::path& p) {
  return load_as<DistanceMatrix>(p, "distance_matrix");
}

fs::path save(const StoredObject& object, const fs::path& dir) {
  json m;
  m["version"] = 1;
  m["kind"] = kind_name(object);
  m["dtype"] = "f32le";
  m["layout"] = "row-major";
  m["data_file"] = "data.bin";

  std::optional<std::string> violation;
  std::span<const double> values;
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        violation = o.invariant_violation();
        values = o.values();
        if (!o.labels().empty()) m["labels"] = o.labels();
        if constexpr (std::is_same_v<T, ActivationMatrix>) {
          m["rows"] = o.rows();
          m["cols"] = o.cols();
          m["standardized"] = o.standardized();
        } else if constexpr (std::is_same_v<T, AmsTensor>) {
          m["reps"] = o.reps();
          m["signals_per_rep"] = o.signals_per_rep();
          m["tensor_kind"] = o.kind() == AmsKind::synthetic ? "synthetic" : "natural";
        } else {
          m["size"] = o.size();
          m["metric_tag"] = o.metric_tag();
        }
      },
      object);
  if (violation) fail(ErrorKind::InvariantViolation, *violation);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  const fs::path manifest = dir / "manifest.json";
  write_file(dir / "data.bin", encode_f32le(values));
  write_file(manifest, m.dump(2) + "\n");
  return manifest;
}

ActivationMatrix standardize(const ActivationMatrix& matrix, bool ignore_flag) {
  if (matrix.standardized() && !ignore_flag) {
    fail(ErrorKind::AlreadyStandardized, "matrix is already standardized");
  }
  if (auto e = first_non_finite(matrix.values())) fail(ErrorKind::NonFiniteValue, *e);
  const std::size_t n = matrix.rows();
  const std::size_t k = matrix.cols();
  std::vector<double> out(n * k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto col = matrix.column(c);
    const auto [mean, sd] = mean_sd(col);
    // Relative floor: a constant column can pick up rounding-level spread.
    if (sd == 0.0 || sd <= 1e-12 * std::abs(mean)) {
      fail(ErrorKind::ZeroVariance, "column " + std::to_string(c) + " is constant");
    }
    for (std::size_t r = 0; r < n; ++r) out[r * k + c] = (col[r] - mean) / sd;
  }
  return ActivationMatrix(n, k, std::move(out), matrix.labels(), true);
}

}  // namespace reprscope
