#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reprscope/activation_store.hpp"

namespace reprscope {

enum class CorrelationKind { pearson, spearman };

CorrelationKind parse_correlation_kind(const std::string& name);
std::string correlation_kind_name(CorrelationKind kind);

struct MantelResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n_permutations = 0;
  CorrelationKind kind = CorrelationKind::pearson;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const MantelResult& r);

/// Mantel test on the strict upper triangles. One-sided p-value
/// (1 + #{perm: rho_perm >= rho}) / (n_perm + 1), where each permutation
/// relabels rows and columns of b together and is drawn from seed (seed, perm index).
MantelResult mantel(const DistanceMatrix& a, const DistanceMatrix& b, std::size_t n_permutations,
                    std::uint64_t seed, CorrelationKind kind = CorrelationKind::pearson);

/// Permutation statistics compare with this slack so that permutations giving
/// the same correlation up to summation order count as ties.
inline constexpr double kMantelTieSlack = 1e-12;

/// Mann-Whitney AUC: (#{pos > neg} + 0.5 #{pos == neg}) / (#pos * #neg). Labels are 0/1.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

/// Per-representation AUC separating artifacted rows (label 1) from clean rows (label 0).
std::vector<double> probe_auc(const ActivationMatrix& clean, const ActivationMatrix& artifacted);

/// `index,label,auc` CSV.
std::string probe_auc_csv(const std::vector<double>& aucs, const std::vector<std::string>& labels);

}  // namespace reprscope
