#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "reprscope/activation_store.hpp"

namespace reprscope {

/// Rooted concept graph. Path lengths use the undirected graph; the recorded
/// parent -> child direction is only used to find common ancestors.
class Taxonomy {
 public:
  Taxonomy(std::string root, const std::vector<std::pair<std::string, std::string>>& edges);

  const std::string& root() const noexcept { return root_; }
  std::size_t depth() const noexcept { return depth_; }
  std::size_t node_count() const noexcept { return ids_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  const std::vector<std::string>& nodes() const noexcept { return ids_; }

  /// Undirected shortest-path edge count from c to every node, indexed like nodes().
  std::vector<std::size_t> distances_from(const std::string& c) const;
  std::size_t root_distance(const std::string& c) const { return root_dist_[lookup(c)]; }
  /// c itself plus everything reachable through recorded parent links.
  std::vector<std::size_t> ancestors(const std::string& c) const;
  std::size_t lookup(const std::string& c) const;

 private:
  std::string root_;
  std::vector<std::string> ids_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::size_t> root_dist_;
  std::size_t depth_ = 0;
};

/// Text format: `root <id>` as the first non-comment line, then one
/// `edge <parent> <child>` per line; `#` starts a comment.
Taxonomy load_taxonomy(const std::filesystem::path& path);
Taxonomy parse_taxonomy(const std::string& text);

std::size_t path_length(const Taxonomy& tax, const std::string& a, const std::string& b);

/// log((l+1)/(2T)) - log(1/(2T)) with natural log. The depth cancels, leaving log(l+1).
double leacock_chodorow(const Taxonomy& tax, const std::string& a, const std::string& b);

/// Deepest common ancestor; ties broken by the lexicographically smallest id.
std::string lcs(const Taxonomy& tax, const std::string& a, const std::string& b);

/// 1 - 2 l(r, lcs) / (l(r, a) + l(r, b)), clamped to [0, 1].
double wu_palmer(const Taxonomy& tax, const std::string& a, const std::string& b);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::map<std::string, std::vector<double>> vectors);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  /// A label present verbatim resolves to its own vector; otherwise it is split
  /// on spaces and underscores and the token vectors are averaged.
  std::vector<double> resolve(const std::string& label) const;

 private:
  std::map<std::string, std::vector<double>> vectors_;
  std::size_t dim_ = 0;
};

/// One `token v1 v2 ... vq` per line, space-separated.
EmbeddingTable load_embeddings(const std::filesystem::path& path);
EmbeddingTable parse_embeddings(const std::string& text);

/// sqrt(1 - cos(v_a, v_b)) / sqrt(2).
double w2v_distance(const EmbeddingTable& table, const std::string& a, const std::string& b);

enum class Baseline { shortest_path, leacock_chodorow, wu_palmer, word2vec };

Baseline parse_baseline(const std::string& name);
std::string baseline_name(Baseline b);

DistanceMatrix baseline_matrix(const Taxonomy& tax, const std::vector<std::string>& labels,
                               Baseline metric);
DistanceMatrix baseline_matrix(const EmbeddingTable& table, const std::vector<std::string>& labels);

}  // namespace reprscope
