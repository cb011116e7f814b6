#include "reprscope/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "reprscope/distances.hpp"
#include "reprscope/error.hpp"
#include "reprscope/stats.hpp"

namespace reprscope {

namespace {

constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

std::vector<std::size_t> bfs(const std::vector<std::vector<std::size_t>>& adj, std::size_t source) {
  std::vector<std::size_t> dist(adj.size(), kUnreached);
  std::deque<std::size_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adj[u]) {
      if (dist[v] == kUnreached) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

}  // namespace

Taxonomy::Taxonomy(std::string root, const std::vector<std::pair<std::string, std::string>>& edges)
    : root_(std::move(root)) {
  require(!root_.empty(), ErrorKind::MissingRoot, "taxonomy has no root");
  auto intern = [&](const std::string& id) {
    auto [it, inserted] = index_.emplace(id, ids_.size());
    if (inserted) {
      ids_.push_back(id);
      adjacency_.emplace_back();
      parents_.emplace_back();
    }
    return it->second;
  };
  intern(root_);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [parent, child] : edges) {
    require(parent != child, ErrorKind::ParseError, "self-loop on '" + parent + "'");
    const std::size_t p = intern(parent);
    const std::size_t c = intern(child);
    if (!seen.insert({std::min(p, c), std::max(p, c)}).second) {
      fail(ErrorKind::DuplicateEdge, "edge " + parent + " -- " + child + " listed twice");
    }
    adjacency_[p].push_back(c);
    adjacency_[c].push_back(p);
    parents_[c].push_back(p);
  }
  root_dist_ = bfs(adjacency_, 0);
  for (std::size_t v = 0; v < ids_.size(); ++v) {
    if (root_dist_[v] == kUnreached) {
      fail(ErrorKind::Disconnected, "node '" + ids_[v] + "' is unreachable from root '" + root_ + "'");
    }
    depth_ = std::max(depth_, root_dist_[v]);
  }
}

std::size_t Taxonomy::lookup(const std::string& c) const {
  const auto it = index_.find(c);
  if (it == index_.end()) fail(ErrorKind::UnknownConcept, "'" + c + "'");
  return it->second;
}

std::vector<std::size_t> Taxonomy::distances_from(const std::string& c) const {
  return bfs(adjacency_, lookup(c));
}

std::vector<std::size_t> Taxonomy::ancestors(const std::string& c) const {
  std::vector<bool> mark(ids_.size(), false);
  std::vector<std::size_t> stack{lookup(c)};
  std::vector<std::size_t> out;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    if (mark[u]) continue;
    mark[u] = true;
    out.push_back(u);
    for (std::size_t p : parents_[u]) stack.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Taxonomy parse_taxonomy(const std::string& text) {
  std::istringstream in(text);
  std::string root;
  std::vector<std::pair<std::string, std::string>> edges;
  std::size_t line_no = 0;
  bool seen_content = false;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto words = split_ws(line);
    if (words.empty()) continue;
    if (!seen_content) {
      seen_content = true;
      if (words[0] != "root") {
        fail(ErrorKind::MissingRoot, "line " + std::to_string(line_no) + ": expected 'root <id>'");
      }
      if (words.size() != 2) {
        fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected 'root <id>'");
      }
      root = words[1];
      continue;
    }
    if (words[0] != "edge" || words.size() != 3) {
      fail(ErrorKind::ParseError,
           "line " + std::to_string(line_no) + ": expected 'edge <parent-id> <child-id>'");
    }
    if (words[1] == words[2]) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": self-loop");
    }
    edges.emplace_back(words[1], words[2]);
  }
  if (!seen_content) fail(ErrorKind::MissingRoot, "taxonomy file has no 'root' line");
  return Taxonomy(root, edges);
}

Taxonomy load_taxonomy(const std::filesystem::path& path) { return parse_taxonomy(read_text(path)); }

std::size_t path_length(const Taxonomy& tax, const std::string& a, const std::string& b) {
  const std::size_t target = tax.lookup(b);
  return tax.distances_from(a)[target];
}

namespace {

double lc_from_length(std::size_t l, std::size_t depth) {
  const double two_t = 2.0 * static_cast<double>(depth);
  return std::log((static_cast<double>(l) + 1.0) / two_t) - std::log(1.0 / two_t);
}

double wp_from_depths(std::size_t lcs_depth, std::size_t da, std::size_t db) {
  const double value =
      1.0 - 2.0 * static_cast<double>(lcs_depth) / static_cast<double>(da + db);
  return std::clamp(value, 0.0, 1.0);
}

}  // namespace

double leacock_chodorow(const Taxonomy& tax, const std::string& a, const std::string& b) {
  const std::size_t l = path_length(tax, a, b);
  require(tax.depth() >= 1, ErrorKind::DegenerateTaxonomy, "taxonomy depth is 0");
  return lc_from_length(l, tax.depth());
}

std::string lcs(const Taxonomy& tax, const std::string& a, const std::string& b) {
  const auto anc_a = tax.ancestors(a);
  const auto anc_b = tax.ancestors(b);
  std::vector<std::size_t> common;
  std::set_intersection(anc_a.begin(), anc_a.end(), anc_b.begin(), anc_b.end(),
                        std::back_inserter(common));
  if (common.empty()) {
    fail(ErrorKind::InvalidArgument, "'" + a + "' and '" + b + "' share no ancestor");
  }
  const std::string* best = nullptr;
  std::size_t best_depth = 0;
  for (std::size_t idx : common) {
    const std::string& id = tax.nodes()[idx];
    const std::size_t d = tax.root_distance(id);
    if (!best || d > best_depth || (d == best_depth && id < *best)) {
      best = &id;
      best_depth = d;
    }
  }
  return *best;
}

double wu_palmer(const Taxonomy& tax, const std::string& a, const std::string& b) {
  const std::size_t da = tax.root_distance(a);
  const std::size_t db = tax.root_distance(b);
  require(da + db > 0, ErrorKind::RootPair, "Wu-Palmer is undefined for the root paired with itself");
  return wp_from_depths(tax.root_distance(lcs(tax, a, b)), da, db);
}

// ---------------------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::map<std::string, std::vector<double>> vectors)
    : vectors_(std::move(vectors)) {
  for (const auto& [token, v] : vectors_) {
    if (dim_ == 0) dim_ = v.size();
    require(v.size() == dim_ && dim_ > 0, ErrorKind::DimensionMismatch,
            "token '" + token + "' has dimension " + std::to_string(v.size()));
    require(std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; }),
            ErrorKind::InvalidArgument, "token '" + token + "' has a zero vector");
  }
}

std::vector<double> EmbeddingTable::resolve(const std::string& label) const {
  if (auto it = vectors_.find(label); it != vectors_.end()) return it->second;
  std::string spaced = label;
  std::replace(spaced.begin(), spaced.end(), '_', ' ');
  const auto tokens = split_ws(spaced);
  if (tokens.empty()) fail(ErrorKind::UnknownToken, "empty label");
  std::vector<double> sum(dim_, 0.0);
  for (const auto& t : tokens) {
    const auto it = vectors_.find(t);
    if (it == vectors_.end()) fail(ErrorKind::UnknownToken, "label '" + label + "', token '" + t + "'");
    for (std::size_t d = 0; d < dim_; ++d) sum[d] += it->second[d];
  }
  for (double& v : sum) v /= static_cast<double>(tokens.size());
  require(std::any_of(sum.begin(), sum.end(), [](double x) { return x != 0.0; }),
          ErrorKind::InvalidArgument, "label '" + label + "' averages to a zero vector");
  return sum;
}

EmbeddingTable parse_embeddings(const std::string& text) {
  std::istringstream in(text);
  std::map<std::string, std::vector<double>> vectors;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto words = split_ws(line);
    if (words.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (words.size() < 2) fail(ErrorKind::ParseError, where + ": token without values");
    std::vector<double> v;
    for (std::size_t i = 1; i < words.size(); ++i) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(words[i], &used);
      } catch (...) {
        used = 0;
      }
      if (used != words[i].size() || !std::isfinite(x)) {
        fail(ErrorKind::ParseError, where + ": bad number '" + words[i] + "'");
      }
      v.push_back(x);
    }
    if (dim == 0) dim = v.size();
    if (v.size() != dim) fail(ErrorKind::ParseError, where + ": inconsistent dimension");
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
      fail(ErrorKind::ParseError, where + ": zero vector");
    }
    if (!vectors.emplace(words[0], std::move(v)).second) {
      fail(ErrorKind::ParseError, where + ": duplicate token '" + words[0] + "'");
    }
  }
  return EmbeddingTable(std::move(vectors));
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(read_text(path));
}

double w2v_distance(const EmbeddingTable& table, const std::string& a, const std::string& b) {
  const auto va = table.resolve(a);
  const auto vb = table.resolve(b);
  if (a == b) return 0.0;
  return angular_distance(cosine(va, vb));
}

Baseline parse_baseline(const std::string& name) {
  if (name == "shortest_path") return Baseline::shortest_path;
  if (name == "leacock_chodorow") return Baseline::leacock_chodorow;
  if (name == "wu_palmer") return Baseline::wu_palmer;
  if (name == "word2vec") return Baseline::word2vec;
  fail(ErrorKind::InvalidArgument, "unknown baseline '" + name + "'");
}

std::string baseline_name(Baseline b) {
  switch (b) {
    case Baseline::shortest_path: return "shortest_path";
    case Baseline::leacock_chodorow: return "leacock_chodorow";
    case Baseline::wu_palmer: return "wu_palmer";
    case Baseline::word2vec: return "word2vec";
  }
  return "unknown";
}

DistanceMatrix baseline_matrix(const Taxonomy& tax, const std::vector<std::string>& labels,
                               Baseline metric) {
  require(metric != Baseline::word2vec, ErrorKind::InvalidArgument,
          "word2vec baseline needs an embedding table");
  const std::size_t k = labels.size();
  require(k >= 1, ErrorKind::InvalidArgument, "no labels");
  std::vector<std::size_t> targets(k);
  for (std::size_t i = 0; i < k; ++i) targets[i] = tax.lookup(labels[i]);
  if (metric == Baseline::leacock_chodorow && k > 1) {
    require(tax.depth() >= 1, ErrorKind::DegenerateTaxonomy, "taxonomy depth is 0");
  }
  std::vector<std::vector<std::size_t>> lengths(k);
  for (std::size_t i = 0; i < k; ++i) lengths[i] = tax.distances_from(labels[i]);
  auto cell = [&](std::size_t i, std::size_t j) -> double {
    switch (metric) {
      case Baseline::shortest_path: return static_cast<double>(lengths[i][targets[j]]);
      case Baseline::leacock_chodorow: return lc_from_length(lengths[i][targets[j]], tax.depth());
      default: return wu_palmer(tax, labels[i], labels[j]);
    }
  };
  return DistanceMatrix::from_upper(k, cell, "baseline:" + baseline_name(metric)).with_labels(labels);
}

DistanceMatrix baseline_matrix(const EmbeddingTable& table, const std::vector<std::string>& labels) {
  const std::size_t k = labels.size();
  require(k >= 1, ErrorKind::InvalidArgument, "no labels");
  std::vector<std::vector<double>> vecs(k);
  for (std::size_t i = 0; i < k; ++i) vecs[i] = table.resolve(labels[i]);
  auto cell = [&](std::size_t i, std::size_t j) {
    return labels[i] == labels[j] ? 0.0 : angular_distance(cosine(vecs[i], vecs[j]));
  };
  return DistanceMatrix::from_upper(k, cell, "baseline:word2vec").with_labels(labels);
}

}  // namespace reprscope
