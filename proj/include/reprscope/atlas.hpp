#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "reprscope/activation_store.hpp"

namespace reprscope {

/// 2-D embedding of a distance matrix.
struct AtlasLayout {
  std::vector<std::array<double, 2>> coords;
  /// sum (d_embedded - d_input)^2 / sum d_input^2 over pairs; 0 for an all-zero input.
  double stress = 0.0;
  std::array<double, 2> eigenvalues{0.0, 0.0};
  /// Axes whose eigenvalue is not positive (relative to |B|); their coordinates are zero.
  std::array<bool, 2> zeroed_axes{false, false};
  std::string source_tag;
};

struct MdsOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 10000;
};

/// Classical (Torgerson) MDS: double-centres -1/2 D^2 and keeps the top two
/// eigenpairs, found by two-vector subspace iteration from fixed start vectors.
AtlasLayout classical_mds(const DistanceMatrix& d, const MdsOptions& options = {});

/// Euclidean distances between embedded points.
DistanceMatrix embedded_distances(const AtlasLayout& layout);

struct HighlightSet {
  std::string name;
  std::vector<std::size_t> members;
};

/// Writes atlas.csv (index,label,x,y,group) and atlas.svg into dir.
void export_atlas(const AtlasLayout& layout, const std::vector<std::string>& labels,
                  const std::vector<HighlightSet>& highlights, const std::filesystem::path& dir);

}  // namespace reprscope
