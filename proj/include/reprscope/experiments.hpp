#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "reprscope/activation_store.hpp"
#include "reprscope/ams.hpp"
#include "reprscope/evaluation.hpp"
#include "reprscope/semantics.hpp"
#include "reprscope/synth_harness.hpp"

namespace reprscope {

// ---------------------------------------------------------------------------
// Taxonomy-coupled alignment

struct AlignmentOptions {
  std::size_t branching = 3;  // balanced tree: root -> 3 -> 9 -> 27 leaves
  std::vector<double> level_scales{2.0, 1.0, 0.5};
  double noise = 0.5;          // relative size of the random part of each offset
  double width = 1.0;
  bool shuffle_leaves = false;  // null control: leaf prototypes permuted across leaves
  SamsConfig sams{3, 500, 0.25, 0.1, 0};
  std::size_t n_permutations = 999;
  CorrelationKind kind = CorrelationKind::pearson;
};

struct AlignmentOutcome {
  std::vector<std::string> baselines;  // shortest_path, leacock_chodorow, wu_palmer
  std::vector<MantelResult> mantel;    // one per baseline, EA_s layer-wise vs baseline
  DistanceMatrix ea_layerwise;
  std::vector<std::string> leaves;
  double mean_rho() const;
};

/// Balanced tree with ids root, c0, c0_1, c0_1_2, ...
Taxonomy toy_taxonomy(std::size_t branching, std::size_t levels);

/// Prototypes embed the tree: every child sits at parent + level offset.
SyntheticLayer taxonomy_layer(const Taxonomy& tax, const std::vector<std::string>& leaves,
                              const AlignmentOptions& options, std::uint64_t seed);

AlignmentOutcome scenario_alignment(std::uint64_t seed, const AlignmentOptions& options = {});

// ---------------------------------------------------------------------------
// Two-family anomaly detection

struct AnomalyOptions {
  std::size_t in_family = 20;
  std::size_t anomalous = 3;  // 0 leaves a single class, which auc_roc rejects
  std::size_t input_dim = 8;
  double family_spread = 0.25;  // per-coordinate sd of in-family prototypes
  double separation = 1.5;      // radius of the anomalous shell around the family centre
  bool anomalies_in_family = false;  // null control
  double width = 1.0;
  SamsConfig sams{3, 500, 0.25, 0.1, 0};
  std::size_t k_neighbors = 5;
};

struct AnomalyOutcome {
  double auc = 0.0;
  std::vector<double> scores;
  std::vector<int> labels;  // 1 = anomalous
};

SyntheticLayer anomaly_layer(const AnomalyOptions& options, std::uint64_t seed);
AnomalyOutcome scenario_anomaly(std::uint64_t seed, const AnomalyOptions& options = {});

// ---------------------------------------------------------------------------
// Angle conservation between natural and synthetic EA distances

struct AngleOptions {
  std::size_t reps = 8;
  std::size_t input_dim = 3;
  double width = 0.5;
  double prototype_spread = 0.4;
  double data_spread = 2.0;
  std::size_t signals = 50;        // n for both n-AMS and s-AMS
  std::size_t block_depth = 2000;  // d
  std::vector<std::size_t> steps{10, 100, 1000};
  double step_size = 0.02;
  double init_spread = 0.1;
};

struct AngleOutcome {
  std::vector<std::size_t> steps;
  std::vector<double> rmse;  // RMSE(EA_n pairwise, EA_s pairwise) per m
  double self_rmse = 0.0;    // RMSE(EA_n, EA_n)
};

SyntheticLayer angle_layer(const AngleOptions& options, std::uint64_t seed);
AngleOutcome scenario_angle_conservation(std::uint64_t seed, const AngleOptions& options = {});

// ---------------------------------------------------------------------------
// Artifact probing

struct ProbeOptions {
  std::size_t input_dim = 8;
  std::size_t other_reps = 5;
  double artifact_norm = 4.0;
  double artifact_scale = 1.0;  // multiplies the artifact and the geometry built on it
  double other_offset = 3.0;    // distance of other prototypes from the artifact bisector axis
  double width = 1.5;
  std::size_t samples = 1000;
  double data_spread = 1.0;
};

struct ProbeOutcome {
  std::vector<double> auc;
  std::size_t aligned_rep = 0;
};

/// Representation 0 has its prototype on the artifact; the others sit on the
/// bisector between the clean centre and the artifact.
SyntheticLayer probe_layer(const ProbeOptions& options, std::uint64_t seed);
ProbeOutcome scenario_probe(std::uint64_t seed, const ProbeOptions& options = {});

// ---------------------------------------------------------------------------
// Registry used by the CLI

std::vector<std::string> scenario_names();

/// Runs a named scenario for every seed, writes <name>.csv and <name>.json
/// into out_dir and returns the JSON summary.
nlohmann::json run_scenario(const std::string& name, const std::vector<std::uint64_t>& seeds,
                            const std::filesystem::path& out_dir);

}  // namespace reprscope
