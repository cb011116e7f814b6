#include "reprscope/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "reprscope/distances.hpp"
#include "reprscope/error.hpp"
#include "reprscope/outliers.hpp"
#include "reprscope/parallel.hpp"
#include "reprscope/random.hpp"

namespace reprscope {
namespace {

// Stream tags so the pieces of one scenario never share random numbers.
enum : std::uint64_t { kGeometry = 1, kShuffle = 2, kAscent = 3, kMantel = 4, kData = 5 };

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim, double scale) {
  std::vector<double> v(dim);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

std::vector<double> unit_vector(Rng& rng, std::size_t dim) {
  for (;;) {
    auto v = gaussian_vector(rng, dim, 1.0);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    return v;
  }
}

void build_children(std::vector<std::pair<std::string, std::string>>& edges, const std::string& parent,
                    const std::string& prefix, std::size_t branching, std::size_t levels_left) {
  if (levels_left == 0) return;
  for (std::size_t c = 0; c < branching; ++c) {
    const std::string child = prefix + std::to_string(c);
    edges.emplace_back(parent, child);
    build_children(edges, child, child + "_", branching, levels_left - 1);
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

double AlignmentOutcome::mean_rho() const {
  if (mantel.empty()) return 0.0;
  double s = 0.0;
  for (const auto& m : mantel) s += m.rho;
  return s / static_cast<double>(mantel.size());
}

Taxonomy toy_taxonomy(std::size_t branching, std::size_t levels) {
  require(branching >= 2 && levels >= 1, ErrorKind::InvalidArgument, "toy taxonomy needs branching >= 2 and levels >= 1");
  std::vector<std::pair<std::string, std::string>> edges;
  build_children(edges, "root", "c", branching, levels);
  return Taxonomy("root", edges);
}

SyntheticLayer taxonomy_layer(const Taxonomy& tax, const std::vector<std::string>& leaves,
                              const AlignmentOptions& options, std::uint64_t seed) {
  // One private axis per non-root node; a node's offset is s_level * (e_axis + noise * z / sqrt(q)).
  const auto& nodes = tax.nodes();
  std::vector<std::size_t> axis(nodes.size(), 0);
  std::size_t q = 0;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    if (nodes[n] != tax.root()) axis[n] = q++;
  }
  require(q > 0, ErrorKind::InvalidArgument, "taxonomy has no non-root nodes");

  std::vector<std::vector<double>> offsets(nodes.size());
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    if (nodes[n] == tax.root()) continue;
    const std::size_t level = tax.root_distance(nodes[n]);
    require(level >= 1 && level <= options.level_scales.size(), ErrorKind::InvalidArgument,
            "no level scale for depth " + std::to_string(level));
    const double s = options.level_scales[level - 1];
    Rng rng(derive_seed(seed, {kGeometry, n}));
    auto z = gaussian_vector(rng, q, options.noise / std::sqrt(static_cast<double>(q)));
    z[axis[n]] += 1.0;
    for (auto& v : z) v *= s;
    offsets[n] = std::move(z);
  }

  std::vector<std::vector<double>> prototypes;
  prototypes.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    std::vector<double> p(q, 0.0);
    for (std::size_t a : tax.ancestors(leaf)) {
      if (nodes[a] == tax.root()) continue;
      for (std::size_t c = 0; c < q; ++c) p[c] += offsets[a][c];
    }
    prototypes.push_back(std::move(p));
  }
  if (options.shuffle_leaves) {
    Rng rng(derive_seed(seed, {kShuffle}));
    rng.shuffle(std::span<std::vector<double>>(prototypes));
  }
  return make_unimodal_layer(prototypes, options.width, 1.0);
}

AlignmentOutcome scenario_alignment(std::uint64_t seed, const AlignmentOptions& options) {
  const Taxonomy tax = toy_taxonomy(options.branching, options.level_scales.size());
  std::vector<std::string> leaves;
  for (const auto& id : tax.nodes()) {
    if (tax.root_distance(id) == options.level_scales.size()) leaves.push_back(id);
  }
  std::sort(leaves.begin(), leaves.end());

  const SyntheticLayer layer = taxonomy_layer(tax, leaves, options, seed);
  SamsConfig cfg = options.sams;
  cfg.seed = derive_seed(seed, {kAscent});
  const SamsResult sams = generate_sams(layer, cfg);

  AlignmentOutcome out;
  out.leaves = leaves;
  out.ea_layerwise = ea_layerwise(sams.tensor).with_labels(leaves);
  const std::uint64_t mantel_seed = derive_seed(seed, {kMantel});
  for (Baseline b : {Baseline::shortest_path, Baseline::leacock_chodorow, Baseline::wu_palmer}) {
    const DistanceMatrix base = baseline_matrix(tax, leaves, b);
    out.baselines.push_back(baseline_name(b));
    out.mantel.push_back(mantel(out.ea_layerwise, base, options.n_permutations, mantel_seed, options.kind));
  }
  return out;
}

SyntheticLayer anomaly_layer(const AnomalyOptions& options, std::uint64_t seed) {
  require(options.input_dim >= 1, ErrorKind::InvalidArgument, "input_dim must be positive");
  Rng rng(derive_seed(seed, {kGeometry}));
  std::vector<std::vector<double>> prototypes;
  for (std::size_t r = 0; r < options.in_family; ++r) {
    prototypes.push_back(gaussian_vector(rng, options.input_dim, options.family_spread));
  }
  for (std::size_t r = 0; r < options.anomalous; ++r) {
    if (options.anomalies_in_family) {
      prototypes.push_back(gaussian_vector(rng, options.input_dim, options.family_spread));
    } else {
      auto u = unit_vector(rng, options.input_dim);
      for (auto& v : u) v *= options.separation;
      prototypes.push_back(std::move(u));
    }
  }
  return make_unimodal_layer(prototypes, options.width, 1.0);
}

AnomalyOutcome scenario_anomaly(std::uint64_t seed, const AnomalyOptions& options) {
  const SyntheticLayer layer = anomaly_layer(options, seed);
  SamsConfig cfg = options.sams;
  cfg.seed = derive_seed(seed, {kAscent});
  const SamsResult sams = generate_sams(layer, cfg);
  const DistanceMatrix d = ea_pairwise(sams.tensor);

  AnomalyOutcome out;
  out.scores = lof_scores(d, options.k_neighbors);
  out.labels.assign(options.in_family, 0);
  out.labels.resize(options.in_family + options.anomalous, 1);
  out.auc = auc_roc(out.scores, out.labels);
  return out;
}

SyntheticLayer angle_layer(const AngleOptions& options, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kGeometry}));
  std::vector<std::vector<double>> prototypes;
  for (std::size_t r = 0; r < options.reps; ++r) {
    prototypes.push_back(gaussian_vector(rng, options.input_dim, options.prototype_spread));
  }
  return make_unimodal_layer(prototypes, options.width, 1.0);
}

AngleOutcome scenario_angle_conservation(std::uint64_t seed, const AngleOptions& options) {
  const SyntheticLayer layer = angle_layer(options, seed);
  const std::size_t rows = options.signals * options.block_depth;
  auto [inputs, raw] = sample_dataset(layer, rows, options.data_spread, derive_seed(seed, {kData}));
  const ActivationMatrix z = standardize(raw);
  const AmsTensor natural = nams_tensor(z, select_nams(z, options.signals, options.block_depth));
  const DistanceMatrix ea_n = ea_pairwise(natural);

  AngleOutcome out;
  out.steps = options.steps;
  out.self_rmse = matrix_rmse(ea_n, ea_n);
  for (std::size_t m : options.steps) {
    SamsConfig cfg;
    cfg.restarts = options.signals;
    cfg.steps = m;
    cfg.step_size = options.step_size;
    cfg.init_spread = options.init_spread;
    cfg.seed = derive_seed(seed, {kAscent});
    out.rmse.push_back(matrix_rmse(ea_n, ea_pairwise(generate_sams(layer, cfg).tensor)));
  }
  return out;
}

SyntheticLayer probe_layer(const ProbeOptions& options, std::uint64_t seed) {
  require(options.input_dim >= 2, ErrorKind::InvalidArgument, "probe harness needs input_dim >= 2");
  const double scale = options.artifact_scale;
  std::vector<double> artifact(options.input_dim, 0.0);
  artifact[0] = options.artifact_norm * scale;

  std::vector<std::vector<double>> prototypes{artifact};
  Rng rng(derive_seed(seed, {kGeometry}));
  for (std::size_t r = 0; r < options.other_reps; ++r) {
    // Random direction orthogonal to the artifact axis, placed on the bisector.
    std::vector<double> w;
    for (;;) {
      w = gaussian_vector(rng, options.input_dim, 1.0);
      w[0] = 0.0;
      double norm = 0.0;
      for (double x : w) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-6) continue;
      for (auto& x : w) x *= options.other_offset / norm;
      break;
    }
    w[0] = 0.5 * artifact[0];
    prototypes.push_back(std::move(w));
  }
  return make_unimodal_layer(prototypes, options.width, 1.0);
}

ProbeOutcome scenario_probe(std::uint64_t seed, const ProbeOptions& options) {
  const SyntheticLayer layer = probe_layer(options, seed);
  auto [inputs, clean] = sample_dataset(layer, options.samples, options.data_spread, derive_seed(seed, {kData}));
  std::vector<double> artifact(options.input_dim, 0.0);
  artifact[0] = options.artifact_norm * options.artifact_scale;
  const ActivationMatrix dirty = evaluate(layer, inject_artifact(inputs, artifact));
  ProbeOutcome out;
  out.auc = probe_auc(clean, dirty);
  out.aligned_rep = 0;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> scenario_names() { return {"alignment", "anomaly", "angle_conservation", "probe"}; }

nlohmann::json run_scenario(const std::string& name, const std::vector<std::uint64_t>& seeds,
                            const std::filesystem::path& out_dir) {
  require(!seeds.empty(), ErrorKind::ConfigError, "scenario needs at least one seed");
  const auto names = scenario_names();
  require(std::find(names.begin(), names.end(), name) != names.end(), ErrorKind::ConfigError,
          "unknown scenario '" + name + "'");

  // Per-seed rows are computed in parallel and written in seed order.
  std::vector<std::vector<double>> rows(seeds.size());
  std::vector<std::string> columns;
  if (name == "alignment") {
    columns = {"rho_shortest_path", "p_shortest_path", "rho_leacock_chodorow", "p_leacock_chodorow",
               "rho_wu_palmer", "p_wu_palmer", "mean_rho"};
    parallel_for(seeds.size(), [&](std::size_t s) {
      const auto r = scenario_alignment(seeds[s]);
      for (const auto& m : r.mantel) {
        rows[s].push_back(m.rho);
        rows[s].push_back(m.p_value);
      }
      rows[s].push_back(r.mean_rho());
    });
  } else if (name == "anomaly") {
    columns = {"auc"};
    parallel_for(seeds.size(), [&](std::size_t s) { rows[s] = {scenario_anomaly(seeds[s]).auc}; });
  } else if (name == "angle_conservation") {
    const AngleOptions defaults;
    for (std::size_t m : defaults.steps) columns.push_back("rmse_m" + std::to_string(m));
    parallel_for(seeds.size(), [&](std::size_t s) { rows[s] = scenario_angle_conservation(seeds[s]).rmse; });
  } else {
    const ProbeOptions defaults;
    for (std::size_t r = 0; r <= defaults.other_reps; ++r) columns.push_back("auc_rep" + std::to_string(r));
    parallel_for(seeds.size(), [&](std::size_t s) { rows[s] = scenario_probe(seeds[s]).auc; });
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / (name + ".csv"), std::ios::binary);
  csv << "seed";
  for (const auto& c : columns) csv << ',' << c;
  csv << '\n';
  std::vector<double> mean(columns.size(), 0.0);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    csv << seeds[s];
    for (std::size_t c = 0; c < columns.size(); ++c) {
      csv << ',' << format_double(rows[s][c]);
      mean[c] += rows[s][c] / static_cast<double>(seeds.size());
    }
    csv << '\n';
  }
  require(static_cast<bool>(csv), ErrorKind::IoFailure, "cannot write " + (out_dir / (name + ".csv")).string());

  nlohmann::json summary;
  summary["scenario"] = name;
  summary["seeds"] = seeds;
  nlohmann::json means = nlohmann::json::object();
  for (std::size_t c = 0; c < columns.size(); ++c) means[columns[c]] = mean[c];
  summary["mean"] = means;
  std::ofstream js(out_dir / (name + ".json"), std::ios::binary);
  js << summary.dump(2) << '\n';
  require(static_cast<bool>(js), ErrorKind::IoFailure, "cannot write " + (out_dir / (name + ".json")).string());
  return summary;
}

}  // namespace reprscope
