#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reprscope/activation_store.hpp"
#include "reprscope/ams.hpp"
#include "reprscope/atlas.hpp"
#include "reprscope/evaluation.hpp"
#include "reprscope/outliers.hpp"
#include "reprscope/synth_harness.hpp"

namespace reprscope {

inline constexpr const char* kVersion = "0.1.0";

/// A stage raised an error; what() is "<stage>: <original message>".
class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// A parsed config document. Relative paths resolve against base_dir.
struct RunConfig {
  nlohmann::json doc;
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;
};

/// Reads and validates a config file. Throws Error(ConfigError) naming the
/// offending field path, e.g. `baselines.taxonomy`.
RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});
RunConfig make_config(nlohmann::json doc, std::filesystem::path base_dir,
                      std::optional<std::uint64_t> seed_override = {});

struct MantelEntry {
  std::string distance;
  std::string baseline;
  MantelResult result;
};

/// Everything the stages produce, in memory.
struct PipelineState {
  std::vector<std::string> labels;
  std::optional<SyntheticLayer> layer;
  std::optional<InputSet> inputs;
  std::optional<ActivationMatrix> activations;
  std::optional<ActivationMatrix> standardized;
  std::optional<NamsIndex> nams;
  std::optional<AmsTensor> natural;
  std::optional<AmsTensor> synthetic;
  std::vector<std::pair<std::string, DistanceMatrix>> distances;
  std::vector<std::pair<std::string, DistanceMatrix>> baselines;
  std::vector<MantelEntry> mantel;
  std::optional<OutlierReport> outliers;
  std::optional<std::vector<double>> probe;
  std::optional<AtlasLayout> atlas;
  std::vector<HighlightSet> highlights;

  const DistanceMatrix& distance(const std::string& name) const;
  /// Mean Mantel rho over baselines, per distance, in distance order.
  std::vector<std::pair<std::string, double>> mean_rho() const;
  /// RMSE between natural and synthetic EA pair-wise distances, when both tensors exist.
  std::optional<double> ea_rmse() const;
};

/// Runs every stage whose section is present, without touching the disk
/// except to read inputs.
PipelineState execute(const RunConfig& config);

/// Writes the output tree for a finished state, plus run.json.
void write_outputs(const PipelineState& state, const RunConfig& config, const std::filesystem::path& out_dir);

/// execute + write_outputs.
PipelineState run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir);

/// One execute per point of sweep.grid (JSON pointer -> values), averaged over
/// sweep.seeds when given. Writes sweep.csv into out_dir and returns its text.
std::string run_sweep(const RunConfig& config, const std::filesystem::path& out_dir);

/// Runs a single named stage on stored artifacts named in the config
/// (ingest, standardize, nams, sams, dist, baseline, mantel, outliers, probe, atlas).
void run_stage(const std::string& stage, const RunConfig& config, const std::filesystem::path& out_dir);

std::vector<std::string> stage_names();

/// Parses a numeric CSV into an activation matrix. A first row that does not
/// parse as numbers is taken as the column labels.
ActivationMatrix parse_activation_csv(const std::string& text);

}  // namespace reprscope
