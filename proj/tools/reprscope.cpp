// reprscope command line: one subcommand per pipeline stage plus pipeline,
// sweep and the packaged experiments.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reprscope/error.hpp"
#include "reprscope/experiments.hpp"
#include "reprscope/pipeline.hpp"

namespace fs = std::filesystem;
using namespace reprscope;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitStage = 2;

// "0..19" or "1,4,9" or a mix of both.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const std::size_t dots = item.find("..");
    try {
      std::size_t used = 0;
      if (dots == std::string::npos) {
        seeds.push_back(std::stoull(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } else {
        const std::string lo_s = item.substr(0, dots);
        const std::string hi_s = item.substr(dots + 2);
        const std::uint64_t lo = std::stoull(lo_s, &used);
        if (used != lo_s.size()) throw std::invalid_argument(item);
        const std::uint64_t hi = std::stoull(hi_s, &used);
        if (used != hi_s.size() || hi < lo) throw std::invalid_argument(item);
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    } catch (const std::exception&) {
      fail(ErrorKind::ConfigError, "--seeds: cannot parse '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reprscope: distances between neural representations, semantic alignment and outlier flagging"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("reprscope ") + kVersion);

  std::string config_path;
  std::string out_dir = "reprscope_out";
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override the config seed");
  };

  std::vector<std::pair<std::string, CLI::App*>> stages;
  const std::vector<std::pair<std::string, std::string>> stage_help = {
      {"ingest", "CSV activations -> stored activation matrix"},
      {"standardize", "column-wise standardization"},
      {"nams", "natural AMS selection"},
      {"sams", "synthetic AMS by gradient ascent on a harness layer"},
      {"dist", "distance matrices"},
      {"baseline", "semantic baseline matrices"},
      {"mantel", "Mantel test between two stored distance matrices"},
      {"outliers", "outlier scores on a stored distance matrix"},
      {"probe", "per-representation probing AUC"},
      {"atlas", "2-D MDS atlas of a stored distance matrix"},
  };
  for (const auto& [name, help] : stage_help) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    stages.emplace_back(name, sub);
  }
  auto* pipeline = app.add_subcommand("pipeline", "run every configured stage");
  add_common(pipeline);
  auto* sweep = app.add_subcommand("sweep", "one pipeline run per point of sweep.grid");
  add_common(sweep);

  std::string scenario;
  std::string seeds_text = "0..19";
  auto* experiment = app.add_subcommand("experiment", "packaged synthetic scenarios");
  experiment->add_option("name", scenario, "alignment | anomaly | angle_conservation | probe")->required();
  experiment->add_option("--seeds", seeds_text, "seed list, e.g. 0..19 or 1,2,5");
  experiment->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (experiment->parsed()) {
      const auto summary = run_scenario(scenario, parse_seeds(seeds_text), out_dir);
      std::cout << summary.dump(2) << '\n';
      return 0;
    }
    const RunConfig config = load_config(config_path, seed);
    if (pipeline->parsed()) {
      run_pipeline(config, out_dir);
    } else if (sweep->parsed()) {
      std::cout << run_sweep(config, out_dir);
    } else {
      for (const auto& [name, sub] : stages) {
        if (sub->parsed()) run_stage(name, config, out_dir);
      }
    }
    return 0;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    }
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  } catch (const StageFailure& e) {
    std::cerr << "stage " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
}
