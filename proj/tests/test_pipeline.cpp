#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "reprscope/activation_store.hpp"
#include "reprscope/parallel.hpp"
#include "reprscope/pipeline.hpp"
#include "test_support.hpp"

using namespace reprscope;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& p) { return json::parse(testing::read_file(p)); }

RunConfig config_from(const std::string& file) { return load_config(testing::data_dir() / file); }

RunConfig config_doc(json doc) { return make_config(std::move(doc), testing::data_dir()); }

// Relative path -> contents for every regular file under root.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = testing::read_file(e.path());
  }
  return files;
}

std::string config_error(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) return e.what();
    return "wrong kind: " + std::string(e.what());
  }
  return "no error";
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

struct WorkerGuard {
  ~WorkerGuard() { set_worker_count(0); }
};

}  // namespace

TEST_CASE("minimal harness config runs end to end") {
  testing::TempDir out("pipe_min");
  const PipelineState st = run_pipeline(config_from("minimal.json"), out.path());

  const DistanceMatrix d = load_distance_matrix(out / "distances/ea_pairwise_synthetic/manifest.json");
  CHECK(d.size() == 4);
  CHECK(d.labels() == std::vector<std::string>{"r0", "r1", "r2", "r3"});
  CHECK_FALSE(d.invariant_violation());

  const json outliers = read_json(out / "outliers.json");
  CHECK(outliers.at("scores").size() == 4);
  CHECK(outliers.at("flagged").size() == 1);
  CHECK(outliers.at("distance") == "ea_pairwise_synthetic");

  const json run = read_json(out / "run.json");
  CHECK(run.at("version") == kVersion);
  CHECK(run.at("seed") == 1);
  CHECK(run.at("config").at("distances").size() == 1);

  // Only the harness is needed; no dataset was sampled.
  CHECK_FALSE(st.activations);
  CHECK_FALSE(fs::exists(out / "standardized"));
}

TEST_CASE("full config writes every artifact and they load back") {
  testing::TempDir out("pipe_full");
  const PipelineState st = run_pipeline(config_from("pipeline.json"), out.path());

  const ActivationMatrix z = load_activation_matrix(out / "standardized/manifest.json");
  CHECK(z.standardized());
  CHECK(z.rows() == 400);
  CHECK(z.labels() == std::vector<std::string>{"dog", "cat", "oak", "rose"});

  const AmsTensor nat = load_ams_tensor(out / "ams_natural/manifest.json");
  CHECK(nat.kind() == AmsKind::natural);
  CHECK(nat.signals_per_rep() == 10);
  const AmsTensor syn = load_ams_tensor(out / "ams_synthetic/manifest.json");
  CHECK(syn.kind() == AmsKind::synthetic);
  CHECK(syn.signals_per_rep() == 3);

  const json idx = read_json(out / "nams_index.json");
  CHECK(idx.at("block_depth") == 40);
  CHECK(idx.at("rows").size() == 4);

  for (const char* name :
       {"ea_pairwise_synthetic", "ea_pairwise_natural", "ea_layerwise_synthetic", "pearson", "minkowski_p2"}) {
    CAPTURE(name);
    const DistanceMatrix d = load_distance_matrix(out.path() / "distances" / name / "manifest.json");
    CHECK(d.size() == 4);
    CHECK_FALSE(d.invariant_violation());
  }
  for (const char* name : {"shortest_path", "leacock_chodorow", "wu_palmer", "word2vec"}) {
    CAPTURE(name);
    CHECK(load_distance_matrix(out.path() / "baselines" / name / "manifest.json").size() == 4);
  }

  const json mantel = read_json(out / "mantel.json");
  CHECK(mantel.at("results").size() == 5 * 4);
  CHECK(mantel.at("mean_rho").size() == 5);
  for (const auto& r : mantel.at("results")) {
    CHECK(r.at("p_value").get<double>() > 0.0);
    CHECK(r.at("p_value").get<double>() <= 1.0);
  }
  CHECK(st.mean_rho().size() == 5);

  const std::string probe = testing::read_file(out / "probe_auc.csv");
  CHECK(probe.find("dog") != std::string::npos);
  REQUIRE(st.probe);
  CHECK(st.probe->size() == 4);

  CHECK(fs::exists(out / "atlas/atlas.csv"));
  CHECK(fs::exists(out / "atlas/atlas.svg"));
  const json atlas = read_json(out / "atlas/atlas.json");
  CHECK(atlas.at("source") == "ea_pairwise_synthetic");
  REQUIRE(st.highlights.size() == 2);
  CHECK(st.highlights[0].name == "animals");
  CHECK(st.highlights[0].members == std::vector<std::size_t>{0, 1});
  CHECK(st.highlights[1].name == "outliers");

  REQUIRE(st.ea_rmse());
  CHECK(std::isfinite(*st.ea_rmse()));
}

TEST_CASE("reruns are byte-identical across worker counts") {
  WorkerGuard guard;
  const RunConfig cfg = config_from("pipeline.json");
  testing::TempDir a("pipe_w1");
  testing::TempDir b("pipe_w4");
  set_worker_count(1);
  run_pipeline(cfg, a.path());
  set_worker_count(4);
  run_pipeline(cfg, b.path());
  const auto sa = snapshot(a.path());
  const auto sb = snapshot(b.path());
  CHECK(sa.size() > 20);
  CHECK(sa == sb);
}

TEST_CASE("a different seed changes the stochastic outputs") {
  testing::TempDir a("pipe_s1");
  testing::TempDir b("pipe_s2");
  run_pipeline(load_config(testing::data_dir() / "pipeline.json"), a.path());
  run_pipeline(load_config(testing::data_dir() / "pipeline.json", 2), b.path());
  // Single-bump reps converge to the same s-AMS whatever the seed; the sample does not.
  CHECK(testing::read_file(a / "standardized/data.bin") != testing::read_file(b / "standardized/data.bin"));
  CHECK(read_json(b / "run.json").at("seed") == 2);
}

TEST_CASE("config errors name the offending field") {
  const json base = read_json(testing::data_dir() / "pipeline.json");

  json doc = base;
  doc.erase("seed");
  CHECK(config_error([&] { config_doc(doc); }).find("seed") != std::string::npos);

  doc = base;
  doc["seed"] = -3;
  CHECK(config_error([&] { config_doc(doc); }).find("seed") != std::string::npos);

  doc = base;
  doc["baselines"].erase("taxonomy");
  doc["baselines"]["metrics"] = {"shortest_path"};
  CHECK(config_error([&] { config_doc(doc); }).find("baselines.taxonomy") != std::string::npos);

  doc = base;
  doc["baselines"]["taxonomy"] = "no_such_tree.txt";
  CHECK(config_error([&] { config_doc(doc); }).find("baselines.taxonomy") != std::string::npos);

  doc = base;
  doc["distances"][1]["metric"] = "cosine";
  CHECK(config_error([&] { config_doc(doc); }).find("distances[1].metric") != std::string::npos);

  doc = base;
  doc["distances"][4]["p"] = 0.5;
  CHECK(config_error([&] { config_doc(doc); }).find("distances[4].p") != std::string::npos);

  doc = base;
  doc["distances"].push_back({{"metric", "pearson"}});
  CHECK(config_error([&] { config_doc(doc); }).find("duplicate") != std::string::npos);

  doc = base;
  doc["outliers"]["contamination"] = 1.5;
  CHECK(config_error([&] { config_doc(doc); }).find("outliers.contamination") != std::string::npos);

  doc = base;
  doc["input"]["csv"] = "layer4.json";
  CHECK(config_error([&] { config_doc(doc); }).find("exactly one") != std::string::npos);

  doc = base;
  doc["nams"].erase("d");
  CHECK(config_error([&] { config_doc(doc); }).find("nams.d") != std::string::npos);

  doc = base;
  doc["labels"] = {"a", "b"};
  CHECK(config_error([&] { execute(config_doc(doc)); }).find("labels") != std::string::npos);

  doc = base;
  doc["atlas"]["highlight"][0]["members"] = {"dog", "unicorn"};
  CHECK(config_error([&] { execute(config_doc(doc)); }).find("unicorn") != std::string::npos);

  CHECK(config_error([&] { load_config(testing::data_dir() / "missing.json"); }).find("cannot open") !=
        std::string::npos);
}

TEST_CASE("stage errors carry the stage name") {
  json doc = read_json(testing::data_dir() / "pipeline.json");
  doc["dataset"]["samples"] = 50;  // fewer rows than n * d
  const RunConfig cfg = config_doc(doc);
  try {
    execute(cfg);
    FAIL("expected a stage failure");
  } catch (const StageFailure& e) {
    CHECK(e.stage() == "nams");
    CHECK(std::string(e.what()).rfind("nams: ", 0) == 0);
  }
}

TEST_CASE("sweep over Minkowski degree gives one row per value") {
  testing::TempDir out("sweep_p");
  const std::string text = run_sweep(config_from("sweep_p.json"), out.path());
  CHECK(testing::read_file(out / "sweep.csv") == text);
  const auto rows = csv_rows(text);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0][0] == "/distances/0/p");
  CHECK(rows[1][0] == "1");
  CHECK(rows[2][0] == "2");
  CHECK(rows[3][0] == "5");
  CHECK(std::find(rows[0].begin(), rows[0].end(), "mean_rho:minkowski") != rows[0].end());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    CHECK(rows[r].size() == rows[0].size());
    for (std::size_t c = 1; c < rows[r].size(); ++c) {
      const double v = std::stod(rows[r][c]);
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
  // Distinct p should change at least one correlation.
  CHECK(rows[1] != rows[3]);
}

TEST_CASE("empty grid gives a single row") {
  json doc = read_json(testing::data_dir() / "sweep_p.json");
  doc["sweep"]["grid"] = json::object();
  testing::TempDir out("sweep_empty");
  const auto rows = csv_rows(run_sweep(config_doc(doc), out.path()));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].size() == rows[1].size());
  CHECK(rows[0][0].rfind("rho:", 0) == 0);

  doc.erase("sweep");
  CHECK(csv_rows(run_sweep(config_doc(doc), out.path())).size() == 2);
}

TEST_CASE("sweep rejects pointers that are not in the config") {
  json doc = read_json(testing::data_dir() / "sweep_p.json");
  doc["sweep"]["grid"] = {{"/sams/m", {1, 2}}};
  testing::TempDir out("sweep_bad");
  CHECK(config_error([&] { run_sweep(config_doc(doc), out.path()); }).find("sweep.grid./sams/m") !=
        std::string::npos);
}

TEST_CASE("sweep over ascent steps: EA disagreement does not grow with m") {
  testing::TempDir out("sweep_m");
  const auto rows = csv_rows(run_sweep(config_from("sweep_m.json"), out.path()));
  REQUIRE(rows.size() == 4);
  REQUIRE(rows[0].size() == 2);
  CHECK(rows[0][1] == "rmse_ea_pairwise");
  std::vector<double> rmse;
  for (std::size_t r = 1; r < 4; ++r) rmse.push_back(std::stod(rows[r][1]));
  CHECK(rmse[1] <= rmse[0]);
  CHECK(rmse[2] <= rmse[1]);
  CHECK(rmse[2] < 0.05);
}

TEST_CASE("CSV parsing") {
  const ActivationMatrix m = parse_activation_csv("a,b\n1,2\n3, 4\r\n\n5,6\n");
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 2);
  CHECK(m.labels() == std::vector<std::string>{"a", "b"});
  CHECK(m(2, 1) == 6.0);
  CHECK_FALSE(m.standardized());

  const ActivationMatrix unlabeled = parse_activation_csv("1,2,3\n4,5,6\n");
  CHECK(unlabeled.rows() == 2);
  CHECK(unlabeled.labels().empty());

  CHECK(testing::throws_kind([] { parse_activation_csv("1,2\n3\n"); }, ErrorKind::ParseError));
  CHECK(testing::throws_kind([] { parse_activation_csv("1,x\n"); }, ErrorKind::ParseError));
  CHECK(testing::throws_kind([] { parse_activation_csv("a,b\n"); }, ErrorKind::ParseError));
  CHECK(testing::throws_kind([] { parse_activation_csv("1,nan\n"); }, ErrorKind::ParseError));
}

TEST_CASE("standalone stages chain through stored artifacts") {
  testing::TempDir work("stages");
  std::ostringstream csv;
  csv << "u,v,w,x\n";
  Rng rng(5);
  for (int r = 0; r < 60; ++r) {
    const double base = rng.normal();
    csv << base << ',' << base + 0.1 * rng.normal() << ',' << rng.normal() << ',' << -base + 0.2 * rng.normal()
        << '\n';
  }
  testing::write_file(work / "acts.csv", csv.str());

  auto stage_cfg = [&](json doc) {
    doc["seed"] = 9;
    return make_config(std::move(doc), work.path());
  };

  run_stage("ingest", stage_cfg({{"input", {{"csv", "acts.csv"}}}}), work / "s");
  const ActivationMatrix raw = load_activation_matrix(work / "s/activations/manifest.json");
  CHECK(raw.rows() == 60);
  CHECK(raw.labels() == std::vector<std::string>{"u", "v", "w", "x"});
  CHECK_FALSE(fs::exists(work / "s/standardized"));

  run_stage("standardize", stage_cfg({{"input", {{"activations", "s/activations/manifest.json"}}}}), work / "s");
  CHECK(load_activation_matrix(work / "s/standardized/manifest.json").standardized());

  run_stage("nams",
            stage_cfg({{"input", {{"activations", "s/standardized/manifest.json"}}}, {"nams", {{"n", 3}, {"d", 20}}}}),
            work / "s");
  CHECK(load_ams_tensor(work / "s/ams_natural/manifest.json").signals_per_rep() == 3);

  run_stage("dist",
            stage_cfg({{"input", {{"ams_tensor", "s/ams_natural/manifest.json"}}},
                       {"distances", {{{"metric", "ea_pairwise"}}}}}),
            work / "s");
  const DistanceMatrix ea = load_distance_matrix(work / "s/distances/ea_pairwise_natural/manifest.json");
  CHECK(ea.labels() == raw.labels());
  // u and v are near copies; w is unrelated.
  CHECK(ea(0, 1) < ea(0, 2));

  run_stage("dist", stage_cfg({{"input", {{"activations", "s/standardized/manifest.json"}}},
                                {"distances", {{{"metric", "pearson"}}}}}),
            work / "s");

  run_stage("mantel",
            stage_cfg({{"mantel",
                        {{"a", "s/distances/ea_pairwise_natural/manifest.json"},
                         {"b", "s/distances/pearson/manifest.json"},
                         {"n_permutations", 23}}}}),
            work / "s");
  const json mantel = read_json(work / "s/mantel.json");
  CHECK(mantel.at("results").size() == 1);
  CHECK(mantel.at("results")[0].at("n_permutations") == 23);

  run_stage("outliers",
            stage_cfg({{"outliers",
                        {{"manifest", "s/distances/ea_pairwise_natural/manifest.json"},
                         {"k_neighbors", 2},
                         {"contamination", 0.25}}}}),
            work / "s");
  CHECK(read_json(work / "s/outliers.json").at("flagged").size() == 1);

  run_stage("atlas", stage_cfg({{"atlas", {{"manifest", "s/distances/pearson/manifest.json"}}}}), work / "s");
  CHECK(fs::exists(work / "s/atlas/atlas.svg"));
  CHECK(read_json(work / "s/atlas/atlas.json").at("source") == "pearson");

  const std::string err = config_error(
      [&] { run_stage("outliers", stage_cfg({{"outliers", {{"k_neighbors", 2}}}, {"distances", {{{"metric", "pearson"}}}},
                                             {"input", {{"csv", "acts.csv"}}}}), work / "t"); });
  CHECK(err.find("outliers.manifest") != std::string::npos);
  CHECK(testing::throws_kind([&] { run_stage("bogus", stage_cfg({}), work / "t"); }, ErrorKind::ConfigError));
  CHECK(config_error([&] { run_stage("baseline", stage_cfg({}), work / "t"); }).find("baselines") !=
        std::string::npos);
}

TEST_CASE("standalone harness stages") {
  testing::TempDir out("stages_h");
  const RunConfig cfg = config_from("pipeline.json");
  run_stage("sams", cfg, out.path());
  run_stage("baseline", cfg, out.path());
  run_stage("probe", cfg, out.path());
  CHECK(load_ams_tensor(out / "ams_synthetic/manifest.json").reps() == 4);
  CHECK(load_distance_matrix(out / "baselines/wu_palmer/manifest.json").size() == 4);
  CHECK(fs::exists(out / "probe_auc.csv"));
  CHECK_FALSE(fs::exists(out / "distances"));

  // A standalone stage reproduces the pipeline's bytes for the same seed.
  testing::TempDir full("stages_full");
  run_pipeline(cfg, full.path());
  CHECK(testing::read_file(out / "ams_synthetic/data.bin") == testing::read_file(full / "ams_synthetic/data.bin"));
  CHECK(testing::read_file(out / "probe_auc.csv") == testing::read_file(full / "probe_auc.csv"));
}

TEST_CASE("probe from stored matrices") {
  testing::TempDir work("probe_stored");
  Rng rng(1);
  const std::size_t n = 200;
  std::vector<double> clean(n * 2), dirty(n * 2);
  for (std::size_t r = 0; r < n; ++r) {
    clean[r * 2] = rng.normal();
    clean[r * 2 + 1] = rng.normal();
    dirty[r * 2] = rng.normal() + 3.0;
    dirty[r * 2 + 1] = rng.normal();
  }
  save(ActivationMatrix(n, 2, clean, {"hit", "miss"}), work / "clean");
  save(ActivationMatrix(n, 2, dirty, {"hit", "miss"}), work / "dirty");
  json doc = {{"seed", 0},
              {"probe", {{"clean", "clean/manifest.json"}, {"artifacted", "dirty/manifest.json"}}}};
  const PipelineState st = run_pipeline(make_config(doc, work.path()), work / "out");
  REQUIRE(st.probe);
  CHECK((*st.probe)[0] > 0.95);
  CHECK((*st.probe)[1] == doctest::Approx(0.5).epsilon(0.15));
  CHECK(testing::read_file(work / "out/probe_auc.csv").find("hit") != std::string::npos);
}
