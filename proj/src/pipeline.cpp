#include "reprscope/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "reprscope/distances.hpp"
#include "reprscope/error.hpp"
#include "reprscope/random.hpp"
#include "reprscope/semantics.hpp"

namespace reprscope {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Per-stage counters folded into the global seed.
enum : std::uint64_t { kDatasetStream = 11, kSamsStream = 12, kMantelStream = 13 };

[[noreturn]] void config_fail(const std::string& field, const std::string& message) {
  fail(ErrorKind::ConfigError, field + ": " + message);
}

// Parsed text gives unsigned integers; documents built in code may hold signed ones.
bool is_count(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

std::string join(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

// Typed access to one JSON object with its dotted path for error messages.
class Section {
 public:
  Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_->is_object()) config_fail(path_, "expected an object");
  }

  bool present() const { return node_ != nullptr; }
  bool has(const char* key) const { return node_ && node_->contains(key); }
  const std::string& path() const { return path_; }
  const json& raw(const char* key) const { return node_->at(key); }

  Section child(const char* key) const {
    return Section(has(key) ? &node_->at(key) : nullptr, join(path_, key));
  }

  std::size_t count(const char* key, std::optional<std::size_t> fallback = {}) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      config_fail(join(path_, key), "missing");
    }
    const json& v = node_->at(key);
    if (!is_count(v)) config_fail(join(path_, key), "expected a non-negative integer");
    return v.get<std::size_t>();
  }

  double number(const char* key, std::optional<double> fallback = {}) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      config_fail(join(path_, key), "missing");
    }
    const json& v = node_->at(key);
    if (!v.is_number() || !std::isfinite(v.get<double>())) config_fail(join(path_, key), "expected a finite number");
    return v.get<double>();
  }

  std::string text(const char* key, std::optional<std::string> fallback = {}) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      config_fail(join(path_, key), "missing");
    }
    const json& v = node_->at(key);
    if (!v.is_string()) config_fail(join(path_, key), "expected a string");
    return v.get<std::string>();
  }

  bool flag(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_->at(key);
    if (!v.is_boolean()) config_fail(join(path_, key), "expected true or false");
    return v.get<bool>();
  }

  std::vector<std::string> strings(const char* key) const {
    const json& v = node_->at(key);
    if (!v.is_array()) config_fail(join(path_, key), "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) config_fail(join(path_, key), "expected an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

 private:
  const json* node_;
  std::string path_;
};

Section root_section(const RunConfig& c) { return Section(&c.doc, ""); }

fs::path file_field(const RunConfig& c, const Section& s, const char* key) {
  const fs::path rel = s.text(key);
  const fs::path p = rel.is_absolute() ? rel : c.base_dir / rel;
  if (!fs::exists(p)) config_fail(join(s.path(), key), "file not found: " + p.string());
  return p;
}

const char* kInputKinds[] = {"layer", "activations", "ams_tensor", "csv"};

std::string input_kind(const Section& input) {
  std::string found;
  for (const char* k : kInputKinds) {
    if (input.has(k)) {
      if (!found.empty()) config_fail(input.path(), "give exactly one of layer, activations, ams_tensor, csv");
      found = k;
    }
  }
  if (found.empty()) config_fail(input.path(), "give one of layer, activations, ams_tensor, csv");
  return found;
}

struct DistanceSpec {
  std::string name;
  Metric metric = Metric::minkowski;
  double p = 1.0;
  std::optional<AmsKind> source;  // EA metrics only
};

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<DistanceSpec> distance_specs(const RunConfig& c) {
  std::vector<DistanceSpec> specs;
  if (!c.doc.contains("distances")) return specs;
  const json& list = c.doc.at("distances");
  if (!list.is_array() || list.empty()) config_fail("distances", "expected a non-empty array");
  const bool have_sams = c.doc.contains("sams");
  std::set<std::string> names;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Section s(&list[i], "distances[" + std::to_string(i) + "]");
    DistanceSpec spec;
    try {
      spec.metric = parse_metric(s.text("metric"));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      config_fail(join(s.path(), "metric"), e.what());
    }
    const bool ea = spec.metric == Metric::ea_pairwise || spec.metric == Metric::ea_layerwise;
    if (spec.metric == Metric::minkowski) {
      spec.p = s.number("p", 1.0);
      if (spec.p < 1.0) config_fail(join(s.path(), "p"), "Minkowski degree must be >= 1");
      spec.name = "minkowski_p" + format_number(spec.p);
    } else if (ea) {
      const std::string src = s.text("source", have_sams ? "synthetic" : "natural");
      if (src == "natural") {
        spec.source = AmsKind::natural;
      } else if (src == "synthetic") {
        spec.source = AmsKind::synthetic;
      } else {
        config_fail(join(s.path(), "source"), "expected natural or synthetic");
      }
      spec.name = metric_name(spec.metric) + "_" + src;
    } else {
      spec.name = metric_name(spec.metric);
    }
    spec.name = s.text("name", spec.name);
    if (!names.insert(spec.name).second) config_fail(join(s.path(), "name"), "duplicate distance name '" + spec.name + "'");
    specs.push_back(spec);
  }
  return specs;
}

bool needs_activations(const RunConfig& c) {
  if (c.doc.contains("nams") || c.doc.contains("dataset")) return true;
  if (c.doc.contains("probe") && c.doc.at("probe").contains("artifact")) return true;
  for (const auto& spec : distance_specs(c)) {
    if (!spec.source) return true;
  }
  return false;
}

void validate(const RunConfig& c) {
  const Section root = root_section(c);
  const Section input = root.child("input");
  if (input.present()) {
    const std::string kind = input_kind(input);
    file_field(c, input, kind.c_str());
  }
  if (root.has("labels")) root.strings("labels");

  const auto specs = distance_specs(c);
  if ((root.has("nams") || root.has("sams") || !specs.empty()) && !input.present()) {
    config_fail("input", "missing (needed by nams, sams and distances)");
  }
  if (root.has("sams") && input.present() && !input.has("layer")) {
    config_fail("sams", "synthetic AMS need input.layer");
  }

  const Section baselines = root.child("baselines");
  if (baselines.present()) {
    if (!baselines.has("taxonomy") && !baselines.has("embeddings")) {
      config_fail(baselines.path(), "give taxonomy and/or embeddings");
    }
    if (baselines.has("taxonomy")) file_field(c, baselines, "taxonomy");
    if (baselines.has("embeddings")) file_field(c, baselines, "embeddings");
    if (baselines.has("labels")) baselines.strings("labels");
    if (baselines.has("metrics")) {
      for (const auto& m : baselines.strings("metrics")) {
        try {
          const Baseline b = parse_baseline(m);
          if (b == Baseline::word2vec && !baselines.has("embeddings")) {
            config_fail(join(baselines.path(), "embeddings"), "missing (needed by word2vec)");
          }
          if (b != Baseline::word2vec && !baselines.has("taxonomy")) {
            config_fail(join(baselines.path(), "taxonomy"), "missing (needed by " + m + ")");
          }
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::ConfigError) throw;
          config_fail(join(baselines.path(), "metrics"), e.what());
        }
      }
    }
  }

  const Section mantel = root.child("mantel");
  if (mantel.present()) {
    mantel.count("n_permutations", 999);
    try {
      parse_correlation_kind(mantel.text("kind", "pearson"));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      config_fail(join(mantel.path(), "kind"), e.what());
    }
    if (mantel.has("a") || mantel.has("b")) {
      file_field(c, mantel, "a");
      file_field(c, mantel, "b");
    } else if (!baselines.present() || specs.empty()) {
      config_fail(mantel.path(), "needs distances and baselines, or manifests a and b");
    }
  }

  const Section outliers = root.child("outliers");
  if (outliers.present()) {
    try {
      parse_outlier_method(outliers.text("method", "lof"));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      config_fail(join(outliers.path(), "method"), e.what());
    }
    outliers.count("k_neighbors", 20);
    const double c_level = outliers.number("contamination", 0.01);
    if (!(c_level > 0.0 && c_level < 1.0)) config_fail(join(outliers.path(), "contamination"), "must lie in (0, 1)");
    if (outliers.has("manifest")) {
      file_field(c, outliers, "manifest");
    } else if (specs.empty()) {
      config_fail(outliers.path(), "needs distances or a manifest");
    }
  }

  const Section probe = root.child("probe");
  if (probe.present()) {
    if (probe.has("artifact")) {
      if (!input.present() || !input.has("layer")) config_fail(join(probe.path(), "artifact"), "needs input.layer");
      const json& a = probe.raw("artifact");
      if (!a.is_array()) config_fail(join(probe.path(), "artifact"), "expected an array of numbers");
      for (const auto& v : a) {
        if (!v.is_number()) config_fail(join(probe.path(), "artifact"), "expected an array of numbers");
      }
    } else {
      file_field(c, probe, "clean");
      file_field(c, probe, "artifacted");
    }
  }

  const Section atlas = root.child("atlas");
  if (atlas.present()) {
    if (atlas.has("manifest")) {
      file_field(c, atlas, "manifest");
    } else if (specs.empty()) {
      config_fail(atlas.path(), "needs distances or a manifest");
    }
    atlas.flag("highlight_outliers", true);
  }

  const Section dataset = root.child("dataset");
  if (dataset.present()) {
    dataset.count("samples", 1000);
    dataset.number("spread", 1.0);
  }
  const Section nams = root.child("nams");
  if (nams.present()) {
    nams.count("n");
    nams.count("d");
  }
  const Section sams = root.child("sams");
  if (sams.present()) {
    sams.count("n", 3);
    sams.count("m", 500);
    sams.number("step_size", 0.1);
    sams.number("init_spread", 1.0);
  }
}

std::vector<std::string> default_labels(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back("r" + std::to_string(i));
  return out;
}

ActivationMatrix relabel(const ActivationMatrix& m, const std::vector<std::string>& labels) {
  const auto v = m.values();
  return ActivationMatrix(m.rows(), m.cols(), std::vector<double>(v.begin(), v.end()), labels, m.standardized());
}

AmsTensor relabel(const AmsTensor& t, const std::vector<std::string>& labels) {
  const auto v = t.values();
  return AmsTensor(t.reps(), t.signals_per_rep(), std::vector<double>(v.begin(), v.end()), t.kind(), labels);
}

template <typename F>
void stage(const char* name, F&& body) {
  try {
    body();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    throw StageFailure(name, e.what());
  } catch (const json::exception& e) {
    throw StageFailure(name, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    throw StageFailure(name, e.what());
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + p.string());
}

std::vector<std::string> resolve_labels(const RunConfig& c, std::size_t k, const std::vector<std::string>& stored) {
  const Section root = root_section(c);
  auto check = [&](std::vector<std::string> labels, const std::string& field) {
    if (labels.size() != k) {
      config_fail(field, std::to_string(labels.size()) + " labels for " + std::to_string(k) + " representations");
    }
    return labels;
  };
  if (root.has("labels")) return check(root.strings("labels"), "labels");
  const Section baselines = root.child("baselines");
  if (baselines.has("labels")) return check(baselines.strings("labels"), "baselines.labels");
  if (!stored.empty()) return stored;
  return default_labels(k);
}

void load_input(const RunConfig& c, PipelineState& st) {
  const Section input = root_section(c).child("input");
  if (!input.present()) return;
  const std::string kind = input_kind(input);
  const fs::path path = file_field(c, input, kind.c_str());

  stage("input", [&] {
    if (kind == "layer") {
      st.layer = load_layer(path);
      st.labels = resolve_labels(c, st.layer->reps(), {});
    } else if (kind == "activations" || kind == "csv") {
      ActivationMatrix m = kind == "csv" ? parse_activation_csv(read_text(path)) : load_activation_matrix(path);
      st.labels = resolve_labels(c, m.cols(), m.labels());
      st.activations = relabel(m, st.labels);
    } else {
      AmsTensor t = load_ams_tensor(path);
      st.labels = resolve_labels(c, t.reps(), t.labels());
      (t.kind() == AmsKind::natural ? st.natural : st.synthetic) = relabel(t, st.labels);
    }
  });

  if (st.layer && needs_activations(c)) {
    const Section ds = root_section(c).child("dataset");
    const std::size_t samples = ds.count("samples", 1000);
    const double spread = ds.number("spread", 1.0);
    stage("dataset", [&] {
      auto [inputs, acts] = sample_dataset(*st.layer, samples, spread, derive_seed(c.seed, {kDatasetStream}));
      st.inputs = std::move(inputs);
      st.activations = relabel(acts, st.labels);
    });
  }
}

void run_standardize(PipelineState& st) {
  if (!st.activations) return;
  stage("standardize", [&] {
    st.standardized = st.activations->standardized() ? *st.activations : standardize(*st.activations);
  });
}

void run_nams(const RunConfig& c, PipelineState& st) {
  const Section s = root_section(c).child("nams");
  if (!s.present()) return;
  const std::size_t n = s.count("n");
  const std::size_t d = s.count("d");
  if (!st.standardized) config_fail("nams", "needs activations");
  stage("nams", [&] {
    st.nams = select_nams(*st.standardized, n, d);
    st.natural = relabel(nams_tensor(*st.standardized, *st.nams), st.labels);
  });
}

void run_sams(const RunConfig& c, PipelineState& st) {
  const Section s = root_section(c).child("sams");
  if (!s.present()) return;
  if (!st.layer) config_fail("sams", "needs input.layer");
  SamsConfig cfg;
  cfg.restarts = s.count("n", 3);
  cfg.steps = s.count("m", 500);
  cfg.step_size = s.number("step_size", 0.1);
  cfg.init_spread = s.number("init_spread", 1.0);
  cfg.seed = derive_seed(c.seed, {kSamsStream});
  stage("sams", [&] { st.synthetic = relabel(generate_sams(*st.layer, cfg).tensor, st.labels); });
}

void run_distances(const RunConfig& c, PipelineState& st) {
  for (const auto& spec : distance_specs(c)) {
    stage("distances", [&] {
      DistanceMatrix d;
      if (spec.source) {
        const auto& tensor = *spec.source == AmsKind::natural ? st.natural : st.synthetic;
        if (!tensor) {
          config_fail("distances", spec.name + " needs " +
                                       std::string(*spec.source == AmsKind::natural ? "nams" : "sams") + " output");
        }
        d = spec.metric == Metric::ea_pairwise ? ea_pairwise(*tensor) : ea_layerwise(*tensor);
      } else {
        if (!st.standardized) config_fail("distances", spec.name + " needs activations");
        if (spec.metric == Metric::minkowski) {
          d = minkowski(*st.standardized, spec.p);
        } else if (spec.metric == Metric::pearson) {
          d = pearson(*st.standardized);
        } else {
          d = spearman(*st.standardized);
        }
      }
      st.distances.emplace_back(spec.name, d.with_labels(st.labels));
    });
  }
}

void run_baselines(const RunConfig& c, PipelineState& st) {
  const Section s = root_section(c).child("baselines");
  if (!s.present()) return;
  std::vector<std::string> labels = s.has("labels") ? s.strings("labels") : st.labels;
  if (labels.empty()) config_fail("baselines.labels", "missing");
  std::vector<Baseline> metrics;
  if (s.has("metrics")) {
    for (const auto& m : s.strings("metrics")) metrics.push_back(parse_baseline(m));
  } else {
    if (s.has("taxonomy")) metrics = {Baseline::shortest_path, Baseline::leacock_chodorow, Baseline::wu_palmer};
    if (s.has("embeddings")) metrics.push_back(Baseline::word2vec);
  }
  const fs::path tax_path = s.has("taxonomy") ? file_field(c, s, "taxonomy") : fs::path();
  const fs::path emb_path = s.has("embeddings") ? file_field(c, s, "embeddings") : fs::path();
  stage("baselines", [&] {
    std::optional<Taxonomy> tax;
    std::optional<EmbeddingTable> table;
    if (!tax_path.empty()) tax = load_taxonomy(tax_path);
    if (!emb_path.empty()) table = load_embeddings(emb_path);
    for (Baseline b : metrics) {
      DistanceMatrix d = b == Baseline::word2vec ? baseline_matrix(*table, labels) : baseline_matrix(*tax, labels, b);
      st.baselines.emplace_back(baseline_name(b), std::move(d));
    }
  });
}

void run_mantel(const RunConfig& c, PipelineState& st) {
  const Section s = root_section(c).child("mantel");
  if (!s.present()) return;
  const std::size_t n_perm = s.count("n_permutations", 999);
  const CorrelationKind kind = parse_correlation_kind(s.text("kind", "pearson"));
  const std::uint64_t seed = derive_seed(c.seed, {kMantelStream});
  if (s.has("a")) {
    const fs::path a = file_field(c, s, "a");
    const fs::path b = file_field(c, s, "b");
    stage("mantel", [&] {
      const DistanceMatrix da = load_distance_matrix(a);
      const DistanceMatrix db = load_distance_matrix(b);
      st.mantel.push_back({da.metric_tag(), db.metric_tag(), mantel(da, db, n_perm, seed, kind)});
    });
    return;
  }
  stage("mantel", [&] {
    for (const auto& [dname, d] : st.distances) {
      for (const auto& [bname, b] : st.baselines) {
        st.mantel.push_back({dname, bname, mantel(d, b, n_perm, seed, kind)});
      }
    }
  });
}

std::pair<std::string, DistanceMatrix> pick_distance(const RunConfig& c, const Section& s, const PipelineState& st) {
  if (s.has("manifest")) {
    const fs::path p = file_field(c, s, "manifest");
    DistanceMatrix d = load_distance_matrix(p);
    return {d.metric_tag(), d};
  }
  const std::string name = s.text("distance", st.distances.empty() ? std::string() : st.distances.front().first);
  for (const auto& entry : st.distances) {
    if (entry.first == name) return entry;
  }
  config_fail(join(s.path(), "distance"), "no distance named '" + name + "'");
}

void run_outliers(const RunConfig& c, PipelineState& st) {
  const Section s = root_section(c).child("outliers");
  if (!s.present()) return;
  const OutlierMethod method = parse_outlier_method(s.text("method", "lof"));
  const std::size_t kn = s.count("k_neighbors", 20);
  const double contamination = s.number("contamination", 0.01);
  stage("outliers", [&] {
    const auto [name, d] = pick_distance(c, s, st);
    st.outliers = detect_outliers(d, method, kn, contamination);
  });
}

void run_probe(const RunConfig& c, PipelineState& st) {
  const Section s = root_section(c).child("probe");
  if (!s.present()) return;
  if (s.has("artifact")) {
    const auto artifact = s.raw("artifact").get<std::vector<double>>();
    stage("probe", [&] {
      const ActivationMatrix dirty = evaluate(*st.layer, inject_artifact(*st.inputs, artifact));
      st.probe = probe_auc(*st.activations, dirty);
    });
    return;
  }
  const fs::path clean = file_field(c, s, "clean");
  const fs::path dirty = file_field(c, s, "artifacted");
  stage("probe", [&] {
    const ActivationMatrix a = load_activation_matrix(clean);
    const ActivationMatrix b = load_activation_matrix(dirty);
    st.probe = probe_auc(a, b);
    if (st.labels.size() != a.cols()) st.labels = a.labels().empty() ? default_labels(a.cols()) : a.labels();
  });
}

void run_atlas(const RunConfig& c, PipelineState& st) {
  const Section s = root_section(c).child("atlas");
  if (!s.present()) return;
  stage("atlas", [&] {
    const auto [name, d] = pick_distance(c, s, st);
    st.atlas = classical_mds(d);
    st.atlas->source_tag = name;
    std::vector<std::string> labels = d.labels().empty() ? default_labels(d.size()) : d.labels();
    st.highlights.clear();
    if (s.has("highlight")) {
      const json& list = s.raw("highlight");
      if (!list.is_array()) config_fail("atlas.highlight", "expected an array");
      for (std::size_t h = 0; h < list.size(); ++h) {
        const Section hs(&list[h], "atlas.highlight[" + std::to_string(h) + "]");
        HighlightSet set{hs.text("name"), {}};
        for (const auto& m : hs.raw("members")) {
          if (is_count(m)) {
            set.members.push_back(m.get<std::size_t>());
          } else if (m.is_string()) {
            const auto it = std::find(labels.begin(), labels.end(), m.get<std::string>());
            if (it == labels.end()) config_fail(join(hs.path(), "members"), "unknown label '" + m.get<std::string>() + "'");
            set.members.push_back(static_cast<std::size_t>(it - labels.begin()));
          } else {
            config_fail(join(hs.path(), "members"), "expected indices or labels");
          }
        }
        for (std::size_t idx : set.members) {
          if (idx >= d.size()) config_fail(join(hs.path(), "members"), "index " + std::to_string(idx) + " out of range");
        }
        st.highlights.push_back(std::move(set));
      }
    }
    if (s.flag("highlight_outliers", true) && st.outliers && st.outliers->scores.size() == d.size()) {
      st.highlights.push_back({"outliers", st.outliers->flagged});
    }
    st.labels = labels;
  });
}

json nams_json(const NamsIndex& idx) {
  return {{"block_depth", idx.block_depth}, {"blocks", idx.blocks}, {"rows", idx.rows}};
}

json mantel_json(const PipelineState& st) {
  json results = json::array();
  for (const auto& e : st.mantel) {
    json r = to_json(e.result);
    r["distance"] = e.distance;
    r["baseline"] = e.baseline;
    results.push_back(std::move(r));
  }
  json means = json::object();
  std::vector<std::string> seen;
  for (const auto& e : st.mantel) {
    if (std::find(seen.begin(), seen.end(), e.distance) != seen.end()) continue;
    seen.push_back(e.distance);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& f : st.mantel) {
      if (f.distance == e.distance) {
        sum += f.result.rho;
        ++n;
      }
    }
    means[e.distance] = sum / static_cast<double>(n);
  }
  return {{"results", results}, {"mean_rho", means}};
}

enum Group : unsigned {
  kActivations = 1u << 0,
  kStandardized = 1u << 1,
  kNams = 1u << 2,
  kSams = 1u << 3,
  kDistances = 1u << 4,
  kBaselines = 1u << 5,
  kMantel = 1u << 6,
  kOutliers = 1u << 7,
  kProbe = 1u << 8,
  kAtlas = 1u << 9,
  kAllButRaw = ~kActivations,
};

void write_groups(const PipelineState& st, const RunConfig& c, const fs::path& out, unsigned groups) {
  fs::create_directories(out);
  stage("write", [&] {
    if ((groups & kActivations) && st.activations) save(*st.activations, out / "activations");
    if ((groups & kStandardized) && st.standardized) save(*st.standardized, out / "standardized");
    if ((groups & kNams) && st.nams) {
      write_text(out / "nams_index.json", nams_json(*st.nams).dump(2) + "\n");
      save(*st.natural, out / "ams_natural");
    }
    if ((groups & kSams) && st.synthetic) save(*st.synthetic, out / "ams_synthetic");
    if (groups & kDistances) {
      for (const auto& [name, d] : st.distances) save(d, out / "distances" / name);
    }
    if (groups & kBaselines) {
      for (const auto& [name, d] : st.baselines) save(d, out / "baselines" / name);
    }
    if ((groups & kMantel) && !st.mantel.empty()) write_text(out / "mantel.json", mantel_json(st).dump(2) + "\n");
    if ((groups & kOutliers) && st.outliers) {
      json j = to_json(*st.outliers);
      const Section s = root_section(c).child("outliers");
      if (s.present() && !s.has("manifest")) {
        j["distance"] = s.text("distance", st.distances.empty() ? std::string() : st.distances.front().first);
      }
      write_text(out / "outliers.json", j.dump(2) + "\n");
    }
    if ((groups & kProbe) && st.probe) {
      std::vector<std::string> labels = st.labels.size() == st.probe->size() ? st.labels : default_labels(st.probe->size());
      write_text(out / "probe_auc.csv", probe_auc_csv(*st.probe, labels));
    }
    if ((groups & kAtlas) && st.atlas) {
      export_atlas(*st.atlas, st.labels, st.highlights, out / "atlas");
      json j = {{"source", st.atlas->source_tag},
                {"stress", st.atlas->stress},
                {"eigenvalues", st.atlas->eigenvalues},
                {"zeroed_axes", st.atlas->zeroed_axes}};
      write_text(out / "atlas" / "atlas.json", j.dump(2) + "\n");
    }
    const json run = {{"version", kVersion}, {"seed", c.seed}, {"config", c.doc}};
    write_text(out / "run.json", run.dump(2) + "\n");
  });
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace

ActivationMatrix parse_activation_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> labels;
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cols == 0) {
      cols = cells.size();
      if (!parse_double(cells.front())) {
        labels = cells;
        continue;
      }
    }
    require(cells.size() == cols, ErrorKind::ParseError,
            "line " + std::to_string(line_no) + ": " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(cols));
    for (const auto& c : cells) {
      const auto v = parse_double(c);
      require(v.has_value(), ErrorKind::ParseError, "line " + std::to_string(line_no) + ": not a number '" + c + "'");
      data.push_back(*v);
    }
    ++rows;
  }
  require(rows > 0 && cols > 0, ErrorKind::ParseError, "CSV has no data rows");
  ActivationMatrix m(rows, cols, std::move(data), std::move(labels));
  if (auto bad = m.invariant_violation()) fail(ErrorKind::ParseError, *bad);
  return m;
}

const DistanceMatrix& PipelineState::distance(const std::string& name) const {
  for (const auto& [n, d] : distances) {
    if (n == name) return d;
  }
  fail(ErrorKind::InvalidArgument, "no distance named '" + name + "'");
}

std::vector<std::pair<std::string, double>> PipelineState::mean_rho() const {
  std::vector<std::pair<std::string, double>> out;
  const json means = mantel_json(*this).at("mean_rho");
  for (const auto& [name, d] : distances) {
    if (means.contains(name)) out.emplace_back(name, means.at(name).get<double>());
  }
  return out;
}

std::optional<double> PipelineState::ea_rmse() const {
  if (!natural || !synthetic) return std::nullopt;
  return matrix_rmse(ea_pairwise(*natural), ea_pairwise(*synthetic));
}

RunConfig make_config(json doc, fs::path base_dir, std::optional<std::uint64_t> seed_override) {
  if (!doc.is_object()) config_fail("<root>", "expected a JSON object");
  RunConfig c;
  c.base_dir = std::move(base_dir);
  if (seed_override) {
    doc["seed"] = *seed_override;
  }
  if (!doc.contains("seed")) config_fail("seed", "missing (the seed is mandatory)");
  if (!is_count(doc.at("seed"))) config_fail("seed", "expected a non-negative integer");
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.doc = std::move(doc);
  validate(c);
  return c;
}

RunConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_fail("<config>", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    config_fail("<config>", std::string("invalid JSON: ") + e.what());
  }
  return make_config(std::move(doc), fs::absolute(path).parent_path(), seed_override);
}

PipelineState execute(const RunConfig& config) {
  PipelineState st;
  load_input(config, st);
  run_standardize(st);
  run_nams(config, st);
  run_sams(config, st);
  run_distances(config, st);
  run_baselines(config, st);
  run_mantel(config, st);
  run_outliers(config, st);
  run_probe(config, st);
  run_atlas(config, st);
  return st;
}

void write_outputs(const PipelineState& state, const RunConfig& config, const fs::path& out_dir) {
  write_groups(state, config, out_dir, kAllButRaw);
}

PipelineState run_pipeline(const RunConfig& config, const fs::path& out_dir) {
  PipelineState st = execute(config);
  write_outputs(st, config, out_dir);
  return st;
}

std::string run_sweep(const RunConfig& config, const fs::path& out_dir) {
  const Section sweep = root_section(config).child("sweep");
  std::vector<std::pair<std::string, std::vector<json>>> grid;
  if (sweep.has("grid")) {
    const json& g = sweep.raw("grid");
    if (!g.is_object()) config_fail("sweep.grid", "expected an object of JSON pointer -> values");
    for (const auto& [key, values] : g.items()) {
      const std::string field = "sweep.grid." + key;
      json::json_pointer ptr;
      try {
        ptr = json::json_pointer(key);
      } catch (const json::exception&) {
        config_fail(field, "not a JSON pointer");
      }
      if (!config.doc.contains(ptr)) config_fail(field, "no such parameter in the config");
      if (!values.is_array() || values.empty()) config_fail(field, "expected a non-empty array");
      grid.emplace_back(key, std::vector<json>(values.begin(), values.end()));
    }
  }
  std::vector<std::uint64_t> seeds{config.seed};
  if (sweep.has("seeds")) {
    const json& s = sweep.raw("seeds");
    if (!s.is_array() || s.empty()) config_fail("sweep.seeds", "expected a non-empty array");
    seeds.clear();
    for (const auto& v : s) {
      if (!is_count(v)) config_fail("sweep.seeds", "expected non-negative integers");
      seeds.push_back(v.get<std::uint64_t>());
    }
  }

  std::size_t points = 1;
  for (const auto& g : grid) points *= g.second.size();

  std::vector<std::string> columns;
  std::vector<std::map<std::string, double>> results(points);
  for (std::size_t pt = 0; pt < points; ++pt) {
    json doc = config.doc;
    doc.erase("sweep");
    // Last grid key varies fastest.
    std::size_t rem = pt;
    for (std::size_t g = grid.size(); g-- > 0;) {
      doc[json::json_pointer(grid[g].first)] = grid[g].second[rem % grid[g].second.size()];
      rem /= grid[g].second.size();
    }
    std::map<std::string, double> sums;
    std::map<std::string, std::size_t> counts;
    for (std::uint64_t seed : seeds) {
      const RunConfig point = make_config(doc, config.base_dir, seed);
      const PipelineState st = execute(point);
      std::vector<std::pair<std::string, double>> metrics;
      for (const auto& e : st.mantel) metrics.emplace_back("rho:" + e.distance + ":" + e.baseline, e.result.rho);
      for (const auto& [name, v] : st.mean_rho()) metrics.emplace_back("mean_rho:" + name, v);
      if (auto r = st.ea_rmse()) metrics.emplace_back("rmse_ea_pairwise", *r);
      for (const auto& [name, v] : metrics) {
        if (std::find(columns.begin(), columns.end(), name) == columns.end()) columns.push_back(name);
        sums[name] += v;
        counts[name] += 1;
      }
    }
    for (const auto& [name, s] : sums) results[pt][name] = s / static_cast<double>(counts[name]);
  }

  std::ostringstream csv;
  for (std::size_t g = 0; g < grid.size(); ++g) csv << (g ? "," : "") << grid[g].first;
  for (std::size_t cidx = 0; cidx < columns.size(); ++cidx) csv << ((grid.empty() && cidx == 0) ? "" : ",") << columns[cidx];
  csv << '\n';
  for (std::size_t pt = 0; pt < points; ++pt) {
    std::size_t rem = pt;
    std::vector<std::string> params(grid.size());
    for (std::size_t g = grid.size(); g-- > 0;) {
      params[g] = grid[g].second[rem % grid[g].second.size()].dump();
      rem /= grid[g].second.size();
    }
    bool first = true;
    for (const auto& p : params) {
      csv << (first ? "" : ",") << p;
      first = false;
    }
    for (const auto& col : columns) {
      csv << (first ? "" : ",");
      first = false;
      const auto it = results[pt].find(col);
      if (it != results[pt].end()) csv << format_number(it->second);
    }
    csv << '\n';
  }
  const std::string text = csv.str();
  stage("write", [&] {
    write_text(out_dir / "sweep.csv", text);
    const json run = {{"version", kVersion}, {"seed", config.seed}, {"config", config.doc}};
    write_text(out_dir / "run.json", run.dump(2) + "\n");
  });
  return text;
}

std::vector<std::string> stage_names() {
  return {"ingest", "standardize", "nams", "sams", "dist", "baseline", "mantel", "outliers", "probe", "atlas"};
}

void run_stage(const std::string& name, const RunConfig& config, const fs::path& out_dir) {
  struct Plan {
    const char* stage;
    std::vector<const char*> sections;
    const char* required;
    unsigned groups;
  };
  static const std::vector<Plan> plans = {
      {"ingest", {"input"}, "input", kActivations},
      {"standardize", {"input", "dataset"}, "input", kStandardized},
      {"nams", {"input", "dataset", "nams"}, "nams", kNams},
      {"sams", {"input", "sams"}, "sams", kSams},
      {"dist", {"input", "dataset", "nams", "sams", "distances"}, "distances", kDistances},
      {"baseline", {"baselines"}, "baselines", kBaselines},
      {"mantel", {"mantel"}, "mantel", kMantel},
      {"outliers", {"outliers"}, "outliers", kOutliers},
      {"probe", {"input", "dataset", "probe"}, "probe", kProbe},
      {"atlas", {"atlas"}, "atlas", kAtlas},
  };
  const auto it = std::find_if(plans.begin(), plans.end(), [&](const Plan& p) { return name == p.stage; });
  require(it != plans.end(), ErrorKind::ConfigError, "unknown stage '" + name + "'");
  if (!config.doc.contains(it->required)) config_fail(it->required, "missing (needed by " + name + ")");

  json doc = json::object();
  doc["seed"] = config.seed;
  if (config.doc.contains("labels")) {
    doc["labels"] = config.doc.at("labels");
  } else if (config.doc.contains("baselines") && config.doc.at("baselines").contains("labels")) {
    doc["labels"] = config.doc.at("baselines").at("labels");
  }
  for (const char* s : it->sections) {
    if (config.doc.contains(s)) doc[s] = config.doc.at(s);
  }
  // Standalone stages read distances from manifests rather than from upstream stages.
  if ((name == "outliers" || name == "atlas") && !doc.at(name).contains("manifest")) {
    config_fail(name + ".manifest", "missing (needed when the stage runs on its own)");
  }
  if (name == "mantel" && !doc.at("mantel").contains("a")) {
    config_fail("mantel.a", "missing (needed when the stage runs on its own)");
  }
  if (name == "ingest" && !doc.at("input").contains("csv")) config_fail("input.csv", "missing (needed by ingest)");
  if ((name == "standardize" || name == "nams") && doc.at("input").contains("layer") && !doc.contains("dataset")) {
    doc["dataset"] = json::object();
  }
  const RunConfig reduced = make_config(std::move(doc), config.base_dir);
  const PipelineState st = execute(reduced);
  write_groups(st, reduced, out_dir, it->groups);
}

}  // namespace reprscope
