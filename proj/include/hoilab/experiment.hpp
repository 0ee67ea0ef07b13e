/*
 * Copyright 2026 The hoilab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Seeded multi-arm experiments: generate data, initialize, train, evaluate,
// persist everything, aggregate across seeds.
//
// Configuration is one flat JSON object. Dataset keys are shared by every
// arm of an experiment; each arm may override the remaining keys.

#ifndef HOILAB_EXPERIMENT_HPP_
#define HOILAB_EXPERIMENT_HPP_

#include <filesystem>
#include <fstream>
#include <set>

#include "hoilab/classifier.hpp"
#include "hoilab/datagen.hpp"
#include "hoilab/eval.hpp"
#include "hoilab/regional.hpp"
#include "hoilab/taxonomy.hpp"
#include "hoilab/trainer.hpp"
#include "json.hpp"

namespace hoilab {

namespace fs = std::filesystem;

struct DatasetConfig {
  std::size_t num_verbs = 10;
  std::size_t num_objects = 8;
  std::string taxonomy_path;  // overrides num_verbs/num_objects when set
  std::size_t d = 64;
  double noise_scale = 1.0;
  double zipf_exponent = 1.2;
  std::size_t n_train = 4000;
  std::size_t n_test = 2000;
  std::size_t max_labels_per_sample = 3;
};

inline const std::set<std::string>& dataset_keys() {
  static const std::set<std::string> keys{
      "num_verbs", "num_objects",   "taxonomy_path", "d",
      "noise_scale", "zipf_exponent", "n_train",     "n_test",
      "max_labels_per_sample"};
  return keys;
}

struct ArmSpec {
  std::string name;
  nlohmann::json overrides = nlohmann::json::object();
};

struct ExperimentSpec {
  DatasetConfig data;
  TrainConfig train;
  InitMode init_mode = InitMode::kEmbedding;
  RandomScheme init_scheme = RandomScheme::kXavier;
  std::string embedding_source = "synthetic";  // synthetic | file
  double embedding_noise = 0.3;
  std::string embedding_path;
  std::vector<std::uint64_t> seeds{0};
  std::vector<ArmSpec> arms;
  nlohmann::json resolved;  // flat config this spec was parsed from
};

// Defaults for every key, as a flat object.
inline nlohmann::json default_config() {
  ExperimentSpec s;
  nlohmann::json j = train_config_to_json(s.train);
  j.erase("seed");
  j["num_verbs"] = s.data.num_verbs;
  j["num_objects"] = s.data.num_objects;
  j["taxonomy_path"] = s.data.taxonomy_path;
  j["d"] = s.data.d;
  j["noise_scale"] = s.data.noise_scale;
  j["zipf_exponent"] = s.data.zipf_exponent;
  j["n_train"] = s.data.n_train;
  j["n_test"] = s.data.n_test;
  j["max_labels_per_sample"] = s.data.max_labels_per_sample;
  j["init_mode"] = "embedding";
  j["init_scheme"] = "xavier";
  j["embedding_source"] = s.embedding_source;
  j["embedding_noise"] = s.embedding_noise;
  j["embedding_path"] = s.embedding_path;
  j["seeds"] = s.seeds;
  return j;
}

inline std::set<std::string> known_keys() {
  std::set<std::string> keys;
  const nlohmann::json defaults = default_config();
  for (auto& [k, v] : defaults.items()) keys.insert(k);
  keys.insert("arms");
  return keys;
}

// Parses a flat config (missing keys take defaults). Unknown keys are errors.
inline ExperimentSpec spec_from_json(const nlohmann::json& user) {
  if (!user.is_object()) throw Error("config must be a JSON object", "parse_error");
  const auto keys = known_keys();
  for (auto& [k, v] : user.items()) {
    if (!keys.count(k)) throw Error("unknown config key '" + k + "'", "parse_error");
  }
  nlohmann::json j = default_config();
  for (auto& [k, v] : user.items()) j[k] = v;

  ExperimentSpec s;
  try {
    s.data.num_verbs = j.at("num_verbs").get<std::size_t>();
    s.data.num_objects = j.at("num_objects").get<std::size_t>();
    s.data.taxonomy_path = j.at("taxonomy_path").get<std::string>();
    s.data.d = j.at("d").get<std::size_t>();
    s.data.noise_scale = j.at("noise_scale").get<double>();
    s.data.zipf_exponent = j.at("zipf_exponent").get<double>();
    s.data.n_train = j.at("n_train").get<std::size_t>();
    s.data.n_test = j.at("n_test").get<std::size_t>();
    s.data.max_labels_per_sample = j.at("max_labels_per_sample").get<std::size_t>();
    s.init_mode = parse_init_mode(j.at("init_mode").get<std::string>());
    s.init_scheme = parse_random_scheme(j.at("init_scheme").get<std::string>());
    s.embedding_source = j.at("embedding_source").get<std::string>();
    s.embedding_noise = j.at("embedding_noise").get<double>();
    s.embedding_path = j.at("embedding_path").get<std::string>();
    s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("arms")) {
      for (const auto& arm : j.at("arms")) {
        ArmSpec a;
        a.name = arm.at("name").get<std::string>();
        for (auto& [k, v] : arm.items()) {
          if (k == "name") continue;
          if (!keys.count(k) || k == "arms" || k == "seeds") {
            throw Error("arm '" + a.name + "' sets invalid key '" + k + "'", "parse_error");
          }
          if (dataset_keys().count(k)) {
            throw Error("arm '" + a.name + "' overrides dataset key '" + k +
                            "'; arms must share the dataset",
                        "parse_error");
          }
          a.overrides[k] = v;
        }
        s.arms.push_back(std::move(a));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad config: ") + e.what(), "parse_error");
  }
  s.train = train_config_from_json(j);
  if (s.seeds.empty()) throw Error("config needs at least one seed");
  if (s.embedding_source != "synthetic" && s.embedding_source != "file") {
    throw Error("embedding_source must be synthetic or file");
  }
  if (s.embedding_source == "file" && s.embedding_path.empty()) {
    throw Error("embedding_source=file needs embedding_path");
  }
  if (!(s.embedding_noise >= 0.0)) throw Error("embedding_noise must be >= 0");
  std::set<std::string> names;
  for (const auto& a : s.arms) {
    if (a.name.empty() || a.name.find('/') != std::string::npos || !names.insert(a.name).second) {
      throw Error("arm names must be unique, non-empty and contain no '/'");
    }
  }
  s.resolved = j;
  return s;
}

// Parses `key=value`; the value is read as JSON when it parses, else as a string.
inline void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  config[key] = value;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path, "io_error");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path + ": " + e.what(), "parse_error");
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string(), "io_error");
  out << text;
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// Everything that is shared by the arms of one seed.
struct SeedWorld {
  std::uint64_t seed = 0;
  SemanticModel model;
  SyntheticDataset dataset;
  EmbeddingMatrix embeddings;
};

inline ClassTaxonomy taxonomy_for(const DatasetConfig& cfg) {
  if (!cfg.taxonomy_path.empty()) return load_taxonomy(cfg.taxonomy_path);
  return full_product_taxonomy(cfg.num_verbs, cfg.num_objects);
}

// Data and embeddings for one seed, all drawn from the "datagen" substream.
inline SeedWorld make_world(const ExperimentSpec& spec, std::uint64_t seed) {
  const std::uint64_t root = substream_seed(seed, "datagen");
  SeedWorld w;
  w.seed = seed;
  w.model = sample_semantic_model(taxonomy_for(spec.data), spec.data.d, spec.data.noise_scale,
                                  substream_seed(root, "semantic"));
  w.dataset = generate_dataset(w.model, spec.data.n_train, spec.data.n_test,
                               spec.data.zipf_exponent, spec.data.max_labels_per_sample,
                               substream_seed(root, "samples"));
  if (spec.embedding_source == "file") {
    w.embeddings = load_embeddings(spec.embedding_path, w.model.taxonomy().num_classes());
    if (w.embeddings.dim() != spec.data.d) {
      throw Error("embedding file dimension " + std::to_string(w.embeddings.dim()) +
                  " does not match d=" + std::to_string(spec.data.d));
    }
  } else {
    w.embeddings = synthesize_language_embeddings(w.model, spec.embedding_noise,
                                                  substream_seed(root, "embedding"));
  }
  return w;
}

inline LinearClassifier initial_classifier(const ExperimentSpec& spec, const SeedWorld& world) {
  if (spec.init_mode == InitMode::kEmbedding) {
    return init_from_embeddings(world.embeddings, spec.train.gamma);
  }
  return init_random(world.dataset.taxonomy.num_classes(), world.dataset.dim, spec.init_scheme,
                     substream_seed(world.seed, "init"), spec.train.gamma);
}

struct RunMetrics {
  std::uint64_t seed = 0;
  double map_all = 0.0;
  std::map<std::int64_t, std::optional<double>> map_few;
};

struct RunOutput {
  LinearClassifier classifier;
  TrainingLog log;
  EvalReport report;
};

// One (seed, arm) run; the arm spec's train.seed is set to the world seed.
inline RunOutput run_arm(const ExperimentSpec& arm, const SeedWorld& world) {
  TrainConfig cfg = arm.train;
  cfg.seed = world.seed;
  auto trained = train(world.dataset, initial_classifier(arm, world), cfg);
  auto report = evaluate(score_samples(trained.classifier, world.dataset.test,
                                       cfg.normalize_features),
                         world.dataset.stats);
  return {std::move(trained.classifier), std::move(trained.log), std::move(report)};
}

inline void persist_run(const fs::path& dir, const nlohmann::json& config, const RunOutput& run) {
  write_json_file(dir / "config.json", config);
  write_text_file(dir / "checkpoint.json", checkpoint_to_json(run.classifier).dump() + "\n");
  std::ostringstream log_csv, eval_csv;
  write_training_log_csv(log_csv, run.log);
  write_text_file(dir / "training_log.csv", log_csv.str());
  write_json_file(dir / "eval.json", report_to_json(run.report));
  write_report_csv(eval_csv, run.report);
  write_text_file(dir / "eval.csv", eval_csv.str());
}

struct ArmSummary {
  std::string name;
  std::vector<RunMetrics> runs;  // in seed order
};

struct ComparisonReport {
  std::vector<ArmSummary> arms;
};

inline std::vector<double> metric_values(const ArmSummary& arm, const std::string& metric) {
  std::vector<double> v;
  for (const auto& r : arm.runs) {
    if (metric == "map_all") {
      v.push_back(r.map_all);
    } else {
      const auto k = std::stoll(metric.substr(4));  // "few@k"
      if (auto it = r.map_few.find(k); it != r.map_few.end() && it->second) v.push_back(*it->second);
    }
  }
  return v;
}

// wins[a][b] = number of seeds where arm a beats arm b on `metric`. A seed
// where either value is missing counts for neither side.
inline std::vector<std::vector<int>> pairwise_wins(const ComparisonReport& report,
                                                   const std::string& metric) {
  const std::size_t A = report.arms.size();
  std::vector<std::vector<int>> wins(A, std::vector<int>(A, 0));
  auto value = [&](const RunMetrics& r) -> std::optional<double> {
    if (metric == "map_all") return r.map_all;
    const auto k = std::stoll(metric.substr(4));
    auto it = r.map_few.find(k);
    return it == r.map_few.end() ? std::nullopt : it->second;
  };
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t b = 0; b < A; ++b) {
      if (a == b) continue;
      const auto& ra = report.arms[a].runs;
      const auto& rb = report.arms[b].runs;
      for (std::size_t i = 0; i < std::min(ra.size(), rb.size()); ++i) {
        const auto va = value(ra[i]), vb = value(rb[i]);
        if (va && vb && *va > *vb) ++wins[a][b];
      }
    }
  }
  return wins;
}

inline const std::vector<std::string>& report_metrics() {
  static const std::vector<std::string> m{"map_all", "few@1", "few@5", "few@10"};
  return m;
}

inline nlohmann::json comparison_to_json(const ComparisonReport& report) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& arm : report.arms) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : arm.runs) {
      nlohmann::json few = nlohmann::json::object();
      for (const auto& [k, v] : r.map_few) few[std::to_string(k)] = optional_to_json(v);
      runs.push_back({{"seed", r.seed}, {"map_all", r.map_all}, {"map_few", few}});
    }
    nlohmann::json summary = nlohmann::json::object();
    for (const auto& m : report_metrics()) {
      const auto v = metric_values(arm, m);
      summary[m] = {{"n", v.size()},
                    {"mean", v.empty() ? nlohmann::json(nullptr) : nlohmann::json(mean(v))},
                    {"std", v.empty() ? nlohmann::json(nullptr) : nlohmann::json(stddev(v))}};
    }
    arms.push_back({{"name", arm.name}, {"runs", runs}, {"summary", summary}});
  }
  nlohmann::json wins = nlohmann::json::object();
  for (const auto& m : report_metrics()) {
    const auto w = pairwise_wins(report, m);
    nlohmann::json table = nlohmann::json::object();
    for (std::size_t a = 0; a < report.arms.size(); ++a) {
      for (std::size_t b = 0; b < report.arms.size(); ++b) {
        if (a != b) table[report.arms[a].name][report.arms[b].name] = w[a][b];
      }
    }
    wins[m] = table;
  }
  return {{"arms", arms}, {"wins", wins}};
}

inline void write_summary_csv(std::ostream& out, const ComparisonReport& report) {
  char buf[64];
  auto num = [&](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
  };
  out << "arm,seed,map_all,few@1,few@5,few@10\n";
  for (const auto& arm : report.arms) {
    for (const auto& r : arm.runs) {
      out << arm.name << ',' << r.seed << ',' << num(r.map_all);
      for (std::int64_t k : kFewShotLevels) {
        auto it = r.map_few.find(k);
        out << ',' << num(it == r.map_few.end() ? std::nullopt : it->second);
      }
      out << '\n';
    }
  }
}

// Resolved spec for one arm: base config with the arm's overrides applied.
inline ExperimentSpec arm_spec(const ExperimentSpec& base, const ArmSpec& arm) {
  nlohmann::json j = base.resolved;
  j.erase("arms");
  for (auto& [k, v] : arm.overrides.items()) j[k] = v;
  return spec_from_json(j);
}

// For every seed: build the shared world, then train and evaluate each arm.
// Writes <out>/seed_<k>/<arm>/{config.json, checkpoint.json,
// training_log.csv, eval.json, eval.csv} plus <out>/report.json and
// <out>/summary.csv. An empty arm list runs the base config as arm "run".
inline ComparisonReport run_experiment(const ExperimentSpec& spec, const fs::path& out_dir) {
  std::vector<ArmSpec> arms = spec.arms;
  if (arms.empty()) arms.push_back({"run", nlohmann::json::object()});
  std::vector<ExperimentSpec> arm_specs;
  for (const auto& a : arms) {
    try {
      arm_specs.push_back(arm_spec(spec, a));
    } catch (const Error& e) {
      throw e.with_context("arm " + a.name);
    }
  }

  ComparisonReport report;
  for (const auto& a : arms) report.arms.push_back({a.name, {}});
  for (std::uint64_t seed : spec.seeds) {
    SeedWorld world;
    try {
      world = make_world(spec, seed);
    } catch (const Error& e) {
      throw e.with_context("seed " + std::to_string(seed));
    }
    for (std::size_t i = 0; i < arms.size(); ++i) {
      RunOutput run;
      try {
        run = run_arm(arm_specs[i], world);
      } catch (const Error& e) {
        throw e.with_context("seed " + std::to_string(seed) + ", arm " + arms[i].name);
      }
      nlohmann::json snapshot = arm_specs[i].resolved;
      snapshot["seeds"] = {seed};
      persist_run(out_dir / ("seed_" + std::to_string(seed)) / arms[i].name, snapshot, run);
      report.arms[i].runs.push_back({seed, run.report.map_all, run.report.map_few});
    }
  }
  write_json_file(out_dir / "report.json", comparison_to_json(report));
  std::ostringstream csv;
  write_summary_csv(csv, report);
  write_text_file(out_dir / "summary.csv", csv.str());
  return report;
}

inline std::string gamma_arm_name(double gamma) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "gamma_%g", gamma);
  return buf;
}

inline const std::vector<double>& default_gamma_grid() {
  static const std::vector<double> grid{50, 100, 150, 300, 500};
  return grid;
}

struct GammaTable {
  std::vector<double> gammas;
  ComparisonReport report;  // arm i corresponds to gammas[i]
};

// One arm per gamma. Also writes gamma_table.csv (`gamma,seed,mAP`) and
// gamma_means.csv (`gamma,mean_mAP`).
inline GammaTable ablate_gamma(ExperimentSpec spec, const std::vector<double>& gammas,
                               const fs::path& out_dir) {
  if (gammas.empty()) throw Error("gamma grid is empty");
  for (double g : gammas) {
    if (!(g > 0.0) || !std::isfinite(g)) {
      throw Error("gamma grid contains non-positive value " + std::to_string(g));
    }
  }
  spec.arms.clear();
  for (double g : gammas) spec.arms.push_back({gamma_arm_name(g), {{"gamma", g}}});
  GammaTable table{gammas, run_experiment(spec, out_dir)};
  char buf[96];
  std::string rows = "gamma,seed,mAP\n", means = "gamma,mean_mAP\n";
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    for (const auto& r : table.report.arms[i].runs) {
      std::snprintf(buf, sizeof buf, "%g,%llu,%.17g\n", gammas[i],
                    static_cast<unsigned long long>(r.seed), r.map_all);
      rows += buf;
    }
    std::snprintf(buf, sizeof buf, "%g,%.17g\n", gammas[i],
                  mean(metric_values(table.report.arms[i], "map_all")));
    means += buf;
  }
  write_text_file(out_dir / "gamma_table.csv", rows);
  write_text_file(out_dir / "gamma_means.csv", means);
  return table;
}

inline ComparisonReport ablate_loss(ExperimentSpec spec, const fs::path& out_dir) {
  spec.arms.clear();
  for (const char* loss : {"lse_sign", "bce", "weighted_bce", "focal"}) {
    spec.arms.push_back({loss, {{"loss_name", loss}}});
  }
  return run_experiment(spec, out_dir);
}

inline ComparisonReport ablate_init(ExperimentSpec spec, const fs::path& out_dir) {
  spec.arms.clear();
  for (const char* mode : {"random", "embedding"}) {
    spec.arms.push_back({mode, {{"init_mode", mode}}});
  }
  return run_experiment(spec, out_dir);
}

// gen-data: per seed, taxonomy.tsv, dataset.json, embeddings.txt and the
// resolved config under <out>/seed_<k>/.
inline void generate_data(const ExperimentSpec& spec, const fs::path& out_dir) {
  for (std::uint64_t seed : spec.seeds) {
    const SeedWorld world = make_world(spec, seed);
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    std::ostringstream tax, emb;
    write_taxonomy(tax, world.dataset.taxonomy);
    write_text_file(dir / "taxonomy.tsv", tax.str());
    write_text_file(dir / "dataset.json",
                    dataset_to_json(world.dataset, "taxonomy.tsv").dump() + "\n");
    write_embeddings(emb, world.embeddings);
    write_text_file(dir / "embeddings.txt", emb.str());
    nlohmann::json snapshot = spec.resolved;
    snapshot["seeds"] = {seed};
    write_json_file(dir / "config.json", snapshot);
  }
}

// Loads a dataset.json, resolving its taxonomy_ref relative to the file.
inline SyntheticDataset load_dataset(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  try {
    const fs::path ref = j.at("taxonomy_ref").get<std::string>();
    const fs::path tax_path = ref.is_absolute() ? ref : fs::path(path).parent_path() / ref;
    return dataset_from_json(j, load_taxonomy(tax_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what(), "parse_error");
  } catch (const Error& e) {
    throw e.with_context(path);
  }
}

// detect-eval: pools and scores every detected pair against its scene tokens,
// matches against ground truth and writes <out>/detection.json.
inline DetectionReport detect_eval(const std::string& gt_path, const std::string& det_path,
                                   const std::string& checkpoint_path,
                                   const std::string& scenes_path, const fs::path& out_dir,
                                   double iou_threshold = 0.5) {
  SceneSet scenes;
  try {
    scenes = parse_scene_set(read_json_file(scenes_path));
  } catch (const Error& e) {
    throw e.with_context(scenes_path);
  }
  const LinearClassifier clf = load_checkpoint(checkpoint_path);
  auto records = [&](const std::string& path, bool gt) {
    try {
      return parse_detection_records(read_json_file(path), scenes.taxonomy, gt);
    } catch (const Error& e) {
      throw e.with_context(path);
    }
  };
  const auto detections = records(det_path, false);
  const auto ground_truth = records(gt_path, true);
  DetectionReport report = run_detection(scenes, clf, detections, ground_truth, iou_threshold);
  write_json_file(out_dir / "detection.json", detection_report_to_json(report));
  return report;
}

}  // namespace hoilab

#endif  // HOILAB_EXPERIMENT_HPP_
