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

// hoilab: experiment runner.
//
//   hoilab gen-data     --config c.json --out dir [--seeds 0,1] [--override k=v]...
//   hoilab train        --config c.json --out dir [--seeds ...] [--override ...]
//   hoilab eval         --checkpoint ckpt.json --dataset dataset.json --out dir
//   hoilab ablate-loss  --config c.json --out dir
//   hoilab ablate-init  --config c.json --out dir
//   hoilab ablate-gamma --config c.json --out dir [--gammas 50,100,150,300,500]
//   hoilab compare      --config c.json --out dir      (arms taken from config)
//   hoilab detect-eval  --gt gt.json --detections det.json --checkpoint ckpt.json
//                       --scenes scenes.json --out dir [--iou-threshold 0.5]
//
// Exit status 0 on success. On failure a JSON object
// {"error": {"kind", "message", "subcommand"}} is written to stderr.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hoilab/experiment.hpp"

namespace {

using hoilab::Error;

template <typename T>
std::vector<T> parse_csv_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(item, &used)));
      } else {
        if (item.front() == '-') throw std::invalid_argument(item);
        out.push_back(static_cast<T>(std::stoull(item, &used)));
      }
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(std::string("bad ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw Error(std::string(what) + " list is empty");
  return out;
}

struct CommonOptions {
  std::string config;
  std::string out;
  std::string seeds;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool config_required = true) {
  auto* c = cmd->add_option("--config", opts.config, "Flat JSON experiment config");
  if (config_required) c->required();
  cmd->add_option("--out", opts.out, "Output directory")->required();
  cmd->add_option("--seeds", opts.seeds, "Comma-separated seeds (overrides config)");
  cmd->add_option("--override", opts.overrides, "key=value config override (repeatable)");
}

hoilab::ExperimentSpec resolve_spec(const CommonOptions& opts) {
  nlohmann::json config = opts.config.empty() ? nlohmann::json::object()
                                              : hoilab::read_json_file(opts.config);
  for (const auto& o : opts.overrides) hoilab::apply_override(config, o);
  if (!opts.seeds.empty()) config["seeds"] = parse_csv_list<std::uint64_t>(opts.seeds, "seed");
  return hoilab::spec_from_json(config);
}

void print_report(const hoilab::ComparisonReport& report) {
  for (const auto& arm : report.arms) {
    const auto v = hoilab::metric_values(arm, "map_all");
    std::printf("%-16s mAP mean %.4f  std %.4f  (n=%zu)\n", arm.name.c_str(), hoilab::mean(v),
                hoilab::stddev(v), v.size());
  }
}

void emit_error(const std::string& subcommand, const std::string& kind,
                const std::string& message) {
  nlohmann::json err = {{"error", {{"kind", kind}, {"message", message}, {"subcommand", subcommand}}}};
  std::cerr << err.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hoilab: long-tailed multi-label classification experiments"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, loss_opts, init_opts, gamma_opts, compare_opts;
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic datasets and embeddings");
  add_common(gen, gen_opts);
  auto* trn = app.add_subcommand("train", "Train and evaluate the configured arm per seed");
  add_common(trn, train_opts);
  auto* abl_loss = app.add_subcommand("ablate-loss", "Compare lse_sign, bce, weighted_bce, focal");
  add_common(abl_loss, loss_opts);
  auto* abl_init = app.add_subcommand("ablate-init", "Compare random and embedding initialization");
  add_common(abl_init, init_opts);
  auto* abl_gamma = app.add_subcommand("ablate-gamma", "Sweep the logit scale gamma");
  add_common(abl_gamma, gamma_opts);
  std::string gammas = "50,100,150,300,500";
  abl_gamma->add_option("--gammas", gammas, "Comma-separated gamma grid");
  auto* cmp = app.add_subcommand("compare", "Run the arms listed in the config");
  add_common(cmp, compare_opts);

  std::string eval_ckpt, eval_dataset, eval_out, eval_config;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint JSON")->required();
  ev->add_option("--dataset", eval_dataset, "dataset.json from gen-data")->required();
  ev->add_option("--out", eval_out, "Output directory")->required();
  ev->add_option("--config", eval_config, "Config (only normalize_features is used)");

  std::string det_gt, det_det, det_ckpt, det_scenes, det_out;
  double det_iou = 0.5;
  auto* det = app.add_subcommand("detect-eval", "Regional scoring and IoU-matched detection AP");
  det->add_option("--gt", det_gt, "Ground-truth pairs JSON")->required();
  det->add_option("--detections", det_det, "Detected pairs JSON")->required();
  det->add_option("--checkpoint", det_ckpt, "Checkpoint JSON")->required();
  det->add_option("--scenes", det_scenes, "Scenes JSON (tokens, projections, classes)")->required();
  det->add_option("--out", det_out, "Output directory")->required();
  det->add_option("--iou-threshold", det_iou, "IoU threshold for both boxes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const std::string sub = app.get_subcommands().empty() ? "" : app.get_subcommands()[0]->get_name();
    emit_error(sub, "usage", e.what());
    return 2;
  }

  const std::string sub = app.get_subcommands()[0]->get_name();
  try {
    if (*gen) {
      hoilab::generate_data(resolve_spec(gen_opts), gen_opts.out);
    } else if (*trn) {
      print_report(hoilab::run_experiment(resolve_spec(train_opts), train_opts.out));
    } else if (*abl_loss) {
      print_report(hoilab::ablate_loss(resolve_spec(loss_opts), loss_opts.out));
    } else if (*abl_init) {
      print_report(hoilab::ablate_init(resolve_spec(init_opts), init_opts.out));
    } else if (*abl_gamma) {
      const auto grid = parse_csv_list<double>(gammas, "gamma");
      print_report(hoilab::ablate_gamma(resolve_spec(gamma_opts), grid, gamma_opts.out).report);
    } else if (*cmp) {
      auto spec = resolve_spec(compare_opts);
      if (spec.arms.empty()) throw Error("compare needs an \"arms\" list in the config");
      print_report(hoilab::run_experiment(spec, compare_opts.out));
    } else if (*ev) {
      bool normalize = false;
      if (!eval_config.empty()) {
        normalize = hoilab::spec_from_json(hoilab::read_json_file(eval_config))
                        .train.normalize_features;
      }
      const auto dataset = hoilab::load_dataset(eval_dataset);
      const auto clf = hoilab::load_checkpoint(eval_ckpt);
      if (clf.num_classes() != dataset.taxonomy.num_classes() || clf.dim() != dataset.dim) {
        throw Error("checkpoint shape does not match dataset");
      }
      const auto report = hoilab::evaluate(
          hoilab::score_samples(clf, dataset.test, normalize), dataset.stats);
      hoilab::write_json_file(hoilab::fs::path(eval_out) / "eval.json",
                              hoilab::report_to_json(report));
      std::ostringstream csv;
      hoilab::write_report_csv(csv, report);
      hoilab::write_text_file(hoilab::fs::path(eval_out) / "eval.csv", csv.str());
      std::printf("mAP %.6f\n", report.map_all);
    } else if (*det) {
      const auto report =
          hoilab::detect_eval(det_gt, det_det, det_ckpt, det_scenes, det_out, det_iou);
      std::printf("full mAP %.6f\n", report.full_map);
    }
  } catch (const Error& e) {
    emit_error(sub, e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error(sub, "internal", e.what());
    return 1;
  }
  return 0;
}
