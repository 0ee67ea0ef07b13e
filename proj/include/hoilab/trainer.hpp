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

// Mini-batch training of the linear head: class-balanced oversampling, Adam
// without weight decay, cosine learning rate with warm restarts.

#ifndef HOILAB_TRAINER_HPP_
#define HOILAB_TRAINER_HPP_

#include <cstdio>
#include <numbers>
#include <ostream>

#include "hoilab/classifier.hpp"
#include "hoilab/datagen.hpp"
#include "hoilab/eval.hpp"
#include "hoilab/losses.hpp"
#include "json.hpp"

namespace hoilab {

struct TrainConfig {
  std::string loss_name = "lse_sign";
  double gamma = 100.0;
  std::int64_t epochs = 10;
  std::int64_t batch_size = 32;
  double base_lr = 1e-3;
  std::int64_t restart_period_epochs = 5;
  std::int64_t min_samples_per_class = 40;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  bool normalize_features = false;
  double validation_fraction = 0.1;

  void validate() const {
    parse_loss_kind(loss_name);
    if (epochs < 0) throw Error("epochs must be >= 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (restart_period_epochs < 1) throw Error("restart_period_epochs must be >= 1");
    if (min_samples_per_class < 0) throw Error("min_samples_per_class must be >= 0");
    if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw Error("base_lr must be >= 0");
    if (!(gamma > 0.0)) throw Error("gamma must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw Error("Adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw Error("epsilon must be > 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw Error("validation_fraction must lie in [0, 1)");
    }
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"loss_name", c.loss_name},
          {"gamma", c.gamma},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},
          {"restart_period_epochs", c.restart_period_epochs},
          {"min_samples_per_class", c.min_samples_per_class},
          {"seed", c.seed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"focal_gamma", c.focal_gamma},
          {"focal_alpha", c.focal_alpha},
          {"normalize_features", c.normalize_features},
          {"validation_fraction", c.validation_fraction}};
}

// Reads the TrainConfig keys present in a flat JSON object; other keys are
// ignored so the same object can carry experiment settings.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  try {
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("loss_name", c.loss_name);
    take("gamma", c.gamma);
    take("epochs", c.epochs);
    take("batch_size", c.batch_size);
    take("base_lr", c.base_lr);
    take("restart_period_epochs", c.restart_period_epochs);
    take("min_samples_per_class", c.min_samples_per_class);
    take("seed", c.seed);
    take("beta1", c.beta1);
    take("beta2", c.beta2);
    take("epsilon", c.epsilon);
    take("focal_gamma", c.focal_gamma);
    take("focal_alpha", c.focal_alpha);
    take("normalize_features", c.normalize_features);
    take("validation_fraction", c.validation_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad training config: ") + e.what(), "parse_error");
  }
  c.validate();
  return c;
}

struct EpochPlan {
  std::vector<std::size_t> sample_indices;
};

// One pass over every sample, then for each class with
// 0 < positives < min_samples_per_class, uniformly re-drawn positives of that
// class until its planned positive count reaches the minimum. An appended
// sample counts toward every class it is positive for. The result is shuffled.
inline EpochPlan plan_epoch(std::span<const std::vector<std::size_t>> positives_of,
                            std::size_t num_classes, std::int64_t min_samples_per_class,
                            std::uint64_t seed) {
  if (min_samples_per_class < 0) throw Error("min_samples_per_class must be >= 0");
  std::vector<std::vector<std::size_t>> members(num_classes);
  std::vector<std::int64_t> planned(num_classes, 0);
  for (std::size_t n = 0; n < positives_of.size(); ++n) {
    for (std::size_t c : positives_of[n]) {
      if (c >= num_classes) throw Error("positive class out of range in sample " + std::to_string(n));
      members[c].push_back(n);
      ++planned[c];
    }
  }
  EpochPlan plan;
  plan.sample_indices.resize(positives_of.size());
  std::iota(plan.sample_indices.begin(), plan.sample_indices.end(), std::size_t{0});

  Rng rng(seed);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (members[c].empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, members[c].size() - 1);
    while (planned[c] < min_samples_per_class) {
      const std::size_t n = members[c][pick(rng)];
      plan.sample_indices.push_back(n);
      for (std::size_t k : positives_of[n]) ++planned[k];
    }
  }
  std::shuffle(plan.sample_indices.begin(), plan.sample_indices.end(), rng);
  return plan;
}

inline EpochPlan plan_epoch(std::span<const LabeledSample> samples, std::size_t num_classes,
                            std::int64_t min_samples_per_class, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> positives;
  positives.reserve(samples.size());
  for (const auto& s : samples) positives.push_back(s.positives());
  return plan_epoch(positives, num_classes, min_samples_per_class, seed);
}

// Cosine schedule restarted every restart_period_epochs:
//   lr = base_lr * (1 + cos(pi * t)) / 2, t = position within the period in [0, 1).
inline double lr_at(std::int64_t step, std::int64_t steps_per_epoch, const TrainConfig& cfg) {
  if (step < 0) throw Error("step must be >= 0");
  if (steps_per_epoch < 1) throw Error("steps_per_epoch must be >= 1");
  const std::int64_t period = steps_per_epoch * cfg.restart_period_epochs;
  const double t = static_cast<double>(step % period) / static_cast<double>(period);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// Adam state for one flat parameter block.
class Adam {
 public:
  Adam(double beta1, double beta2, double epsilon) : b1_(beta1), b2_(beta2), eps_(epsilon) {}

  // Applies one update to `params` given `grad`; `t` is the 1-based step.
  void step(std::span<double> params, std::span<const double> grad, double lr, std::int64_t t) {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }

 private:
  double b1_, b2_, eps_;
  Vector m_, v_;
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_map;
  double lr = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
};

inline void write_training_log_csv(std::ostream& out, const TrainingLog& log) {
  char buf[128];
  out << "epoch,mean_loss,val_mAP,lr\n";
  for (const auto& r : log.epochs) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,", static_cast<long long>(r.epoch), r.mean_loss);
    out << buf;
    if (r.val_map) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.val_map);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g\n", r.lr);
    out << buf;
  }
}

inline Vector prepare_features(std::span<const double> x, bool normalize) {
  Vector f(x.begin(), x.end());
  if (normalize) normalize_in_place(f);
  return f;
}

inline ScoredPredictions score_samples(const LinearClassifier& clf,
                                       std::span<const LabeledSample> samples,
                                       bool normalize_features = false) {
  ScoredPredictions preds;
  preds.scores = Matrix(samples.size(), clf.num_classes());
  preds.truth.reserve(samples.size());
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Vector s = forward(clf, prepare_features(samples[n].features, normalize_features));
    std::copy(s.begin(), s.end(), preds.scores.row(n).begin());
    preds.truth.push_back(samples[n].labels);
  }
  return preds;
}

// Deterministic split of `n` training indices into (fit, validation).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(
    std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(fit.begin(), fit.end());
  return {fit, val};
}

struct TrainResult {
  LinearClassifier classifier;
  TrainingLog log;
};

// Trains `clf` on the training split of `dataset` (minus a validation
// holdout). Randomness comes from cfg.seed through the "split" and "shuffle"
// substreams, so two runs with equal inputs are bit-identical.
inline TrainResult train(const SyntheticDataset& dataset, LinearClassifier clf,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.dim != clf.dim() || dataset.taxonomy.num_classes() != clf.num_classes()) {
    throw Error("dataset (C=" + std::to_string(dataset.taxonomy.num_classes()) +
                ", d=" + std::to_string(dataset.dim) + ") does not match classifier (C=" +
                std::to_string(clf.num_classes()) + ", d=" + std::to_string(clf.dim()) + ")");
  }
  clf.set_gamma(cfg.gamma);
  const std::size_t C = clf.num_classes();

  auto [fit_idx, val_idx] = holdout_split(dataset.train.size(), cfg.validation_fraction,
                                          substream_seed(cfg.seed, "split"));
  std::vector<LabeledSample> fit, val;
  for (auto i : fit_idx) fit.push_back(dataset.train[i]);
  for (auto i : val_idx) val.push_back(dataset.train[i]);
  const ClassStats fit_stats = stats_of(fit, C);
  std::vector<std::vector<std::size_t>> positives;
  for (const auto& s : fit) positives.push_back(s.positives());
  std::vector<Vector> features;
  for (const auto& s : fit) features.push_back(prepare_features(s.features, cfg.normalize_features));

  LossSpec loss;
  loss.kind = parse_loss_kind(cfg.loss_name);
  loss.focal_gamma = cfg.focal_gamma;
  loss.focal_alpha = cfg.focal_alpha;
  if (loss.kind == LossKind::kWeightedBce) loss.pos_weight = default_pos_weights(fit_stats, fit.size());

  Adam adam_w(cfg.beta1, cfg.beta2, cfg.epsilon), adam_b(cfg.beta1, cfg.beta2, cfg.epsilon);
  TrainResult result{std::move(clf), {}};
  LinearClassifier& model = result.classifier;
  std::int64_t adam_t = 0;
  const std::uint64_t shuffle_root = substream_seed(cfg.seed, "shuffle");

  for (std::int64_t epoch = 0; epoch < cfg.epochs && !fit.empty(); ++epoch) {
    const EpochPlan plan = plan_epoch(positives, C, cfg.min_samples_per_class,
                                      mix64(shuffle_root + static_cast<std::uint64_t>(epoch)));
    const auto B = static_cast<std::size_t>(cfg.batch_size);
    const auto steps = static_cast<std::int64_t>((plan.sample_indices.size() + B - 1) / B);
    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr_at(epoch * steps, steps, cfg);
    double loss_sum = 0.0;
    ParamGrad grad;
    for (std::int64_t b = 0; b < steps; ++b) {
      const std::size_t begin = static_cast<std::size_t>(b) * B;
      const std::size_t end = std::min(begin + B, plan.sample_indices.size());
      const double scale = 1.0 / static_cast<double>(end - begin);
      grad.dW = Matrix(C, model.dim());
      grad.db.assign(C, 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t n = plan.sample_indices[k];
        const Vector s = forward(model, features[n]);
        LossValueAndGrad lg;
        try {
          lg = loss(s, fit[n].labels);
        } catch (const Error& e) {
          throw Error("epoch " + std::to_string(epoch) + " step " + std::to_string(b) +
                          " (sample " + std::to_string(n) + "): " + e.what(),
                      "non_finite");
        }
        batch_loss += lg.value;
        accumulate_backward(model, features[n], lg.grad, grad, scale);
      }
      batch_loss *= scale;
      if (!std::isfinite(batch_loss)) {
        throw Error("loss is not finite at epoch " + std::to_string(epoch) + " step " +
                        std::to_string(b) + " (batch samples " + std::to_string(begin) + ".." +
                        std::to_string(end - 1) + ")",
                    "non_finite");
      }
      loss_sum += batch_loss * static_cast<double>(end - begin);
      const double lr = lr_at(epoch * steps + b, steps, cfg);
      ++adam_t;
      adam_w.step(model.weights().data(), grad.dW.data(), lr, adam_t);
      adam_b.step(model.bias(), grad.db, lr, adam_t);
    }
    record.mean_loss = loss_sum / static_cast<double>(plan.sample_indices.size());
    if (!val.empty()) {
      const auto preds = score_samples(model, val, cfg.normalize_features);
      const auto report = evaluate(preds, fit_stats);
      if (report.skipped_classes.size() < C) record.val_map = report.map_all;
    }
    result.log.epochs.push_back(record);
  }
  return result;
}

}  // namespace hoilab

#endif  // HOILAB_TRAINER_HPP_
