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

// Synthetic long-tailed multi-label data with compositional structure.
//
// Every verb and object gets a random direction in R^d. A class prototype is
// the normalized sum of its verb and object directions, so classes sharing a
// verb or an object are correlated. Samples pick a primary class from a Zipf
// law over class ranks, add co-labels that share the primary's object, and
// observe the mean of their positive prototypes plus isotropic noise.
//
// "Isotropic noise of scale sigma" always means N(0, sigma^2 / d) per
// coordinate, i.e. a perturbation of expected squared norm sigma^2, so the
// scales are comparable to the unit-norm prototypes at any d.

#ifndef HOILAB_DATAGEN_HPP_
#define HOILAB_DATAGEN_HPP_

#include <algorithm>
#include <fstream>
#include <string>

#include "hoilab/classifier.hpp"
#include "hoilab/common.hpp"
#include "hoilab/taxonomy.hpp"
#include "json.hpp"

namespace hoilab {

class SemanticModel {
 public:
  SemanticModel() = default;
  SemanticModel(ClassTaxonomy taxonomy, Matrix verb_vectors, Matrix object_vectors,
                double noise_scale)
      : taxonomy_(std::move(taxonomy)),
        verbs_(std::move(verb_vectors)),
        objects_(std::move(object_vectors)),
        noise_scale_(noise_scale) {
    prototypes_ = Matrix(taxonomy_.num_classes(), verbs_.cols());
    for (std::size_t c = 0; c < taxonomy_.num_classes(); ++c) {
      const auto& p = taxonomy_.pair(c);
      auto row = prototypes_.row(c);
      for (std::size_t k = 0; k < row.size(); ++k) {
        row[k] = verbs_(p.verb, k) + objects_(p.object, k);
      }
      normalize_in_place(row);
    }
  }

  const ClassTaxonomy& taxonomy() const noexcept { return taxonomy_; }
  std::size_t dim() const noexcept { return verbs_.cols(); }
  double noise_scale() const noexcept { return noise_scale_; }
  const Matrix& verb_vectors() const noexcept { return verbs_; }
  const Matrix& object_vectors() const noexcept { return objects_; }
  const Matrix& prototypes() const noexcept { return prototypes_; }
  std::span<const double> class_prototype(std::size_t c) const { return prototypes_.row(c); }

 private:
  ClassTaxonomy taxonomy_;
  Matrix verbs_;
  Matrix objects_;
  Matrix prototypes_;
  double noise_scale_ = 0.0;
};

struct LabeledSample {
  Vector features;
  SignLabels labels;

  std::vector<std::size_t> positives() const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < labels.size(); ++c) {
      if (labels[c] == 1) out.push_back(c);
    }
    return out;
  }
};

inline SignLabels labels_from_positives(std::size_t num_classes,
                                        std::span<const std::size_t> positives) {
  SignLabels y(num_classes, -1);
  for (std::size_t c : positives) {
    if (c >= num_classes) {
      throw Error("positive class " + std::to_string(c) + " out of range (C=" +
                  std::to_string(num_classes) + ")");
    }
    y[c] = 1;
  }
  return y;
}

inline ClassStats stats_of(std::span<const LabeledSample> samples, std::size_t num_classes) {
  std::vector<SignLabels> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.labels);
  return compute_stats(labels, num_classes);
}

struct SyntheticDataset {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  ClassTaxonomy taxonomy;
  ClassStats stats;  // over `train`
  double zipf_exponent = 0.0;
  std::uint64_t seed = 0;
  std::size_t dim = 0;
};

namespace detail {

inline void add_isotropic_noise(std::span<double> v, double scale, Rng& rng) {
  if (scale == 0.0) return;
  std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(v.size())));
  for (double& x : v) x += normal(rng);
}

}  // namespace detail

inline SemanticModel sample_semantic_model(const ClassTaxonomy& taxonomy, std::size_t dim,
                                           double noise_scale, std::uint64_t seed) {
  if (dim < 2) throw Error("semantic dimension must be >= 2, got " + std::to_string(dim));
  if (!(noise_scale >= 0.0)) throw Error("noise_scale must be nonnegative");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  Matrix verbs(taxonomy.verbs().size(), dim), objects(taxonomy.objects().size(), dim);
  for (double& x : verbs.data()) x = normal(rng);
  for (double& x : objects.data()) x = normal(rng);
  return SemanticModel(taxonomy, std::move(verbs), std::move(objects), noise_scale);
}

// Probability of each class under the Zipf law, indexed by class. `rank_of`
// maps class -> rank (0-based); weight is (rank + 1)^-exponent.
inline Vector zipf_class_weights(std::span<const std::size_t> rank_of, double exponent) {
  Vector w(rank_of.size());
  for (std::size_t c = 0; c < w.size(); ++c) {
    w[c] = std::pow(static_cast<double>(rank_of[c] + 1), -exponent);
  }
  return w;
}

// Draws a random class -> rank assignment, then train and test samples from
// the same process. Co-labels are other classes on the primary's object,
// drawn without replacement with probability proportional to their Zipf
// weight; the label count is uniform on [1, max_labels_per_sample] (capped by
// how many classes share the object).
inline SyntheticDataset generate_dataset(const SemanticModel& model, std::size_t n_train,
                                         std::size_t n_test, double zipf_exponent,
                                         std::size_t max_labels_per_sample, std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw Error("n_train and n_test must be >= 1");
  if (max_labels_per_sample < 1) throw Error("max_labels_per_sample must be >= 1");
  if (!(zipf_exponent >= 0.0)) throw Error("zipf_exponent must be nonnegative");
  const ClassTaxonomy& tax = model.taxonomy();
  const std::size_t C = tax.num_classes();
  if (C == 0) throw Error("taxonomy has no classes");

  Rng rng(seed);
  std::vector<std::size_t> rank_of(C);
  std::iota(rank_of.begin(), rank_of.end(), std::size_t{0});
  std::shuffle(rank_of.begin(), rank_of.end(), rng);
  const Vector weights = zipf_class_weights(rank_of, zipf_exponent);
  std::discrete_distribution<std::size_t> primary(weights.begin(), weights.end());

  std::vector<std::vector<std::size_t>> by_object(tax.objects().size());
  for (std::size_t c = 0; c < C; ++c) by_object[tax.pair(c).object].push_back(c);

  auto draw = [&]() {
    const std::size_t first = primary(rng);
    std::vector<std::size_t> positives{first};
    const std::size_t wanted =
        std::uniform_int_distribution<std::size_t>(1, max_labels_per_sample)(rng);
    std::vector<std::size_t> pool;
    for (std::size_t c : by_object[tax.pair(first).object]) {
      if (c != first) pool.push_back(c);
    }
    while (positives.size() < wanted && !pool.empty()) {
      Vector w;
      for (std::size_t c : pool) w.push_back(weights[c]);
      const std::size_t pick = std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
      positives.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    std::sort(positives.begin(), positives.end());

    LabeledSample s;
    s.features.assign(model.dim(), 0.0);
    for (std::size_t c : positives) {
      const auto proto = model.class_prototype(c);
      for (std::size_t k = 0; k < proto.size(); ++k) s.features[k] += proto[k];
    }
    for (double& x : s.features) x /= static_cast<double>(positives.size());
    detail::add_isotropic_noise(s.features, model.noise_scale(), rng);
    s.labels = labels_from_positives(C, positives);
    return s;
  };

  SyntheticDataset ds;
  ds.taxonomy = tax;
  ds.zipf_exponent = zipf_exponent;
  ds.seed = seed;
  ds.dim = model.dim();
  ds.train.reserve(n_train);
  for (std::size_t i = 0; i < n_train; ++i) ds.train.push_back(draw());
  ds.test.reserve(n_test);
  for (std::size_t i = 0; i < n_test; ++i) ds.test.push_back(draw());
  ds.stats = stats_of(ds.train, C);
  return ds;
}

// Row i = normalize(prototype_i + isotropic noise of scale embedding_noise).
inline EmbeddingMatrix synthesize_language_embeddings(const SemanticModel& model,
                                                      double embedding_noise,
                                                      std::uint64_t seed) {
  if (!(embedding_noise >= 0.0)) throw Error("embedding_noise must be nonnegative");
  Rng rng(seed);
  Matrix rows = model.prototypes();
  for (std::size_t c = 0; c < rows.rows(); ++c) {
    detail::add_isotropic_noise(rows.row(c), embedding_noise, rng);
  }
  return EmbeddingMatrix(std::move(rows));
}

// Least-squares slope of log(count) against log(rank) over classes with a
// nonzero count, ranks taken by descending count.
inline double rank_frequency_slope(const ClassStats& stats) {
  std::vector<std::int64_t> counts;
  for (auto c : stats.train_count()) {
    if (c > 0) counts.push_back(c);
  }
  std::sort(counts.rbegin(), counts.rend());
  if (counts.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(counts.size());
  for (std::size_t r = 0; r < counts.size(); ++r) {
    const double x = std::log(static_cast<double>(r + 1));
    const double y = std::log(static_cast<double>(counts[r]));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Dataset JSON: {taxonomy_ref, d, num_classes, zipf_exponent, seed,
// samples: [{split, features, positives}]}. `split` is "train" or "test".
inline nlohmann::json dataset_to_json(const SyntheticDataset& ds, const std::string& taxonomy_ref) {
  nlohmann::json samples = nlohmann::json::array();
  auto emit = [&](const std::vector<LabeledSample>& part, const char* split) {
    for (const auto& s : part) {
      samples.push_back({{"split", split}, {"features", s.features}, {"positives", s.positives()}});
    }
  };
  emit(ds.train, "train");
  emit(ds.test, "test");
  return {{"taxonomy_ref", taxonomy_ref},
          {"d", ds.dim},
          {"num_classes", ds.taxonomy.num_classes()},
          {"zipf_exponent", ds.zipf_exponent},
          {"seed", ds.seed},
          {"samples", std::move(samples)}};
}

inline SyntheticDataset dataset_from_json(const nlohmann::json& j, const ClassTaxonomy& taxonomy) {
  SyntheticDataset ds;
  ds.taxonomy = taxonomy;
  const std::size_t C = taxonomy.num_classes();
  try {
    ds.dim = j.at("d").get<std::size_t>();
    ds.zipf_exponent = j.value("zipf_exponent", 0.0);
    ds.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("num_classes") && j.at("num_classes").get<std::size_t>() != C) {
      throw Error("dataset has " + std::to_string(j.at("num_classes").get<std::size_t>()) +
                      " classes but taxonomy has " + std::to_string(C),
                  "parse_error");
    }
    const auto& samples = j.at("samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& rec = samples[i];
      try {
        LabeledSample s;
        s.features = rec.at("features").get<Vector>();
        if (s.features.size() != ds.dim) {
          throw Error("features have dimension " + std::to_string(s.features.size()) +
                          ", expected " + std::to_string(ds.dim),
                      "parse_error");
        }
        const auto positives = rec.at("positives").get<std::vector<std::size_t>>();
        s.labels = labels_from_positives(C, positives);
        const std::string split = rec.value("split", "train");
        if (split == "train") {
          ds.train.push_back(std::move(s));
        } else if (split == "test") {
          ds.test.push_back(std::move(s));
        } else {
          throw Error("unknown split '" + split + "'", "parse_error");
        }
      } catch (const Error& e) {
        throw e.with_context("sample " + std::to_string(i));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed dataset: ") + e.what(), "parse_error");
  }
  ds.stats = stats_of(ds.train, C);
  return ds;
}

}  // namespace hoilab

#endif  // HOILAB_DATAGEN_HPP_
