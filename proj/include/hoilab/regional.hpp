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

// Region-restricted classification: a human/object box pair becomes an
// additive attention mask that limits what the CLS token can attend to, the
// pooled CLS output is scored by the classification head, and scored pairs
// are evaluated with IoU-matched per-class AP.

#ifndef HOILAB_REGIONAL_HPP_
#define HOILAB_REGIONAL_HPP_

#include <limits>
#include <optional>
#include <string>

#include "hoilab/classifier.hpp"
#include "hoilab/common.hpp"
#include "hoilab/eval.hpp"
#include "hoilab/taxonomy.hpp"
#include "json.hpp"

namespace hoilab {

// Normalized image coordinates, x0 < x1 and y0 < y1, inside [0, 1]^2.
struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  double area() const { return (x1 - x0) * (y1 - y0); }

  void validate() const {
    const bool finite = std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) &&
                        std::isfinite(y1);
    if (!finite || x0 < 0.0 || y0 < 0.0 || x1 > 1.0 || y1 > 1.0 || !(x0 < x1) || !(y0 < y1)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "invalid box (%g, %g, %g, %g)", x0, y0, x1, y1);
      throw Error(buf);
    }
  }

  friend bool operator==(const Box&, const Box&) = default;
};

inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// Stand-in for -infinity in the additive mask. Adding any finite logit of
// ordinary magnitude leaves it at (or beyond) the most negative double, and
// exp() of it relative to an unmasked maximum underflows to exactly 0.
inline constexpr double kMaskSentinel = std::numeric_limits<double>::lowest();

// Token 0 is CLS; patch (row r, column c) of the P x P grid is token 1 + r*P + c.
inline std::size_t patch_token(std::size_t r, std::size_t c, std::size_t P) {
  return 1 + r * P + c;
}

struct AttentionMask {
  std::size_t grid_size = 0;
  Matrix phi;  // (P^2 + 1) x (P^2 + 1); only row 0 (CLS) is ever nonzero

  std::size_t num_tokens() const { return phi.rows(); }
  bool patch_included(std::size_t token) const { return phi(0, token) == 0.0; }
};

// True when the cell [c/P, (c+1)/P) x [r/P, (r+1)/P) overlaps `box` with
// positive area.
inline bool cell_overlaps(const Box& box, std::size_t r, std::size_t c, std::size_t P) {
  const double p = static_cast<double>(P);
  const double cx0 = static_cast<double>(c) / p, cx1 = static_cast<double>(c + 1) / p;
  const double cy0 = static_cast<double>(r) / p, cy1 = static_cast<double>(r + 1) / p;
  return std::min(box.x1, cx1) - std::max(box.x0, cx0) > 0.0 &&
         std::min(box.y1, cy1) - std::max(box.y0, cy0) > 0.0;
}

inline AttentionMask boxes_to_mask(const Box& human, const Box& object, std::size_t P) {
  if (P < 1) throw Error("grid size must be >= 1");
  human.validate();
  object.validate();
  const std::size_t n = P * P + 1;
  AttentionMask mask{P, Matrix(n, n, 0.0)};
  bool any = false;
  for (std::size_t r = 0; r < P; ++r) {
    for (std::size_t c = 0; c < P; ++c) {
      const bool inside = cell_overlaps(human, r, c, P) || cell_overlaps(object, r, c, P);
      any |= inside;
      if (!inside) mask.phi(0, patch_token(r, c, P)) = kMaskSentinel;
    }
  }
  if (!any) {
    // Degenerate region: keep the patch containing the union's center.
    const double cx = 0.5 * (std::min(human.x0, object.x0) + std::max(human.x1, object.x1));
    const double cy = 0.5 * (std::min(human.y0, object.y0) + std::max(human.y1, object.y1));
    const auto clamp_cell = [P](double v) {
      return std::min(P - 1, static_cast<std::size_t>(v * static_cast<double>(P)));
    };
    mask.phi(0, patch_token(clamp_cell(cy), clamp_cell(cx), P)) = 0.0;
  }
  return mask;
}

// Single-head projections: tokens (n x d) map to Q = T*query, K = T*key
// (both n x d_k) and V = T*value (n x d_v).
struct AttentionParams {
  Matrix query;
  Matrix key;
  Matrix value;
};

namespace detail {

inline Vector project_row(std::span<const double> token, const Matrix& proj) {
  Vector out(proj.cols(), 0.0);
  for (std::size_t k = 0; k < token.size(); ++k) {
    const double t = token[k];
    const auto prow = proj.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += t * prow[j];
  }
  return out;
}

inline void check_attention_shapes(const Matrix& tokens, const AttentionMask& mask,
                                   const AttentionParams& params, std::size_t d_k) {
  if (d_k == 0) throw Error("d_k must be > 0");
  if (tokens.rows() != mask.num_tokens()) {
    throw Error("token matrix has " + std::to_string(tokens.rows()) + " rows, mask expects " +
                std::to_string(mask.num_tokens()));
  }
  const std::size_t d = tokens.cols();
  if (params.query.rows() != d || params.key.rows() != d || params.value.rows() != d) {
    throw Error("projection matrices must have " + std::to_string(d) + " rows");
  }
  if (params.query.cols() != d_k || params.key.cols() != d_k) {
    throw Error("query/key projections must have d_k=" + std::to_string(d_k) + " columns");
  }
}

}  // namespace detail

// Post-softmax attention weights of row `query_row` over all tokens, with the
// mask added before the softmax. Masked entries come out exactly 0.
inline Vector attention_weights(const Matrix& tokens, const AttentionMask& mask,
                                const AttentionParams& params, std::size_t d_k,
                                std::size_t query_row = 0) {
  detail::check_attention_shapes(tokens, mask, params, d_k);
  const std::size_t n = tokens.rows();
  const Vector q = detail::project_row(tokens.row(query_row), params.query);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
  Vector logits(n);
  bool any_open = false;
  for (std::size_t j = 0; j < n; ++j) {
    const Vector k = detail::project_row(tokens.row(j), params.key);
    const double phi = mask.phi(query_row, j);
    any_open |= phi == 0.0;
    logits[j] = phi + dot(q, k) * inv_sqrt_dk;
  }
  if (!any_open) {
    throw Error("every key is masked for query row " + std::to_string(query_row));
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    z += l;
  }
  for (double& w : logits) w /= z;
  return logits;
}

// softmax(phi + Q K^T / sqrt(d_k)) V restricted to the CLS row.
inline Vector masked_attention_pool(const Matrix& tokens, const AttentionMask& mask,
                                    const AttentionParams& params, std::size_t d_k) {
  const Vector w = attention_weights(tokens, mask, params, d_k, 0);
  Vector out(params.value.cols(), 0.0);
  for (std::size_t j = 0; j < tokens.rows(); ++j) {
    if (w[j] == 0.0) continue;
    const Vector v = detail::project_row(tokens.row(j), params.value);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[j] * v[k];
  }
  return out;
}

// Per-class scores for one box pair: sigmoid of the head's logits times the
// detector's object probability on classes with that object, 0 elsewhere.
inline Vector score_pair(const LinearClassifier& clf, std::span<const double> pooled,
                         const std::string& object_class, double object_probability,
                         const ClassTaxonomy& taxonomy) {
  if (!(object_probability >= 0.0 && object_probability <= 1.0)) {
    throw Error("object probability must lie in [0, 1]");
  }
  if (taxonomy.num_classes() != clf.num_classes()) {
    throw Error("taxonomy and classifier disagree on the class count");
  }
  const std::size_t object = taxonomy.object_index(object_class);
  const Vector logits = forward(clf, pooled);
  Vector scores(clf.num_classes(), 0.0);
  for (std::size_t c : taxonomy.classes_with_object(object)) {
    scores[c] = sigmoid(logits[c]) * object_probability;
  }
  return scores;
}

struct ScoredPair {
  std::string scene_id;
  Box human;
  Box object;
  double score = 0.0;
};

struct GroundTruthPair {
  std::string scene_id;
  Box human;
  Box object;
};

// Ranks predictions by descending score (ties by input order) and marks each
// as a true positive if it matches a still-unmatched ground-truth pair of the
// same scene with IoU >= threshold on both boxes. Among eligible pairs the one
// with the largest min(IoU_human, IoU_object) wins, ties to the lower index.
inline std::vector<char> match_detections(std::span<const ScoredPair> predictions,
                                          std::span<const GroundTruthPair> ground_truth,
                                          double iou_threshold) {
  Vector scores;
  for (const auto& p : predictions) scores.push_back(p.score);
  const auto order = rank_order(scores);
  std::vector<char> matched(ground_truth.size(), 0), hits(predictions.size(), 0);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const ScoredPair& p = predictions[order[r]];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      const GroundTruthPair& gt = ground_truth[g];
      if (matched[g] || gt.scene_id != p.scene_id) continue;
      const double ih = iou(p.human, gt.human), io = iou(p.object, gt.object);
      if (ih < iou_threshold || io < iou_threshold) continue;
      const double m = std::min(ih, io);
      if (m > best_iou) {
        best_iou = m;
        best = g;
      }
    }
    if (best) {
      matched[*best] = 1;
      hits[r] = 1;
    }
  }
  return hits;
}

struct DetectionReport {
  std::vector<std::optional<double>> per_class_ap;  // nullopt: class has no ground truth
  double full_map = 0.0;
  std::optional<double> rare_map;
  std::optional<double> nonrare_map;
};

inline constexpr std::int64_t kRareThreshold = 10;  // rare: fewer than 10 training samples

inline DetectionReport detection_ap(const std::vector<std::vector<ScoredPair>>& predictions,
                                    const std::vector<std::vector<GroundTruthPair>>& ground_truth,
                                    const ClassStats& stats, double iou_threshold = 0.5) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw Error("iou_threshold must lie in (0, 1)");
  }
  const std::size_t C = stats.num_classes();
  if (predictions.size() != C || ground_truth.size() != C) {
    throw Error("detection inputs must have one list per class (C=" + std::to_string(C) + ")");
  }
  DetectionReport report;
  report.per_class_ap.resize(C);
  std::vector<std::size_t> all, rare, nonrare;
  for (std::size_t c = 0; c < C; ++c) {
    if (ground_truth[c].empty()) continue;
    const auto hits = match_detections(predictions[c], ground_truth[c], iou_threshold);
    report.per_class_ap[c] = average_precision_from_hits(hits, ground_truth[c].size());
    all.push_back(c);
    (stats.count(c) < kRareThreshold ? rare : nonrare).push_back(c);
  }
  report.full_map = mean_ap_over(report.per_class_ap, all).value_or(0.0);
  report.rare_map = mean_ap_over(report.per_class_ap, rare);
  report.nonrare_map = mean_ap_over(report.per_class_ap, nonrare);
  return report;
}

inline nlohmann::json detection_report_to_json(const DetectionReport& r) {
  nlohmann::json ap = nlohmann::json::array();
  for (const auto& v : r.per_class_ap) ap.push_back(optional_to_json(v));
  return {{"full_map", r.full_map},
          {"rare_map", optional_to_json(r.rare_map)},
          {"nonrare_map", optional_to_json(r.nonrare_map)},
          {"per_class_ap", std::move(ap)}};
}

// ---- File formats -------------------------------------------------------

inline Box box_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw Error("box must have 4 coordinates", "parse_error");
  Box b{v[0], v[1], v[2], v[3]};
  b.validate();
  return b;
}

inline nlohmann::json box_to_json(const Box& b) { return {b.x0, b.y0, b.x1, b.y1}; }

// One record of the detections file (or, with hoi_class set, ground truth).
struct DetectionRecord {
  std::string scene_id;
  Box human;
  Box object;
  std::string object_class;
  double object_probability = 1.0;
  std::optional<std::size_t> hoi_class;
};

inline std::string scene_id_from_json(const nlohmann::json& j) {
  return j.is_string() ? j.get<std::string>() : j.dump();
}

// hoi_class may be a class index or a "verb object" name.
inline std::size_t hoi_class_from_json(const nlohmann::json& j, const ClassTaxonomy& taxonomy) {
  if (j.is_number_integer()) {
    const auto c = j.get<std::int64_t>();
    if (c < 0 || static_cast<std::size_t>(c) >= taxonomy.num_classes()) {
      throw Error("hoi_class " + std::to_string(c) + " out of range", "parse_error");
    }
    return static_cast<std::size_t>(c);
  }
  const auto name = j.get<std::string>();
  const auto& names = taxonomy.class_names();
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (names[c] == name) return c;
  }
  throw Error("unknown hoi_class '" + name + "'", "parse_error");
}

inline std::vector<DetectionRecord> parse_detection_records(const nlohmann::json& j,
                                                            const ClassTaxonomy& taxonomy,
                                                            bool require_hoi_class) {
  if (!j.is_array()) throw Error("detection file must hold a JSON list", "parse_error");
  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& rec = j[i];
    try {
      DetectionRecord d;
      d.scene_id = scene_id_from_json(rec.at("scene_id"));
      d.human = box_from_json(rec.at("human_box"));
      d.object = box_from_json(rec.at("object_box"));
      if (rec.contains("object_class")) d.object_class = rec.at("object_class").get<std::string>();
      d.object_probability = rec.value("object_probability", 1.0);
      if (!(d.object_probability >= 0.0 && d.object_probability <= 1.0)) {
        throw Error("object_probability must lie in [0, 1]", "parse_error");
      }
      if (require_hoi_class) {
        d.hoi_class = hoi_class_from_json(rec.at("hoi_class"), taxonomy);
      } else {
        if (d.object_class.empty()) throw Error("missing object_class", "parse_error");
        taxonomy.object_index(d.object_class);
      }
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw Error("record " + std::to_string(i) + ": " + e.what(), "parse_error");
    } catch (const Error& e) {
      throw Error("record " + std::to_string(i) + ": " + e.what(), "parse_error");
    }
  }
  return out;
}

// Scenes file: token matrices per scene plus everything needed to pool and
// score them.
//   {grid_size, d_k, attention: {query, key, value} (row lists),
//    classes: [[verb, object], ...], train_counts: [...],
//    scenes: [{scene_id, tokens: [[...], ...]}]}
struct SceneSet {
  std::size_t grid_size = 0;
  std::size_t d_k = 0;
  AttentionParams attention;
  ClassTaxonomy taxonomy;
  ClassStats stats;
  std::map<std::string, Matrix> tokens;
};

inline Matrix matrix_from_rows(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw Error("empty matrix", "parse_error");
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw Error("ragged matrix rows", "parse_error");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

inline nlohmann::json matrix_to_rows(const Matrix& m) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return out;
}

inline SceneSet parse_scene_set(const nlohmann::json& j) {
  SceneSet s;
  try {
    s.grid_size = j.at("grid_size").get<std::size_t>();
    s.d_k = j.at("d_k").get<std::size_t>();
    const auto& att = j.at("attention");
    s.attention = {matrix_from_rows(att.at("query")), matrix_from_rows(att.at("key")),
                   matrix_from_rows(att.at("value"))};
    std::vector<std::string> verbs, objects;
    std::vector<ClassPair> pairs;
    std::map<std::string, std::size_t> vix, oix;
    for (const auto& cls : j.at("classes")) {
      const auto v = cls.at(0).get<std::string>(), o = cls.at(1).get<std::string>();
      auto vi = vix.try_emplace(v, verbs.size());
      if (vi.second) verbs.push_back(v);
      auto oi = oix.try_emplace(o, objects.size());
      if (oi.second) objects.push_back(o);
      pairs.push_back({vi.first->second, oi.first->second});
    }
    s.taxonomy = build_taxonomy(verbs, objects, pairs);
    std::vector<std::int64_t> counts(s.taxonomy.num_classes(), 0);
    if (j.contains("train_counts")) counts = j.at("train_counts").get<std::vector<std::int64_t>>();
    if (counts.size() != s.taxonomy.num_classes()) {
      throw Error("train_counts length does not match classes", "parse_error");
    }
    s.stats = ClassStats(std::move(counts));
    const std::size_t n_tokens = s.grid_size * s.grid_size + 1;
    const auto& scenes = j.at("scenes");
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const auto id = scene_id_from_json(scenes[i].at("scene_id"));
      Matrix t = matrix_from_rows(scenes[i].at("tokens"));
      if (t.rows() != n_tokens) {
        throw Error("scene " + std::to_string(i) + " has " + std::to_string(t.rows()) +
                        " tokens, expected " + std::to_string(n_tokens),
                    "parse_error");
      }
      s.tokens.emplace(id, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed scenes file: ") + e.what(), "parse_error");
  }
  return s;
}

// Full detection pipeline: each detected pair is masked, pooled from its
// scene's tokens and scored; every class sharing the detected object yields
// one scored prediction. Ground-truth pairs are grouped by hoi_class.
inline DetectionReport run_detection(const SceneSet& scenes, const LinearClassifier& clf,
                                     std::span<const DetectionRecord> detections,
                                     std::span<const DetectionRecord> ground_truth,
                                     double iou_threshold = 0.5) {
  const std::size_t C = scenes.taxonomy.num_classes();
  if (clf.num_classes() != C) {
    throw Error("checkpoint has " + std::to_string(clf.num_classes()) +
                " classes, scenes file has " + std::to_string(C));
  }
  if (clf.dim() != scenes.attention.value.cols()) {
    throw Error("checkpoint dimension " + std::to_string(clf.dim()) +
                " does not match pooled token dimension " +
                std::to_string(scenes.attention.value.cols()));
  }
  std::vector<std::vector<ScoredPair>> preds(C);
  std::vector<std::vector<GroundTruthPair>> gts(C);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    auto it = scenes.tokens.find(d.scene_id);
    if (it == scenes.tokens.end()) {
      throw Error("detection " + std::to_string(i) + ": unknown scene '" + d.scene_id + "'",
                  "parse_error");
    }
    const AttentionMask mask = boxes_to_mask(d.human, d.object, scenes.grid_size);
    const Vector pooled = masked_attention_pool(it->second, mask, scenes.attention, scenes.d_k);
    const Vector scores = score_pair(clf, pooled, d.object_class, d.object_probability,
                                     scenes.taxonomy);
    for (std::size_t c : scenes.taxonomy.classes_with_object(
             scenes.taxonomy.object_index(d.object_class))) {
      preds[c].push_back({d.scene_id, d.human, d.object, scores[c]});
    }
  }
  for (const auto& g : ground_truth) {
    gts[g.hoi_class.value()].push_back({g.scene_id, g.human, g.object});
  }
  return detection_ap(preds, gts, scenes.stats, iou_threshold);
}

}  // namespace hoilab

#endif  // HOILAB_REGIONAL_HPP_
