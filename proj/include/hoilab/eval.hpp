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

// Rank-based average precision, mAP and few-shot subset reporting.

#ifndef HOILAB_EVAL_HPP_
#define HOILAB_EVAL_HPP_

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>

#include "hoilab/common.hpp"
#include "hoilab/taxonomy.hpp"
#include "json.hpp"

namespace hoilab {

// Sample order by descending score; ties go to the lower sample index.
inline std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

// AP from a ranked relevance list: (1/num_relevant) * sum over relevant ranks
// r of precision@r. `num_relevant` may exceed the number of hits in the list
// (unretrieved ground truth counts as missed).
inline double average_precision_from_hits(std::span<const char> hits, std::size_t num_relevant) {
  if (num_relevant == 0) throw Error("average precision needs at least one positive");
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t r = 0; r < hits.size(); ++r) {
    if (!hits[r]) continue;
    ++found;
    sum += static_cast<double>(found) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(num_relevant);
}

inline double average_precision(std::span<const double> scores, std::span<const int> truth) {
  if (scores.size() != truth.size()) {
    throw Error("scores and truth differ in length");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw Error("non-finite score at sample " + std::to_string(i), "non_finite");
    }
    if (truth[i] == 1) ++positives;
  }
  if (positives == 0) throw Error("average precision needs at least one positive");
  const auto order = rank_order(scores);
  std::vector<char> hits(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) hits[r] = truth[order[r]] == 1;
  return average_precision_from_hits(hits, positives);
}

struct ScoredPredictions {
  Matrix scores;                 // N x C
  std::vector<SignLabels> truth; // N vectors of length C
};

inline constexpr std::int64_t kFewShotLevels[] = {1, 5, 10};

struct EvalReport {
  std::vector<std::optional<double>> ap;  // nullopt for skipped classes
  double map_all = 0.0;
  // k -> mAP over few_shot_at(k) minus skipped classes; nullopt if that set is empty.
  std::map<std::int64_t, std::optional<double>> map_few;
  std::vector<std::size_t> skipped_classes;
};

inline std::optional<double> mean_ap_over(const std::vector<std::optional<double>>& ap,
                                          std::span<const std::size_t> classes) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c : classes) {
    if (ap[c]) {
      sum += *ap[c];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline EvalReport evaluate(const ScoredPredictions& preds, const ClassStats& stats) {
  const std::size_t N = preds.scores.rows();
  const std::size_t C = preds.scores.cols();
  if (preds.truth.size() != N) {
    throw Error("scores have " + std::to_string(N) + " rows but truth has " +
                std::to_string(preds.truth.size()));
  }
  if (stats.num_classes() != C) {
    throw Error("class stats cover " + std::to_string(stats.num_classes()) +
                " classes, scores have " + std::to_string(C));
  }
  EvalReport report;
  report.ap.resize(C);
  Vector column(N);
  std::vector<int> truth(N);
  std::vector<std::size_t> all;
  for (std::size_t c = 0; c < C; ++c) {
    bool any_positive = false;
    for (std::size_t n = 0; n < N; ++n) {
      if (preds.truth[n].size() != C) {
        throw Error("truth row " + std::to_string(n) + " has wrong length");
      }
      column[n] = preds.scores(n, c);
      truth[n] = preds.truth[n][c];
      any_positive |= truth[n] == 1;
    }
    if (!any_positive) {
      report.skipped_classes.push_back(c);
      continue;
    }
    report.ap[c] = average_precision(column, truth);
    all.push_back(c);
  }
  report.map_all = mean_ap_over(report.ap, all).value_or(0.0);
  for (std::int64_t k : kFewShotLevels) {
    report.map_few[k] = mean_ap_over(report.ap, stats.few_shot_at(k));
  }
  return report;
}

inline nlohmann::json optional_to_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json ap = nlohmann::json::array();
  for (const auto& v : report.ap) ap.push_back(optional_to_json(v));
  nlohmann::json few = nlohmann::json::object();
  for (const auto& [k, v] : report.map_few) few[std::to_string(k)] = optional_to_json(v);
  return {{"ap", std::move(ap)},
          {"map_all", report.map_all},
          {"map_few", std::move(few)},
          {"skipped_classes", report.skipped_classes}};
}

// CSV `metric,value`; missing few-shot values are written as empty fields.
inline void write_report_csv(std::ostream& out, const EvalReport& report) {
  char buf[64];
  out << "metric,value\n";
  std::snprintf(buf, sizeof buf, "%.17g", report.map_all);
  out << "map_all," << buf << '\n';
  for (const auto& [k, v] : report.map_few) {
    out << "few@" << k << ',';
    if (v) {
      std::snprintf(buf, sizeof buf, "%.17g", *v);
      out << buf;
    }
    out << '\n';
  }
  out << "skipped_classes," << report.skipped_classes.size() << '\n';
}

}  // namespace hoilab

#endif  // HOILAB_EVAL_HPP_
