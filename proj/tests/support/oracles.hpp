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

// Test-only reference computations. Nothing here calls into the code path
// it is used to check: the formulas are re-derived directly, by brute force
// or at higher precision.

#ifndef HOILAB_TESTS_ORACLES_HPP_
#define HOILAB_TESTS_ORACLES_HPP_

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "hoilab/common.hpp"
#include "hoilab/regional.hpp"

namespace hoilab::oracle {

using BigFloat = boost::multiprecision::cpp_bin_float_50;

struct BigLoss {
  BigFloat value;
  std::vector<BigFloat> grad;
};

// log(1 + sum exp(-y s)) and its softmax gradient, evaluated naively in 50
// decimal digits (no shifting needed at this precision for |s| <~ 1e4).
inline BigLoss lse_sign(const std::vector<double>& s, const std::vector<int>& y) {
  BigFloat denom = 1;
  std::vector<BigFloat> e(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    e[i] = boost::multiprecision::exp(BigFloat(-y[i]) * BigFloat(s[i]));
    denom += e[i];
  }
  BigLoss out{boost::multiprecision::log(denom), {}};
  for (std::size_t i = 0; i < s.size(); ++i) out.grad.push_back(BigFloat(-y[i]) * e[i] / denom);
  return out;
}

inline BigLoss bce(const std::vector<double>& s, const std::vector<int>& y) {
  BigLoss out{0, {}};
  for (std::size_t i = 0; i < s.size(); ++i) {
    const BigFloat e = boost::multiprecision::exp(BigFloat(-y[i]) * BigFloat(s[i]));
    out.value += boost::multiprecision::log1p(e);
    out.grad.push_back(BigFloat(-y[i]) * e / (1 + e));
  }
  return out;
}

inline double rel_err(const BigFloat& approx_d, const BigFloat& exact) {
  const BigFloat diff = abs(approx_d - exact);
  if (exact == 0) return static_cast<double>(diff);
  return static_cast<double>(diff / abs(exact));
}

// Central finite differences of a scalar function of a vector.
inline std::vector<double> central_differences(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||); absolute when both norms are below `floor`.
inline double vector_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                             double floor = 1e-12) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), floor});
  return std::sqrt(diff) / denom;
}

// AP by explicit prefix enumeration: for every positive i, precision is the
// fraction of positives among samples ranked at or above i (ranked above =
// larger score, or equal score and smaller index). The precisions are summed
// in order of their prefix length so that floating-point rounding matches any
// rank-order accumulation and the comparison can be exact.
inline double brute_force_ap(const std::vector<double>& scores, const std::vector<int>& truth) {
  std::vector<std::pair<int, double>> by_prefix;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truth[i] != 1) continue;
    int at_or_above = 0, pos_at_or_above = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      const bool above = scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
      if (!above) continue;
      ++at_or_above;
      pos_at_or_above += truth[j] == 1;
    }
    by_prefix.emplace_back(at_or_above, static_cast<double>(pos_at_or_above) / at_or_above);
  }
  std::sort(by_prefix.begin(), by_prefix.end());
  double sum = 0;
  for (const auto& [len, precision] : by_prefix) sum += precision;
  return sum / static_cast<double>(by_prefix.size());
}

// Inside-set by rasterizing at res x res pixels. Boxes must have coordinates
// that are multiples of 1/res, given here in integer pixel units
// [x0, y0, x1, y1). A patch is inside iff some pixel that belongs to a box
// overlaps the patch cell with positive area.
struct PixelBox {
  int x0, y0, x1, y1;
  Box to_box(int res) const {
    return {static_cast<double>(x0) / res, static_cast<double>(y0) / res,
            static_cast<double>(x1) / res, static_cast<double>(y1) / res};
  }
};

inline std::vector<bool> rasterized_inside(const PixelBox& a, const PixelBox& b, int P,
                                           int res = 1000) {
  std::vector<bool> inside(static_cast<std::size_t>(P * P), false);
  // Pixel i spans [i, i+1) pixel units; patch c spans [c*res/P, (c+1)*res/P).
  // Positive overlap: i*P < (c+1)*res and (i+1)*P > c*res.
  auto pixel_hits_cell = [&](int i, int c) {
    return static_cast<long>(i) * P < static_cast<long>(c + 1) * res &&
           static_cast<long>(i + 1) * P > static_cast<long>(c) * res;
  };
  for (const PixelBox& box : {a, b}) {
    for (int py = box.y0; py < box.y1; ++py) {
      for (int px = box.x0; px < box.x1; ++px) {
        for (int r = 0; r < P; ++r) {
          if (!pixel_hits_cell(py, r)) continue;
          for (int c = 0; c < P; ++c) {
            if (pixel_hits_cell(px, c)) inside[static_cast<std::size_t>(r * P + c)] = true;
          }
        }
      }
    }
  }
  return inside;
}

// Plain (unmasked) single-head attention output of token 0 over `subset`
// (token indices, must include 0), computed from scratch.
inline std::vector<double> subset_attention(const Matrix& tokens,
                                            const std::vector<std::size_t>& subset,
                                            const AttentionParams& p, std::size_t d_k) {
  auto project = [](std::span<const double> t, const Matrix& W) {
    std::vector<double> out(W.cols(), 0.0);
    for (std::size_t j = 0; j < W.cols(); ++j) {
      for (std::size_t k = 0; k < t.size(); ++k) out[j] += t[k] * W(k, j);
    }
    return out;
  };
  const auto q = project(tokens.row(0), p.query);
  std::vector<double> logits;
  for (std::size_t j : subset) {
    const auto k = project(tokens.row(j), p.key);
    double s = 0;
    for (std::size_t a = 0; a < k.size(); ++a) s += q[a] * k[a];
    logits.push_back(s / std::sqrt(static_cast<double>(d_k)));
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double& l : logits) {
    l = std::exp(l - top);
    z += l;
  }
  std::vector<double> out(p.value.cols(), 0.0);
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const auto v = project(tokens.row(subset[i]), p.value);
    for (std::size_t a = 0; a < out.size(); ++a) out[a] += logits[i] / z * v[a];
  }
  return out;
}

// Exhaustive check of the detection matching rule for one class. Enumerates
// every injective partial assignment prediction -> eligible ground truth and
// keeps the assignments in which, walking predictions in rank order,
//   * an unassigned prediction has no eligible ground truth left untaken by
//     higher-ranked predictions, and
//   * an assigned prediction took the untaken eligible ground truth with the
//     largest min(IoU_h, IoU_o) (ties: lowest index).
// Returns the AP of every valid assignment found.
inline std::vector<double> enumerate_detection_aps(const std::vector<ScoredPair>& preds,
                                                   const std::vector<GroundTruthPair>& gts,
                                                   double threshold) {
  const std::size_t n = preds.size();
  // Rank order: descending score, ties by index (selection, no sort helper).
  std::vector<std::size_t> order;
  std::vector<bool> used(n, false);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      if (best == n || preds[i].score > preds[best].score) best = i;
    }
    used[best] = true;
    order.push_back(best);
  }
  auto quality = [&](std::size_t p, std::size_t g) -> std::optional<double> {
    if (preds[p].scene_id != gts[g].scene_id) return std::nullopt;
    const double a = iou(preds[p].human, gts[g].human), b = iou(preds[p].object, gts[g].object);
    if (a < threshold || b < threshold) return std::nullopt;
    return std::min(a, b);
  };

  std::vector<double> aps;
  std::vector<int> assign(n, -1);  // by rank position
  std::function<void(std::size_t)> rec = [&](std::size_t r) {
    if (r == n) {
      // Validate the whole assignment declaratively.
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<bool> taken(gts.size(), false);
        for (std::size_t j = 0; j < k; ++j) {
          if (assign[j] >= 0) taken[static_cast<std::size_t>(assign[j])] = true;
        }
        std::optional<std::size_t> best;
        double best_q = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          const auto q = quality(order[k], g);
          if (!q || taken[g]) continue;
          if (*q > best_q) {
            best_q = *q;
            best = g;
          }
        }
        if (assign[k] < 0 && best) return;
        if (assign[k] >= 0 && (!best || static_cast<std::size_t>(assign[k]) != *best)) return;
      }
      double sum = 0;
      int tp = 0;
      for (std::size_t k = 0; k < n; ++k) {
        if (assign[k] >= 0) {
          ++tp;
          sum += static_cast<double>(tp) / static_cast<double>(k + 1);
        }
      }
      aps.push_back(sum / static_cast<double>(gts.size()));
      return;
    }
    assign[r] = -1;
    rec(r + 1);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      bool free = true;
      for (std::size_t j = 0; j < r; ++j) free &= assign[j] != static_cast<int>(g);
      if (!free || !quality(order[r], g)) continue;
      assign[r] = static_cast<int>(g);
      rec(r + 1);
      assign[r] = -1;
    }
  };
  rec(0);
  return aps;
}

}  // namespace hoilab::oracle

#endif  // HOILAB_TESTS_ORACLES_HPP_
