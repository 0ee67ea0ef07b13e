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

// Multi-label losses on sign labels (y_i in {+1, -1}) and logits s_i.
//
// Every loss returns its value together with dL/ds in one call. Gradients are
// closed forms; there is no autodiff anywhere in the library.

#ifndef HOILAB_LOSSES_HPP_
#define HOILAB_LOSSES_HPP_

#include <span>
#include <string>
#include <string_view>

#include "hoilab/common.hpp"
#include "hoilab/taxonomy.hpp"

namespace hoilab {

struct LossValueAndGrad {
  double value = 0.0;
  Vector grad;
};

namespace detail {

inline void check_loss_inputs(std::span<const double> s, std::span<const int> y) {
  if (s.size() != y.size()) {
    throw Error("logit vector has " + std::to_string(s.size()) + " entries but labels have " +
                std::to_string(y.size()));
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i])) {
      throw Error("non-finite logit at index " + std::to_string(i), "non_finite");
    }
    if (y[i] != 1 && y[i] != -1) {
      throw Error("label at index " + std::to_string(i) + " is " + std::to_string(y[i]) +
                  ", expected +1 or -1");
    }
  }
}

}  // namespace detail

/// Log-sum-exp sign loss: L = log(1 + sum_i exp(-y_i s_i)).
///
/// Evaluated with the shift m = max(0, max_i(-y_i s_i)), so that every
/// exponent is <= 0 and the value is finite for arbitrarily large logits.
/// The gradient is a softmax over the per-class terms, with the constant 1
/// acting as an extra zero-margin class:
///   dL/ds_i = -y_i exp(-y_i s_i) / (1 + sum_j exp(-y_j s_j)).
inline LossValueAndGrad lse_sign_loss(std::span<const double> s, std::span<const int> y) {
  detail::check_loss_inputs(s, y);
  const std::size_t n = s.size();
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, -y[i] * s[i]);

  LossValueAndGrad out;
  out.grad.resize(n);
  double terms = 0.0;  // sum_i exp(-y_i s_i - m)
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(-y[i] * s[i] - m);
    out.grad[i] = e;
    terms += e;
  }
  const double anchor = std::exp(-m);
  const double denom = anchor + terms;
  // log1p keeps relative accuracy when every margin is large and L is tiny.
  out.value = (m == 0.0) ? std::log1p(terms) : m + std::log(denom);
  const double inv = 1.0 / denom;
  for (std::size_t i = 0; i < n; ++i) out.grad[i] = -y[i] * out.grad[i] * inv;
  return out;
}

/// Sum over classes of the logistic loss log(1 + exp(-y_i s_i)).
inline LossValueAndGrad bce_loss(std::span<const double> s, std::span<const int> y) {
  detail::check_loss_inputs(s, y);
  LossValueAndGrad out;
  out.grad.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto lt = logistic_terms(-y[i] * s[i]);
    out.value += lt.softplus;
    out.grad[i] = -y[i] * lt.sigmoid;
  }
  return out;
}

/// Logistic loss with positive-class terms scaled by pos_weight[i].
inline LossValueAndGrad weighted_bce_loss(std::span<const double> s, std::span<const int> y,
                                          std::span<const double> pos_weight) {
  detail::check_loss_inputs(s, y);
  if (pos_weight.size() != s.size()) {
    throw Error("pos_weight has " + std::to_string(pos_weight.size()) + " entries, expected " +
                std::to_string(s.size()));
  }
  LossValueAndGrad out;
  out.grad.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(pos_weight[i] > 0.0) || !std::isfinite(pos_weight[i])) {
      throw Error("pos_weight at index " + std::to_string(i) + " must be positive and finite");
    }
    const auto lt = logistic_terms(-y[i] * s[i]);
    const double w = y[i] == 1 ? pos_weight[i] : 1.0;
    out.value += w * lt.softplus;
    out.grad[i] = -y[i] * w * lt.sigmoid;
  }
  return out;
}

// negatives_i / positives_i over `num_samples` training samples. Classes with
// no positives get weight 1.
inline Vector default_pos_weights(const ClassStats& stats, std::size_t num_samples) {
  Vector w(stats.num_classes(), 1.0);
  for (std::size_t c = 0; c < w.size(); ++c) {
    const auto pos = stats.count(c);
    const auto neg = static_cast<std::int64_t>(num_samples) - pos;
    if (pos > 0 && neg > 0) w[c] = static_cast<double>(neg) / static_cast<double>(pos);
  }
  return w;
}

/// Focal loss summed over classes.
///
/// With t = y_i s_i, p_t = sigmoid(t) and alpha_t = alpha for positives,
/// 1 - alpha for negatives:
///   value_i = alpha_t (1 - p_t)^g * softplus(-t)
///   d value_i / dt = -alpha_t (1 - p_t)^g [g p_t softplus(-t) + (1 - p_t)]
inline LossValueAndGrad focal_loss(std::span<const double> s, std::span<const int> y,
                                   double gamma_f = 2.0, double alpha = 0.25) {
  detail::check_loss_inputs(s, y);
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error("focal alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
  if (!(gamma_f >= 0.0)) {
    throw Error("focal gamma must be nonnegative, got " + std::to_string(gamma_f));
  }
  LossValueAndGrad out;
  out.grad.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    // Terms of z = -t: sigmoid(z) = 1 - p_t (no cancellation), softplus(z) = ce.
    const auto lt = logistic_terms(-y[i] * s[i]);
    const double p_t = lt.sigmoid_neg;
    const double q_t = lt.sigmoid;
    const double alpha_t = y[i] == 1 ? alpha : 1.0 - alpha;
    const double ce = lt.softplus;
    const double mod = gamma_f == 0.0   ? 1.0
                       : gamma_f == 2.0 ? q_t * q_t
                                        : std::pow(q_t, gamma_f);
    out.value += alpha_t * mod * ce;
    const double d_dt = -alpha_t * mod * (gamma_f * p_t * ce + q_t);
    out.grad[i] = y[i] * d_dt;
  }
  return out;
}

enum class LossKind { kLseSign, kBce, kWeightedBce, kFocal };

inline LossKind parse_loss_kind(std::string_view name) {
  if (name == "lse_sign") return LossKind::kLseSign;
  if (name == "bce") return LossKind::kBce;
  if (name == "weighted_bce") return LossKind::kWeightedBce;
  if (name == "focal") return LossKind::kFocal;
  throw Error("unknown loss '" + std::string(name) +
              "' (expected lse_sign | bce | weighted_bce | focal)");
}

inline std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kLseSign: return "lse_sign";
    case LossKind::kBce: return "bce";
    case LossKind::kWeightedBce: return "weighted_bce";
    case LossKind::kFocal: return "focal";
  }
  return "unknown";
}

// A loss selected by name plus whatever parameters it needs.
struct LossSpec {
  LossKind kind = LossKind::kLseSign;
  Vector pos_weight;  // weighted_bce only
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;

  LossValueAndGrad operator()(std::span<const double> s, std::span<const int> y) const {
    switch (kind) {
      case LossKind::kLseSign: return lse_sign_loss(s, y);
      case LossKind::kBce: return bce_loss(s, y);
      case LossKind::kWeightedBce: return weighted_bce_loss(s, y, pos_weight);
      case LossKind::kFocal: return focal_loss(s, y, focal_gamma, focal_alpha);
    }
    throw Error("unhandled loss kind");
  }
};

}  // namespace hoilab

#endif  // HOILAB_LOSSES_HPP_
