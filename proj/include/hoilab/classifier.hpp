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

// Linear classification head s = gamma * W x + b and its initializers.

#ifndef HOILAB_CLASSIFIER_HPP_
#define HOILAB_CLASSIFIER_HPP_

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "hoilab/common.hpp"
#include "json.hpp"

namespace hoilab {

// C x d matrix whose rows have unit Euclidean norm.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  // Normalizes every row. A zero row is rejected rather than silently fixed.
  explicit EmbeddingMatrix(Matrix rows) : rows_(std::move(rows)) {
    for (std::size_t i = 0; i < rows_.rows(); ++i) {
      try {
        normalize_in_place(rows_.row(i));
      } catch (const Error&) {
        throw Error("embedding row " + std::to_string(i) + " is zero or non-finite",
                    "parse_error");
      }
    }
  }

  std::size_t num_classes() const noexcept { return rows_.rows(); }
  std::size_t dim() const noexcept { return rows_.cols(); }
  const Matrix& rows() const noexcept { return rows_; }
  std::span<const double> row(std::size_t i) const { return rows_.row(i); }

 private:
  Matrix rows_;
};

// Embedding file: one `<class_index> <d floats>` line per class, whitespace
// separated. Every index in [0, C) must appear exactly once; C is taken from
// `expected_classes` when nonzero, otherwise from the line count.
inline EmbeddingMatrix parse_embeddings(std::istream& in, std::size_t expected_classes = 0) {
  std::vector<std::pair<std::size_t, Vector>> lines;
  std::string line;
  std::size_t line_no = 0, dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    long long index = 0;
    if (!(fields >> index)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw Error("embedding line " + std::to_string(line_no) + ": missing class index",
                  "parse_error");
    }
    Vector values;
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw Error("embedding line " + std::to_string(line_no) + ": bad number '" + token + "'",
                    "parse_error");
      }
    }
    if (index < 0) {
      throw Error("embedding line " + std::to_string(line_no) + ": negative class index",
                  "parse_error");
    }
    if (values.empty() || (dim != 0 && values.size() != dim)) {
      throw Error("embedding line " + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values, got " + std::to_string(values.size()),
                  "parse_error");
    }
    dim = values.size();
    lines.emplace_back(static_cast<std::size_t>(index), std::move(values));
  }
  const std::size_t classes = expected_classes ? expected_classes : lines.size();
  if (lines.size() != classes) {
    throw Error("embedding file has " + std::to_string(lines.size()) + " rows, expected " +
                    std::to_string(classes),
                "parse_error");
  }
  Matrix m(classes, dim);
  std::vector<bool> seen(classes, false);
  for (auto& [index, values] : lines) {
    if (index >= classes || seen[index]) {
      throw Error("embedding class index " + std::to_string(index) +
                      " is out of range or repeated",
                  "parse_error");
    }
    seen[index] = true;
    std::copy(values.begin(), values.end(), m.row(index).begin());
  }
  return EmbeddingMatrix(std::move(m));
}

inline EmbeddingMatrix load_embeddings(const std::string& path, std::size_t expected_classes = 0) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file " + path, "io_error");
  try {
    return parse_embeddings(in, expected_classes);
  } catch (const Error& e) {
    throw e.with_context(path);
  }
}

inline void write_embeddings(std::ostream& out, const EmbeddingMatrix& emb) {
  char buf[32];
  for (std::size_t i = 0; i < emb.num_classes(); ++i) {
    out << i;
    for (double v : emb.row(i)) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

enum class InitMode { kRandom, kEmbedding };

inline std::string_view init_mode_name(InitMode mode) {
  return mode == InitMode::kRandom ? "random" : "embedding";
}

inline InitMode parse_init_mode(std::string_view name) {
  if (name == "random") return InitMode::kRandom;
  if (name == "embedding") return InitMode::kEmbedding;
  throw Error("unknown init_mode '" + std::string(name) + "' (expected random | embedding)");
}

// Fan-based random initialization schemes. Both draw zero-mean Gaussians:
// xavier uses variance 2 / (fan_in + fan_out) = 2 / (d + C), kaiming uses
// 2 / fan_in = 2 / d.
enum class RandomScheme { kXavier, kKaiming };

inline RandomScheme parse_random_scheme(std::string_view name) {
  if (name == "xavier") return RandomScheme::kXavier;
  if (name == "kaiming") return RandomScheme::kKaiming;
  throw Error("unknown random init scheme '" + std::string(name) +
              "' (expected xavier | kaiming)");
}

inline std::string_view random_scheme_name(RandomScheme scheme) {
  return scheme == RandomScheme::kXavier ? "xavier" : "kaiming";
}

inline double random_scheme_variance(RandomScheme scheme, std::size_t num_classes,
                                     std::size_t dim) {
  return scheme == RandomScheme::kXavier
             ? 2.0 / static_cast<double>(num_classes + dim)
             : 2.0 / static_cast<double>(dim);
}

struct ParamGrad {
  Matrix dW;
  Vector db;
};

class LinearClassifier {
 public:
  LinearClassifier() = default;
  LinearClassifier(Matrix W, Vector b, double gamma, InitMode mode)
      : W_(std::move(W)), b_(std::move(b)), gamma_(gamma), mode_(mode) {
    if (b_.size() != W_.rows()) {
      throw Error("bias has " + std::to_string(b_.size()) + " entries but W has " +
                  std::to_string(W_.rows()) + " rows");
    }
    set_gamma(gamma);
  }

  std::size_t num_classes() const noexcept { return W_.rows(); }
  std::size_t dim() const noexcept { return W_.cols(); }
  const Matrix& weights() const noexcept { return W_; }
  Matrix& weights() noexcept { return W_; }
  const Vector& bias() const noexcept { return b_; }
  Vector& bias() noexcept { return b_; }
  double gamma() const noexcept { return gamma_; }
  InitMode init_mode() const noexcept { return mode_; }

  void set_gamma(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw Error("gamma must be positive and finite, got " + std::to_string(gamma));
    }
    gamma_ = gamma;
  }

  friend bool operator==(const LinearClassifier&, const LinearClassifier&) = default;

 private:
  Matrix W_;
  Vector b_;
  double gamma_ = 1.0;
  InitMode mode_ = InitMode::kRandom;
};

inline LinearClassifier init_random(std::size_t num_classes, std::size_t dim,
                                    RandomScheme scheme, std::uint64_t seed,
                                    double gamma = 100.0) {
  if (num_classes < 1 || dim < 1) throw Error("classifier needs C >= 1 and d >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(
      0.0, std::sqrt(random_scheme_variance(scheme, num_classes, dim)));
  Matrix W(num_classes, dim);
  for (double& w : W.data()) w = normal(rng);
  return LinearClassifier(std::move(W), Vector(num_classes, 0.0), gamma, InitMode::kRandom);
}

// W is a copy of the (already unit-norm) embedding rows; b is zero.
inline LinearClassifier init_from_embeddings(const EmbeddingMatrix& emb, double gamma = 100.0) {
  return LinearClassifier(emb.rows(), Vector(emb.num_classes(), 0.0), gamma,
                          InitMode::kEmbedding);
}

// s_i = gamma * <x, w_i> + b_i
inline Vector forward(const LinearClassifier& clf, std::span<const double> x) {
  if (x.size() != clf.dim()) {
    throw Error("feature has dimension " + std::to_string(x.size()) + ", classifier expects " +
                std::to_string(clf.dim()));
  }
  Vector s(clf.num_classes());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = clf.gamma() * dot(x, clf.weights().row(i)) + clf.bias()[i];
  }
  return s;
}

// Accumulates dL/dW and dL/db for one sample into `acc` (scaled by `scale`):
//   dW_i += scale * gamma * grad_s_i * x,  db_i += scale * grad_s_i.
inline void accumulate_backward(const LinearClassifier& clf, std::span<const double> x,
                                std::span<const double> grad_s, ParamGrad& acc,
                                double scale = 1.0) {
  if (x.size() != clf.dim() || grad_s.size() != clf.num_classes()) {
    throw Error("backward shape mismatch: x has " + std::to_string(x.size()) +
                " entries, grad_s has " + std::to_string(grad_s.size()) + "; expected " +
                std::to_string(clf.dim()) + " and " + std::to_string(clf.num_classes()));
  }
  if (acc.dW.rows() != clf.num_classes() || acc.dW.cols() != clf.dim()) {
    acc.dW = Matrix(clf.num_classes(), clf.dim());
    acc.db.assign(clf.num_classes(), 0.0);
  }
  for (std::size_t i = 0; i < grad_s.size(); ++i) {
    const double g = scale * grad_s[i];
    acc.db[i] += g;
    if (g == 0.0) continue;
    const double gw = clf.gamma() * g;
    auto row = acc.dW.row(i);
    for (std::size_t k = 0; k < x.size(); ++k) row[k] += gw * x[k];
  }
}

inline ParamGrad backward(const LinearClassifier& clf, std::span<const double> x,
                          std::span<const double> grad_s) {
  ParamGrad g{Matrix(clf.num_classes(), clf.dim()), Vector(clf.num_classes(), 0.0)};
  accumulate_backward(clf, x, grad_s, g);
  return g;
}

// Checkpoint JSON: {C, d, gamma, init_mode, W (row-major), b}. nlohmann's
// number formatting emits the shortest decimal that round-trips, so a
// write/read cycle is bit-exact.
inline nlohmann::json checkpoint_to_json(const LinearClassifier& clf) {
  return nlohmann::json{{"C", clf.num_classes()},
                        {"d", clf.dim()},
                        {"gamma", clf.gamma()},
                        {"init_mode", std::string(init_mode_name(clf.init_mode()))},
                        {"W", clf.weights().data()},
                        {"b", clf.bias()}};
}

inline LinearClassifier checkpoint_from_json(const nlohmann::json& j) {
  try {
    const auto C = j.at("C").get<std::size_t>();
    const auto d = j.at("d").get<std::size_t>();
    auto W = j.at("W").get<std::vector<double>>();
    auto b = j.at("b").get<std::vector<double>>();
    if (W.size() != C * d || b.size() != C) {
      throw Error("checkpoint arrays do not match C=" + std::to_string(C) +
                      ", d=" + std::to_string(d),
                  "parse_error");
    }
    return LinearClassifier(Matrix(C, d, std::move(W)), std::move(b), j.at("gamma").get<double>(),
                            parse_init_mode(j.at("init_mode").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what(), "parse_error");
  }
}

inline void save_checkpoint(const std::string& path, const LinearClassifier& clf) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path, "io_error");
  out << checkpoint_to_json(clf).dump() << '\n';
}

inline LinearClassifier load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path, "io_error");
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what(), "parse_error");
  } catch (const Error& e) {
    throw e.with_context(path);
  }
}

}  // namespace hoilab

#endif  // HOILAB_CLASSIFIER_HPP_
