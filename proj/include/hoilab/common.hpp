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

#ifndef HOILAB_COMMON_HPP_
#define HOILAB_COMMON_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hoilab {

// All recoverable failures (bad input, shape mismatch, corrupt files) are
// reported as hoilab::Error. The message is meant for humans; `kind` is a
// short machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  explicit Error(std::string message, std::string kind = "invalid_argument")
      : std::runtime_error(std::move(message)), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

  // Returns a copy with `context` prepended to the message.
  Error with_context(const std::string& context) const {
    return Error(context + ": " + what(), kind_);
  }

 private:
  std::string kind_;
};

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Rows are the unit of access almost
// everywhere (class rows of W, token rows, embedding rows).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error("matrix data size " + std::to_string(data_.size()) +
                  " does not match " + std::to_string(rows_) + "x" +
                  std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Scales `v` to unit Euclidean norm. Throws on a zero or non-finite vector.
inline void normalize_in_place(std::span<double> v) {
  const double n = norm2(v);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error("cannot normalize a zero or non-finite vector");
  }
  for (double& x : v) x /= n;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / (norm2(a) * norm2(b));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

// sigmoid(z), sigmoid(-z) and softplus(z) from a single exp(-|z|).
struct LogisticTerms {
  double sigmoid;
  double sigmoid_neg;
  double softplus;
};

inline LogisticTerms logistic_terms(double z) {
  const double e = std::exp(-std::abs(z));
  const double u = 1.0 + e;
  const double r = 1.0 / u;
  // log1p(e) as log(u) * e / (u - 1): exact-to-a-few-ulps and cheaper than
  // log1p here, since u is already needed for the sigmoid.
  const double l = u == 1.0 ? e : std::log(u) * (e / (u - 1.0));
  return z >= 0.0 ? LogisticTerms{r, e * r, z + l} : LogisticTerms{e * r, r, l};
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent substream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for a named purpose ("datagen", "init", "shuffle", ...) derived from a
// root seed. Distinct purposes give unrelated streams; same inputs give the
// same seed on every platform.
inline std::uint64_t substream_seed(std::uint64_t root, std::string_view purpose) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : purpose) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(root) ^ h);
}

inline Rng make_rng(std::uint64_t root, std::string_view purpose) {
  return Rng(substream_seed(root, purpose));
}

}  // namespace hoilab

#endif  // HOILAB_COMMON_HPP_
