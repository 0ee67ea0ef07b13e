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

// Compositional (verb, object) class space, prompt construction and per-class
// training statistics.

#ifndef HOILAB_TAXONOMY_HPP_
#define HOILAB_TAXONOMY_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hoilab/common.hpp"

namespace hoilab {

struct ClassPair {
  std::size_t verb = 0;
  std::size_t object = 0;
  friend auto operator<=>(const ClassPair&, const ClassPair&) = default;
};

// Immutable after construction. Class index i is the position of the pair in
// the constructor's `pairs` list and is never re-sorted.
class ClassTaxonomy {
 public:
  ClassTaxonomy() = default;

  ClassTaxonomy(std::vector<std::string> verbs, std::vector<std::string> objects,
                std::vector<ClassPair> pairs)
      : verbs_(std::move(verbs)), objects_(std::move(objects)), pairs_(std::move(pairs)) {
    std::map<ClassPair, std::size_t> seen;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      const ClassPair& p = pairs_[i];
      if (p.verb >= verbs_.size() || p.object >= objects_.size()) {
        throw Error("class pair " + std::to_string(i) + " (" + std::to_string(p.verb) +
                    ", " + std::to_string(p.object) + ") is out of range");
      }
      auto [it, inserted] = seen.emplace(p, i);
      if (!inserted) {
        throw Error("class pair " + std::to_string(i) + " duplicates pair " +
                    std::to_string(it->second));
      }
      names_.push_back(verbs_[p.verb] + " " + objects_[p.object]);
    }
  }

  std::size_t num_classes() const noexcept { return pairs_.size(); }
  const std::vector<std::string>& verbs() const noexcept { return verbs_; }
  const std::vector<std::string>& objects() const noexcept { return objects_; }
  const std::vector<ClassPair>& classes() const noexcept { return pairs_; }
  const std::vector<std::string>& class_names() const noexcept { return names_; }

  const ClassPair& pair(std::size_t class_index) const {
    check_index(class_index);
    return pairs_[class_index];
  }
  const std::string& verb_of(std::size_t class_index) const {
    return verbs_[pair(class_index).verb];
  }
  const std::string& object_of(std::size_t class_index) const {
    return objects_[pair(class_index).object];
  }

  // Index of an object identifier; throws if unknown.
  std::size_t object_index(const std::string& object) const {
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      if (objects_[i] == object) return i;
    }
    throw Error("unknown object class '" + object + "'");
  }

  // Classes whose object is `object_index`, in class order.
  std::vector<std::size_t> classes_with_object(std::size_t object_index) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      if (pairs_[i].object == object_index) out.push_back(i);
    }
    return out;
  }

  void check_index(std::size_t class_index) const {
    if (class_index >= pairs_.size()) {
      throw Error("class index " + std::to_string(class_index) + " out of range (C=" +
                  std::to_string(pairs_.size()) + ")");
    }
  }

 private:
  std::vector<std::string> verbs_;
  std::vector<std::string> objects_;
  std::vector<ClassPair> pairs_;
  std::vector<std::string> names_;
};

inline ClassTaxonomy build_taxonomy(std::vector<std::string> verbs,
                                    std::vector<std::string> objects,
                                    std::vector<ClassPair> pairs) {
  return ClassTaxonomy(std::move(verbs), std::move(objects), std::move(pairs));
}

// Every (verb, object) combination, object-major within each verb.
inline ClassTaxonomy full_product_taxonomy(std::size_t num_verbs, std::size_t num_objects) {
  std::vector<std::string> verbs, objects;
  for (std::size_t v = 0; v < num_verbs; ++v) verbs.push_back("v" + std::to_string(v));
  for (std::size_t o = 0; o < num_objects; ++o) objects.push_back("o" + std::to_string(o));
  std::vector<ClassPair> pairs;
  for (std::size_t v = 0; v < num_verbs; ++v) {
    for (std::size_t o = 0; o < num_objects; ++o) pairs.push_back({v, o});
  }
  return build_taxonomy(std::move(verbs), std::move(objects), std::move(pairs));
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> read_tab_pairs(std::istream& in,
                                                                       const std::string& what) {
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw Error(what + " line " + std::to_string(line_no) +
                      ": expected exactly two tab-separated fields",
                  "parse_error");
    }
    rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return rows;
}

}  // namespace detail

// Taxonomy file: one `<verb>\t<object>` per line; class index = line order.
// Verb and object vocabularies are collected in first-appearance order.
inline ClassTaxonomy parse_taxonomy(std::istream& in) {
  std::vector<std::string> verbs, objects;
  std::map<std::string, std::size_t> verb_ix, object_ix;
  std::vector<ClassPair> pairs;
  for (auto& [verb, object] : detail::read_tab_pairs(in, "taxonomy")) {
    auto v = verb_ix.try_emplace(verb, verbs.size());
    if (v.second) verbs.push_back(verb);
    auto o = object_ix.try_emplace(object, objects.size());
    if (o.second) objects.push_back(object);
    pairs.push_back({v.first->second, o.first->second});
  }
  return build_taxonomy(std::move(verbs), std::move(objects), std::move(pairs));
}

inline ClassTaxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open taxonomy file " + path, "io_error");
  try {
    return parse_taxonomy(in);
  } catch (const Error& e) {
    throw e.with_context(path);
  }
}

inline void write_taxonomy(std::ostream& out, const ClassTaxonomy& taxonomy) {
  for (std::size_t i = 0; i < taxonomy.num_classes(); ++i) {
    out << taxonomy.verb_of(i) << '\t' << taxonomy.object_of(i) << '\n';
  }
}

// Verb -> surface form (e.g. ride -> riding) used when building prompts.
using SurfaceTable = std::map<std::string, std::string>;

inline SurfaceTable parse_surface_table(std::istream& in) {
  SurfaceTable table;
  for (auto& [verb, surface] : detail::read_tab_pairs(in, "surface table")) {
    table[verb] = surface;
  }
  return table;
}

inline SurfaceTable load_surface_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open surface table " + path, "io_error");
  return parse_surface_table(in);
}

inline constexpr std::string_view kVerbSlot = "{verb}";
inline constexpr std::string_view kObjectSlot = "{object}";
inline constexpr std::string_view kDefaultPromptTemplate = "a person {verb} a {object}";

// Substitutes the class's verb (through `surface` when present) and object
// into `templ`. No inflection beyond the table lookup.
inline std::string make_prompt(const ClassTaxonomy& taxonomy, std::size_t class_index,
                               std::string_view templ = kDefaultPromptTemplate,
                               const SurfaceTable& surface = {}) {
  taxonomy.check_index(class_index);
  if (templ.find(kVerbSlot) == std::string_view::npos ||
      templ.find(kObjectSlot) == std::string_view::npos) {
    throw Error("prompt template must contain both {verb} and {object} slots");
  }
  std::string verb = taxonomy.verb_of(class_index);
  if (auto it = surface.find(verb); it != surface.end()) verb = it->second;
  const std::string& object = taxonomy.object_of(class_index);

  std::string out;
  std::size_t pos = 0;
  while (pos < templ.size()) {
    if (templ.compare(pos, kVerbSlot.size(), kVerbSlot) == 0) {
      out += verb;
      pos += kVerbSlot.size();
    } else if (templ.compare(pos, kObjectSlot.size(), kObjectSlot) == 0) {
      out += object;
      pos += kObjectSlot.size();
    } else {
      out += templ[pos++];
    }
  }
  return out;
}

// Sign labels: +1 positive, -1 negative.
using SignLabels = std::vector<int>;

class ClassStats {
 public:
  ClassStats() = default;
  explicit ClassStats(std::vector<std::int64_t> train_count)
      : train_count_(std::move(train_count)) {}

  std::size_t num_classes() const noexcept { return train_count_.size(); }
  const std::vector<std::int64_t>& train_count() const noexcept { return train_count_; }
  std::int64_t count(std::size_t c) const { return train_count_.at(c); }

  bool is_few_shot(std::size_t c, std::int64_t k) const { return train_count_.at(c) <= k; }

  std::vector<std::size_t> few_shot_at(std::int64_t k) const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < train_count_.size(); ++c) {
      if (train_count_[c] <= k) out.push_back(c);
    }
    return out;
  }

  std::int64_t total() const {
    return std::accumulate(train_count_.begin(), train_count_.end(), std::int64_t{0});
  }

 private:
  std::vector<std::int64_t> train_count_;
};

// Counts positives per class. With zero label vectors the class count must
// be given explicitly.
inline ClassStats compute_stats(std::span<const SignLabels> labels, std::size_t num_classes) {
  std::vector<std::int64_t> counts(num_classes, 0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n].size() != num_classes) {
      throw Error("label vector " + std::to_string(n) + " has length " +
                  std::to_string(labels[n].size()) + ", expected " +
                  std::to_string(num_classes));
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (labels[n][c] == 1) ++counts[c];
    }
  }
  return ClassStats(std::move(counts));
}

}  // namespace hoilab

#endif  // HOILAB_TAXONOMY_HPP_
