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


// Hand-computed detection fixture: three scenes, two HOI classes.
//
// Class 0 ground truth: scene A (h .0 .0 .4 .4, o .5 .5 .9 .9) and
// scene B (h .2 .2 .6 .6, o .6 .1 .9 .4).
//   .9  A exact                          TP at every threshold
//   .8  A exact again                    FP (ground truth already taken)
//   .7  B human exact, object shifted    object IoU .075/.105 = 0.714
//   .6  C                                FP (no class-0 pair in C)
// AP = (1 + 2/3)/2 at thresholds .25 and .5, and 1/2 at .75.
//
// Class 1 ground truth: scene A (h .0 .0 .4 .4, o .1 .5 .3 .9) and
// scene C (h .5 .0 1 .5, o .0 .5 .5 1).
//   .95 C exact                          TP
//   .5  A human exact, object .1 .5 .3 .75  object IoU .05/.08 = 0.625
//   .3  B                                FP
// AP = 1 at .25 and .5, and 1/2 at .75.

#ifndef HOILAB_TESTS_FIXTURES_HPP_
#define HOILAB_TESTS_FIXTURES_HPP_

#include <map>
#include <vector>

#include "hoilab/regional.hpp"

namespace hoilab::fixture {

struct DetectionFixture {
  std::vector<std::vector<ScoredPair>> predictions;
  std::vector<std::vector<GroundTruthPair>> ground_truth;
  ClassStats stats;
  // threshold -> expected per-class AP
  std::map<double, std::vector<double>> expected_ap;
};

inline DetectionFixture three_scene_fixture() {
  const Box a_h{0.0, 0.0, 0.4, 0.4}, a_o0{0.5, 0.5, 0.9, 0.9}, a_o1{0.1, 0.5, 0.3, 0.9};
  const Box b_h{0.2, 0.2, 0.6, 0.6}, b_o0{0.6, 0.1, 0.9, 0.4};
  const Box c_h{0.5, 0.0, 1.0, 0.5}, c_o1{0.0, 0.5, 0.5, 1.0};
  DetectionFixture f;
  f.ground_truth = {{{"A", a_h, a_o0}, {"B", b_h, b_o0}}, {{"A", a_h, a_o1}, {"C", c_h, c_o1}}};
  f.predictions = {{{"A", a_h, a_o0, 0.9},
                    {"A", a_h, a_o0, 0.8},
                    {"B", b_h, {0.65, 0.1, 0.95, 0.4}, 0.7},
                    {"C", c_h, c_o1, 0.6}},
                   {{"C", c_h, c_o1, 0.95},
                    {"A", a_h, {0.1, 0.5, 0.3, 0.75}, 0.5},
                    {"B", b_h, b_o0, 0.3}}};
  f.stats = ClassStats({5, 50});
  f.expected_ap = {{0.25, {(1.0 + 2.0 / 3.0) / 2.0, 1.0}},
                   {0.5, {(1.0 + 2.0 / 3.0) / 2.0, 1.0}},
                   {0.75, {0.5, 0.5}}};
  return f;
}

}  // namespace hoilab::fixture

#endif  // HOILAB_TESTS_FIXTURES_HPP_
