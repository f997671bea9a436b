/*
 * Copyright (c) 2026, the wsicad authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wsicad/image.hpp"
#include "wsicad/inference.hpp"
#include "wsicad/labels.hpp"
#include "wsicad/pyramid.hpp"

namespace wsicad {

/// One-level decision rule: predict positive iff polarity*(a - threshold)>0.
struct StumpResult {
  int feature_index = 0;
  double threshold = 0.0;
  int polarity = 1;  // +1 or -1
  double accuracy = 0.0;

  bool predict(double activation) const {
    return polarity * (activation - threshold) > 0.0;
  }
};

/// Exhaustive threshold search for the best 0/1-loss stump. Candidate
/// thresholds are the midpoints between consecutive distinct sorted
/// activations plus one sentinel below the minimum; this set always
/// contains an optimum. Both polarities are tried, so accuracy >= 0.5.
/// Ties resolve to (lower threshold, positive polarity).
/// labels: 1 = positive, 0 = negative. Throws ValidationError on
/// non-finite activations, length mismatch, or fewer than 2 samples.
StumpResult stump_fit(std::span<const float> activations,
                      std::span<const std::uint8_t> labels);

struct FeatureRanking {
  ClassLabel target_class = ClassLabel::kNonCarcinoma;
  std::vector<StumpResult> ranked;  // non-increasing accuracy
};

/// One-vs-rest stump per feature, top-k by accuracy (ties by lower feature
/// index). The table must carry labels. Stumps over features run in
/// parallel when jobs > 1; the ranking is sorted after the gather, so the
/// result is schedule-independent.
FeatureRanking rank_features(const FeatureTable& table, ClassLabel target,
                             int k = 100, int jobs = 1);

void save_ranking(const FeatureRanking& ranking,
                  const std::filesystem::path& path);

/// Row indices with the m largest activations on one feature, descending,
/// ties by row order.
std::vector<int> top_activations(const FeatureTable& table, int feature_index,
                                 int m);

struct CamMap {
  ClassLabel label = ClassLabel::kNonCarcinoma;
  int h = 0;
  int w = 0;
  std::vector<double> raw;         // h*w, sum_k w[k][c] * F_k(y,x)
  std::vector<double> normalized;  // (raw-min)/(max-min); all 0 when flat
  bool flat = false;               // max == min
  int upsample_size = 0;
  std::vector<double> upsampled;   // upsample^2, bilinear over normalized

  double raw_at(int y, int x) const {
    return raw[static_cast<std::size_t>(y) * w + x];
  }
};

/// Weighted sum of the spatial feature maps with the class column of the
/// model's spatial weights. upsample_size = 0 keeps the grid resolution.
/// Throws ValidationError when maps.k differs from the model's spatial
/// channel count.
CamMap compute_cam(const FeatureMaps& maps, const LinearModel& model,
                   ClassLabel label, int upsample_size = 0);

/// Heat colormap: blue (0) -> green (0.5) -> red (1), piecewise linear.
std::array<std::uint8_t, 3> heat_color(double v);

/// Standalone CAM rendering: heat_color over the upsampled map. A flat map
/// carries no signal and renders black.
RgbImage render_cam(const CamMap& cam);

/// Per-pixel blend: out = (1 - alpha*v) * patch + alpha*v * heat_color(v).
/// alpha = 0 returns the patch bytes unchanged. The upsampled CAM must
/// match the patch size.
RgbImage render_overlay(const CamMap& cam, const Patch& patch, double alpha);

}  // namespace wsicad
