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

#include "wsicad/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "wsicad/errors.hpp"
#include "wsicad/parallel.hpp"

namespace wsicad {

StumpResult stump_fit(std::span<const float> activations,
                      std::span<const std::uint8_t> labels) {
  if (activations.size() != labels.size()) {
    throw ValidationError("stump_fit: activations/labels length mismatch");
  }
  const std::size_t n = activations.size();
  if (n < 2) throw ValidationError("stump_fit: need at least 2 samples");
  for (float a : activations) {
    if (!std::isfinite(a)) {
      throw ValidationError("stump_fit: non-finite activation");
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return activations[i] < activations[j];
  });

  std::int64_t total_pos = 0;
  for (std::uint8_t y : labels) total_pos += y;
  const std::int64_t total_neg = static_cast<std::int64_t>(n) - total_pos;

  StumpResult best;
  best.accuracy = -1.0;
  auto consider = [&](double threshold, int polarity, std::int64_t correct) {
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    if (acc > best.accuracy) {  // strict: earlier candidates win ties
      best.threshold = threshold;
      best.polarity = polarity;
      best.accuracy = acc;
    }
  };

  // Sentinel below the minimum: everything predicted one class.
  const double below_min = static_cast<double>(activations[order[0]]) - 1.0;
  consider(below_min, +1, total_pos);
  consider(below_min, -1, total_neg);

  // Walk the sorted samples accumulating counts at or below the cursor;
  // emit a candidate at each boundary between distinct values.
  std::int64_t pos_below = 0;
  std::int64_t neg_below = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = order[i];
    pos_below += labels[idx];
    neg_below += 1 - labels[idx];
    if (i + 1 < n && activations[order[i + 1]] > activations[idx]) {
      const double threshold =
          (static_cast<double>(activations[idx]) +
           static_cast<double>(activations[order[i + 1]])) /
          2.0;
      // +1: positives above, negatives at or below
      consider(threshold, +1, (total_pos - pos_below) + neg_below);
      consider(threshold, -1, (total_neg - neg_below) + pos_below);
    }
  }
  return best;
}

FeatureRanking rank_features(const FeatureTable& table, ClassLabel target,
                             int k, int jobs) {
  table.validate();
  if (table.labels.empty()) {
    throw ValidationError("rank_features: table has no labels");
  }
  std::vector<std::uint8_t> binary(static_cast<std::size_t>(table.n));
  for (int i = 0; i < table.n; ++i) {
    binary[static_cast<std::size_t>(i)] =
        table.labels[static_cast<std::size_t>(i)] == target ? 1 : 0;
  }

  std::vector<StumpResult> stumps(static_cast<std::size_t>(table.f));
  parallel_for(static_cast<std::size_t>(table.f), jobs, [&](std::size_t j) {
    std::vector<float> column(static_cast<std::size_t>(table.n));
    for (int i = 0; i < table.n; ++i) {
      column[static_cast<std::size_t>(i)] =
          table.data[static_cast<std::size_t>(i) * table.f + j];
    }
    StumpResult stump = stump_fit(column, binary);
    stump.feature_index = static_cast<int>(j);
    stumps[j] = stump;
  });

  std::stable_sort(stumps.begin(), stumps.end(),
                   [](const StumpResult& a, const StumpResult& b) {
                     if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
                     return a.feature_index < b.feature_index;
                   });
  FeatureRanking ranking;
  ranking.target_class = target;
  const std::size_t keep =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)),
                            stumps.size());
  ranking.ranked.assign(stumps.begin(),
                        stumps.begin() + static_cast<std::ptrdiff_t>(keep));
  return ranking;
}

void save_ranking(const FeatureRanking& ranking,
                  const std::filesystem::path& path) {
  nlohmann::json features = nlohmann::json::array();
  for (const StumpResult& stump : ranking.ranked) {
    features.push_back({{"index", stump.feature_index},
                        {"threshold", stump.threshold},
                        {"polarity", stump.polarity},
                        {"accuracy", stump.accuracy}});
  }
  nlohmann::json j;
  j["target_class"] = to_string(ranking.target_class);
  j["k"] = ranking.ranked.size();
  j["features"] = std::move(features);
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

std::vector<int> top_activations(const FeatureTable& table, int feature_index,
                                 int m) {
  if (feature_index < 0 || feature_index >= table.f) {
    throw std::out_of_range("top_activations: feature " +
                            std::to_string(feature_index) + " out of range");
  }
  if (m < 1) throw ValidationError("top_activations: m must be at least 1");

  std::vector<int> rows(static_cast<std::size_t>(table.n));
  std::iota(rows.begin(), rows.end(), 0);
  std::stable_sort(rows.begin(), rows.end(), [&](int a, int b) {
    // strictly greater keeps equal activations in row order
    return table.data[static_cast<std::size_t>(a) * table.f + feature_index] >
           table.data[static_cast<std::size_t>(b) * table.f + feature_index];
  });
  rows.resize(std::min<std::size_t>(static_cast<std::size_t>(m), rows.size()));
  return rows;
}

CamMap compute_cam(const FeatureMaps& maps, const LinearModel& model,
                   ClassLabel label, int upsample_size) {
  model.validate();
  if (maps.k != model.spatial_channels()) {
    throw ValidationError("compute_cam: maps have " + std::to_string(maps.k) +
                          " channels, model expects " +
                          std::to_string(model.spatial_channels()));
  }
  if (maps.h < 1 || maps.w < 1) {
    throw ValidationError("compute_cam: empty feature maps");
  }

  CamMap cam;
  cam.label = label;
  cam.h = maps.h;
  cam.w = maps.w;
  cam.raw.assign(static_cast<std::size_t>(maps.h) * maps.w, 0.0);
  const std::size_t c = static_cast<std::size_t>(label);
  for (int k = 0; k < maps.k; ++k) {
    const double weight = model.spatial_row(k)[c];
    if (weight == 0.0) continue;
    for (int y = 0; y < maps.h; ++y) {
      for (int x = 0; x < maps.w; ++x) {
        cam.raw[static_cast<std::size_t>(y) * maps.w + x] +=
            weight * static_cast<double>(maps.at(k, y, x));
      }
    }
  }

  const auto [mn, mx] = std::minmax_element(cam.raw.begin(), cam.raw.end());
  cam.flat = *mx == *mn;
  cam.normalized.assign(cam.raw.size(), 0.0);
  if (!cam.flat) {
    const double span = *mx - *mn;
    for (std::size_t i = 0; i < cam.raw.size(); ++i) {
      cam.normalized[i] = (cam.raw[i] - *mn) / span;
    }
  }

  cam.upsample_size = upsample_size > 0 ? upsample_size : maps.h;
  const int out = cam.upsample_size;
  cam.upsampled.assign(static_cast<std::size_t>(out) * out, 0.0);
  // bilinear with half-pixel centers, clamped at the border
  for (int y = 0; y < out; ++y) {
    double sy = (y + 0.5) * maps.h / out - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(maps.h - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, maps.h - 1);
    const double fy = sy - y0;
    for (int x = 0; x < out; ++x) {
      double sx = (x + 0.5) * maps.w / out - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(maps.w - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, maps.w - 1);
      const double fx = sx - x0;
      const double top =
          cam.normalized[static_cast<std::size_t>(y0) * maps.w + x0] *
              (1.0 - fx) +
          cam.normalized[static_cast<std::size_t>(y0) * maps.w + x1] * fx;
      const double bottom =
          cam.normalized[static_cast<std::size_t>(y1) * maps.w + x0] *
              (1.0 - fx) +
          cam.normalized[static_cast<std::size_t>(y1) * maps.w + x1] * fx;
      cam.upsampled[static_cast<std::size_t>(y) * out + x] =
          top * (1.0 - fy) + bottom * fy;
    }
  }
  return cam;
}

std::array<std::uint8_t, 3> heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto channel = [](double t) {
    return static_cast<std::uint8_t>(std::lround(255.0 * t));
  };
  if (v <= 0.5) {
    const double t = v * 2.0;
    return {0, channel(t), channel(1.0 - t)};
  }
  const double t = (v - 0.5) * 2.0;
  return {channel(t), channel(1.0 - t), 0};
}

RgbImage render_cam(const CamMap& cam) {
  const int size = cam.upsample_size;
  RgbImage image(size, size, 0, 0, 0);
  if (cam.flat) return image;  // no signal
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const auto rgb =
          heat_color(cam.upsampled[static_cast<std::size_t>(y) * size + x]);
      image.set(x, y, rgb[0], rgb[1], rgb[2]);
    }
  }
  return image;
}

RgbImage render_overlay(const CamMap& cam, const Patch& patch, double alpha) {
  if (cam.upsample_size != patch.size) {
    throw ValidationError("render_overlay: CAM upsample size " +
                          std::to_string(cam.upsample_size) +
                          " != patch size " + std::to_string(patch.size));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError("render_overlay: alpha must be in [0,1]");
  }

  RgbImage image(patch.size, patch.size, 0, 0, 0);
  for (int y = 0; y < patch.size; ++y) {
    for (int x = 0; x < patch.size; ++x) {
      const double v =
          cam.upsampled[static_cast<std::size_t>(y) * patch.size + x];
      const double weight = alpha * v;
      const auto heat = heat_color(v);
      const std::uint8_t* src = patch.at(x, y);
      std::uint8_t* dst = image.at(x, y);
      for (int c = 0; c < 3; ++c) {
        const double blended =
            (1.0 - weight) * src[c] + weight * static_cast<double>(heat[c]);
        dst[c] = static_cast<std::uint8_t>(
            std::clamp<long>(std::lround(blended), 0, 255));
      }
    }
  }
  return image;
}

}  // namespace wsicad
