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

#include "wsicad/inference.hpp"

#include <algorithm>
#include <cmath>

#include "wsicad/errors.hpp"
#include "wsicad/synthgen.hpp"

namespace wsicad {

void LinearModel::validate() const {
  if (class_names.size() != kNumClasses) {
    throw ValidationError("model: class_names must have 3 entries");
  }
  if (f < 1) throw ValidationError("model: f must be at least 1");
  if (w.size() != static_cast<std::size_t>(f) * kNumClasses) {
    throw ValidationError("model: w must be f x 3");
  }
  if (b.size() != kNumClasses) throw ValidationError("model: b must have 3 entries");
  for (double v : w) {
    if (!std::isfinite(v)) throw ValidationError("model: non-finite weight");
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw ValidationError("model: non-finite bias");
  }
  if (spatial_k > 0) {
    if (w_spatial.size() != static_cast<std::size_t>(spatial_k) * kNumClasses) {
      throw ValidationError("model: w_spatial must be k x 3");
    }
    for (double v : w_spatial) {
      if (!std::isfinite(v)) {
        throw ValidationError("model: non-finite spatial weight");
      }
    }
  } else if (!w_spatial.empty()) {
    throw ValidationError("model: w_spatial present but k missing");
  }
}

std::span<const double> LinearModel::spatial_row(int channel) const {
  if (spatial_k > 0) {
    return {w_spatial.data() + static_cast<std::size_t>(channel) * kNumClasses,
            kNumClasses};
  }
  return row(channel);
}

LinearScore linear_score(std::span<const float> activations,
                         const LinearModel& model) {
  if (activations.size() != static_cast<std::size_t>(model.f)) {
    throw ValidationError("linear_score: got " +
                          std::to_string(activations.size()) +
                          " activations, model expects " +
                          std::to_string(model.f));
  }
  LinearScore result;
  result.scores = {model.b[0], model.b[1], model.b[2]};
  for (int i = 0; i < model.f; ++i) {
    const double a = activations[static_cast<std::size_t>(i)];
    const auto wr = model.row(i);
    result.scores[0] += wr[0] * a;
    result.scores[1] += wr[1] * a;
    result.scores[2] += wr[2] * a;
  }
  // >= so that equal scores resolve to the higher-severity class
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    if (result.scores[static_cast<std::size_t>(c)] >=
        result.scores[static_cast<std::size_t>(best)]) {
      best = c;
    }
  }
  result.argmax = static_cast<ClassLabel>(best);
  return result;
}

std::array<double, kNumClasses> softmax3(
    const std::array<double, kNumClasses>& scores) {
  const double top = *std::max_element(scores.begin(), scores.end());
  std::array<double, kNumClasses> out{};
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    out[static_cast<std::size_t>(c)] =
        std::exp(scores[static_cast<std::size_t>(c)] - top);
    sum += out[static_cast<std::size_t>(c)];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<float> extract_handcrafted_features(const Patch& patch) {
  const int size = patch.size;
  const double n = static_cast<double>(size) * size;
  std::vector<float> feat(kHandcraftedFeatureCount, 0.0f);

  double sum[3] = {0, 0, 0};
  double sum_sq[3] = {0, 0, 0};
  double hist[3][8] = {};
  for (std::size_t i = 0; i < patch.pixels.size(); i += 3) {
    for (int c = 0; c < 3; ++c) {
      const std::uint8_t v = patch.pixels[i + static_cast<std::size_t>(c)];
      const double x = v / 255.0;
      sum[c] += x;
      sum_sq[c] += x * x;
      hist[c][v >> 5] += 1.0;
    }
  }
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / n;
    feat[static_cast<std::size_t>(c)] = static_cast<float>(mean);
    feat[static_cast<std::size_t>(3 + c)] =
        static_cast<float>(std::max(0.0, sum_sq[c] / n - mean * mean));
    for (int bin = 0; bin < 8; ++bin) {
      feat[static_cast<std::size_t>(6 + c * 8 + bin)] =
          static_cast<float>(hist[c][bin] / n);
    }
  }

  // gradient energy over luminance, forward differences
  auto lum = [&](int x, int y) {
    const std::uint8_t* p = patch.at(x, y);
    return (p[0] + p[1] + p[2]) / (3.0 * 255.0);
  };
  double sum_dx = 0, sum_dy = 0, sum_mag = 0, max_mag = 0;
  std::int64_t grad_count = 0;
  for (int y = 0; y + 1 < size; ++y) {
    for (int x = 0; x + 1 < size; ++x) {
      const double here = lum(x, y);
      const double dx = lum(x + 1, y) - here;
      const double dy = lum(x, y + 1) - here;
      const double mag = std::sqrt(dx * dx + dy * dy);
      sum_dx += std::abs(dx);
      sum_dy += std::abs(dy);
      sum_mag += mag;
      max_mag = std::max(max_mag, mag);
      ++grad_count;
    }
  }
  if (grad_count > 0) {
    feat[30] = static_cast<float>(sum_dx / static_cast<double>(grad_count));
    feat[31] = static_cast<float>(sum_dy / static_cast<double>(grad_count));
    feat[32] = static_cast<float>(sum_mag / static_cast<double>(grad_count));
    feat[33] = static_cast<float>(max_mag);
  }
  return feat;
}

FeatureMaps signature_feature_maps(const Patch& patch, int grid) {
  FeatureMaps maps;
  maps.k = kNumClasses;
  maps.h = grid;
  maps.w = grid;
  maps.data.assign(static_cast<std::size_t>(kNumClasses) * grid * grid, 0.0f);
  std::vector<std::int64_t> counts(
      static_cast<std::size_t>(kNumClasses) * grid * grid, 0);
  std::vector<std::int64_t> totals(static_cast<std::size_t>(grid) * grid, 0);

  const int size = patch.size;
  for (int y = 0; y < size; ++y) {
    const int gy = static_cast<int>(static_cast<std::int64_t>(y) * grid / size);
    for (int x = 0; x < size; ++x) {
      const int gx =
          static_cast<int>(static_cast<std::int64_t>(x) * grid / size);
      const std::uint8_t* p = patch.at(x, y);
      const std::size_t cell = static_cast<std::size_t>(gy) * grid + gx;
      ++totals[cell];
      const int cls = signature_class_of_pixel(p[0], p[1], p[2]);
      if (cls >= 0) {
        ++counts[static_cast<std::size_t>(cls) * grid * grid + cell];
      }
    }
  }
  for (int c = 0; c < kNumClasses; ++c) {
    for (std::size_t cell = 0; cell < totals.size(); ++cell) {
      if (totals[cell] > 0) {
        maps.data[static_cast<std::size_t>(c) * grid * grid + cell] =
            static_cast<float>(
                static_cast<double>(
                    counts[static_cast<std::size_t>(c) * grid * grid + cell]) /
                static_cast<double>(totals[cell]));
      }
    }
  }
  return maps;
}

namespace {

struct SignatureCounts {
  std::int64_t non_background = 0;
  std::array<std::int64_t, kNumClasses> per_class{};
  std::int64_t total = 0;
};

SignatureCounts count_signatures(const Patch& patch) {
  SignatureCounts counts;
  counts.total = static_cast<std::int64_t>(patch.size) * patch.size;
  for (std::size_t i = 0; i < patch.pixels.size(); i += 3) {
    const std::uint8_t r = patch.pixels[i];
    const std::uint8_t g = patch.pixels[i + 1];
    const std::uint8_t b = patch.pixels[i + 2];
    if (is_background_pixel(r, g, b)) continue;
    ++counts.non_background;
    const int cls = signature_class_of_pixel(r, g, b);
    if (cls >= 0) ++counts.per_class[static_cast<std::size_t>(cls)];
  }
  return counts;
}

}  // namespace

DetectionResult SyntheticBackend::detect_prob(const Patch& patch) const {
  const SignatureCounts counts = count_signatures(patch);
  return {static_cast<double>(counts.non_background) /
          static_cast<double>(counts.total)};
}

ClassificationResult SyntheticBackend::classify_patch(
    const Patch& patch) const {
  const SignatureCounts counts = count_signatures(patch);
  ClassificationResult result;
  const std::int64_t signature_total =
      counts.per_class[0] + counts.per_class[1] + counts.per_class[2];
  if (signature_total == 0) {
    result.probs = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  } else {
    for (int c = 0; c < kNumClasses; ++c) {
      result.probs[static_cast<std::size_t>(c)] =
          static_cast<double>(counts.per_class[static_cast<std::size_t>(c)]) /
          static_cast<double>(signature_total);
    }
  }
  result.feature_maps = signature_feature_maps(patch);
  return result;
}

LinearBackend::LinearBackend(LinearModel model) : model_(std::move(model)) {
  model_.validate();
  if (model_.f != kHandcraftedFeatureCount) {
    throw ValidationError(
        "linear backend requires f = " +
        std::to_string(kHandcraftedFeatureCount) + ", model has f = " +
        std::to_string(model_.f));
  }
}

DetectionResult LinearBackend::detect_prob(const Patch& patch) const {
  const SignatureCounts counts = count_signatures(patch);
  return {static_cast<double>(counts.non_background) /
          static_cast<double>(counts.total)};
}

ClassificationResult LinearBackend::classify_patch(const Patch& patch) const {
  ClassificationResult result;
  result.features = extract_handcrafted_features(patch);
  result.probs = softmax3(linear_score(result.features, model_).scores);
  result.feature_maps = signature_feature_maps(patch);
  return result;
}

namespace {

std::string patch_key(const std::string& slide_id, int level, std::int64_t x,
                      std::int64_t y, int size) {
  return slide_id + "|" + std::to_string(level) + "|" + std::to_string(x) +
         "|" + std::to_string(y) + "|" + std::to_string(size);
}

std::unordered_map<std::string, int> build_index(const FeatureTable& table,
                                                 const char* table_name) {
  if (table.patch_refs.empty()) {
    throw ValidationError(std::string(table_name) +
                          " table needs patch_refs for playback");
  }
  std::unordered_map<std::string, int> index;
  index.reserve(table.patch_refs.size());
  for (int i = 0; i < table.n; ++i) {
    const PatchRef& ref = table.patch_refs[static_cast<std::size_t>(i)];
    index[patch_key(ref.slide_id, ref.level, ref.x, ref.y, ref.size)] = i;
  }
  return index;
}

}  // namespace

PlaybackBackend::PlaybackBackend(FeatureTable classification_features,
                                 LinearModel model, FeatureTable detection_probs)
    : features_(std::move(classification_features)),
      model_(std::move(model)),
      detect_(std::move(detection_probs)) {
  features_.validate();
  detect_.validate();
  model_.validate();
  if (features_.f != model_.f) {
    throw ValidationError("playback: feature table f=" +
                          std::to_string(features_.f) +
                          " does not match model f=" + std::to_string(model_.f));
  }
  if (detect_.f != 1) {
    throw ValidationError("playback: detection table must have f = 1");
  }
  feature_index_ = build_index(features_, "classification");
  detect_index_ = build_index(detect_, "detection");
}

int PlaybackBackend::find_row(
    const std::unordered_map<std::string, int>& index, const Patch& patch,
    const char* table_name) const {
  const auto it = index.find(
      patch_key(patch.slide_id, patch.level, patch.x, patch.y, patch.size));
  if (it == index.end()) {
    throw InferenceError(std::string("playback: no ") + table_name +
                         " row for patch slide=" + patch.slide_id + " level=" +
                         std::to_string(patch.level) + " x=" +
                         std::to_string(patch.x) + " y=" +
                         std::to_string(patch.y) + " size=" +
                         std::to_string(patch.size));
  }
  return it->second;
}

DetectionResult PlaybackBackend::detect_prob(const Patch& patch) const {
  const int row = find_row(detect_index_, patch, "detection");
  const double p = detect_.row(row)[0];
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InferenceError("playback: detection probability out of [0,1]");
  }
  return {p};
}

ClassificationResult PlaybackBackend::classify_patch(const Patch& patch) const {
  const int row = find_row(feature_index_, patch, "classification");
  ClassificationResult result;
  const auto activations = features_.row(row);
  result.features.assign(activations.begin(), activations.end());
  result.probs = softmax3(linear_score(activations, model_).scores);
  return result;
}

}  // namespace wsicad
