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
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wsicad/labels.hpp"
#include "wsicad/pyramid.hpp"

namespace wsicad {

struct DetectionResult {
  double probability = 0.0;  // that the patch contains lesion tissue
};

/// K spatial maps of H x W non-negative activations.
struct FeatureMaps {
  int k = 0;
  int h = 0;
  int w = 0;
  std::vector<float> data;  // k * h * w, map-major

  bool empty() const { return data.empty(); }
  float at(int map, int y, int x) const {
    return data[(static_cast<std::size_t>(map) * h + y) * w + x];
  }
};

struct ClassificationResult {
  std::array<double, kNumClasses> probs{};  // sums to 1 within 1e-6
  std::vector<float> features;              // empty when backend has none
  FeatureMaps feature_maps;                 // empty when backend has none
};

/// Identifies the patch a feature row was computed from.
struct PatchRef {
  std::string slide_id;
  int level = 0;
  std::int64_t x = 0;
  std::int64_t y = 0;
  int size = 0;

  bool operator==(const PatchRef&) const = default;
};

/// Linear scoring layer: scores = W^T a + b. W rows are per-feature weight
/// triples (the W_0, W_1, W_2 of each feature). An optional spatial weight
/// matrix serves CAM when the scoring features and the spatial channels
/// differ; when absent and k == f, W doubles for both.
struct LinearModel {
  std::vector<std::string> class_names;  // exactly 3
  int f = 0;
  std::vector<double> w;  // f x 3, row-major
  std::vector<double> b;  // 3
  std::vector<double> w_spatial;  // k x 3 row-major, may be empty
  int spatial_k = 0;              // 0 means "use w and f"

  void validate() const;
  std::span<const double> row(int feature) const {
    return {w.data() + static_cast<std::size_t>(feature) * kNumClasses,
            kNumClasses};
  }
  /// Weights used for CAM: w_spatial when present, else w.
  std::span<const double> spatial_row(int channel) const;
  int spatial_channels() const { return spatial_k > 0 ? spatial_k : f; }
};

LinearModel load_model(const std::filesystem::path& path);
void save_model(const LinearModel& model, const std::filesystem::path& path);

struct LinearScore {
  std::array<double, kNumClasses> scores{};
  ClassLabel argmax = ClassLabel::kNonCarcinoma;  // ties go to higher severity
};

/// scores = W^T a + b. Throws ValidationError on dimension mismatch.
LinearScore linear_score(std::span<const float> activations,
                         const LinearModel& model);

std::array<double, kNumClasses> softmax3(
    const std::array<double, kNumClasses>& scores);

/// N x F activation table, optionally labeled and keyed by patch.
struct FeatureTable {
  int n = 0;
  int f = 0;
  std::vector<float> data;         // n * f, row-major
  std::vector<ClassLabel> labels;  // size n or empty
  std::vector<PatchRef> patch_refs;  // size n or empty

  std::span<const float> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * f,
            static_cast<std::size_t>(f)};
  }
  void validate() const;
};

/// Header goes to <path>; the float payload goes to a sibling file with the
/// same stem and a .f32 extension (little-endian 32-bit, row-major).
FeatureTable load_features(const std::filesystem::path& json_path);
void save_features(const FeatureTable& table,
                   const std::filesystem::path& json_path);

/// Hand-crafted patch descriptor, 34 values in a fixed order:
///   [0..2]   per-channel mean, pixel values scaled to [0,1]
///   [3..5]   per-channel variance
///   [6..29]  8-bin per-channel histograms (R, G, B), fractions of pixels
///   [30..33] gradient-energy stats over luminance: mean |dx|, mean |dy|,
///            mean magnitude, max magnitude (forward differences)
inline constexpr int kHandcraftedFeatureCount = 34;
std::vector<float> extract_handcrafted_features(const Patch& patch);

/// Per-class signature-indicator maps pooled to a grid x grid layout:
/// map c holds, per cell, the fraction of cell pixels carrying class c's
/// color signature. K = 3.
FeatureMaps signature_feature_maps(const Patch& patch, int grid = 8);

/// Patch inference contract. Implementations are immutable after
/// construction and safe for concurrent calls on distinct patches.
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;
  virtual DetectionResult detect_prob(const Patch& patch) const = 0;
  virtual ClassificationResult classify_patch(const Patch& patch) const = 0;
  virtual std::string name() const = 0;
};

/// Exact rule-based backend over the synthetic color signatures.
/// detect_prob = fraction of non-background pixels; classification probs =
/// normalized class-signature pixel counts, uniform when the patch carries
/// no signature pixels.
class SyntheticBackend final : public InferenceBackend {
 public:
  DetectionResult detect_prob(const Patch& patch) const override;
  ClassificationResult classify_patch(const Patch& patch) const override;
  std::string name() const override { return "synthetic"; }
};

/// softmax(W^T a + b) over the hand-crafted descriptor (f must be 34).
/// Detection uses the same non-background pixel fraction as the synthetic
/// backend; the model only covers the classification head.
class LinearBackend final : public InferenceBackend {
 public:
  explicit LinearBackend(LinearModel model);
  DetectionResult detect_prob(const Patch& patch) const override;
  ClassificationResult classify_patch(const Patch& patch) const override;
  std::string name() const override { return "linear"; }
  const LinearModel& model() const { return model_; }

 private:
  LinearModel model_;
};

/// File-based integration path for external models: probabilities come from
/// precomputed per-patch features scored by a linear model, and detection
/// probabilities from a precomputed f=1 table. Both tables are keyed by
/// patch_refs; a patch with no row throws InferenceError naming its
/// coordinates.
class PlaybackBackend final : public InferenceBackend {
 public:
  PlaybackBackend(FeatureTable classification_features, LinearModel model,
                  FeatureTable detection_probs);
  DetectionResult detect_prob(const Patch& patch) const override;
  ClassificationResult classify_patch(const Patch& patch) const override;
  std::string name() const override { return "features"; }

 private:
  int find_row(const std::unordered_map<std::string, int>& index,
               const Patch& patch, const char* table_name) const;

  FeatureTable features_;
  LinearModel model_;
  FeatureTable detect_;
  std::unordered_map<std::string, int> feature_index_;
  std::unordered_map<std::string, int> detect_index_;
};

}  // namespace wsicad
