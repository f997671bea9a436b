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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "wsicad/classify.hpp"
#include "wsicad/detect.hpp"
#include "wsicad/evaluate.hpp"
#include "wsicad/inference.hpp"

namespace wsicad {

struct DetectionStageConfig {
  /// The detection level is the one whose mpp is closest to this target
  /// (0.25 um/px is the x40 scan resolution).
  double level_mpp_target = 0.25;
  int patch_size = 256;
  int stride = 256;
  double threshold = 0.5;
  int connectivity = 8;
  double min_size_mm = 1.0;
  bool tissue_filter = true;
};

struct ClassificationStageConfig {
  /// Closest-mpp target for the classification level (1.0 um/px ~ x10).
  double level_mpp_target = 1.0;
  int patch_size = 512;
  int n_min = 5;
  int n_max = 51;
  double density = 0.5;
  double overlap_frac = 0.5;
};

struct BackendConfig {
  std::string kind = "synthetic";  // synthetic | linear | features
  std::string model_path;          // linear, features
  std::string features_path;       // features: classification table
  std::string detect_features_path;  // features: f=1 detection table
};

/// Every pipeline default in one diffable record.
struct PipelineConfig {
  std::uint64_t seed = 0;
  BackendConfig backend;
  DetectionStageConfig detection;
  ClassificationStageConfig classification;

  void validate() const;
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig from_json_file(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Level whose mpp (mean of the two axes) is closest to the target; ties
/// go to the lower level index (finer resolution).
int pick_level(const SlideMetadata& slide, double mpp_target);

std::unique_ptr<InferenceBackend> make_backend(const BackendConfig& config);

struct SlideRunResult {
  Heatmap heatmap;
  std::vector<RegionProposal> regions;
  std::vector<LesionCall> calls;
  SlideAssessment assessment;
  int detection_level = 0;
  int classification_level = 0;
};

/// The staged flow: scan -> threshold + components -> size filter ->
/// per-region sampling, classification, majority vote -> slide label.
SlideRunResult run_slide(const SlideReader& slide,
                         const InferenceBackend& backend,
                         const PipelineConfig& config, int jobs = 1);

/// Writes heatmap.{json,f32,png}, regions.json, calls.json,
/// assessment.json under out_dir.
void save_run(const SlideRunResult& result,
              const std::filesystem::path& out_dir);

}  // namespace wsicad
