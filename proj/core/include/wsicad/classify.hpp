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

#include "wsicad/detect.hpp"
#include "wsicad/inference.hpp"
#include "wsicad/labels.hpp"
#include "wsicad/pyramid.hpp"

namespace wsicad {

struct SamplingConfig {
  int level = 0;  // classification level (resolved index)
  int patch_size = 512;
  int n_min = 5;
  int n_max = 51;
  /// Patches per patch-area of lesion: N = ceil(density * area / patch_area).
  double density = 0.5;
  /// Minimum fraction of a sampled patch that must lie inside the region
  /// footprint.
  double overlap_frac = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Area-proportional patch budget, clamped to [n_min, n_max]. The patch
/// area is physical, using the classification level's calibration.
int sample_count(double area_mm2, const SamplingConfig& config,
                 double mpp_x, double mpp_y);

/// Draws N = sample_count patch positions by rejection sampling inside the
/// region footprint (detection-cell footprints rescaled to the
/// classification level). The RNG stream is keyed by (seed, region_id), so
/// the draw is a pure function of its arguments. If 10000 * N rejections
/// accumulate, overlap_frac is halved once with a fresh stream; a second
/// exhaustion throws SamplingError.
std::vector<Patch> sample_patches(const RegionProposal& region,
                                  const Heatmap& heatmap,
                                  const SlideReader& slide,
                                  const SamplingConfig& config);

/// Plurality class; ties go to the higher-severity class. Empty input
/// throws ValidationError.
ClassLabel vote(std::span<const ClassLabel> patch_argmaxes);

/// Probability argmax with the same severity tie rule.
ClassLabel argmax_probs(const std::array<double, kNumClasses>& probs);

struct PatchRecord {
  std::int64_t x = 0;
  std::int64_t y = 0;
  int level = 0;
  std::array<double, kNumClasses> probs{};
  ClassLabel argmax = ClassLabel::kNonCarcinoma;
};

struct LesionCall {
  int region_id = 0;
  int n_patches = 0;
  std::array<int, kNumClasses> votes{};
  ClassLabel predicted = ClassLabel::kNonCarcinoma;
  std::vector<PatchRecord> patches;
};

/// sample_patches -> classify_patch -> vote, with all per-patch evidence
/// recorded. Errors are rethrown tagged with the region id.
LesionCall classify_region(const RegionProposal& region, const Heatmap& heatmap,
                           const SlideReader& slide,
                           const InferenceBackend& backend,
                           const SamplingConfig& config);

void save_calls(std::span<const LesionCall> calls,
                const std::filesystem::path& path);
std::vector<LesionCall> load_calls(const std::filesystem::path& path);

}  // namespace wsicad
