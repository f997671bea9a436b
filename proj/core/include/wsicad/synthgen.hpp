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
#include <string>
#include <vector>

#include "wsicad/labels.hpp"
#include "wsicad/pyramid.hpp"

namespace wsicad {

/// Class color signatures. Lesion pixels are dominated by one channel with
/// a margin of at least 40; background pixels have every channel >= 230.
/// The two sets cannot intersect (dominance forces a channel <= 215), which
/// is what makes the synthetic inference backend an exact decision rule.
///
///   NonCarcinoma  green-dominant   (80, 200, 80)
///   DCIS          blue-dominant    (80, 80, 200)
///   IDC           red-dominant     (200, 80, 80)
///   background                     (246, 244, 245)
std::array<std::uint8_t, 3> class_signature_color(ClassLabel label);
inline constexpr std::array<std::uint8_t, 3> kBackgroundColor = {246, 244, 245};

/// Signature predicates used by both the generator and the synthetic
/// backend.
bool is_background_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b);
/// -1 when the pixel carries no class signature, else the ClassLabel value.
int signature_class_of_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b);

enum class LesionShape { kEllipse, kBlob };

struct LesionSpec {
  LesionShape shape = LesionShape::kEllipse;
  ClassLabel label = ClassLabel::kNonCarcinoma;
  std::int64_t center_x = 0;  // level-0 px
  std::int64_t center_y = 0;
  std::int64_t axis_x = 1;  // semi-axes, level-0 px
  std::int64_t axis_y = 1;
  /// Probability that a lesion pixel is repainted with a uniformly random
  /// other class signature. Injects controlled patch-level error.
  double texture_noise = 0.0;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  std::string slide_id = "synthetic";
  int width = 2048;
  int height = 2048;
  PhysicalCalibration calibration{1.0, 1.0};
  int tile_size = 512;
  std::vector<int> downsamples = {1, 2, 4};
  std::vector<LesionSpec> lesions;

  void validate() const;
};

SynthSpec synth_spec_from_json_file(const std::filesystem::path& path);

/// Run-length encoded level-0 mask. Runs are (start, length) over row-major
/// linear pixel indices, sorted, non-overlapping, and never crossing a row
/// boundary when produced by the generator.
struct RleMask {
  std::vector<std::pair<std::int64_t, std::int64_t>> runs;

  std::int64_t pixel_count() const;
  bool contains(std::int64_t linear_index) const;
};

RleMask parse_rle(const std::string& text);
std::string encode_rle(const RleMask& mask);

struct LesionTruth {
  ClassLabel label = ClassLabel::kNonCarcinoma;
  std::array<std::int64_t, 4> bbox{};  // x, y, w, h at level 0
  double area_mm2 = 0.0;
  RleMask mask;
};

struct GroundTruth {
  ClassLabel slide_label = ClassLabel::kNonCarcinoma;
  std::vector<LesionTruth> lesions;
};

/// Paints the spec onto a flat near-white background, writes the pyramid
/// container plus truth.json into out_dir, and returns the ground truth.
/// Everything downstream of the seed is deterministic, so equal specs give
/// byte-identical containers. Overlapping lesions throw ValidationError.
GroundTruth generate(const SynthSpec& spec,
                     const std::filesystem::path& out_dir);

void save_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_truth(const std::filesystem::path& path);

}  // namespace wsicad
