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
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "wsicad/image.hpp"
#include "wsicad/labels.hpp"

namespace wsicad {

/// Slide container layout:
///
///   <dir>/slide.json                      metadata (see SlideMetadata)
///   <dir>/level_<L>/tile_<row>_<col>.png  8-bit RGB tiles, zero-based
///
/// Tiles are tile_size x tile_size except at the right/bottom edge, where
/// they are cropped to the level bounds.
struct LevelInfo {
  int index = 0;
  int downsample = 1;  // relative to level 0
  int width = 0;       // ceil(width0 / downsample)
  int height = 0;
};

struct SlideMetadata {
  std::string slide_id;
  int width0 = 0;
  int height0 = 0;
  PhysicalCalibration calibration;
  int tile_size = 512;
  std::vector<LevelInfo> levels;

  /// Checks every container invariant; throws ValidationError naming the
  /// offending field.
  void validate() const;

  /// Index into levels for a level number; throws std::out_of_range.
  const LevelInfo& level(int index) const;

  /// Microns per pixel at a level: level-0 calibration times downsample.
  std::pair<double, double> mpp_at_level(int index) const;

  /// Level pixel coordinates scaled to level 0.
  std::pair<std::int64_t, std::int64_t> to_level0(int level, std::int64_t x,
                                                  std::int64_t y) const;
};

/// A square RGB read from one pyramid level. Regions outside the level
/// bounds are filled white (255,255,255): H&E background is near-white, so
/// padding reads as background downstream.
struct Patch {
  std::string slide_id;
  int level = 0;
  std::int64_t x = 0;
  std::int64_t y = 0;
  int size = 0;
  std::vector<std::uint8_t> pixels;  // size * size * 3, row-major RGB

  const std::uint8_t* at(int px, int py) const {
    return pixels.data() + (static_cast<std::size_t>(py) * size + px) * 3;
  }
};

/// Read side of the container. Metadata is immutable after open; tile
/// decodes are cached and the cache is guarded, so concurrent read_patch
/// calls are safe.
class SlideReader {
 public:
  /// open_slide: parses <dir>/slide.json and validates all invariants.
  /// Missing or unparseable metadata throws FormatError; an invariant
  /// violation throws ValidationError.
  explicit SlideReader(const std::filesystem::path& dir);

  const SlideMetadata& metadata() const { return meta_; }
  const std::filesystem::path& dir() const { return dir_; }

  /// Assembles a size x size patch from tiles; see Patch for the padding
  /// policy. Unknown level throws std::out_of_range, size < 1 throws
  /// ValidationError.
  Patch read_patch(int level, std::int64_t x, std::int64_t y, int size) const;

 private:
  const RgbImage& tile(int level, int row, int col) const;

  std::filesystem::path dir_;
  SlideMetadata meta_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::tuple<int, int, int>, RgbImage> tile_cache_;
};

struct SlideWriteOptions {
  int tile_size = 512;
  std::vector<int> downsamples = {1, 2, 4};  // must be powers of two
};

/// Writes a full container from a level-0 image. Lower levels are produced
/// by area-weighted box averaging with half-up rounding, so output bytes
/// are a pure function of the input. Returns the metadata as written.
SlideMetadata write_slide(const std::filesystem::path& dir,
                          const std::string& slide_id, const RgbImage& level0,
                          const PhysicalCalibration& calibration,
                          const SlideWriteOptions& options = {});

}  // namespace wsicad
