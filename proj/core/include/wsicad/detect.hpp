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
#include <vector>

#include "wsicad/geometry.hpp"
#include "wsicad/inference.hpp"
#include "wsicad/pyramid.hpp"

namespace wsicad {

struct ScanConfig {
  int level = 0;
  int patch_size = 256;
  int stride = 256;  // must be <= patch_size
  /// Cells whose mean luminance is >= 240 are set to 0 without invoking
  /// the backend. Inert on lesion tissue: a cell that could pass the 0.5
  /// threshold is at least half signature pixels, whose luminance caps the
  /// cell mean well below 240.
  bool tissue_filter = true;
  int jobs = 1;
};

/// Grid of per-cell lesion probabilities at the detection level. Cell
/// (r, c) covers the patch with top-left (c*stride, r*stride).
struct Heatmap {
  int level = 0;
  int stride = 0;
  int patch_size = 0;
  int rows = 0;
  int cols = 0;
  std::vector<float> grid;  // rows * cols, row-major, values in [0,1]

  float at(int row, int col) const {
    return grid[static_cast<std::size_t>(row) * cols + col];
  }
};

/// Scans every grid cell through the backend's detector. Cells are
/// independent, so the grid is identical for any jobs count. A backend
/// failure aborts with the failing cell's coordinates.
Heatmap scan(const SlideReader& slide, const InferenceBackend& backend,
             const ScanConfig& config);

/// One heatmap cell, (row, col).
using Cell = std::pair<int, int>;
using CellSet = std::vector<Cell>;  // sorted, unique

/// Maximal connected components of {cells >= threshold} under 4- or
/// 8-connectivity, ordered by (min row, min col) of each component.
std::vector<CellSet> extract_components(const Heatmap& heatmap,
                                        double threshold, int connectivity);

struct RegionProposal {
  int region_id = 0;
  int level = 0;  // heatmap level
  CellSet cells;
  std::array<std::int64_t, 4> bbox_level0{};  // x, y, w, h
  double size_mm = 0.0;   // max physical bbox side at level 0
  double area_mm2 = 0.0;  // union of cell footprints
};

/// Maps components to level-0 bounding boxes (union of patch footprints,
/// clipped to the level bounds) and keeps those with size_mm >=
/// min_size_mm. Ids are assigned sequentially from 0 over the retained
/// regions in component order.
std::vector<RegionProposal> propose_regions(
    const std::vector<CellSet>& components, const Heatmap& heatmap,
    const SlideMetadata& slide, double min_size_mm);

/// Cell footprint rectangles of a region at the heatmap level, clipped to
/// the level bounds.
std::vector<Rect> region_footprint_rects(const CellSet& cells,
                                         const Heatmap& heatmap,
                                         const LevelInfo& level);

/// heatmap.json + heatmap.f32 (row-major little-endian floats) +
/// heatmap.png (8-bit gray, value = round(255 p)) under dir.
void save_heatmap(const Heatmap& heatmap, const std::filesystem::path& dir);
Heatmap load_heatmap(const std::filesystem::path& dir);

void save_regions(const std::vector<RegionProposal>& regions,
                  const std::filesystem::path& path);
std::vector<RegionProposal> load_regions(const std::filesystem::path& path);

}  // namespace wsicad
