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

#include "wsicad/detect.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

#include <nlohmann/json.hpp>

#include "wsicad/errors.hpp"
#include "wsicad/parallel.hpp"
#include "wsicad/png_io.hpp"

namespace wsicad {

namespace {

using nlohmann::json;

int grid_extent(int level_extent, int patch_size, int stride) {
  if (level_extent <= patch_size) return 1;
  return (level_extent - patch_size + stride - 1) / stride + 1;
}

bool passes_tissue_filter(const Patch& patch) {
  // mean luminance < 240, computed exactly in integers:
  // sum(r+g+b) < 240 * 3 * pixel_count
  std::uint64_t sum = 0;
  for (std::uint8_t v : patch.pixels) sum += v;
  const std::uint64_t count =
      static_cast<std::uint64_t>(patch.size) * patch.size;
  return sum < 240ull * 3ull * count;
}

}  // namespace

Heatmap scan(const SlideReader& slide, const InferenceBackend& backend,
             const ScanConfig& config) {
  if (config.patch_size < 1) throw ValidationError("scan: patch_size must be positive");
  if (config.stride < 1 || config.stride > config.patch_size) {
    throw ValidationError("scan: stride must be in [1, patch_size]");
  }
  const LevelInfo& level = slide.metadata().level(config.level);

  Heatmap heatmap;
  heatmap.level = config.level;
  heatmap.stride = config.stride;
  heatmap.patch_size = config.patch_size;
  heatmap.rows = grid_extent(level.height, config.patch_size, config.stride);
  heatmap.cols = grid_extent(level.width, config.patch_size, config.stride);
  heatmap.grid.assign(
      static_cast<std::size_t>(heatmap.rows) * heatmap.cols, 0.0f);

  parallel_for(
      heatmap.grid.size(), config.jobs, [&](std::size_t i) {
        const int row = static_cast<int>(i) / heatmap.cols;
        const int col = static_cast<int>(i) % heatmap.cols;
        const Patch patch = slide.read_patch(
            config.level, static_cast<std::int64_t>(col) * config.stride,
            static_cast<std::int64_t>(row) * config.stride, config.patch_size);
        if (config.tissue_filter && !passes_tissue_filter(patch)) {
          return;  // cell stays 0, backend not invoked
        }
        double p;
        try {
          p = backend.detect_prob(patch).probability;
        } catch (const std::exception& e) {
          throw InferenceError("detection failed at cell (" +
                               std::to_string(row) + "," + std::to_string(col) +
                               ") level " + std::to_string(config.level) +
                               ": " + e.what());
        }
        if (!(p >= 0.0 && p <= 1.0)) {
          throw InferenceError("detection probability out of [0,1] at cell (" +
                               std::to_string(row) + "," +
                               std::to_string(col) + ")");
        }
        heatmap.grid[i] = static_cast<float>(p);
      });
  return heatmap;
}

std::vector<CellSet> extract_components(const Heatmap& heatmap,
                                        double threshold, int connectivity) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("extract_components: threshold must be in (0,1)");
  }
  if (connectivity != 4 && connectivity != 8) {
    throw ValidationError("extract_components: connectivity must be 4 or 8");
  }

  const int rows = heatmap.rows;
  const int cols = heatmap.cols;
  std::vector<char> visited(static_cast<std::size_t>(rows) * cols, 0);
  auto hot = [&](int r, int c) {
    return static_cast<double>(heatmap.at(r, c)) >= threshold;
  };

  std::vector<CellSet> components;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
      if (visited[idx] || !hot(r, c)) continue;

      CellSet cells;
      std::deque<Cell> frontier{{r, c}};
      visited[idx] = 1;
      while (!frontier.empty()) {
        const auto [cr, cc] = frontier.front();
        frontier.pop_front();
        cells.emplace_back(cr, cc);
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            if (connectivity == 4 && dr != 0 && dc != 0) continue;
            const int nr = cr + dr;
            const int nc = cc + dc;
            if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
            const std::size_t nidx = static_cast<std::size_t>(nr) * cols + nc;
            if (visited[nidx] || !hot(nr, nc)) continue;
            visited[nidx] = 1;
            frontier.emplace_back(nr, nc);
          }
        }
      }
      std::sort(cells.begin(), cells.end());
      components.push_back(std::move(cells));
    }
  }

  std::stable_sort(components.begin(), components.end(),
                   [](const CellSet& a, const CellSet& b) {
                     auto key = [](const CellSet& cs) {
                       int min_row = cs.front().first;  // sorted: first is min
                       int min_col = cs.front().second;
                       for (const Cell& cell : cs) {
                         min_col = std::min(min_col, cell.second);
                       }
                       return std::make_pair(min_row, min_col);
                     };
                     return key(a) < key(b);
                   });
  return components;
}

std::vector<Rect> region_footprint_rects(const CellSet& cells,
                                         const Heatmap& heatmap,
                                         const LevelInfo& level) {
  std::vector<Rect> rects;
  rects.reserve(cells.size());
  for (const auto& [row, col] : cells) {
    Rect r;
    r.x0 = static_cast<std::int64_t>(col) * heatmap.stride;
    r.y0 = static_cast<std::int64_t>(row) * heatmap.stride;
    r.x1 = std::min<std::int64_t>(r.x0 + heatmap.patch_size, level.width);
    r.y1 = std::min<std::int64_t>(r.y0 + heatmap.patch_size, level.height);
    if (!r.empty()) rects.push_back(r);
  }
  return rects;
}

std::vector<RegionProposal> propose_regions(
    const std::vector<CellSet>& components, const Heatmap& heatmap,
    const SlideMetadata& slide, double min_size_mm) {
  if (!(min_size_mm > 0.0)) {
    throw ValidationError("propose_regions: min_size_mm must be positive");
  }
  const LevelInfo& level = slide.level(heatmap.level);
  const auto [mpp_x, mpp_y] = slide.mpp_at_level(heatmap.level);

  std::vector<RegionProposal> regions;
  for (const CellSet& cells : components) {
    const std::vector<Rect> rects =
        region_footprint_rects(cells, heatmap, level);
    if (rects.empty()) continue;

    Rect bbox = rects.front();
    for (const Rect& r : rects) {
      bbox.x0 = std::min(bbox.x0, r.x0);
      bbox.y0 = std::min(bbox.y0, r.y0);
      bbox.x1 = std::max(bbox.x1, r.x1);
      bbox.y1 = std::max(bbox.y1, r.y1);
    }

    RegionProposal region;
    region.level = heatmap.level;
    region.cells = cells;
    region.bbox_level0 = {bbox.x0 * level.downsample,
                          bbox.y0 * level.downsample,
                          bbox.width() * level.downsample,
                          bbox.height() * level.downsample};
    // physical size is level-invariant: level px * level mpp == level-0 px
    // * level-0 mpp
    region.size_mm = std::max(static_cast<double>(bbox.width()) * mpp_x,
                              static_cast<double>(bbox.height()) * mpp_y) /
                     1000.0;
    region.area_mm2 = static_cast<double>(RectRowIndex(rects).union_area()) *
                      (mpp_x * mpp_y) / 1e6;
    if (region.size_mm >= min_size_mm) {
      region.region_id = static_cast<int>(regions.size());
      regions.push_back(std::move(region));
    }
  }
  return regions;
}

void save_heatmap(const Heatmap& heatmap, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["level"] = heatmap.level;
  j["stride"] = heatmap.stride;
  j["patch_size"] = heatmap.patch_size;
  j["rows"] = heatmap.rows;
  j["cols"] = heatmap.cols;
  std::ofstream out(dir / "heatmap.json");
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write heatmap.json in " + dir.string());

  std::ofstream payload(dir / "heatmap.f32", std::ios::binary);
  payload.write(reinterpret_cast<const char*>(heatmap.grid.data()),
                static_cast<std::streamsize>(heatmap.grid.size() * 4));
  if (!payload) throw FormatError("cannot write heatmap.f32 in " + dir.string());

  GrayImage png(heatmap.cols, heatmap.rows);
  for (std::size_t i = 0; i < heatmap.grid.size(); ++i) {
    png.pixels[i] = static_cast<std::uint8_t>(
        std::lround(255.0 * static_cast<double>(heatmap.grid[i])));
  }
  write_png(dir / "heatmap.png", png);
}

Heatmap load_heatmap(const std::filesystem::path& dir) {
  std::ifstream in(dir / "heatmap.json");
  if (!in) throw FormatError("missing heatmap.json in " + dir.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt heatmap.json: " + std::string(e.what()));
  }
  Heatmap heatmap;
  try {
    heatmap.level = j.at("level").get<int>();
    heatmap.stride = j.at("stride").get<int>();
    heatmap.patch_size = j.at("patch_size").get<int>();
    heatmap.rows = j.at("rows").get<int>();
    heatmap.cols = j.at("cols").get<int>();
  } catch (const json::exception& e) {
    throw FormatError("heatmap.json field error: " + std::string(e.what()));
  }
  if (heatmap.rows < 1 || heatmap.cols < 1) {
    throw ValidationError("heatmap grid must be at least 1x1");
  }

  const auto payload_file = dir / "heatmap.f32";
  std::ifstream payload(payload_file, std::ios::binary);
  if (!payload) throw FormatError("missing heatmap.f32 in " + dir.string());
  payload.seekg(0, std::ios::end);
  const std::streamoff actual = payload.tellg();
  const std::streamoff expected =
      static_cast<std::streamoff>(heatmap.rows) * heatmap.cols * 4;
  if (actual != expected) {
    throw FormatError("heatmap.f32: expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(actual));
  }
  payload.seekg(0, std::ios::beg);
  heatmap.grid.resize(static_cast<std::size_t>(heatmap.rows) * heatmap.cols);
  payload.read(reinterpret_cast<char*>(heatmap.grid.data()), expected);
  if (!payload) throw FormatError("short read on heatmap.f32");
  return heatmap;
}

void save_regions(const std::vector<RegionProposal>& regions,
                  const std::filesystem::path& path) {
  json j = json::array();
  for (const RegionProposal& region : regions) {
    json cells = json::array();
    for (const auto& [row, col] : region.cells) {
      cells.push_back({row, col});
    }
    j.push_back({{"region_id", region.region_id},
                 {"bbox_level0", region.bbox_level0},
                 {"size_mm", region.size_mm},
                 {"area_mm2", region.area_mm2},
                 {"cells", std::move(cells)}});
  }
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

std::vector<RegionProposal> load_regions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing regions file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt regions file: " + std::string(e.what()));
  }
  std::vector<RegionProposal> regions;
  try {
    for (const auto& jr : j) {
      RegionProposal region;
      region.region_id = jr.at("region_id").get<int>();
      const auto& bbox = jr.at("bbox_level0");
      for (std::size_t i = 0; i < 4; ++i) {
        region.bbox_level0[i] = bbox.at(i).get<std::int64_t>();
      }
      region.size_mm = jr.at("size_mm").get<double>();
      region.area_mm2 = jr.at("area_mm2").get<double>();
      for (const auto& cell : jr.at("cells")) {
        region.cells.emplace_back(cell.at(0).get<int>(),
                                  cell.at(1).get<int>());
      }
      regions.push_back(std::move(region));
    }
  } catch (const json::exception& e) {
    throw FormatError("regions field error: " + std::string(e.what()));
  }
  return regions;
}

}  // namespace wsicad
