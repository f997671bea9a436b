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

#include "wsicad/pyramid.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "wsicad/errors.hpp"
#include "wsicad/png_io.hpp"

namespace wsicad {

namespace {

using nlohmann::json;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int ceil_div(int a, int b) { return (a + b - 1) / b; }

std::filesystem::path tile_path(const std::filesystem::path& dir, int level,
                                int row, int col) {
  return dir / ("level_" + std::to_string(level)) /
         ("tile_" + std::to_string(row) + "_" + std::to_string(col) + ".png");
}

}  // namespace

void SlideMetadata::validate() const {
  if (slide_id.empty()) throw ValidationError("slide_id empty");
  if (width0 < 1 || height0 < 1) {
    throw ValidationError("width/height must be at least 1");
  }
  calibration.validate();
  if (!is_power_of_two(tile_size)) {
    throw ValidationError("tile_size not a power of two");
  }
  if (levels.empty()) throw ValidationError("levels empty");
  if (levels.front().downsample != 1) {
    throw ValidationError("levels[0].downsample must be 1");
  }
  int prev = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const LevelInfo& lvl = levels[i];
    if (lvl.index != static_cast<int>(i)) {
      throw ValidationError("level index not sequential");
    }
    if (lvl.downsample <= prev) {
      throw ValidationError("downsample not increasing");
    }
    prev = lvl.downsample;
    if (lvl.width != ceil_div(width0, lvl.downsample) ||
        lvl.height != ceil_div(height0, lvl.downsample)) {
      throw ValidationError("level " + std::to_string(i) +
                            " dims != ceil(dim0 / downsample)");
    }
  }
}

const LevelInfo& SlideMetadata::level(int index) const {
  if (index < 0 || index >= static_cast<int>(levels.size())) {
    throw std::out_of_range("unknown level " + std::to_string(index) + " in " +
                            slide_id);
  }
  return levels[static_cast<std::size_t>(index)];
}

std::pair<double, double> SlideMetadata::mpp_at_level(int index) const {
  const LevelInfo& lvl = level(index);
  return {calibration.mpp_x * lvl.downsample,
          calibration.mpp_y * lvl.downsample};
}

std::pair<std::int64_t, std::int64_t> SlideMetadata::to_level0(
    int lvl_index, std::int64_t x, std::int64_t y) const {
  const LevelInfo& lvl = level(lvl_index);
  return {x * lvl.downsample, y * lvl.downsample};
}

SlideReader::SlideReader(const std::filesystem::path& dir) : dir_(dir) {
  const auto meta_path = dir / "slide.json";
  std::ifstream in(meta_path);
  if (!in) throw FormatError("missing slide.json in " + dir.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt slide.json in " + dir.string() + ": " +
                      e.what());
  }
  try {
    meta_.slide_id = j.at("slide_id").get<std::string>();
    meta_.width0 = j.at("width").get<int>();
    meta_.height0 = j.at("height").get<int>();
    meta_.calibration.mpp_x = j.at("mpp_x").get<double>();
    meta_.calibration.mpp_y = j.at("mpp_y").get<double>();
    meta_.tile_size = j.at("tile_size").get<int>();
    for (const auto& jl : j.at("levels")) {
      LevelInfo lvl;
      lvl.index = jl.at("index").get<int>();
      lvl.downsample = jl.at("downsample").get<int>();
      lvl.width = jl.at("width").get<int>();
      lvl.height = jl.at("height").get<int>();
      meta_.levels.push_back(lvl);
    }
  } catch (const json::exception& e) {
    throw FormatError("slide.json field error in " + dir.string() + ": " +
                      e.what());
  }
  meta_.validate();
}

const RgbImage& SlideReader::tile(int level, int row, int col) const {
  const auto key = std::make_tuple(level, row, col);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = tile_cache_.find(key);
    if (it != tile_cache_.end()) return it->second;
  }
  RgbImage img = read_png(tile_path(dir_, level, row, col));
  const LevelInfo& lvl = meta_.level(level);
  const int expect_w =
      std::min(meta_.tile_size, lvl.width - col * meta_.tile_size);
  const int expect_h =
      std::min(meta_.tile_size, lvl.height - row * meta_.tile_size);
  if (img.width != expect_w || img.height != expect_h) {
    throw FormatError("tile " + tile_path(dir_, level, row, col).string() +
                      " has wrong dimensions");
  }
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto [it, inserted] = tile_cache_.emplace(key, std::move(img));
  (void)inserted;  // a concurrent loader may have won; identical bytes
  return it->second;
}

Patch SlideReader::read_patch(int level, std::int64_t x, std::int64_t y,
                              int size) const {
  if (size < 1) throw ValidationError("read_patch: size must be positive");
  const LevelInfo& lvl = meta_.level(level);

  Patch patch;
  patch.slide_id = meta_.slide_id;
  patch.level = level;
  patch.x = x;
  patch.y = y;
  patch.size = size;
  patch.pixels.assign(static_cast<std::size_t>(size) * size * 3, 255);

  const std::int64_t x0 = std::max<std::int64_t>(x, 0);
  const std::int64_t y0 = std::max<std::int64_t>(y, 0);
  const std::int64_t x1 = std::min<std::int64_t>(x + size, lvl.width);
  const std::int64_t y1 = std::min<std::int64_t>(y + size, lvl.height);
  if (x0 >= x1 || y0 >= y1) return patch;  // fully outside: all padding

  const int ts = meta_.tile_size;
  for (std::int64_t row = y0 / ts; row * ts < y1; ++row) {
    for (std::int64_t col = x0 / ts; col * ts < x1; ++col) {
      const RgbImage& img = tile(level, static_cast<int>(row),
                                 static_cast<int>(col));
      const std::int64_t tx0 = std::max<std::int64_t>(x0, col * ts);
      const std::int64_t ty0 = std::max<std::int64_t>(y0, row * ts);
      const std::int64_t tx1 = std::min<std::int64_t>(x1, col * ts + img.width);
      const std::int64_t ty1 =
          std::min<std::int64_t>(y1, row * ts + img.height);
      for (std::int64_t py = ty0; py < ty1; ++py) {
        const std::uint8_t* src =
            img.at(static_cast<int>(tx0 - col * ts),
                   static_cast<int>(py - row * ts));
        std::uint8_t* dst =
            patch.pixels.data() +
            (static_cast<std::size_t>(py - y) * size + (tx0 - x)) * 3;
        std::memcpy(dst, src, static_cast<std::size_t>(tx1 - tx0) * 3);
      }
    }
  }
  return patch;
}

namespace {

/// Area-weighted box downsample by an integer factor; edge blocks use the
/// pixels that exist. Half-up integer rounding.
RgbImage downsample_box(const RgbImage& src, int factor) {
  RgbImage dst;
  dst.width = ceil_div(src.width, factor);
  dst.height = ceil_div(src.height, factor);
  dst.pixels.resize(static_cast<std::size_t>(dst.width) * dst.height * 3);
  for (int y = 0; y < dst.height; ++y) {
    const int sy0 = y * factor;
    const int sy1 = std::min(sy0 + factor, src.height);
    for (int x = 0; x < dst.width; ++x) {
      const int sx0 = x * factor;
      const int sx1 = std::min(sx0 + factor, src.width);
      std::uint32_t sum[3] = {0, 0, 0};
      for (int sy = sy0; sy < sy1; ++sy) {
        const std::uint8_t* p = src.at(sx0, sy);
        for (int sx = sx0; sx < sx1; ++sx) {
          sum[0] += p[0];
          sum[1] += p[1];
          sum[2] += p[2];
          p += 3;
        }
      }
      const std::uint32_t count =
          static_cast<std::uint32_t>((sx1 - sx0) * (sy1 - sy0));
      std::uint8_t* out = dst.at(x, y);
      for (int c = 0; c < 3; ++c) {
        out[c] = static_cast<std::uint8_t>((sum[c] + count / 2) / count);
      }
    }
  }
  return dst;
}

void write_level_tiles(const std::filesystem::path& dir, int level,
                       const RgbImage& img, int tile_size) {
  const auto level_dir = dir / ("level_" + std::to_string(level));
  std::filesystem::create_directories(level_dir);
  const int rows = ceil_div(img.height, tile_size);
  const int cols = ceil_div(img.width, tile_size);
  for (int row = 0; row < rows; ++row) {
    for (int col = 0; col < cols; ++col) {
      const int w = std::min(tile_size, img.width - col * tile_size);
      const int h = std::min(tile_size, img.height - row * tile_size);
      RgbImage tile;
      tile.width = w;
      tile.height = h;
      tile.pixels.resize(static_cast<std::size_t>(w) * h * 3);
      for (int y = 0; y < h; ++y) {
        std::memcpy(tile.at(0, y), img.at(col * tile_size, row * tile_size + y),
                    static_cast<std::size_t>(w) * 3);
      }
      write_png(tile_path(dir, level, row, col), tile);
    }
  }
}

}  // namespace

SlideMetadata write_slide(const std::filesystem::path& dir,
                          const std::string& slide_id, const RgbImage& level0,
                          const PhysicalCalibration& calibration,
                          const SlideWriteOptions& options) {
  if (level0.width < 1 || level0.height < 1) {
    throw ValidationError("write_slide: empty level-0 image");
  }
  for (int d : options.downsamples) {
    if (!is_power_of_two(d)) {
      throw ValidationError("write_slide: downsample " + std::to_string(d) +
                            " is not a power of two");
    }
  }

  SlideMetadata meta;
  meta.slide_id = slide_id;
  meta.width0 = level0.width;
  meta.height0 = level0.height;
  meta.calibration = calibration;
  meta.tile_size = options.tile_size;
  for (std::size_t i = 0; i < options.downsamples.size(); ++i) {
    LevelInfo lvl;
    lvl.index = static_cast<int>(i);
    lvl.downsample = options.downsamples[i];
    lvl.width = ceil_div(level0.width, lvl.downsample);
    lvl.height = ceil_div(level0.height, lvl.downsample);
    meta.levels.push_back(lvl);
  }
  meta.validate();

  std::filesystem::create_directories(dir);
  for (const LevelInfo& lvl : meta.levels) {
    if (lvl.downsample == 1) {
      write_level_tiles(dir, lvl.index, level0, meta.tile_size);
    } else {
      write_level_tiles(dir, lvl.index, downsample_box(level0, lvl.downsample),
                        meta.tile_size);
    }
  }

  nlohmann::json j;
  j["slide_id"] = meta.slide_id;
  j["width"] = meta.width0;
  j["height"] = meta.height0;
  j["mpp_x"] = meta.calibration.mpp_x;
  j["mpp_y"] = meta.calibration.mpp_y;
  j["tile_size"] = meta.tile_size;
  j["levels"] = nlohmann::json::array();
  for (const LevelInfo& lvl : meta.levels) {
    j["levels"].push_back({{"index", lvl.index},
                           {"downsample", lvl.downsample},
                           {"width", lvl.width},
                           {"height", lvl.height}});
  }
  std::ofstream out(dir / "slide.json");
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write slide.json in " + dir.string());
  return meta;
}

}  // namespace wsicad
