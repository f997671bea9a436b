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

#include "wsicad/geometry.hpp"

namespace wsicad {

RectRowIndex::RectRowIndex(std::span<const Rect> rects) {
  for (const Rect& r : rects) {
    if (r.empty()) continue;
    band_starts_.push_back(r.y0);
    band_starts_.push_back(r.y1);
  }
  std::sort(band_starts_.begin(), band_starts_.end());
  band_starts_.erase(std::unique(band_starts_.begin(), band_starts_.end()),
                     band_starts_.end());
  if (band_starts_.empty()) return;

  band_intervals_.resize(band_starts_.size() - 1);
  for (std::size_t band = 0; band + 1 < band_starts_.size(); ++band) {
    const std::int64_t y = band_starts_[band];
    std::vector<Interval>& merged = band_intervals_[band];
    for (const Rect& r : rects) {
      if (!r.empty() && r.y0 <= y && y < r.y1) merged.emplace_back(r.x0, r.x1);
    }
    std::sort(merged.begin(), merged.end());
    std::size_t out = 0;
    for (std::size_t i = 0; i < merged.size(); ++i) {
      if (out > 0 && merged[i].first <= merged[out - 1].second) {
        merged[out - 1].second =
            std::max(merged[out - 1].second, merged[i].second);
      } else {
        merged[out++] = merged[i];
      }
    }
    merged.resize(out);
  }
}

std::span<const RectRowIndex::Interval> RectRowIndex::intervals_at_row(
    std::int64_t y) const {
  if (band_starts_.empty() || y < band_starts_.front() ||
      y >= band_starts_.back()) {
    return {};
  }
  const auto it =
      std::upper_bound(band_starts_.begin(), band_starts_.end(), y);
  const std::size_t band =
      static_cast<std::size_t>(it - band_starts_.begin()) - 1;
  return band_intervals_[band];
}

std::int64_t RectRowIndex::union_area() const {
  std::int64_t area = 0;
  for (std::size_t band = 0; band < band_intervals_.size(); ++band) {
    const std::int64_t height = band_starts_[band + 1] - band_starts_[band];
    for (const Interval& iv : band_intervals_[band]) {
      area += (iv.second - iv.first) * height;
    }
  }
  return area;
}

std::int64_t RectRowIndex::intersection_area(const Rect& probe) const {
  if (probe.empty() || band_starts_.empty()) return 0;
  std::int64_t area = 0;
  for (std::size_t band = 0; band < band_intervals_.size(); ++band) {
    const std::int64_t y0 = std::max(probe.y0, band_starts_[band]);
    const std::int64_t y1 = std::min(probe.y1, band_starts_[band + 1]);
    if (y0 >= y1) continue;
    for (const Interval& iv : band_intervals_[band]) {
      const std::int64_t x0 = std::max(probe.x0, iv.first);
      const std::int64_t x1 = std::min(probe.x1, iv.second);
      if (x0 < x1) area += (x1 - x0) * (y1 - y0);
    }
  }
  return area;
}

}  // namespace wsicad
