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

#include <algorithm>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace wsicad {

/// Half-open axis-aligned pixel rectangle [x0,x1) x [y0,y1).
struct Rect {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t x1 = 0;
  std::int64_t y1 = 0;

  bool empty() const { return x1 <= x0 || y1 <= y0; }
  std::int64_t width() const { return x1 - x0; }
  std::int64_t height() const { return y1 - y0; }
  std::int64_t area() const { return empty() ? 0 : width() * height(); }
};

inline Rect intersect(const Rect& a, const Rect& b) {
  return {std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
          std::min(a.y1, b.y1)};
}

/// Row-band index over a set of possibly-overlapping rectangles: for any
/// pixel row it yields the merged x-intervals of the union. Cell footprints
/// overlap whenever the scan stride is smaller than the patch size, so
/// areas and overlaps must be measured on the union, not summed per rect.
class RectRowIndex {
 public:
  using Interval = std::pair<std::int64_t, std::int64_t>;  // [first, second)

  explicit RectRowIndex(std::span<const Rect> rects);

  /// Merged x-intervals of the union at pixel row y (empty span when the
  /// row is outside every rectangle).
  std::span<const Interval> intervals_at_row(std::int64_t y) const;

  /// Exact union area in pixels.
  std::int64_t union_area() const;

  /// Area of probe intersected with the union.
  std::int64_t intersection_area(const Rect& probe) const;

 private:
  std::vector<std::int64_t> band_starts_;        // sorted; band i = [b[i], b[i+1])
  std::vector<std::vector<Interval>> band_intervals_;  // size = bands
};

}  // namespace wsicad
