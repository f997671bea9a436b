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

#include "wsicad/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "wsicad/errors.hpp"
#include "wsicad/geometry.hpp"
#include "wsicad/rng.hpp"

namespace wsicad {

namespace {
using nlohmann::json;
}

void SamplingConfig::validate() const {
  if (patch_size < 1) throw ValidationError("sampling: patch_size must be positive");
  if (n_min < 1 || n_min > n_max) {
    throw ValidationError("sampling: need 1 <= n_min <= n_max");
  }
  if (!(density > 0.0)) throw ValidationError("sampling: density must be positive");
  if (!(overlap_frac > 0.0 && overlap_frac <= 1.0)) {
    throw ValidationError("sampling: overlap_frac must be in (0,1]");
  }
}

int sample_count(double area_mm2, const SamplingConfig& config, double mpp_x,
                 double mpp_y) {
  config.validate();
  if (!(area_mm2 > 0.0)) throw ValidationError("sample_count: area must be positive");
  const double patch_area_mm2 = (config.patch_size * mpp_x / 1000.0) *
                                (config.patch_size * mpp_y / 1000.0);
  const double raw = std::ceil(config.density * area_mm2 / patch_area_mm2);
  return static_cast<int>(
      std::clamp(raw, static_cast<double>(config.n_min),
                 static_cast<double>(config.n_max)));
}

namespace {

/// Detection-cell footprints rescaled to the classification level.
/// Coordinates go through level 0 exactly; the outer bound rounds up so
/// the footprint never loses area to integer division.
std::vector<Rect> footprint_at_level(const RegionProposal& region,
                                     const Heatmap& heatmap,
                                     const SlideMetadata& slide,
                                     int target_level) {
  const LevelInfo& det = slide.level(heatmap.level);
  const LevelInfo& cls = slide.level(target_level);
  const std::vector<Rect> det_rects =
      region_footprint_rects(region.cells, heatmap, det);
  std::vector<Rect> out;
  out.reserve(det_rects.size());
  const std::int64_t dd = det.downsample;
  const std::int64_t dc = cls.downsample;
  for (const Rect& r : det_rects) {
    Rect scaled;
    scaled.x0 = r.x0 * dd / dc;
    scaled.y0 = r.y0 * dd / dc;
    scaled.x1 = (r.x1 * dd + dc - 1) / dc;
    scaled.y1 = (r.y1 * dd + dc - 1) / dc;
    scaled.x1 = std::min<std::int64_t>(scaled.x1, cls.width);
    scaled.y1 = std::min<std::int64_t>(scaled.y1, cls.height);
    if (!scaled.empty()) out.push_back(scaled);
  }
  return out;
}

struct Window {
  std::int64_t lo = 0;
  std::int64_t hi = -1;
  bool empty() const { return hi < lo; }
};

/// Positions whose axis overlap with the footprint bbox can reach
/// overlap_frac: a patch needs at least frac*p overlap on each axis in the
/// best case, which bounds the draw window tightly enough that feasible
/// positions are dense inside it.
Window axis_window(std::int64_t bbox_lo, std::int64_t bbox_hi, int patch,
                   double frac) {
  const std::int64_t min_overlap = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::ceil(frac * patch - 1e-9)));
  return {bbox_lo - (patch - min_overlap), bbox_hi - min_overlap};
}

}  // namespace

std::vector<Patch> sample_patches(const RegionProposal& region,
                                  const Heatmap& heatmap,
                                  const SlideReader& slide,
                                  const SamplingConfig& config) {
  config.validate();
  const auto [mpp_x, mpp_y] =
      slide.metadata().mpp_at_level(config.level);
  const int n = sample_count(region.area_mm2, config, mpp_x, mpp_y);

  const std::vector<Rect> rects =
      footprint_at_level(region, heatmap, slide.metadata(), config.level);
  if (rects.empty()) {
    throw SamplingError("region " + std::to_string(region.region_id) +
                        " has an empty footprint at level " +
                        std::to_string(config.level));
  }
  Rect bbox = rects.front();
  for (const Rect& r : rects) {
    bbox.x0 = std::min(bbox.x0, r.x0);
    bbox.y0 = std::min(bbox.y0, r.y0);
    bbox.x1 = std::max(bbox.x1, r.x1);
    bbox.y1 = std::max(bbox.y1, r.y1);
  }
  const RectRowIndex footprint(rects);

  const int p = config.patch_size;
  const std::int64_t budget = 10000ll * n;

  std::vector<std::pair<std::int64_t, std::int64_t>> accepted;
  for (int attempt = 0; attempt < 2 && accepted.empty(); ++attempt) {
    const double frac =
        attempt == 0 ? config.overlap_frac : config.overlap_frac / 2.0;
    const Window wx = axis_window(bbox.x0, bbox.x1, p, frac);
    const Window wy = axis_window(bbox.y0, bbox.y1, p, frac);
    if (wx.empty() || wy.empty()) continue;  // infeasible, try relaxed

    SeededRng rng(mix_seed(mix_seed(config.seed,
                                    static_cast<std::uint64_t>(region.region_id)),
                           static_cast<std::uint64_t>(attempt)));
    const double needed = frac * static_cast<double>(p) * p - 1e-9;
    std::int64_t rejections = 0;
    std::vector<std::pair<std::int64_t, std::int64_t>> found;
    while (static_cast<int>(found.size()) < n && rejections < budget) {
      const std::int64_t x = rng.uniform_int(wx.lo, wx.hi);
      const std::int64_t y = rng.uniform_int(wy.lo, wy.hi);
      const std::int64_t overlap =
          footprint.intersection_area({x, y, x + p, y + p});
      if (static_cast<double>(overlap) >= needed) {
        found.emplace_back(x, y);
      } else {
        ++rejections;
      }
    }
    if (static_cast<int>(found.size()) == n) accepted = std::move(found);
  }

  if (accepted.empty()) {
    throw SamplingError("region " + std::to_string(region.region_id) +
                        ": rejection budget exhausted even after relaxing "
                        "overlap_frac to " +
                        std::to_string(config.overlap_frac / 2.0));
  }

  std::vector<Patch> patches;
  patches.reserve(accepted.size());
  for (const auto& [x, y] : accepted) {
    patches.push_back(slide.read_patch(config.level, x, y, p));
  }
  return patches;
}

ClassLabel vote(std::span<const ClassLabel> patch_argmaxes) {
  if (patch_argmaxes.empty()) throw ValidationError("vote: empty ballot");
  std::array<int, kNumClasses> counts{};
  for (ClassLabel label : patch_argmaxes) {
    ++counts[static_cast<std::size_t>(label)];
  }
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    if (counts[static_cast<std::size_t>(c)] >=
        counts[static_cast<std::size_t>(best)]) {
      best = c;  // >= : ties resolve to higher severity
    }
  }
  return static_cast<ClassLabel>(best);
}

ClassLabel argmax_probs(const std::array<double, kNumClasses>& probs) {
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    if (probs[static_cast<std::size_t>(c)] >=
        probs[static_cast<std::size_t>(best)]) {
      best = c;
    }
  }
  return static_cast<ClassLabel>(best);
}

LesionCall classify_region(const RegionProposal& region, const Heatmap& heatmap,
                           const SlideReader& slide,
                           const InferenceBackend& backend,
                           const SamplingConfig& config) {
  LesionCall call;
  call.region_id = region.region_id;
  try {
    const std::vector<Patch> patches =
        sample_patches(region, heatmap, slide, config);
    std::vector<ClassLabel> ballots;
    ballots.reserve(patches.size());
    for (const Patch& patch : patches) {
      ClassificationResult result;
      try {
        result = backend.classify_patch(patch);
      } catch (const InferenceError&) {
        throw;
      } catch (const std::exception& e) {
        throw InferenceError("classification failed at (" +
                             std::to_string(patch.x) + "," +
                             std::to_string(patch.y) + ") level " +
                             std::to_string(patch.level) + ": " + e.what());
      }
      PatchRecord record;
      record.x = patch.x;
      record.y = patch.y;
      record.level = patch.level;
      record.probs = result.probs;
      record.argmax = argmax_probs(result.probs);
      ballots.push_back(record.argmax);
      ++call.votes[static_cast<std::size_t>(record.argmax)];
      call.patches.push_back(std::move(record));
    }
    call.n_patches = static_cast<int>(call.patches.size());
    call.predicted = vote(ballots);
  } catch (const SamplingError&) {
    throw;  // already tagged with the region id
  } catch (const InferenceError& e) {
    throw InferenceError("region " + std::to_string(region.region_id) + ": " +
                         e.what());
  }
  return call;
}

void save_calls(std::span<const LesionCall> calls,
                const std::filesystem::path& path) {
  json j = json::array();
  for (const LesionCall& call : calls) {
    json patches = json::array();
    for (const PatchRecord& record : call.patches) {
      patches.push_back({{"x", record.x},
                         {"y", record.y},
                         {"level", record.level},
                         {"probs", record.probs},
                         {"argmax", to_string(record.argmax)}});
    }
    j.push_back({{"region_id", call.region_id},
                 {"n_patches", call.n_patches},
                 {"votes",
                  {{"non_carcinoma", call.votes[0]},
                   {"dcis", call.votes[1]},
                   {"idc", call.votes[2]}}},
                 {"predicted", to_string(call.predicted)},
                 {"patches", std::move(patches)}});
  }
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

std::vector<LesionCall> load_calls(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing calls file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt calls file: " + std::string(e.what()));
  }
  std::vector<LesionCall> calls;
  try {
    for (const auto& jc : j) {
      LesionCall call;
      call.region_id = jc.at("region_id").get<int>();
      call.n_patches = jc.at("n_patches").get<int>();
      call.votes[0] = jc.at("votes").at("non_carcinoma").get<int>();
      call.votes[1] = jc.at("votes").at("dcis").get<int>();
      call.votes[2] = jc.at("votes").at("idc").get<int>();
      call.predicted =
          class_label_from_string(jc.at("predicted").get<std::string>());
      for (const auto& jp : jc.at("patches")) {
        PatchRecord record;
        record.x = jp.at("x").get<std::int64_t>();
        record.y = jp.at("y").get<std::int64_t>();
        record.level = jp.at("level").get<int>();
        for (std::size_t c = 0; c < kNumClasses; ++c) {
          record.probs[c] = jp.at("probs").at(c).get<double>();
        }
        record.argmax =
            class_label_from_string(jp.at("argmax").get<std::string>());
        call.patches.push_back(std::move(record));
      }
      calls.push_back(std::move(call));
    }
  } catch (const json::exception& e) {
    throw FormatError("calls field error: " + std::string(e.what()));
  }
  return calls;
}

}  // namespace wsicad
