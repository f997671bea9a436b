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

#include "wsicad/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wsicad/errors.hpp"
#include "wsicad/rng.hpp"

namespace wsicad {

namespace {
using nlohmann::json;
constexpr std::uint8_t kHi = 200;
constexpr std::uint8_t kLo = 80;
}  // namespace

std::array<std::uint8_t, 3> class_signature_color(ClassLabel label) {
  switch (label) {
    case ClassLabel::kNonCarcinoma:
      return {kLo, kHi, kLo};
    case ClassLabel::kDcis:
      return {kLo, kLo, kHi};
    case ClassLabel::kIdc:
      return {kHi, kLo, kLo};
  }
  throw ValidationError("invalid ClassLabel");
}

bool is_background_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return r >= 230 && g >= 230 && b >= 230;
}

int signature_class_of_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (g >= r + 40 && g >= b + 40) return static_cast<int>(ClassLabel::kNonCarcinoma);
  if (b >= r + 40 && b >= g + 40) return static_cast<int>(ClassLabel::kDcis);
  if (r >= g + 40 && r >= b + 40) return static_cast<int>(ClassLabel::kIdc);
  return -1;
}

void SynthSpec::validate() const {
  calibration.validate();
  if (width < 1 || height < 1) throw ValidationError("slide size must be positive");
  for (const LesionSpec& lesion : lesions) {
    if (lesion.axis_x < 1 || lesion.axis_y < 1) {
      throw ValidationError("lesion axes must be positive");
    }
    if (!(lesion.texture_noise >= 0.0 && lesion.texture_noise <= 1.0)) {
      throw ValidationError("texture_noise must be in [0,1]");
    }
  }
}

SynthSpec synth_spec_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open synth spec: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt synth spec: " + std::string(e.what()));
  }
  SynthSpec spec;
  try {
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.slide_id = j.value("slide_id", std::string("synthetic"));
    spec.width = j.at("width").get<int>();
    spec.height = j.at("height").get<int>();
    spec.calibration.mpp_x = j.at("mpp_x").get<double>();
    spec.calibration.mpp_y = j.at("mpp_y").get<double>();
    spec.tile_size = j.value("tile_size", 512);
    if (j.contains("downsamples")) {
      spec.downsamples = j.at("downsamples").get<std::vector<int>>();
    }
    const json lesions = j.value("lesions", json::array());
    for (const auto& jl : lesions) {
      LesionSpec lesion;
      const std::string shape = jl.value("shape", std::string("ellipse"));
      if (shape == "ellipse") {
        lesion.shape = LesionShape::kEllipse;
      } else if (shape == "blob") {
        lesion.shape = LesionShape::kBlob;
      } else {
        throw FormatError("unknown lesion shape: " + shape);
      }
      lesion.label = class_label_from_string(jl.at("class").get<std::string>());
      lesion.center_x = jl.at("center").at(0).get<std::int64_t>();
      lesion.center_y = jl.at("center").at(1).get<std::int64_t>();
      lesion.axis_x = jl.at("axes").at(0).get<std::int64_t>();
      lesion.axis_y = jl.at("axes").at(1).get<std::int64_t>();
      lesion.texture_noise = jl.value("texture_noise", 0.0);
      spec.lesions.push_back(lesion);
    }
  } catch (const json::exception& e) {
    throw FormatError("synth spec field error: " + std::string(e.what()));
  }
  return spec;
}

std::int64_t RleMask::pixel_count() const {
  std::int64_t n = 0;
  for (const auto& [start, len] : runs) n += len;
  return n;
}

bool RleMask::contains(std::int64_t linear_index) const {
  auto it = std::upper_bound(
      runs.begin(), runs.end(), linear_index,
      [](std::int64_t v, const auto& run) { return v < run.first; });
  if (it == runs.begin()) return false;
  --it;
  return linear_index < it->first + it->second;
}

RleMask parse_rle(const std::string& text) {
  RleMask mask;
  if (text.empty()) return mask;
  std::stringstream ss(text);
  std::string pair;
  while (std::getline(ss, pair, ',')) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos) throw FormatError("bad RLE pair: " + pair);
    try {
      mask.runs.emplace_back(std::stoll(pair.substr(0, colon)),
                             std::stoll(pair.substr(colon + 1)));
    } catch (const std::exception&) {
      throw FormatError("bad RLE pair: " + pair);
    }
  }
  return mask;
}

std::string encode_rle(const RleMask& mask) {
  std::string out;
  for (std::size_t i = 0; i < mask.runs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(mask.runs[i].first);
    out += ':';
    out += std::to_string(mask.runs[i].second);
  }
  return out;
}

namespace {

struct BlobProfile {
  // ellipse boundary perturbed by low-frequency harmonics; identity for
  // plain ellipses
  std::array<double, 3> amplitude{};  // harmonics 2..4
  std::array<double, 3> phase{};

  double radius_limit(double theta) const {
    double r = 1.0;
    for (int h = 0; h < 3; ++h) {
      r += amplitude[static_cast<std::size_t>(h)] *
           std::cos((h + 2) * theta + phase[static_cast<std::size_t>(h)]);
    }
    return r;
  }
};

BlobProfile draw_profile(const LesionSpec& lesion, SeededRng& rng) {
  BlobProfile profile;
  if (lesion.shape == LesionShape::kBlob) {
    for (int h = 0; h < 3; ++h) {
      profile.amplitude[static_cast<std::size_t>(h)] = 0.12 * rng.uniform01();
      profile.phase[static_cast<std::size_t>(h)] =
          2.0 * std::numbers::pi * rng.uniform01();
    }
  }
  return profile;
}

}  // namespace

GroundTruth generate(const SynthSpec& spec,
                     const std::filesystem::path& out_dir) {
  spec.validate();

  RgbImage level0(spec.width, spec.height, kBackgroundColor[0],
                  kBackgroundColor[1], kBackgroundColor[2]);
  // lesion index + 1 per pixel; detects overlap exactly
  std::vector<std::uint16_t> owner(
      static_cast<std::size_t>(spec.width) * spec.height, 0);

  GroundTruth truth;
  std::vector<ClassLabel> labels;

  for (std::size_t li = 0; li < spec.lesions.size(); ++li) {
    const LesionSpec& lesion = spec.lesions[li];
    SeededRng rng(mix_seed(spec.seed, li));
    const BlobProfile profile = draw_profile(lesion, rng);

    // blob perturbation is bounded by 3 * 0.12, so 1.4 covers the support
    const double margin = lesion.shape == LesionShape::kBlob ? 1.4 : 1.0;
    const std::int64_t x_lo = std::max<std::int64_t>(
        0, lesion.center_x - static_cast<std::int64_t>(
                                 std::ceil(margin * lesion.axis_x)));
    const std::int64_t x_hi = std::min<std::int64_t>(
        spec.width - 1, lesion.center_x + static_cast<std::int64_t>(
                                              std::ceil(margin * lesion.axis_x)));
    const std::int64_t y_lo = std::max<std::int64_t>(
        0, lesion.center_y - static_cast<std::int64_t>(
                                 std::ceil(margin * lesion.axis_y)));
    const std::int64_t y_hi = std::min<std::int64_t>(
        spec.height - 1, lesion.center_y + static_cast<std::int64_t>(
                                               std::ceil(margin * lesion.axis_y)));

    const auto base = class_signature_color(lesion.label);
    LesionTruth lt;
    lt.label = lesion.label;
    std::int64_t min_x = spec.width, max_x = -1, min_y = spec.height,
                 max_y = -1;

    for (std::int64_t y = y_lo; y <= y_hi; ++y) {
      std::int64_t run_start = -1;
      for (std::int64_t x = x_lo; x <= x_hi; ++x) {
        const double nx = (static_cast<double>(x) - lesion.center_x) /
                          static_cast<double>(lesion.axis_x);
        const double ny = (static_cast<double>(y) - lesion.center_y) /
                          static_cast<double>(lesion.axis_y);
        const double r = std::sqrt(nx * nx + ny * ny);
        bool inside;
        if (lesion.shape == LesionShape::kEllipse) {
          inside = r <= 1.0;
        } else {
          inside = r <= profile.radius_limit(std::atan2(ny, nx));
        }
        if (!inside) {
          if (run_start >= 0) {
            lt.mask.runs.emplace_back(run_start,
                                      y * spec.width + x - run_start);
            run_start = -1;
          }
          continue;
        }

        const std::int64_t linear = y * spec.width + x;
        std::uint16_t& cell = owner[static_cast<std::size_t>(linear)];
        if (cell != 0) {
          throw ValidationError("lesions " + std::to_string(cell - 1) +
                                " and " + std::to_string(li) + " overlap");
        }
        cell = static_cast<std::uint16_t>(li + 1);
        if (run_start < 0) run_start = linear;
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);

        auto color = base;
        if (lesion.texture_noise > 0.0 &&
            rng.uniform01() < lesion.texture_noise) {
          // repaint with one of the two other class signatures
          const int self = static_cast<int>(lesion.label);
          const int pick = static_cast<int>(rng.uniform_below(2));
          const int other = (self + 1 + pick) % kNumClasses;
          color = class_signature_color(static_cast<ClassLabel>(other));
        }
        level0.set(static_cast<int>(x), static_cast<int>(y), color[0],
                   color[1], color[2]);
      }
      if (run_start >= 0) {
        lt.mask.runs.emplace_back(run_start,
                                  y * spec.width + x_hi + 1 - run_start);
      }
    }

    if (max_x < 0) {
      throw ValidationError("lesion " + std::to_string(li) +
                            " rasterized to zero pixels");
    }
    lt.bbox = {min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
    lt.area_mm2 = static_cast<double>(lt.mask.pixel_count()) *
                  (spec.calibration.mpp_x * spec.calibration.mpp_y) / 1e6;
    truth.lesions.push_back(std::move(lt));
    labels.push_back(lesion.label);
  }

  truth.slide_label = labels.empty() ? ClassLabel::kNonCarcinoma
                                     : max_severity(labels);

  SlideWriteOptions options;
  options.tile_size = spec.tile_size;
  options.downsamples = spec.downsamples;
  write_slide(out_dir, spec.slide_id, level0, spec.calibration, options);
  save_truth(truth, out_dir / "truth.json");
  return truth;
}

void save_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  json j;
  j["slide_label"] = to_string(truth.slide_label);
  j["lesions"] = json::array();
  for (const LesionTruth& lt : truth.lesions) {
    j["lesions"].push_back({{"class", to_string(lt.label)},
                            {"bbox", lt.bbox},
                            {"area_mm2", lt.area_mm2},
                            {"rle_mask", encode_rle(lt.mask)}});
  }
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

GroundTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing truth file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt truth file: " + std::string(e.what()));
  }
  GroundTruth truth;
  try {
    truth.slide_label =
        class_label_from_string(j.at("slide_label").get<std::string>());
    for (const auto& jl : j.at("lesions")) {
      LesionTruth lt;
      lt.label = class_label_from_string(jl.at("class").get<std::string>());
      const auto& bbox = jl.at("bbox");
      for (int i = 0; i < 4; ++i) {
        lt.bbox[static_cast<std::size_t>(i)] =
            bbox.at(static_cast<std::size_t>(i)).get<std::int64_t>();
      }
      lt.area_mm2 = jl.at("area_mm2").get<double>();
      lt.mask = parse_rle(jl.at("rle_mask").get<std::string>());
      truth.lesions.push_back(std::move(lt));
    }
  } catch (const json::exception& e) {
    throw FormatError("truth field error: " + std::string(e.what()));
  }
  return truth;
}

}  // namespace wsicad
