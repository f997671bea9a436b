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

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "wsicad/errors.hpp"
#include "wsicad/pyramid.hpp"
#include "wsicad/synthgen.hpp"
#include "testutil.hpp"

using namespace wsicad;
using wsicad::test::TempDir;

namespace {

SynthSpec small_spec() {
  SynthSpec spec;
  spec.seed = 42;
  spec.slide_id = "s";
  spec.width = 1024;
  spec.height = 1024;
  spec.calibration = {1.0, 1.0};
  spec.tile_size = 256;
  spec.downsamples = {1, 2};
  return spec;
}

std::vector<std::pair<std::string, std::string>> read_tree(
    const std::filesystem::path& root) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    files.emplace_back(
        std::filesystem::relative(entry.path(), root).string(),
        std::move(bytes));
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

TEST_CASE("a 2 mm ellipse rasterizes to the analytic area within 2%") {
  TempDir dir("synth_area");
  SynthSpec spec = small_spec();
  spec.width = 2304;
  spec.height = 2304;
  spec.lesions.push_back({LesionShape::kEllipse, ClassLabel::kIdc, 1152, 1152,
                          1000, 1000, 0.0});
  const GroundTruth truth = generate(spec, dir.path());
  REQUIRE(truth.lesions.size() == 1);
  // semi-axes 1 mm at 1 um/px, so pi * 1 * 1 mm^2
  CHECK(truth.lesions[0].area_mm2 ==
        doctest::Approx(std::numbers::pi).epsilon(0.02));
  CHECK(truth.slide_label == ClassLabel::kIdc);

  // definitional: pixel count * mpp_x * mpp_y / 1e6 equals area exactly
  CHECK(truth.lesions[0].area_mm2 ==
        static_cast<double>(truth.lesions[0].mask.pixel_count()) *
            (1.0 * 1.0) / 1e6);
}

TEST_CASE("zero lesions gives a NonCarcinoma slide") {
  TempDir dir("synth_empty");
  const GroundTruth truth = generate(small_spec(), dir.path());
  CHECK(truth.slide_label == ClassLabel::kNonCarcinoma);
  CHECK(truth.lesions.empty());
}

TEST_CASE("same seed twice produces byte-identical containers") {
  TempDir a("synth_det_a");
  TempDir b("synth_det_b");
  SynthSpec spec = small_spec();
  spec.lesions.push_back(
      {LesionShape::kBlob, ClassLabel::kDcis, 500, 500, 180, 150, 0.3});
  spec.lesions.push_back(
      {LesionShape::kEllipse, ClassLabel::kIdc, 180, 800, 100, 90, 0.1});
  generate(spec, a.path());
  generate(spec, b.path());
  CHECK(read_tree(a.path()) == read_tree(b.path()));
}

TEST_CASE("noise-free lesions carry only their signature color") {
  TempDir dir("synth_pure");
  SynthSpec spec = small_spec();
  spec.lesions.push_back(
      {LesionShape::kEllipse, ClassLabel::kDcis, 500, 500, 200, 160, 0.0});
  const GroundTruth truth = generate(spec, dir.path());

  const SlideReader reader(dir.path());
  const Patch patch = reader.read_patch(0, 0, 0, 1024);
  std::int64_t on_signature = 0;
  for (const auto& [start, len] : truth.lesions[0].mask.runs) {
    for (std::int64_t i = start; i < start + len; ++i) {
      const std::int64_t x = i % 1024;
      const std::int64_t y = i / 1024;
      const std::uint8_t* p = patch.at(static_cast<int>(x), static_cast<int>(y));
      if (signature_class_of_pixel(p[0], p[1], p[2]) ==
          static_cast<int>(ClassLabel::kDcis)) {
        ++on_signature;
      }
    }
  }
  CHECK(on_signature == truth.lesions[0].mask.pixel_count());
}

TEST_CASE("texture noise flips roughly the requested pixel fraction") {
  TempDir dir("synth_noise");
  SynthSpec spec = small_spec();
  spec.lesions.push_back(
      {LesionShape::kEllipse, ClassLabel::kIdc, 500, 500, 250, 250, 0.2});
  const GroundTruth truth = generate(spec, dir.path());

  const SlideReader reader(dir.path());
  const Patch patch = reader.read_patch(0, 0, 0, 1024);
  std::int64_t flipped = 0;
  for (const auto& [start, len] : truth.lesions[0].mask.runs) {
    for (std::int64_t i = start; i < start + len; ++i) {
      const std::uint8_t* p =
          patch.at(static_cast<int>(i % 1024), static_cast<int>(i / 1024));
      const int cls = signature_class_of_pixel(p[0], p[1], p[2]);
      REQUIRE(cls >= 0);  // still a lesion signature, never background
      if (cls != static_cast<int>(ClassLabel::kIdc)) ++flipped;
    }
  }
  const double fraction = static_cast<double>(flipped) /
                          static_cast<double>(truth.lesions[0].mask.pixel_count());
  CHECK(fraction == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("overlapping lesions are rejected") {
  TempDir dir("synth_overlap");
  SynthSpec spec = small_spec();
  spec.lesions.push_back(
      {LesionShape::kEllipse, ClassLabel::kDcis, 500, 500, 200, 200, 0.0});
  spec.lesions.push_back(
      {LesionShape::kEllipse, ClassLabel::kIdc, 600, 500, 200, 200, 0.0});
  CHECK_THROWS_AS(generate(spec, dir.path()), ValidationError);
}

TEST_CASE("spec validation") {
  SynthSpec spec = small_spec();
  spec.lesions.push_back(
      {LesionShape::kEllipse, ClassLabel::kIdc, 10, 10, 0, 5, 0.0});
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec.lesions[0].axis_x = 5;
  spec.lesions[0].texture_noise = 1.5;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("slide label is the severity max over lesions") {
  TempDir dir("synth_label");
  SynthSpec spec = small_spec();
  spec.lesions.push_back(
      {LesionShape::kEllipse, ClassLabel::kNonCarcinoma, 250, 250, 100, 100, 0.0});
  spec.lesions.push_back(
      {LesionShape::kEllipse, ClassLabel::kDcis, 700, 700, 100, 100, 0.0});
  const GroundTruth truth = generate(spec, dir.path());
  CHECK(truth.slide_label == ClassLabel::kDcis);
}

TEST_CASE("RLE masks round-trip and answer membership") {
  RleMask mask;
  mask.runs = {{5, 3}, {20, 1}, {100, 50}};
  const RleMask parsed = parse_rle(encode_rle(mask));
  CHECK(parsed.runs == mask.runs);
  CHECK(parsed.pixel_count() == 54);
  CHECK(parsed.contains(5));
  CHECK(parsed.contains(7));
  CHECK_FALSE(parsed.contains(8));
  CHECK(parsed.contains(20));
  CHECK_FALSE(parsed.contains(21));
  CHECK(parsed.contains(149));
  CHECK_FALSE(parsed.contains(150));
  CHECK_FALSE(parsed.contains(0));

  CHECK(encode_rle(parse_rle("")).empty());
  CHECK_THROWS_AS(parse_rle("5-3"), FormatError);
}

TEST_CASE("truth files round-trip") {
  TempDir dir("synth_truthio");
  SynthSpec spec = small_spec();
  spec.lesions.push_back(
      {LesionShape::kBlob, ClassLabel::kIdc, 500, 500, 150, 120, 0.0});
  const GroundTruth truth = generate(spec, dir.path());
  const GroundTruth loaded = load_truth(dir / "truth.json");
  CHECK(loaded.slide_label == truth.slide_label);
  REQUIRE(loaded.lesions.size() == 1);
  CHECK(loaded.lesions[0].label == truth.lesions[0].label);
  CHECK(loaded.lesions[0].bbox == truth.lesions[0].bbox);
  CHECK(loaded.lesions[0].area_mm2 == truth.lesions[0].area_mm2);
  CHECK(loaded.lesions[0].mask.runs == truth.lesions[0].mask.runs);
}
