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

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "wsicad/errors.hpp"
#include "wsicad/explain.hpp"
#include "wsicad/png_io.hpp"
#include "testutil.hpp"

using namespace wsicad;
using wsicad::test::TempDir;

namespace {

// exhaustive (threshold, polarity) search over every candidate the stump
// could possibly use, by direct prediction counting
double brute_best_accuracy(const std::vector<float>& a,
                           const std::vector<std::uint8_t>& y) {
  std::vector<double> candidates;
  std::vector<float> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  candidates.push_back(static_cast<double>(sorted.front()) - 1.0);
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    candidates.push_back((static_cast<double>(sorted[i]) +
                          static_cast<double>(sorted[i + 1])) /
                         2.0);
  }
  candidates.push_back(static_cast<double>(sorted.back()) + 1.0);

  double best = 0.0;
  for (double t : candidates) {
    for (int p : {+1, -1}) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const bool positive = p * (static_cast<double>(a[i]) - t) > 0.0;
        correct += positive == (y[i] == 1);
      }
      best = std::max(best, static_cast<double>(correct) /
                                static_cast<double>(a.size()));
    }
  }
  return best;
}

LinearModel identity_spatial_model(int k) {
  LinearModel model;
  model.class_names = {"non_carcinoma", "dcis", "idc"};
  model.f = k;
  model.w.assign(static_cast<std::size_t>(k) * 3, 0.0);
  model.b = {0, 0, 0};
  return model;
}

}  // namespace

TEST_CASE("stump_fit separates a clean split") {
  const std::vector<float> a{0.1f, 0.2f, 0.9f, 1.0f};
  const std::vector<std::uint8_t> pos{0, 0, 1, 1};
  const StumpResult stump = stump_fit(a, pos);
  CHECK(stump.threshold == doctest::Approx(0.55));
  CHECK(stump.polarity == 1);
  CHECK(stump.accuracy == 1.0);

  const std::vector<std::uint8_t> neg{1, 1, 0, 0};
  const StumpResult flipped = stump_fit(a, neg);
  CHECK(flipped.threshold == doctest::Approx(0.55));
  CHECK(flipped.polarity == -1);
  CHECK(flipped.accuracy == 1.0);
}

TEST_CASE("stump_fit degenerate single-class labels") {
  const std::vector<float> a{0.3f, 0.7f, 0.5f};
  const StumpResult stump = stump_fit(a, std::vector<std::uint8_t>{1, 1, 1});
  CHECK(stump.accuracy == 1.0);
  CHECK(stump.polarity == 1);
  CHECK(stump.threshold < 0.3);
  for (float v : a) CHECK(stump.predict(v));
}

TEST_CASE("stump_fit input validation") {
  CHECK_THROWS_AS(stump_fit(std::vector<float>{1.0f},
                            std::vector<std::uint8_t>{1}),
                  ValidationError);
  CHECK_THROWS_AS(
      stump_fit(std::vector<float>{1.0f, std::nanf("")},
                std::vector<std::uint8_t>{1, 0}),
      ValidationError);
  CHECK_THROWS_AS(stump_fit(std::vector<float>{1.0f, 2.0f},
                            std::vector<std::uint8_t>{1}),
                  ValidationError);
}

TEST_CASE("stump_fit equals the exhaustive oracle") {
  std::mt19937 gen(53);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 63;
    std::vector<float> a(n);
    std::vector<std::uint8_t> y(n);
    const bool few_values = trial % 3 == 0;  // force duplicates
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = few_values
                 ? static_cast<float>(gen() % 4)
                 : std::uniform_real_distribution<float>(-10, 10)(gen);
      y[i] = static_cast<std::uint8_t>(gen() % 2);
    }
    const StumpResult stump = stump_fit(a, y);
    REQUIRE(stump.accuracy == brute_best_accuracy(a, y));
    REQUIRE(stump.accuracy >= 0.5);

    // reported accuracy must equal the rule's empirical accuracy
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      correct += stump.predict(a[i]) == (y[i] == 1);
    }
    REQUIRE(static_cast<double>(correct) / static_cast<double>(n) ==
            stump.accuracy);
  }
}

TEST_CASE("stump accuracy is invariant under monotone transforms") {
  std::mt19937 gen(59);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 4 + gen() % 30;
    std::vector<float> a(n), exp_a(n), affine_a(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = std::uniform_real_distribution<float>(-3, 3)(gen);
      exp_a[i] = std::exp(a[i]);
      affine_a[i] = 2.5f * a[i] + 7.0f;
      y[i] = static_cast<std::uint8_t>(gen() % 2);
    }
    const double base = stump_fit(a, y).accuracy;
    CHECK(stump_fit(exp_a, y).accuracy == base);
    CHECK(stump_fit(affine_a, y).accuracy == base);
  }
}

namespace {

FeatureTable ranked_fixture() {
  // four features with decreasing separability for target DCIS:
  //   f0: random-ish, f1: perfect indicator, f2: one error, f3: two errors
  FeatureTable table;
  table.n = 10;
  table.f = 4;
  table.data.assign(40, 0.0f);
  for (int i = 0; i < 10; ++i) {
    const bool positive = i < 5;
    table.labels.push_back(positive ? ClassLabel::kDcis
                                    : ClassLabel::kNonCarcinoma);
    auto set = [&](int feature, float value) {
      table.data[static_cast<std::size_t>(i) * 4 + feature] = value;
    };
    set(0, static_cast<float>(i % 2));            // uninformative
    set(1, positive ? 1.0f : 0.0f);               // acc 1.0
    set(2, (i == 0) ? 0.0f : (positive ? 1.0f : 0.0f));  // acc 0.9
    set(3, (i <= 1) ? 0.0f : (positive ? 1.0f : 0.0f));  // acc 0.8
  }
  return table;
}

}  // namespace

TEST_CASE("rank_features orders by stump accuracy") {
  const FeatureTable table = ranked_fixture();
  const FeatureRanking ranking = rank_features(table, ClassLabel::kDcis, 3);
  REQUIRE(ranking.ranked.size() == 3);
  CHECK(ranking.ranked[0].feature_index == 1);
  CHECK(ranking.ranked[0].accuracy == 1.0);
  CHECK(ranking.ranked[1].feature_index == 2);
  CHECK(ranking.ranked[1].accuracy == doctest::Approx(0.9));
  CHECK(ranking.ranked[2].feature_index == 3);
  CHECK(ranking.ranked[2].accuracy == doctest::Approx(0.8));
}

TEST_CASE("rank_features clamps K and keeps accuracies non-increasing") {
  const FeatureTable table = ranked_fixture();
  const FeatureRanking ranking = rank_features(table, ClassLabel::kDcis, 99);
  REQUIRE(ranking.ranked.size() == 4);
  for (std::size_t i = 1; i < ranking.ranked.size(); ++i) {
    CHECK(ranking.ranked[i - 1].accuracy >= ranking.ranked[i].accuracy);
  }
}

TEST_CASE("rank_features is invariant under row permutation") {
  FeatureTable table = ranked_fixture();
  FeatureTable shuffled = table;
  const std::vector<int> perm{7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 4; ++j) {
      shuffled.data[static_cast<std::size_t>(i) * 4 + j] =
          table.data[static_cast<std::size_t>(perm[i]) * 4 + j];
    }
    shuffled.labels[static_cast<std::size_t>(i)] =
        table.labels[static_cast<std::size_t>(perm[i])];
  }
  const auto a = rank_features(table, ClassLabel::kDcis, 4);
  const auto b = rank_features(shuffled, ClassLabel::kDcis, 4);
  REQUIRE(a.ranked.size() == b.ranked.size());
  for (std::size_t i = 0; i < a.ranked.size(); ++i) {
    CHECK(a.ranked[i].feature_index == b.ranked[i].feature_index);
    CHECK(a.ranked[i].accuracy == b.ranked[i].accuracy);
  }
}

TEST_CASE("rank_features is independent of the jobs count") {
  std::mt19937 gen(61);
  FeatureTable table;
  table.n = 40;
  table.f = 32;
  table.data.resize(static_cast<std::size_t>(table.n) * table.f);
  for (auto& v : table.data) {
    v = std::uniform_real_distribution<float>(-1, 1)(gen);
  }
  for (int i = 0; i < table.n; ++i) {
    table.labels.push_back(static_cast<ClassLabel>(gen() % 3));
  }
  const auto serial = rank_features(table, ClassLabel::kIdc, 32, 1);
  const auto parallel = rank_features(table, ClassLabel::kIdc, 32, 8);
  REQUIRE(serial.ranked.size() == parallel.ranked.size());
  for (std::size_t i = 0; i < serial.ranked.size(); ++i) {
    CHECK(serial.ranked[i].feature_index == parallel.ranked[i].feature_index);
    CHECK(serial.ranked[i].threshold == parallel.ranked[i].threshold);
  }
}

TEST_CASE("ranking.json carries the documented fields") {
  TempDir dir("ranking_io");
  const FeatureRanking ranking =
      rank_features(ranked_fixture(), ClassLabel::kDcis, 2);
  save_ranking(ranking, dir / "ranking.json");
  std::ifstream in(dir / "ranking.json");
  nlohmann::json j;
  in >> j;
  CHECK(j.at("target_class") == "dcis");
  CHECK(j.at("k") == 2);
  CHECK(j.at("features").at(0).at("index") == 1);
  CHECK(j.at("features").at(0).at("accuracy") == 1.0);
  CHECK(j.at("features").at(0).contains("threshold"));
  CHECK(j.at("features").at(0).contains("polarity"));
}

TEST_CASE("top_activations sorts descending with row-order ties") {
  FeatureTable table;
  table.n = 3;
  table.f = 2;
  table.data = {0.0f, 3.0f, 0.0f, 1.0f, 0.0f, 2.0f};
  CHECK(top_activations(table, 1, 2) == std::vector<int>{0, 2});
  CHECK(top_activations(table, 1, 10) == std::vector<int>{0, 2, 1});
  CHECK(top_activations(table, 0, 3) == std::vector<int>{0, 1, 2});  // ties
  CHECK_THROWS_AS(top_activations(table, 5, 1), std::out_of_range);
  CHECK_THROWS_AS(top_activations(table, 0, 0), ValidationError);
}

TEST_CASE("compute_cam on a one-pixel map") {
  FeatureMaps maps;
  maps.k = 2;
  maps.h = 1;
  maps.w = 1;
  maps.data = {2.0f, 3.0f};
  LinearModel model = identity_spatial_model(2);
  model.w = {0.5, 0, 0, -1.0, 0, 0};  // class 0 weights (0.5, -1)

  const CamMap cam = compute_cam(maps, model, ClassLabel::kNonCarcinoma);
  CHECK(cam.raw_at(0, 0) == doctest::Approx(-2.0));
  CHECK(cam.flat);
  CHECK(cam.normalized[0] == 0.0);
}

TEST_CASE("compute_cam with zero weights is identically zero") {
  FeatureMaps maps;
  maps.k = 3;
  maps.h = 4;
  maps.w = 4;
  maps.data.assign(48, 1.5f);
  const LinearModel model = identity_spatial_model(3);
  const CamMap cam = compute_cam(maps, model, ClassLabel::kDcis, 16);
  for (double v : cam.raw) CHECK(v == 0.0);
  CHECK(cam.flat);
}

TEST_CASE("compute_cam equals a brute-force double loop") {
  std::mt19937 gen(67);
  std::uniform_real_distribution<double> dist(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    FeatureMaps maps;
    maps.k = 3;
    maps.h = 2;
    maps.w = 2;
    maps.data.resize(12);
    for (auto& v : maps.data) v = static_cast<float>(dist(gen));
    LinearModel model = identity_spatial_model(3);
    for (auto& v : model.w) v = dist(gen);
    const ClassLabel label = static_cast<ClassLabel>(gen() % 3);

    const CamMap cam = compute_cam(maps, model, label);
    for (int y = 0; y < 2; ++y) {
      for (int x = 0; x < 2; ++x) {
        double want = 0.0;
        for (int k = 0; k < 3; ++k) {
          want += model.w[static_cast<std::size_t>(k) * 3 +
                          static_cast<std::size_t>(label)] *
                  static_cast<double>(maps.at(k, y, x));
        }
        REQUIRE(cam.raw_at(y, x) == doctest::Approx(want).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("compute_cam is linear in the weights") {
  std::mt19937 gen(71);
  std::uniform_real_distribution<double> dist(-1, 1);
  FeatureMaps maps;
  maps.k = 4;
  maps.h = 3;
  maps.w = 3;
  maps.data.resize(36);
  for (auto& v : maps.data) v = static_cast<float>(dist(gen));

  LinearModel m1 = identity_spatial_model(4);
  LinearModel m2 = identity_spatial_model(4);
  LinearModel sum = identity_spatial_model(4);
  for (std::size_t i = 0; i < m1.w.size(); ++i) {
    m1.w[i] = dist(gen);
    m2.w[i] = dist(gen);
    sum.w[i] = m1.w[i] + m2.w[i];
  }
  const auto c1 = compute_cam(maps, m1, ClassLabel::kIdc);
  const auto c2 = compute_cam(maps, m2, ClassLabel::kIdc);
  const auto cs = compute_cam(maps, sum, ClassLabel::kIdc);
  for (std::size_t i = 0; i < cs.raw.size(); ++i) {
    CHECK(cs.raw[i] == doctest::Approx(c1.raw[i] + c2.raw[i]).epsilon(1e-6));
  }
}

TEST_CASE("compute_cam honors a distinct spatial weight matrix") {
  FeatureMaps maps;
  maps.k = 2;
  maps.h = 1;
  maps.w = 1;
  maps.data = {1.0f, 1.0f};
  LinearModel model = identity_spatial_model(8);  // f=8 scoring features
  model.spatial_k = 2;
  model.w_spatial = {3, 0, 0, 4, 0, 0};
  const CamMap cam = compute_cam(maps, model, ClassLabel::kNonCarcinoma);
  CHECK(cam.raw_at(0, 0) == doctest::Approx(7.0));

  FeatureMaps wrong;
  wrong.k = 8;
  wrong.h = 1;
  wrong.w = 1;
  wrong.data.assign(8, 0.0f);
  CHECK_THROWS_AS(compute_cam(wrong, model, ClassLabel::kDcis),
                  ValidationError);
}

TEST_CASE("heat colormap endpoints") {
  CHECK(heat_color(0.0) == std::array<std::uint8_t, 3>{0, 0, 255});
  CHECK(heat_color(0.5) == std::array<std::uint8_t, 3>{0, 255, 0});
  CHECK(heat_color(1.0) == std::array<std::uint8_t, 3>{255, 0, 0});
  CHECK(heat_color(0.25) == std::array<std::uint8_t, 3>{0, 128, 128});
}

TEST_CASE("flat CAM renders black") {
  FeatureMaps maps;
  maps.k = 3;
  maps.h = 2;
  maps.w = 2;
  maps.data.assign(12, 1.0f);
  const CamMap cam =
      compute_cam(maps, identity_spatial_model(3), ClassLabel::kIdc, 8);
  const RgbImage img = render_cam(cam);
  for (std::uint8_t byte : img.pixels) CHECK(byte == 0);
}

TEST_CASE("overlay with alpha 0 returns the patch bytes") {
  std::mt19937 gen(73);
  Patch patch = wsicad::test::solid_patch(16, 0, 0, 0);
  for (auto& byte : patch.pixels) byte = static_cast<std::uint8_t>(gen());

  FeatureMaps maps;
  maps.k = 3;
  maps.h = 4;
  maps.w = 4;
  maps.data.resize(48);
  for (auto& v : maps.data) {
    v = std::uniform_real_distribution<float>(0, 1)(gen);
  }
  LinearModel model = identity_spatial_model(3);
  for (auto& v : model.w) v = std::uniform_real_distribution<>(-1, 1)(gen);

  const CamMap cam = compute_cam(maps, model, ClassLabel::kDcis, 16);
  const RgbImage out = render_overlay(cam, patch, 0.0);
  CHECK(out.pixels == patch.pixels);
}

TEST_CASE("overlay saturates to the heat color at v=1, alpha=1") {
  FeatureMaps maps;
  maps.k = 1;
  maps.h = 2;
  maps.w = 2;
  maps.data = {0.0f, 1.0f, 1.0f, 1.0f};  // one zero forces a real span
  LinearModel model = identity_spatial_model(1);
  model.w = {1, 0, 0};
  const CamMap cam = compute_cam(maps, model, ClassLabel::kNonCarcinoma, 2);

  const Patch patch = wsicad::test::solid_patch(2, 50, 60, 70);
  const RgbImage out = render_overlay(cam, patch, 1.0);
  // bottom-right pixel has v = 1: pure red
  const std::uint8_t* p = out.at(1, 1);
  CHECK(p[0] == 255);
  CHECK(p[1] == 0);
  CHECK(p[2] == 0);
  // top-left has v = 0: untouched patch pixel
  const std::uint8_t* q = out.at(0, 0);
  CHECK(q[0] == 50);
  CHECK(q[1] == 60);
  CHECK(q[2] == 70);
}

TEST_CASE("overlay dimension and alpha validation") {
  FeatureMaps maps;
  maps.k = 1;
  maps.h = 2;
  maps.w = 2;
  maps.data.assign(4, 0.5f);
  LinearModel model = identity_spatial_model(1);
  model.w = {1, 0, 0};
  const CamMap cam = compute_cam(maps, model, ClassLabel::kNonCarcinoma, 8);
  const Patch patch = wsicad::test::solid_patch(16, 0, 0, 0);
  CHECK_THROWS_AS(render_overlay(cam, patch, 0.5), ValidationError);
  const Patch ok = wsicad::test::solid_patch(8, 0, 0, 0);
  CHECK_THROWS_AS(render_overlay(cam, ok, 1.5), ValidationError);
}

TEST_CASE("overlay regression against the golden PNG") {
  // deterministic inputs frozen once; any byte change in the blend or the
  // PNG encoder settings shows up here
  Patch patch = wsicad::test::solid_patch(64, 0, 0, 0);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      std::uint8_t* p =
          patch.pixels.data() + (static_cast<std::size_t>(y) * 64 + x) * 3;
      p[0] = static_cast<std::uint8_t>(4 * x);
      p[1] = static_cast<std::uint8_t>(4 * y);
      p[2] = static_cast<std::uint8_t>(255 - 2 * x - y);
    }
  }
  FeatureMaps maps;
  maps.k = 3;
  maps.h = 8;
  maps.w = 8;
  maps.data.resize(192);
  for (int i = 0; i < 192; ++i) {
    maps.data[static_cast<std::size_t>(i)] =
        static_cast<float>((i * 37 % 101)) / 101.0f;
  }
  LinearModel model = identity_spatial_model(3);
  model.w = {1, 0, 0, 0.5, 1, 0, -0.25, 0, 1};
  const CamMap cam = compute_cam(maps, model, ClassLabel::kDcis, 64);
  const RgbImage overlay = render_overlay(cam, patch, 0.6);

  TempDir dir("golden");
  write_png(dir / "overlay.png", overlay);
  std::ifstream got_in(dir / "overlay.png", std::ios::binary);
  const std::string got((std::istreambuf_iterator<char>(got_in)),
                        std::istreambuf_iterator<char>());

  const std::filesystem::path golden_path =
      std::filesystem::path(WSICAD_TEST_DATA_DIR) / "golden_overlay.png";
  if (!std::filesystem::exists(golden_path)) {
    // first run after a clean checkout regenerates the fixture
    std::filesystem::create_directories(golden_path.parent_path());
    std::ofstream out(golden_path, std::ios::binary);
    out << got;
    MESSAGE("golden file regenerated; rerun to compare");
    return;
  }
  std::ifstream want_in(golden_path, std::ios::binary);
  const std::string want((std::istreambuf_iterator<char>(want_in)),
                         std::istreambuf_iterator<char>());
  CHECK(got == want);
}
