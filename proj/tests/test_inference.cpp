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

#include "wsicad/errors.hpp"
#include "wsicad/inference.hpp"
#include "wsicad/synthgen.hpp"
#include "testutil.hpp"

using namespace wsicad;
using wsicad::test::TempDir;
using wsicad::test::solid_patch;

namespace {

Patch random_patch(std::mt19937& gen, int size) {
  Patch patch = solid_patch(size, 0, 0, 0);
  for (auto& byte : patch.pixels) byte = static_cast<std::uint8_t>(gen());
  return patch;
}

LinearModel tiny_model(int f) {
  LinearModel model;
  model.class_names = {"non_carcinoma", "dcis", "idc"};
  model.f = f;
  model.w.assign(static_cast<std::size_t>(f) * 3, 0.0);
  model.b = {0.0, 0.0, 0.0};
  return model;
}

}  // namespace

TEST_CASE("synthetic detection probability counts non-background pixels") {
  const SyntheticBackend backend;
  CHECK(backend.detect_prob(solid_patch(32, 255, 255, 255)).probability == 0.0);
  CHECK(backend.detect_prob(solid_patch(32, 200, 80, 80)).probability == 1.0);

  // left half IDC red, right half white
  Patch half = solid_patch(32, 255, 255, 255);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 16; ++x) {
      std::uint8_t* p = half.pixels.data() +
                        (static_cast<std::size_t>(y) * 32 + x) * 3;
      p[0] = 200;
      p[1] = 80;
      p[2] = 80;
    }
  }
  CHECK(backend.detect_prob(half).probability == doctest::Approx(0.5));
}

TEST_CASE("synthetic classification follows signature pixel counts") {
  const SyntheticBackend backend;

  const auto pure = backend.classify_patch(solid_patch(16, 80, 80, 200));
  CHECK(pure.probs[0] == doctest::Approx(0.0));
  CHECK(pure.probs[1] == doctest::Approx(1.0));
  CHECK(pure.probs[2] == doctest::Approx(0.0));

  const auto background = backend.classify_patch(solid_patch(16, 255, 255, 255));
  CHECK(background.probs[0] == doctest::Approx(1.0 / 3));
  CHECK(background.probs[1] == doctest::Approx(1.0 / 3));
  CHECK(background.probs[2] == doctest::Approx(1.0 / 3));

  // 60% red (IDC), 40% blue (DCIS) lesion pixels -> (0, 0.4, 0.6)
  Patch mixed = solid_patch(10, 255, 255, 255);
  int painted = 0;
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      std::uint8_t* p =
          mixed.pixels.data() + (static_cast<std::size_t>(y) * 10 + x) * 3;
      if (painted < 60) {
        p[0] = 200; p[1] = 80; p[2] = 80;
      } else {
        p[0] = 80; p[1] = 80; p[2] = 200;
      }
      ++painted;
    }
  }
  const auto result = backend.classify_patch(mixed);
  CHECK(result.probs[0] == doctest::Approx(0.0));
  CHECK(result.probs[1] == doctest::Approx(0.4));
  CHECK(result.probs[2] == doctest::Approx(0.6));
}

TEST_CASE("classification probabilities sum to 1 on random patches") {
  const SyntheticBackend synthetic;
  LinearModel model = tiny_model(kHandcraftedFeatureCount);
  std::mt19937 wgen(3);
  for (auto& v : model.w) v = std::uniform_real_distribution<>(-1, 1)(wgen);
  const LinearBackend linear{model};

  std::mt19937 gen(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Patch patch = random_patch(gen, 24);
    for (const InferenceBackend* backend :
         {static_cast<const InferenceBackend*>(&synthetic),
          static_cast<const InferenceBackend*>(&linear)}) {
      const auto result = backend->classify_patch(patch);
      const double sum = result.probs[0] + result.probs[1] + result.probs[2];
      REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-6));
      for (double p : result.probs) REQUIRE(p >= 0.0);
    }
  }
}

TEST_CASE("synthetic backend is a pure function of the pixel buffer") {
  const SyntheticBackend backend;
  std::mt19937 gen(23);
  const Patch patch = random_patch(gen, 20);
  Patch copy = patch;
  copy.x = 999;  // coordinates must not matter
  copy.slide_id = "other";
  CHECK(backend.detect_prob(patch).probability ==
        backend.detect_prob(copy).probability);
  CHECK(backend.classify_patch(patch).probs ==
        backend.classify_patch(copy).probs);
}

TEST_CASE("linear_score matches the paper's weight rows") {
  LinearModel model = tiny_model(2048);
  // Table III row 1134 and Table IV row 1815
  model.w[1134 * 3 + 0] = 0.081;
  model.w[1134 * 3 + 1] = -0.051;
  model.w[1134 * 3 + 2] = -0.045;
  model.w[1815 * 3 + 0] = -0.029;
  model.w[1815 * 3 + 1] = 0.087;
  model.w[1815 * 3 + 2] = -0.05;

  std::vector<float> a(2048, 0.0f);
  a[1134] = 1.0f;
  auto score = linear_score(a, model);
  CHECK(score.scores[0] == doctest::Approx(0.081));
  CHECK(score.scores[1] == doctest::Approx(-0.051));
  CHECK(score.scores[2] == doctest::Approx(-0.045));
  CHECK(score.argmax == ClassLabel::kNonCarcinoma);

  a[1134] = 0.0f;
  a[1815] = 1.0f;
  score = linear_score(a, model);
  CHECK(score.argmax == ClassLabel::kDcis);

  // zero input, zero bias: three-way tie resolves to IDC
  a[1815] = 0.0f;
  score = linear_score(a, model);
  CHECK(score.scores == std::array<double, 3>{0.0, 0.0, 0.0});
  CHECK(score.argmax == ClassLabel::kIdc);
}

TEST_CASE("linear_score rejects dimension mismatches") {
  const LinearModel model = tiny_model(8);
  std::vector<float> a(7, 0.0f);
  CHECK_THROWS_AS(linear_score(a, model), ValidationError);
}

TEST_CASE("linear_score is linear when b = 0") {
  LinearModel model = tiny_model(16);
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> dist(-2, 2);
  for (auto& v : model.w) v = dist(gen);

  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> a1(16), a2(16), combo(16);
    const double alpha = dist(gen);
    for (int i = 0; i < 16; ++i) {
      a1[i] = static_cast<float>(dist(gen));
      a2[i] = static_cast<float>(dist(gen));
      combo[i] = static_cast<float>(alpha * a1[i] + a2[i]);
    }
    const auto s1 = linear_score(a1, model).scores;
    const auto s2 = linear_score(a2, model).scores;
    const auto sc = linear_score(combo, model).scores;
    for (int c = 0; c < 3; ++c) {
      REQUIRE(sc[c] == doctest::Approx(alpha * s1[c] + s2[c]).epsilon(1e-6));
    }
  }
}

TEST_CASE("argmax is invariant under a constant bias shift") {
  LinearModel model = tiny_model(4);
  std::mt19937 gen(29);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (auto& v : model.w) v = dist(gen);

  std::vector<float> a(4);
  for (int trial = 0; trial < 30; ++trial) {
    for (auto& v : a) v = static_cast<float>(dist(gen));
    model.b = {0, 0, 0};
    const auto base = linear_score(a, model).argmax;
    const double shift = dist(gen) * 10;
    model.b = {shift, shift, shift};
    CHECK(linear_score(a, model).argmax == base);
  }
}

TEST_CASE("handcrafted features describe a solid patch exactly") {
  const auto f = extract_handcrafted_features(solid_patch(16, 255, 0, 128));
  REQUIRE(f.size() == kHandcraftedFeatureCount);
  CHECK(f[0] == doctest::Approx(1.0));          // mean R
  CHECK(f[1] == doctest::Approx(0.0));          // mean G
  CHECK(f[2] == doctest::Approx(128.0 / 255));  // mean B
  CHECK(f[3] == doctest::Approx(0.0));          // variances vanish
  CHECK(f[4] == doctest::Approx(0.0));
  CHECK(f[5] == doctest::Approx(0.0));
  CHECK(f[6 + 7] == doctest::Approx(1.0));      // R histogram, top bin
  CHECK(f[6 + 8] == doctest::Approx(1.0));      // G histogram, bin 0
  CHECK(f[6 + 16 + 4] == doctest::Approx(1.0)); // B histogram, bin 4
  for (int i = 30; i < 34; ++i) CHECK(f[i] == doctest::Approx(0.0));
}

TEST_CASE("signature feature maps localize the signature") {
  // left half DCIS-blue, right half background
  Patch patch = solid_patch(64, 246, 244, 245);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 32; ++x) {
      std::uint8_t* p =
          patch.pixels.data() + (static_cast<std::size_t>(y) * 64 + x) * 3;
      p[0] = 80; p[1] = 80; p[2] = 200;
    }
  }
  const FeatureMaps maps = signature_feature_maps(patch, 8);
  CHECK(maps.k == 3);
  CHECK(maps.h == 8);
  const int dcis = static_cast<int>(ClassLabel::kDcis);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 4; ++x) CHECK(maps.at(dcis, y, x) == doctest::Approx(1.0));
    for (int x = 4; x < 8; ++x) CHECK(maps.at(dcis, y, x) == doctest::Approx(0.0));
  }
}

TEST_CASE("feature tables round-trip losslessly") {
  TempDir dir("features_io");
  FeatureTable table;
  table.n = 10;
  table.f = 16;
  std::mt19937 gen(31);
  std::uniform_real_distribution<float> dist(-4, 4);
  table.data.resize(160);
  for (auto& v : table.data) v = dist(gen);
  for (int i = 0; i < 10; ++i) {
    table.labels.push_back(static_cast<ClassLabel>(i % 3));
    table.patch_refs.push_back({"s1", 0, i * 64, 128, 64});
  }
  save_features(table, dir / "features.json");
  const FeatureTable loaded = load_features(dir / "features.json");
  CHECK(loaded.n == table.n);
  CHECK(loaded.f == table.f);
  CHECK(loaded.data == table.data);
  CHECK(loaded.labels == table.labels);
  CHECK(loaded.patch_refs == table.patch_refs);
}

TEST_CASE("feature payload length mismatches name both byte counts") {
  TempDir dir("features_trunc");
  FeatureTable table;
  table.n = 4;
  table.f = 4;
  table.data.assign(16, 1.0f);
  save_features(table, dir / "features.json");
  std::filesystem::resize_file(dir / "features.f32", 40);
  try {
    load_features(dir / "features.json");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("64") != std::string::npos);
    CHECK(msg.find("40") != std::string::npos);
  }
}

TEST_CASE("feature table validation") {
  FeatureTable table;
  table.n = 0;
  table.f = 4;
  CHECK_THROWS_AS(table.validate(), ValidationError);
  table.n = 1;
  table.data = {1.0f, 2.0f, 3.0f,
                std::numeric_limits<float>::quiet_NaN()};
  CHECK_THROWS_AS(table.validate(), ValidationError);
}

TEST_CASE("models round-trip including spatial weights") {
  TempDir dir("model_io");
  LinearModel model = tiny_model(4);
  model.w = {0.1, -0.2, 0.3, 0, 0, 0, 1, 2, 3, -1, -2, -3};
  model.b = {0.5, -0.5, 0.0};
  model.spatial_k = 2;
  model.w_spatial = {1, 0, 0, 0, 1, 0};
  save_model(model, dir / "model.json");
  const LinearModel loaded = load_model(dir / "model.json");
  CHECK(loaded.f == 4);
  CHECK(loaded.w == model.w);
  CHECK(loaded.b == model.b);
  CHECK(loaded.spatial_k == 2);
  CHECK(loaded.w_spatial == model.w_spatial);
}

TEST_CASE("playback backend replays stored rows and rejects unknown patches") {
  LinearModel model = tiny_model(2);
  model.w = {1, 0, 0, 0, 1, 0};

  FeatureTable features;
  features.n = 2;
  features.f = 2;
  features.data = {5.0f, 0.0f, 0.0f, 5.0f};
  features.patch_refs = {{"s", 0, 0, 0, 8}, {"s", 0, 8, 0, 8}};

  FeatureTable detect;
  detect.n = 1;
  detect.f = 1;
  detect.data = {0.75f};
  detect.patch_refs = {{"s", 0, 0, 0, 8}};

  const PlaybackBackend backend(features, model, detect);

  Patch patch = solid_patch(8, 0, 0, 0);
  patch.slide_id = "s";
  patch.x = 0;
  patch.y = 0;
  CHECK(backend.detect_prob(patch).probability == doctest::Approx(0.75));
  auto result = backend.classify_patch(patch);
  CHECK(result.probs[0] > result.probs[1]);  // feature row favors class 0
  CHECK(result.features == std::vector<float>{5.0f, 0.0f});

  patch.x = 8;
  result = backend.classify_patch(patch);
  CHECK(result.probs[1] > result.probs[0]);
  CHECK_THROWS_AS(backend.detect_prob(patch), InferenceError);

  patch.x = 999;
  CHECK_THROWS_AS(backend.classify_patch(patch), InferenceError);
}
