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

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "wsicad/detect.hpp"
#include "wsicad/explain.hpp"
#include "wsicad/inference.hpp"
#include "wsicad/pipeline.hpp"
#include "wsicad/synthgen.hpp"

namespace {

using namespace wsicad;

/// One shared slide container for the scan benchmarks.
const std::filesystem::path& bench_slide_dir() {
  static const std::filesystem::path dir = [] {
    const auto path =
        std::filesystem::temp_directory_path() / "wsicad_bench_slide";
    SynthSpec spec;
    spec.seed = 99;
    spec.slide_id = "bench";
    spec.width = 2048;
    spec.height = 2048;
    spec.calibration = {1.0, 1.0};
    spec.downsamples = {1, 2, 4};
    spec.lesions.push_back(
        {LesionShape::kEllipse, ClassLabel::kIdc, 700, 700, 500, 400, 0.0});
    spec.lesions.push_back(
        {LesionShape::kBlob, ClassLabel::kDcis, 1600, 1500, 300, 300, 0.2});
    generate(spec, path);
    return path;
  }();
  return dir;
}

void BM_Scan(benchmark::State& state) {
  const SlideReader slide(bench_slide_dir());
  const SyntheticBackend backend;
  ScanConfig config;
  config.patch_size = 256;
  config.stride = 256;
  config.jobs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(scan(slide, backend, config));
  }
}
BENCHMARK(BM_Scan)->Arg(1)->Arg(4);

void BM_ExtractComponents(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Heatmap heatmap;
  heatmap.rows = side;
  heatmap.cols = side;
  heatmap.patch_size = 256;
  heatmap.stride = 256;
  heatmap.grid.resize(static_cast<std::size_t>(side) * side);
  std::mt19937 gen(1);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : heatmap.grid) v = dist(gen);
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_components(heatmap, 0.5, 8));
  }
}
BENCHMARK(BM_ExtractComponents)->Arg(16)->Arg(64)->Arg(256);

void BM_StumpRanking(benchmark::State& state) {
  FeatureTable table;
  table.n = 256;
  table.f = static_cast<int>(state.range(0));
  table.data.resize(static_cast<std::size_t>(table.n) * table.f);
  std::mt19937 gen(2);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (auto& v : table.data) v = dist(gen);
  for (int i = 0; i < table.n; ++i) {
    table.labels.push_back(static_cast<ClassLabel>(gen() % 3));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rank_features(table, ClassLabel::kDcis, 100, 1));
  }
}
BENCHMARK(BM_StumpRanking)->Arg(128)->Arg(2048);

void BM_ComputeCam(benchmark::State& state) {
  FeatureMaps maps;
  maps.k = static_cast<int>(state.range(0));
  maps.h = 8;
  maps.w = 8;
  maps.data.resize(static_cast<std::size_t>(maps.k) * 64);
  std::mt19937 gen(3);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : maps.data) v = dist(gen);

  LinearModel model;
  model.class_names = {"non_carcinoma", "dcis", "idc"};
  model.f = maps.k;
  model.w.resize(static_cast<std::size_t>(maps.k) * 3);
  std::uniform_real_distribution<double> wd(-0.1, 0.1);
  for (auto& v : model.w) v = wd(gen);
  model.b = {0, 0, 0};

  for (auto _ : state) {
    benchmark::DoNotOptimize(
        compute_cam(maps, model, ClassLabel::kIdc, 512));
  }
}
BENCHMARK(BM_ComputeCam)->Arg(3)->Arg(2048);

}  // namespace

BENCHMARK_MAIN();
