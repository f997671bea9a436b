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

#include "wsicad/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "wsicad/errors.hpp"
#include "wsicad/parallel.hpp"

namespace wsicad {

namespace {
using nlohmann::json;
}

void PipelineConfig::validate() const {
  if (backend.kind != "synthetic" && backend.kind != "linear" &&
      backend.kind != "features") {
    throw ValidationError("config: backend.kind must be synthetic, linear, "
                          "or features; got \"" +
                          backend.kind + "\"");
  }
  if (backend.kind == "linear" && backend.model_path.empty()) {
    throw ValidationError("config: linear backend needs backend.model_path");
  }
  if (backend.kind == "features") {
    if (backend.model_path.empty() || backend.features_path.empty() ||
        backend.detect_features_path.empty()) {
      throw ValidationError("config: features backend needs model_path, "
                            "features_path, and detect_features_path");
    }
  }

  if (!(detection.level_mpp_target > 0.0)) {
    throw ValidationError("config: detection.level_mpp_target must be positive");
  }
  if (detection.patch_size < 1) {
    throw ValidationError("config: detection.patch_size must be positive");
  }
  if (detection.stride < 1 || detection.stride > detection.patch_size) {
    throw ValidationError("config: detection.stride must be in [1, patch_size]");
  }
  if (!(detection.threshold > 0.0 && detection.threshold < 1.0)) {
    throw ValidationError("config: detection.threshold must be in (0,1)");
  }
  if (detection.connectivity != 4 && detection.connectivity != 8) {
    throw ValidationError("config: detection.connectivity must be 4 or 8");
  }
  if (!(detection.min_size_mm > 0.0)) {
    throw ValidationError("config: detection.min_size_mm must be positive");
  }

  if (!(classification.level_mpp_target > 0.0)) {
    throw ValidationError(
        "config: classification.level_mpp_target must be positive");
  }
  SamplingConfig sampling;
  sampling.patch_size = classification.patch_size;
  sampling.n_min = classification.n_min;
  sampling.n_max = classification.n_max;
  sampling.density = classification.density;
  sampling.overlap_frac = classification.overlap_frac;
  sampling.validate();
}

json PipelineConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["backend"] = {{"kind", backend.kind},
                  {"model_path", backend.model_path},
                  {"features_path", backend.features_path},
                  {"detect_features_path", backend.detect_features_path}};
  j["detection"] = {{"level_mpp_target", detection.level_mpp_target},
                    {"patch_size", detection.patch_size},
                    {"stride", detection.stride},
                    {"threshold", detection.threshold},
                    {"connectivity", detection.connectivity},
                    {"min_size_mm", detection.min_size_mm},
                    {"tissue_filter", detection.tissue_filter}};
  j["classification"] = {{"level_mpp_target", classification.level_mpp_target},
                         {"patch_size", classification.patch_size},
                         {"n_min", classification.n_min},
                         {"n_max", classification.n_max},
                         {"density", classification.density},
                         {"overlap_frac", classification.overlap_frac}};
  return j;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig config;  // defaults; file overrides field by field
  try {
    config.seed = j.value("seed", config.seed);
    if (j.contains("backend")) {
      const auto& jb = j.at("backend");
      config.backend.kind = jb.value("kind", config.backend.kind);
      config.backend.model_path = jb.value("model_path", std::string());
      config.backend.features_path = jb.value("features_path", std::string());
      config.backend.detect_features_path =
          jb.value("detect_features_path", std::string());
    }
    if (j.contains("detection")) {
      const auto& jd = j.at("detection");
      auto& d = config.detection;
      d.level_mpp_target = jd.value("level_mpp_target", d.level_mpp_target);
      d.patch_size = jd.value("patch_size", d.patch_size);
      d.stride = jd.value("stride", d.stride);
      d.threshold = jd.value("threshold", d.threshold);
      d.connectivity = jd.value("connectivity", d.connectivity);
      d.min_size_mm = jd.value("min_size_mm", d.min_size_mm);
      d.tissue_filter = jd.value("tissue_filter", d.tissue_filter);
    }
    if (j.contains("classification")) {
      const auto& jc = j.at("classification");
      auto& c = config.classification;
      c.level_mpp_target = jc.value("level_mpp_target", c.level_mpp_target);
      c.patch_size = jc.value("patch_size", c.patch_size);
      c.n_min = jc.value("n_min", c.n_min);
      c.n_max = jc.value("n_max", c.n_max);
      c.density = jc.value("density", c.density);
      c.overlap_frac = jc.value("overlap_frac", c.overlap_frac);
    }
  } catch (const json::exception& e) {
    throw FormatError("config field error: " + std::string(e.what()));
  }
  config.validate();
  return config;
}

PipelineConfig PipelineConfig::from_json_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt config file: " + std::string(e.what()));
  }
  return from_json(j);
}

void PipelineConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  out << to_json().dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

int pick_level(const SlideMetadata& slide, double mpp_target) {
  int best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (const LevelInfo& level : slide.levels) {
    const auto [mx, my] = slide.mpp_at_level(level.index);
    const double distance = std::abs((mx + my) / 2.0 - mpp_target);
    if (distance < best_distance) {  // strict: ties keep the finer level
      best_distance = distance;
      best = level.index;
    }
  }
  return best;
}

std::unique_ptr<InferenceBackend> make_backend(const BackendConfig& config) {
  if (config.kind == "synthetic") {
    return std::make_unique<SyntheticBackend>();
  }
  if (config.kind == "linear") {
    return std::make_unique<LinearBackend>(load_model(config.model_path));
  }
  if (config.kind == "features") {
    return std::make_unique<PlaybackBackend>(
        load_features(config.features_path), load_model(config.model_path),
        load_features(config.detect_features_path));
  }
  throw ValidationError("unknown backend kind: \"" + config.kind + "\"");
}

SlideRunResult run_slide(const SlideReader& slide,
                         const InferenceBackend& backend,
                         const PipelineConfig& config, int jobs) {
  config.validate();
  SlideRunResult result;

  result.detection_level =
      pick_level(slide.metadata(), config.detection.level_mpp_target);
  ScanConfig scan_config;
  scan_config.level = result.detection_level;
  scan_config.patch_size = config.detection.patch_size;
  scan_config.stride = config.detection.stride;
  scan_config.tissue_filter = config.detection.tissue_filter;
  scan_config.jobs = jobs;
  result.heatmap = scan(slide, backend, scan_config);

  const std::vector<CellSet> components = extract_components(
      result.heatmap, config.detection.threshold, config.detection.connectivity);
  result.regions = propose_regions(components, result.heatmap,
                                   slide.metadata(), config.detection.min_size_mm);

  result.classification_level =
      pick_level(slide.metadata(), config.classification.level_mpp_target);
  SamplingConfig sampling;
  sampling.level = result.classification_level;
  sampling.patch_size = config.classification.patch_size;
  sampling.n_min = config.classification.n_min;
  sampling.n_max = config.classification.n_max;
  sampling.density = config.classification.density;
  sampling.overlap_frac = config.classification.overlap_frac;
  sampling.seed = config.seed;

  result.calls.resize(result.regions.size());
  parallel_for(result.regions.size(), jobs, [&](std::size_t i) {
    result.calls[i] = classify_region(result.regions[i], result.heatmap, slide,
                                      backend, sampling);
  });

  result.assessment = assess_slide(slide.metadata().slide_id, result.calls);
  return result;
}

void save_run(const SlideRunResult& result,
              const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  save_heatmap(result.heatmap, out_dir);
  save_regions(result.regions, out_dir / "regions.json");
  save_calls(result.calls, out_dir / "calls.json");
  save_assessment(result.assessment, out_dir / "assessment.json");
}

}  // namespace wsicad
