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

// wsicad command-line interface. Stages compose through the filesystem:
// `synth` writes slide containers, `run` writes per-slide result trees,
// `eval` scores runs against ground truth, `explain` works over feature
// tables and linear models.
//
// Exit codes: 0 ok, 2 validation/format error, 3 inference error.
// Diagnostics go to stderr as single-line JSON.

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wsicad/classify.hpp"
#include "wsicad/detect.hpp"
#include "wsicad/errors.hpp"
#include "wsicad/evaluate.hpp"
#include "wsicad/explain.hpp"
#include "wsicad/inference.hpp"
#include "wsicad/parallel.hpp"
#include "wsicad/pipeline.hpp"
#include "wsicad/png_io.hpp"
#include "wsicad/pyramid.hpp"
#include "wsicad/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitInference = 3;

void print_error(const std::string& kind, const std::string& message) {
  json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
}

/// Slide directories under root: root itself when it holds slide.json,
/// else every child directory that does, sorted by name.
std::vector<fs::path> find_slide_dirs(const fs::path& root) {
  if (fs::exists(root / "slide.json")) return {root};
  std::vector<fs::path> dirs;
  if (!fs::is_directory(root)) {
    throw wsicad::FormatError("not a directory: " + root.string());
  }
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "slide.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw wsicad::FormatError("no slide containers under " + root.string());
  }
  return dirs;
}

wsicad::PipelineConfig load_config(const std::string& config_path,
                                   std::uint64_t seed, bool seed_set) {
  wsicad::PipelineConfig config;
  if (!config_path.empty()) {
    config = wsicad::PipelineConfig::from_json_file(config_path);
  }
  if (seed_set) config.seed = seed;
  config.validate();
  return config;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  const wsicad::SynthSpec spec =
      wsicad::synth_spec_from_json_file(spec_path);
  wsicad::generate(spec, out_dir);
  std::cout << spec.slide_id << ": written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_run(const std::string& slides_root, const std::string& config_path,
            const std::string& out_dir, std::uint64_t seed, bool seed_set,
            int jobs) {
  const wsicad::PipelineConfig config =
      load_config(config_path, seed, seed_set);
  const std::vector<fs::path> slide_dirs = find_slide_dirs(slides_root);
  const bool single = slide_dirs.size() == 1 && slide_dirs.front() == slides_root;

  fs::create_directories(out_dir);
  config.save(fs::path(out_dir) / "run_config.json");
  const auto backend = wsicad::make_backend(config.backend);

  // one slide: parallelize inside the pipeline; many: across slides
  const int inner_jobs = single ? jobs : 1;
  std::vector<std::string> lines(slide_dirs.size());
  wsicad::parallel_for(slide_dirs.size(), single ? 1 : jobs, [&](std::size_t i) {
    const wsicad::SlideReader slide(slide_dirs[i]);
    const wsicad::SlideRunResult result =
        wsicad::run_slide(slide, *backend, config, inner_jobs);
    const fs::path dest =
        single ? fs::path(out_dir)
               : fs::path(out_dir) / slide.metadata().slide_id;
    wsicad::save_run(result, dest);
    lines[i] = slide.metadata().slide_id + ": " +
               std::string(wsicad::to_string(result.assessment.label3)) + " (" +
               std::to_string(result.regions.size()) + " regions)";
  });
  for (const std::string& line : lines) std::cout << line << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& runs_dir, const std::string& truth_dir,
             const std::string& level_name, const std::string& scheme_name,
             const std::string& out_path) {
  const wsicad::EvalLevel level = wsicad::eval_level_from_string(level_name);
  const wsicad::EvalScheme scheme =
      wsicad::eval_scheme_from_string(scheme_name);

  const std::vector<fs::path> slide_dirs = find_slide_dirs(truth_dir);
  std::map<std::string, wsicad::ClassLabel> predictions;
  std::map<std::string, wsicad::ClassLabel> truth_labels;

  // run directories must match the truth slide set by id
  for (const fs::path& slide_dir : slide_dirs) {
    const wsicad::SlideReader slide(slide_dir);
    const std::string& id = slide.metadata().slide_id;
    const fs::path run_dir = fs::path(runs_dir) / id;
    if (!fs::exists(run_dir / "assessment.json")) {
      throw wsicad::ValidationError("no run output for slide \"" + id +
                                    "\" under " + runs_dir);
    }
    const wsicad::GroundTruth truth =
        wsicad::load_truth(slide_dir / "truth.json");

    if (level == wsicad::EvalLevel::kSlide) {
      truth_labels[id] = truth.slide_label;
      predictions[id] =
          wsicad::load_assessment(run_dir / "assessment.json").label3;
      continue;
    }

    const wsicad::Heatmap heatmap = wsicad::load_heatmap(run_dir);
    const auto regions = wsicad::load_regions(run_dir / "regions.json");
    const auto calls = wsicad::load_calls(run_dir / "calls.json");
    const auto run_config = wsicad::PipelineConfig::from_json_file(
        fs::path(runs_dir) / "run_config.json");

    if (level == wsicad::EvalLevel::kRegion) {
      for (std::size_t i = 0; i < regions.size(); ++i) {
        const std::string key = id + "/" + std::to_string(regions[i].region_id);
        truth_labels[key] = wsicad::region_truth_label(
            regions[i], heatmap, slide.metadata(), truth);
        predictions[key] = calls[i].predicted;
      }
    } else {
      for (const wsicad::LesionCall& call : calls) {
        for (std::size_t p = 0; p < call.patches.size(); ++p) {
          const std::string key = id + "/" + std::to_string(call.region_id) +
                                  "/" + std::to_string(p);
          truth_labels[key] = wsicad::patch_truth_label(
              call.patches[p], run_config.classification.patch_size,
              slide.metadata(), truth);
          predictions[key] = call.patches[p].argmax;
        }
      }
    }
  }

  const wsicad::MetricsReport report =
      wsicad::evaluate_run(predictions, truth_labels, level, scheme);
  wsicad::save_metrics(report, out_path);
  std::cout << wsicad::to_string(level) << "/" << wsicad::to_string(scheme)
            << " accuracy " << wsicad::round3(report.overall_accuracy) << " ("
            << report.correct << "/" << report.total << ")\n";
  return kExitOk;
}

int cmd_explain_stump(const std::string& features_path,
                      const std::string& target, int k, int jobs,
                      const std::string& out_path) {
  const wsicad::FeatureTable table = wsicad::load_features(features_path);
  const wsicad::FeatureRanking ranking = wsicad::rank_features(
      table, wsicad::class_label_from_string(target), k, jobs);
  wsicad::save_ranking(ranking, out_path);
  std::cout << "ranked " << ranking.ranked.size() << " features for " << target
            << " -> " << out_path << "\n";
  return kExitOk;
}

int cmd_explain_cam(const std::string& model_path,
                    const std::string& maps_path,
                    const std::string& patch_png, double alpha,
                    const std::string& out_dir) {
  const wsicad::LinearModel model = wsicad::load_model(model_path);
  fs::create_directories(out_dir);

  wsicad::FeatureMaps maps;
  wsicad::Patch patch;
  bool have_patch = false;
  if (!maps_path.empty()) {
    // K x H x W maps stored as a feature table: n = K rows, f = H*W, with
    // square H = W
    const wsicad::FeatureTable table = wsicad::load_features(maps_path);
    const int side = static_cast<int>(std::lround(std::sqrt(table.f)));
    if (side * side != table.f) {
      throw wsicad::ValidationError(
          "cam: maps table f must be a perfect square (H*W)");
    }
    maps.k = table.n;
    maps.h = side;
    maps.w = side;
    maps.data = table.data;
  } else if (!patch_png.empty()) {
    const wsicad::RgbImage img = wsicad::read_png(patch_png);
    if (img.width != img.height) {
      throw wsicad::ValidationError("cam: patch PNG must be square");
    }
    patch.size = img.width;
    patch.pixels = img.pixels;
    have_patch = true;
    maps = wsicad::signature_feature_maps(patch);
  } else {
    throw wsicad::ValidationError("cam: need --maps or --patch");
  }

  const int upsample = have_patch ? patch.size : 256;
  for (wsicad::ClassLabel label : wsicad::kAllClasses) {
    const wsicad::CamMap cam =
        wsicad::compute_cam(maps, model, label, upsample);
    const std::string name(wsicad::to_string(label));
    wsicad::write_png(fs::path(out_dir) / ("cam_" + name + ".png"),
                      wsicad::render_cam(cam));
    if (have_patch) {
      wsicad::write_png(fs::path(out_dir) / ("overlay_" + name + ".png"),
                        wsicad::render_overlay(cam, patch, alpha));
    }
  }
  std::cout << "CAM maps written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_explain_topact(const std::string& features_path, int feature_index,
                       int m, const std::string& slides_root,
                       const std::string& out_dir) {
  const wsicad::FeatureTable table = wsicad::load_features(features_path);
  const std::vector<int> rows =
      wsicad::top_activations(table, feature_index, m);
  fs::create_directories(out_dir);

  if (table.patch_refs.empty()) {
    throw wsicad::ValidationError(
        "topact: feature table has no patch_refs to build a gallery from");
  }
  std::map<std::string, std::unique_ptr<wsicad::SlideReader>> readers;
  for (std::size_t rank = 0; rank < rows.size(); ++rank) {
    const wsicad::PatchRef& ref =
        table.patch_refs[static_cast<std::size_t>(rows[rank])];
    auto& reader = readers[ref.slide_id];
    if (!reader) {
      reader = std::make_unique<wsicad::SlideReader>(
          fs::path(slides_root) / ref.slide_id);
    }
    const wsicad::Patch patch =
        reader->read_patch(ref.level, ref.x, ref.y, ref.size);
    wsicad::RgbImage img;
    img.width = patch.size;
    img.height = patch.size;
    img.pixels = patch.pixels;
    wsicad::write_png(fs::path(out_dir) / ("rank_" + std::to_string(rank) +
                                           "_row_" + std::to_string(rows[rank]) +
                                           ".png"),
                      img);
  }
  std::cout << "gallery of " << rows.size() << " patches in " << out_dir
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical multi-view CAD pipeline for whole-slide images"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic slide");
  std::string synth_spec, synth_out;
  synth->add_option("--spec", synth_spec, "Synth spec JSON")->required();
  synth->add_option("--out", synth_out, "Output container directory")->required();

  // run
  auto* run = app.add_subcommand("run", "Run the pipeline on slides");
  std::string run_slides, run_config, run_out;
  std::uint64_t run_seed = 0;
  int run_jobs = 1;
  run->add_option("slides", run_slides,
                  "Slide container dir, or a directory of containers")
      ->required();
  run->add_option("--config", run_config, "Pipeline config JSON");
  run->add_option("--out", run_out, "Output directory")->required();
  auto* seed_opt = run->add_option("--seed", run_seed, "Sampling seed");
  run->add_option("--jobs", run_jobs, "Worker threads")
      ->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "Score runs against ground truth");
  std::string eval_runs, eval_truth, eval_level = "slide",
              eval_scheme = "three_class", eval_out = "metrics.json";
  eval->add_option("--runs", eval_runs, "Directory of run outputs")->required();
  eval->add_option("--truth", eval_truth,
                   "Directory of containers with truth.json")
      ->required();
  eval->add_option("--level", eval_level, "patch|region|slide");
  eval->add_option("--scheme", eval_scheme, "binary|three_class");
  eval->add_option("--out", eval_out, "metrics.json path");

  // explain
  auto* explain = app.add_subcommand("explain", "Interpretability toolkit");
  explain->require_subcommand(1);

  auto* stump = explain->add_subcommand("stump", "Rank discriminant features");
  std::string stump_features, stump_target = "non_carcinoma",
              stump_out = "ranking.json";
  int stump_k = 100, stump_jobs = 1;
  stump->add_option("--features", stump_features, "features.json")->required();
  stump->add_option("--target", stump_target, "Target class");
  stump->add_option("--k", stump_k, "Features to keep");
  stump->add_option("--jobs", stump_jobs, "Worker threads")
      ->check(CLI::PositiveNumber);
  stump->add_option("--out", stump_out, "ranking.json path");

  auto* cam = explain->add_subcommand("cam", "Class activation maps");
  std::string cam_model, cam_maps, cam_patch, cam_out = "cam";
  double cam_alpha = 0.5;
  cam->add_option("--model", cam_model, "model.json")->required();
  cam->add_option("--maps", cam_maps,
                  "Feature maps as a features.json table (rows = channels, "
                  "f = H*W)");
  cam->add_option("--patch", cam_patch,
                  "Square patch PNG; maps come from the signature extractor");
  cam->add_option("--alpha", cam_alpha, "Overlay blend weight");
  cam->add_option("--out", cam_out, "Output directory");

  auto* topact = explain->add_subcommand("topact", "Top-activating patches");
  std::string topact_features, topact_slides, topact_out = "gallery";
  int topact_index = 0, topact_m = 8;
  topact->add_option("--features", topact_features, "features.json")
      ->required();
  topact->add_option("--feature-index", topact_index, "Channel to inspect")
      ->required();
  topact->add_option("--m", topact_m, "Gallery size");
  topact->add_option("--slides", topact_slides,
                     "Root directory of slide containers")
      ->required();
  topact->add_option("--out", topact_out, "Gallery directory");

  // print-config
  auto* print_config =
      app.add_subcommand("print-config", "Print the resolved pipeline config");
  std::string pc_config;
  print_config->add_option("--config", pc_config,
                           "Config JSON to load before printing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    print_error("validation", e.what());
    return kExitValidation;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_spec, synth_out);
    if (run->parsed()) {
      return cmd_run(run_slides, run_config, run_out, run_seed,
                     seed_opt->count() > 0, run_jobs);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_runs, eval_truth, eval_level, eval_scheme, eval_out);
    }
    if (explain->parsed()) {
      if (stump->parsed()) {
        return cmd_explain_stump(stump_features, stump_target, stump_k,
                                 stump_jobs, stump_out);
      }
      if (cam->parsed()) {
        return cmd_explain_cam(cam_model, cam_maps, cam_patch, cam_alpha,
                               cam_out);
      }
      if (topact->parsed()) {
        return cmd_explain_topact(topact_features, topact_index, topact_m,
                                  topact_slides, topact_out);
      }
    }
    if (print_config->parsed()) {
      wsicad::PipelineConfig config;
      if (!pc_config.empty()) {
        config = wsicad::PipelineConfig::from_json_file(pc_config);
      }
      std::cout << config.to_json().dump(2) << "\n";
      return kExitOk;
    }
  } catch (const wsicad::InferenceError& e) {
    print_error("inference", e.what());
    return kExitInference;
  } catch (const wsicad::ValidationError& e) {
    print_error("validation", e.what());
    return kExitValidation;
  } catch (const wsicad::FormatError& e) {
    print_error("format", e.what());
    return kExitValidation;
  } catch (const std::out_of_range& e) {
    print_error("validation", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kExitValidation;
  }
  return kExitOk;
}
