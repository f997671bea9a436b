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

#include "wsicad/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "wsicad/errors.hpp"
#include "wsicad/geometry.hpp"
#include "wsicad/rng.hpp"

namespace wsicad {

namespace {
using nlohmann::json;
}

SlideAssessment assess_slide(const std::string& slide_id,
                             std::span<const LesionCall> calls) {
  SlideAssessment assessment;
  assessment.slide_id = slide_id;
  assessment.n_regions = static_cast<int>(calls.size());
  if (calls.empty()) {
    assessment.label3 = ClassLabel::kNonCarcinoma;
  } else {
    std::vector<ClassLabel> predictions;
    predictions.reserve(calls.size());
    for (const LesionCall& call : calls) predictions.push_back(call.predicted);
    assessment.label3 = max_severity(predictions);
  }
  assessment.label2 = to_binary(assessment.label3);
  return assessment;
}

void save_assessment(const SlideAssessment& assessment,
                     const std::filesystem::path& path) {
  json j;
  j["slide_id"] = assessment.slide_id;
  j["label3"] = to_string(assessment.label3);
  j["label2"] = to_string(assessment.label2);
  j["n_regions"] = assessment.n_regions;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

SlideAssessment load_assessment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing assessment file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt assessment file: " + std::string(e.what()));
  }
  SlideAssessment assessment;
  try {
    assessment.slide_id = j.at("slide_id").get<std::string>();
    assessment.label3 =
        class_label_from_string(j.at("label3").get<std::string>());
    assessment.n_regions = j.at("n_regions").get<int>();
  } catch (const json::exception& e) {
    throw FormatError("assessment field error: " + std::string(e.what()));
  }
  assessment.label2 = to_binary(assessment.label3);
  return assessment;
}

double accuracy(std::int64_t correct, std::int64_t total) {
  if (total == 0) throw ValidationError("accuracy undefined for total = 0");
  if (correct < 0 || correct > total) {
    throw ValidationError("accuracy: need 0 <= correct <= total");
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

double round3(double value) {
  return std::round(value * 1000.0) / 1000.0;
}

double cohen_kappa(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw ValidationError("cohen_kappa: sequences differ in length (" +
                          std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ValidationError("cohen_kappa: empty sequences");

  const double n = static_cast<double>(a.size());
  std::unordered_map<int, std::int64_t> marg_a, marg_b;
  std::int64_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) ++agree;
    ++marg_a[a[i]];
    ++marg_b[b[i]];
  }
  const double p_o = static_cast<double>(agree) / n;
  double p_e = 0.0;
  for (const auto& [value, count_a] : marg_a) {
    const auto it = marg_b.find(value);
    if (it != marg_b.end()) {
      p_e += (static_cast<double>(count_a) / n) *
             (static_cast<double>(it->second) / n);
    }
  }
  const double denom = 1.0 - p_e;
  if (denom == 0.0) return 1.0;  // both raters constant and identical
  return (p_o - p_e) / denom;
}

FoldPlan stratified_kfold(const std::map<std::string, ClassLabel>& slide_labels,
                          int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("stratified_kfold: k must be at least 2");
  if (static_cast<std::size_t>(k) > slide_labels.size()) {
    throw ValidationError("stratified_kfold: k = " + std::to_string(k) +
                          " exceeds " + std::to_string(slide_labels.size()) +
                          " slides");
  }

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(static_cast<std::size_t>(k));

  SeededRng rng(seed);
  for (ClassLabel cls : kAllClasses) {
    std::vector<std::string> members;
    for (const auto& [slide_id, label] : slide_labels) {  // map: sorted ids
      if (label == cls) members.push_back(slide_id);
    }
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i) {
      plan.folds[i % static_cast<std::size_t>(k)].push_back(
          std::move(members[i]));
    }
  }
  return plan;
}

void save_folds(const FoldPlan& plan, const std::filesystem::path& path) {
  json j;
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["folds"] = plan.folds;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

EvalLevel eval_level_from_string(std::string_view s) {
  if (s == "patch") return EvalLevel::kPatch;
  if (s == "region") return EvalLevel::kRegion;
  if (s == "slide") return EvalLevel::kSlide;
  throw ValidationError("unknown evaluation level: \"" + std::string(s) +
                        "\" (expected patch|region|slide)");
}

EvalScheme eval_scheme_from_string(std::string_view s) {
  if (s == "binary") return EvalScheme::kBinary;
  if (s == "three_class") return EvalScheme::kThreeClass;
  throw ValidationError("unknown evaluation scheme: \"" + std::string(s) +
                        "\" (expected binary|three_class)");
}

std::string_view to_string(EvalLevel level) {
  switch (level) {
    case EvalLevel::kPatch:
      return "patch";
    case EvalLevel::kRegion:
      return "region";
    case EvalLevel::kSlide:
      return "slide";
  }
  throw ValidationError("invalid EvalLevel");
}

std::string_view to_string(EvalScheme scheme) {
  return scheme == EvalScheme::kBinary ? "binary" : "three_class";
}

MetricsReport evaluate_run(const std::map<std::string, ClassLabel>& predictions,
                           const std::map<std::string, ClassLabel>& truth,
                           EvalLevel level, EvalScheme scheme) {
  std::string missing;
  for (const auto& [key, label] : truth) {
    if (!predictions.contains(key)) missing += " " + key;
  }
  for (const auto& [key, label] : predictions) {
    if (!truth.contains(key)) missing += " " + key;
  }
  if (!missing.empty()) {
    throw ValidationError("evaluate_run: keys present on one side only:" +
                          missing);
  }
  if (predictions.empty()) {
    throw ValidationError("evaluate_run: nothing to score");
  }

  MetricsReport report;
  report.level = level;
  report.scheme = scheme;
  const int c = scheme == EvalScheme::kBinary ? 2 : kNumClasses;
  if (scheme == EvalScheme::kBinary) {
    report.class_names = {"non_carcinoma", "carcinoma"};
  } else {
    report.class_names = {"non_carcinoma", "dcis", "idc"};
  }
  report.per_class_correct.assign(static_cast<std::size_t>(c), 0);
  report.per_class_total.assign(static_cast<std::size_t>(c), 0);
  report.confusion.assign(static_cast<std::size_t>(c),
                          std::vector<std::int64_t>(static_cast<std::size_t>(c), 0));

  auto project = [scheme](ClassLabel label) {
    return scheme == EvalScheme::kBinary
               ? static_cast<std::size_t>(to_binary(label))
               : static_cast<std::size_t>(label);
  };

  for (const auto& [key, predicted] : predictions) {
    const std::size_t t = project(truth.at(key));
    const std::size_t p = project(predicted);
    ++report.per_class_total[t];
    ++report.confusion[t][p];
    if (t == p) {
      ++report.per_class_correct[t];
      ++report.correct;
    }
    ++report.total;
  }
  report.overall_accuracy = accuracy(report.correct, report.total);
  return report;
}

void save_metrics(const MetricsReport& report,
                  const std::filesystem::path& path) {
  json per_class = json::object();
  for (std::size_t i = 0; i < report.class_names.size(); ++i) {
    per_class[report.class_names[i]] = {
        {"correct", report.per_class_correct[i]},
        {"total", report.per_class_total[i]}};
  }
  json j;
  j["level"] = to_string(report.level);
  j["scheme"] = to_string(report.scheme);
  j["per_class"] = std::move(per_class);
  j["overall"] = {{"correct", report.correct},
                  {"total", report.total},
                  {"accuracy", round3(report.overall_accuracy)}};
  j["confusion"] = report.confusion;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

ClassLabel region_truth_label(const RegionProposal& region,
                              const Heatmap& heatmap,
                              const SlideMetadata& slide,
                              const GroundTruth& truth) {
  const LevelInfo& level = slide.level(heatmap.level);
  std::vector<Rect> rects = region_footprint_rects(region.cells, heatmap, level);
  for (Rect& r : rects) {  // to level 0
    r.x0 *= level.downsample;
    r.y0 *= level.downsample;
    r.x1 *= level.downsample;
    r.y1 *= level.downsample;
  }
  const RectRowIndex footprint(rects);
  const std::int64_t width0 = slide.width0;

  std::int64_t best_overlap = 0;
  ClassLabel best_label = ClassLabel::kNonCarcinoma;
  for (const LesionTruth& lesion : truth.lesions) {
    std::int64_t overlap = 0;
    for (const auto& [start, len] : lesion.mask.runs) {
      // split runs at row boundaries; generator runs stay within a row
      std::int64_t pos = start;
      std::int64_t remaining = len;
      while (remaining > 0) {
        const std::int64_t row = pos / width0;
        const std::int64_t col = pos % width0;
        const std::int64_t in_row = std::min(remaining, width0 - col);
        overlap += footprint.intersection_area(
            {col, row, col + in_row, row + 1});
        pos += in_row;
        remaining -= in_row;
      }
    }
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best_label = lesion.label;
    }
  }
  return best_label;
}

ClassLabel patch_truth_label(const PatchRecord& record, int patch_size,
                             const SlideMetadata& slide,
                             const GroundTruth& truth) {
  const LevelInfo& level = slide.level(record.level);
  const std::int64_t cx =
      record.x * level.downsample +
      (static_cast<std::int64_t>(patch_size) * level.downsample) / 2;
  const std::int64_t cy =
      record.y * level.downsample +
      (static_cast<std::int64_t>(patch_size) * level.downsample) / 2;
  if (cx < 0 || cy < 0 || cx >= slide.width0 || cy >= slide.height0) {
    return ClassLabel::kNonCarcinoma;
  }
  const std::int64_t linear = cy * slide.width0 + cx;
  for (const LesionTruth& lesion : truth.lesions) {
    if (lesion.mask.contains(linear)) return lesion.label;
  }
  return ClassLabel::kNonCarcinoma;
}

}  // namespace wsicad
