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

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wsicad/classify.hpp"
#include "wsicad/labels.hpp"
#include "wsicad/synthgen.hpp"

namespace wsicad {

struct SlideAssessment {
  std::string slide_id;
  ClassLabel label3 = ClassLabel::kNonCarcinoma;
  BinaryLabel label2 = BinaryLabel::kNonCarcinoma;
  int n_regions = 0;
};

/// Slide label = severity max over region predictions; a slide with no
/// proposed regions is NonCarcinoma.
SlideAssessment assess_slide(const std::string& slide_id,
                             std::span<const LesionCall> calls);

void save_assessment(const SlideAssessment& assessment,
                     const std::filesystem::path& path);
SlideAssessment load_assessment(const std::filesystem::path& path);

/// correct / total. Throws ValidationError when total == 0 (undefined) or
/// counts are inconsistent.
double accuracy(std::int64_t correct, std::int64_t total);

/// Report rounding: half-up to 3 decimals.
double round3(double value);

/// Cohen's kappa over two equal-length label sequences. The degenerate
/// case p_e == 1 (both raters constant and identical) is defined as 1.0.
double cohen_kappa(std::span<const int> a, std::span<const int> b);

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> folds;
};

/// Within each class, slides are shuffled by a seeded RNG and dealt
/// round-robin, so per-class fold sizes differ by at most 1.
FoldPlan stratified_kfold(const std::map<std::string, ClassLabel>& slide_labels,
                          int k, std::uint64_t seed);

void save_folds(const FoldPlan& plan, const std::filesystem::path& path);

enum class EvalLevel { kPatch, kRegion, kSlide };
enum class EvalScheme { kBinary, kThreeClass };

EvalLevel eval_level_from_string(std::string_view s);
EvalScheme eval_scheme_from_string(std::string_view s);
std::string_view to_string(EvalLevel level);
std::string_view to_string(EvalScheme scheme);

struct MetricsReport {
  EvalLevel level = EvalLevel::kSlide;
  EvalScheme scheme = EvalScheme::kThreeClass;
  std::vector<std::string> class_names;        // C entries, class order
  std::vector<std::int64_t> per_class_correct;  // C
  std::vector<std::int64_t> per_class_total;    // C
  std::int64_t correct = 0;
  std::int64_t total = 0;
  double overall_accuracy = 0.0;                      // correct / total
  std::vector<std::vector<std::int64_t>> confusion;  // [truth][predicted]
};

/// Scores predictions against ground truth over identically-keyed maps.
/// Binary scheme projects both sides through to_binary first. A key
/// mismatch throws ValidationError listing the missing keys.
MetricsReport evaluate_run(const std::map<std::string, ClassLabel>& predictions,
                           const std::map<std::string, ClassLabel>& truth,
                           EvalLevel level, EvalScheme scheme);

void save_metrics(const MetricsReport& report,
                  const std::filesystem::path& path);

/// Ground-truth class of a proposal: the lesion whose mask overlaps the
/// proposal footprint by the most pixels (level 0); ties go to the earlier
/// lesion, no overlap means NonCarcinoma. Mirrors the region labeling of
/// all proposals, false alarms included.
ClassLabel region_truth_label(const RegionProposal& region,
                              const Heatmap& heatmap,
                              const SlideMetadata& slide,
                              const GroundTruth& truth);

/// Ground-truth class of a patch: the class of the lesion mask containing
/// the patch center at level 0, else NonCarcinoma.
ClassLabel patch_truth_label(const PatchRecord& record, int patch_size,
                             const SlideMetadata& slide,
                             const GroundTruth& truth);

}  // namespace wsicad
