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

#include <array>
#include <span>
#include <string>
#include <string_view>

namespace wsicad {

/// Lesion classes, ordered by clinical severity. The integer order is the
/// severity order, so slide aggregation is a plain max.
enum class ClassLabel : int {
  kNonCarcinoma = 0,
  kDcis = 1,
  kIdc = 2,
};

inline constexpr int kNumClasses = 3;
inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::kNonCarcinoma, ClassLabel::kDcis, ClassLabel::kIdc};

/// Carcinoma-vs-not projection of ClassLabel.
enum class BinaryLabel : int {
  kNonCarcinoma = 0,
  kCarcinoma = 1,
};

/// DCIS and IDC both project to Carcinoma.
BinaryLabel to_binary(ClassLabel label);

/// Most severe label in a non-empty list. Throws ValidationError on empty.
ClassLabel max_severity(std::span<const ClassLabel> labels);

/// Canonical string forms used in every JSON surface:
/// "non_carcinoma" | "dcis" | "idc".
std::string_view to_string(ClassLabel label);
std::string_view to_string(BinaryLabel label);

/// Parses the canonical string form. Throws ValidationError on anything else.
ClassLabel class_label_from_string(std::string_view s);

/// Physical calibration of a slide: microns per pixel at level 0.
/// Both values must be strictly positive and finite.
struct PhysicalCalibration {
  double mpp_x = 0.0;
  double mpp_y = 0.0;

  /// Throws ValidationError if either value is non-positive or non-finite.
  void validate() const;
};

}  // namespace wsicad
