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

#include "wsicad/labels.hpp"

#include <algorithm>
#include <cmath>

#include "wsicad/errors.hpp"

namespace wsicad {

BinaryLabel to_binary(ClassLabel label) {
  return label == ClassLabel::kNonCarcinoma ? BinaryLabel::kNonCarcinoma
                                            : BinaryLabel::kCarcinoma;
}

ClassLabel max_severity(std::span<const ClassLabel> labels) {
  if (labels.empty()) {
    throw ValidationError("max_severity: empty label list");
  }
  return *std::max_element(labels.begin(), labels.end());
}

std::string_view to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::kNonCarcinoma:
      return "non_carcinoma";
    case ClassLabel::kDcis:
      return "dcis";
    case ClassLabel::kIdc:
      return "idc";
  }
  throw ValidationError("to_string: invalid ClassLabel");
}

std::string_view to_string(BinaryLabel label) {
  return label == BinaryLabel::kNonCarcinoma ? "non_carcinoma" : "carcinoma";
}

ClassLabel class_label_from_string(std::string_view s) {
  if (s == "non_carcinoma") return ClassLabel::kNonCarcinoma;
  if (s == "dcis") return ClassLabel::kDcis;
  if (s == "idc") return ClassLabel::kIdc;
  throw ValidationError("unknown class label: \"" + std::string(s) + "\"");
}

void PhysicalCalibration::validate() const {
  if (!(std::isfinite(mpp_x) && mpp_x > 0.0)) {
    throw ValidationError("calibration: mpp_x must be positive and finite");
  }
  if (!(std::isfinite(mpp_y) && mpp_y > 0.0)) {
    throw ValidationError("calibration: mpp_y must be positive and finite");
  }
}

}  // namespace wsicad
