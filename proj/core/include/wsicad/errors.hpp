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

#include <stdexcept>
#include <string>

namespace wsicad {

/// Invalid values or broken invariants in otherwise well-formed inputs
/// (bad config field, dimension mismatch, out-of-order levels, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or unreadable files: missing keys, truncated payloads,
/// undecodable images.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A backend failed while producing a prediction. Carries enough context
/// (patch coordinates, region id) to locate the failing input.
class InferenceError : public std::runtime_error {
 public:
  explicit InferenceError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Patch sampling exhausted its rejection budget even after relaxing the
/// overlap requirement. Subtype of InferenceError: it aborts the same
/// pipeline stage and maps to the same exit code.
class SamplingError : public InferenceError {
 public:
  explicit SamplingError(const std::string& msg) : InferenceError(msg) {}
};

}  // namespace wsicad
