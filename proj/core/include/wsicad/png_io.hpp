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

#include <filesystem>

#include "wsicad/image.hpp"

namespace wsicad {

/// Reads a PNG into 8-bit RGB. Palette and grayscale images are expanded,
/// an alpha channel is stripped, 16-bit depth is reduced to 8.
/// Throws FormatError when the file is missing or not a decodable PNG.
RgbImage read_png(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Compression favors speed over size: tiles are
/// synthetic and mostly flat. Throws FormatError on I/O failure.
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Writes an 8-bit grayscale PNG.
void write_png(const std::filesystem::path& path, const GrayImage& image);

}  // namespace wsicad
