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

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "wsicad/errors.hpp"
#include "wsicad/inference.hpp"

namespace wsicad {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "feature payloads are little-endian; byte-swapping reads are "
              "not implemented");

std::filesystem::path payload_path(const std::filesystem::path& json_path) {
  std::filesystem::path p = json_path;
  p.replace_extension(".f32");
  return p;
}

}  // namespace

void FeatureTable::validate() const {
  if (n < 1) throw ValidationError("feature table: n must be at least 1");
  if (f < 1) throw ValidationError("feature table: f must be at least 1");
  if (data.size() != static_cast<std::size_t>(n) * f) {
    throw ValidationError("feature table: payload size != n * f");
  }
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw ValidationError("feature table: non-finite activation");
    }
  }
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(n)) {
    throw ValidationError("feature table: labels size != n");
  }
  if (!patch_refs.empty() && patch_refs.size() != static_cast<std::size_t>(n)) {
    throw ValidationError("feature table: patch_refs size != n");
  }
}

FeatureTable load_features(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw FormatError("missing feature header: " + json_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt feature header: " + std::string(e.what()));
  }

  FeatureTable table;
  try {
    table.n = j.at("n").get<int>();
    table.f = j.at("f").get<int>();
    if (j.contains("labels") && !j.at("labels").is_null()) {
      for (const auto& s : j.at("labels")) {
        table.labels.push_back(
            class_label_from_string(s.get<std::string>()));
      }
    }
    if (j.contains("patch_refs") && !j.at("patch_refs").is_null()) {
      for (const auto& r : j.at("patch_refs")) {
        PatchRef ref;
        ref.slide_id = r.at("slide").get<std::string>();
        ref.level = r.at("level").get<int>();
        ref.x = r.at("x").get<std::int64_t>();
        ref.y = r.at("y").get<std::int64_t>();
        ref.size = r.at("size").get<int>();
        table.patch_refs.push_back(std::move(ref));
      }
    }
  } catch (const json::exception& e) {
    throw FormatError("feature header field error: " + std::string(e.what()));
  }
  if (table.n < 1) throw ValidationError("feature table: n must be at least 1");
  if (table.f < 1) throw ValidationError("feature table: f must be at least 1");

  const auto payload = payload_path(json_path);
  std::ifstream pin(payload, std::ios::binary);
  if (!pin) throw FormatError("missing feature payload: " + payload.string());
  pin.seekg(0, std::ios::end);
  const std::streamoff actual = pin.tellg();
  const std::streamoff expected =
      static_cast<std::streamoff>(table.n) * table.f * 4;
  if (actual != expected) {
    throw FormatError("feature payload " + payload.string() + ": expected " +
                      std::to_string(expected) + " bytes, found " +
                      std::to_string(actual));
  }
  pin.seekg(0, std::ios::beg);
  table.data.resize(static_cast<std::size_t>(table.n) * table.f);
  pin.read(reinterpret_cast<char*>(table.data.data()), expected);
  if (!pin) throw FormatError("short read on " + payload.string());

  table.validate();
  return table;
}

void save_features(const FeatureTable& table,
                   const std::filesystem::path& json_path) {
  table.validate();

  json j;
  j["n"] = table.n;
  j["f"] = table.f;
  if (table.labels.empty()) {
    j["labels"] = nullptr;
  } else {
    json labels = json::array();
    for (ClassLabel label : table.labels) labels.push_back(to_string(label));
    j["labels"] = std::move(labels);
  }
  if (table.patch_refs.empty()) {
    j["patch_refs"] = nullptr;
  } else {
    json refs = json::array();
    for (const PatchRef& ref : table.patch_refs) {
      refs.push_back({{"slide", ref.slide_id},
                      {"level", ref.level},
                      {"x", ref.x},
                      {"y", ref.y},
                      {"size", ref.size}});
    }
    j["patch_refs"] = std::move(refs);
  }

  std::ofstream out(json_path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + json_path.string());

  const auto payload = payload_path(json_path);
  std::ofstream pout(payload, std::ios::binary);
  pout.write(reinterpret_cast<const char*>(table.data.data()),
             static_cast<std::streamsize>(table.data.size() * 4));
  if (!pout) throw FormatError("cannot write " + payload.string());
}

LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing model file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt model file: " + std::string(e.what()));
  }

  LinearModel model;
  try {
    model.class_names = j.at("class_names").get<std::vector<std::string>>();
    model.f = j.at("f").get<int>();
    for (const auto& row : j.at("w")) {
      if (row.size() != kNumClasses) {
        throw FormatError("model: each w row needs 3 entries");
      }
      for (const auto& v : row) model.w.push_back(v.get<double>());
    }
    model.b = j.at("b").get<std::vector<double>>();
    if (j.contains("k") && !j.at("k").is_null()) {
      model.spatial_k = j.at("k").get<int>();
    }
    if (j.contains("w_spatial") && !j.at("w_spatial").is_null()) {
      for (const auto& row : j.at("w_spatial")) {
        if (row.size() != kNumClasses) {
          throw FormatError("model: each w_spatial row needs 3 entries");
        }
        for (const auto& v : row) model.w_spatial.push_back(v.get<double>());
      }
      if (model.spatial_k == 0) {
        model.spatial_k =
            static_cast<int>(model.w_spatial.size() / kNumClasses);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError("model field error: " + std::string(e.what()));
  }
  model.validate();
  return model;
}

void save_model(const LinearModel& model, const std::filesystem::path& path) {
  model.validate();
  json j;
  j["class_names"] = model.class_names;
  j["f"] = model.f;
  json w = json::array();
  for (int i = 0; i < model.f; ++i) {
    const auto row = model.row(i);
    w.push_back({row[0], row[1], row[2]});
  }
  j["w"] = std::move(w);
  j["b"] = model.b;
  if (model.spatial_k > 0) {
    j["k"] = model.spatial_k;
    json ws = json::array();
    for (int i = 0; i < model.spatial_k; ++i) {
      const auto row = model.spatial_row(i);
      ws.push_back({row[0], row[1], row[2]});
    }
    j["w_spatial"] = std::move(ws);
  }
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + path.string());
}

}  // namespace wsicad
