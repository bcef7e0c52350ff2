/* Copyright 2026 The exitlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef EXITLAB_REPORT_HPP_
#define EXITLAB_REPORT_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exitlab/harness.hpp"
#include "exitlab/training.hpp"
#include "json.hpp"

namespace exitlab {

// Hex SHA-1 of "blob <size>\0<content>", the same id git gives the content.
std::string content_hash(std::string_view content);

// Writes via a temporary sibling and a rename.
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Shortest round-trip decimal form.
std::string format_real(double v);

std::string sweep_csv(const SweepResult& s);
nlohmann::json sweep_json(const SweepResult& s);

std::string train_report_csv(const TrainReport& r);
nlohmann::json train_report_json(const TrainReport& r);

struct Curve {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (speed-up, accuracy)
  bool marker_only = false;                       // e.g. the oracle
};

// Accuracy against speed-up, one polyline per curve.
std::string tradeoff_svg(std::span<const Curve> curves, std::string_view title);

// Bar chart of exits per layer; hist[m - 1] counts layer m.
std::string histogram_svg(std::span<const std::int64_t> hist, std::string_view title);

}  // namespace exitlab

#endif  // EXITLAB_REPORT_HPP_
