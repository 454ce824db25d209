/*
 * Copyright 2026 The SCALA-SFL Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "scala/metrics_io.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace scala {

std::string metrics_csv_header(int num_classes) {
  std::string h = "t,variant,loss,acc,bal_acc";
  for (int y = 0; y < num_classes; ++y) h += ",acc_class_" + std::to_string(y);
  h += ",grad_norm_s,grad_norm_c,up_bytes,down_bytes";
  return h;
}

std::string metrics_csv_row(const RoundMetrics& m, int num_classes) {
  std::string row = std::to_string(m.round) + "," + std::string(to_string(m.variant)) + "," +
                    format_double(m.train_loss);
  if (m.eval) {
    row += "," + format_double(m.eval->accuracy) + "," + format_double(m.eval->balanced_accuracy);
    for (int y = 0; y < num_classes; ++y) row += "," + format_double(m.eval->per_class.at(static_cast<std::size_t>(y)));
  } else {
    row += ",,";
    for (int y = 0; y < num_classes; ++y) row += ",";
  }
  row += "," + format_double(m.grad_norm_server) + "," + format_double(m.grad_norm_client) + "," +
         std::to_string(m.up_bytes) + "," + std::to_string(m.down_bytes);
  return row;
}

std::string metrics_json_line(const RoundMetrics& m, int num_classes) {
  using nlohmann::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["t"] = m.round;
  j["variant"] = std::string(to_string(m.variant));
  j["loss"] = num(m.train_loss);
  if (m.eval) {
    j["acc"] = num(m.eval->accuracy);
    j["bal_acc"] = num(m.eval->balanced_accuracy);
    json per = json::array();
    for (int y = 0; y < num_classes; ++y) per.push_back(num(m.eval->per_class.at(static_cast<std::size_t>(y))));
    j["acc_class"] = per;
    j["bal_acc_balanced_rule"] = num(m.eval->balanced_rule_accuracy);
  } else {
    j["acc"] = nullptr;
    j["bal_acc"] = nullptr;
    j["acc_class"] = nullptr;
    j["bal_acc_balanced_rule"] = nullptr;
  }
  j["grad_norm_s"] = num(m.grad_norm_server);
  j["grad_norm_c"] = num(m.grad_norm_client);
  j["up_bytes"] = m.up_bytes;
  j["down_bytes"] = m.down_bytes;
  return j.dump();
}

void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rounds, int num_classes) {
  out << metrics_csv_header(num_classes) << '\n';
  for (const auto& m : rounds) out << metrics_csv_row(m, num_classes) << '\n';
}

void write_metrics_ndjson(std::ostream& out, std::span<const RoundMetrics> rounds, int num_classes) {
  for (const auto& m : rounds) out << metrics_json_line(m, num_classes) << '\n';
}

}  // namespace scala
