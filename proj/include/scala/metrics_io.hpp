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

#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include "scala/format.hpp"
#include "scala/protocol.hpp"

namespace scala {

/// t,variant,loss,acc,bal_acc,acc_class_0..M-1,grad_norm_s,grad_norm_c,up_bytes,down_bytes
std::string metrics_csv_header(int num_classes);

/// Rounds without evaluation leave the accuracy cells empty.
std::string metrics_csv_row(const RoundMetrics& m, int num_classes);

/// One NDJSON record (no trailing newline). Missing evaluation becomes null.
std::string metrics_json_line(const RoundMetrics& m, int num_classes);

void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rounds, int num_classes);
void write_metrics_ndjson(std::ostream& out, std::span<const RoundMetrics> rounds, int num_classes);

}  // namespace scala
