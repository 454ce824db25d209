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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scala/data.hpp"
#include "scala/protocol.hpp"

namespace scala {

enum class DataSource { kSynthetic, kCsv, kIdx };

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  SynthSpec synth{10, 20, 500, 3.0};  // n_per_class is the training count
  int test_per_class = 100;
  std::string train_path;
  std::string train_labels_path;  // IDX only
  std::string test_path;
  std::string test_labels_path;   // IDX only
  std::optional<int> num_classes;  // file sources; inferred when unset

  bool operator==(const DataConfig&) const = default;
};

/// Fully resolved experiment configuration. Defaults follow the reference
/// setup: K = 100, rho = 0.1, B = 320, I = 20, eta = 0.01.
struct TrainingConfig {
  DataConfig data;

  int num_clients = 100;
  double participation_ratio = 0.1;
  ParticipationMode participation = ParticipationMode::kFixedFraction;
  SkewSpec skew = SkewSpec::quantity(2);

  std::vector<int> hidden{64};
  std::size_t cut_index = 2;

  std::vector<ProtocolVariant> variants{ProtocolVariant::kScala};
  int batch_size = 320;
  int local_iters = 20;
  int rounds = 100;
  double learning_rate = 0.01;
  int eval_every = 10;
  std::optional<LossKind> server_loss;
  std::optional<LossKind> client_loss;
  std::uint64_t bytes_per_scalar = 8;

  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";

  bool operator==(const TrainingConfig&) const = default;
};

/// Parses the sectioned key = value format ([data], [federation], [model],
/// [training], [run]); absent keys keep their defaults. Throws ConfigError
/// naming the offending key.
TrainingConfig parse_config(const std::string& text);
TrainingConfig load_config(const std::filesystem::path& path);

/// Cross-field checks; parse_config already calls this.
void validate_config(const TrainingConfig& config);

std::string serialize_config(const TrainingConfig& config);

ProtocolConfig protocol_config(const TrainingConfig& config, ProtocolVariant variant);

}  // namespace scala
