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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scala/config.hpp"
#include "scala/protocol.hpp"
#include "scala/theory.hpp"

namespace scala {

/// Raised for failures inside the round loop; the message carries the round.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VariantOutputs {
  std::filesystem::path metrics_csv;
  std::filesystem::path metrics_ndjson;
};

struct ExperimentManifest {
  TrainingConfig config;
  std::string code_version;
  std::filesystem::path partition_path;
  std::map<std::string, VariantOutputs> outputs;  // keyed by variant name
  std::string started_at;   // UTC, ISO 8601
  std::string finished_at;

  std::string to_json() const;
};

std::string code_version();

/// The train/test pair described by `config.data`.
std::pair<Dataset, Dataset> load_datasets(const TrainingConfig& config);

struct SimulationSetup {
  Dataset train;
  Dataset test;
  Partition partition;
  LayeredModel init;
};

/// Data, partition, and initial model, all derived from config.seed.
SimulationSetup prepare_simulation(const TrainingConfig& config);

/// Runs config.rounds rounds of one variant in memory.
std::vector<RoundMetrics> simulate(const TrainingConfig& config, const SimulationSetup& setup,
                                   ProtocolVariant variant);

/// Runs every configured variant and writes, under config.out_dir:
/// partition.json, <variant>.metrics.csv, <variant>.metrics.ndjson, manifest.json.
ExperimentManifest run_experiment(const TrainingConfig& config);

struct TheoryCheckOptions {
  theory::SweepOptions sweep;
  std::vector<double> grid;  // empty means the default grid
  std::filesystem::path out_csv;  // empty means no file
};

struct TheoryCheckOutcome {
  theory::ClassifierUpdateReport report;
  theory::CheckResult check;
};

TheoryCheckOutcome run_theory_checks(const TheoryCheckOptions& options);

}  // namespace scala
