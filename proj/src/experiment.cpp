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

#include "scala/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "scala/metrics_io.hpp"
#include "scala/nn.hpp"
#include "scala/rng.hpp"

#ifndef SCALA_VERSION
#define SCALA_VERSION "unknown"
#endif

namespace scala {
namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  return out;
}

}  // namespace

std::string code_version() { return "scala-sfl " SCALA_VERSION; }

std::string ExperimentManifest::to_json() const {
  nlohmann::ordered_json j;
  j["code_version"] = code_version;
  j["config"] = serialize_config(config);
  j["seed"] = config.seed;
  j["partition"] = partition_path.string();
  nlohmann::ordered_json outs = nlohmann::ordered_json::object();
  for (const auto& [name, o] : outputs) {
    outs[name] = {{"metrics_csv", o.metrics_csv.string()}, {"metrics_ndjson", o.metrics_ndjson.string()}};
  }
  j["outputs"] = outs;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j.dump(2);
}

std::pair<Dataset, Dataset> load_datasets(const TrainingConfig& config) {
  const auto& d = config.data;
  switch (d.source) {
    case DataSource::kSynthetic: {
      SynthSpec test_spec = d.synth;
      test_spec.n_per_class = d.test_per_class;
      return {synth_dataset(d.synth, config.seed, 0), synth_dataset(test_spec, config.seed, 1)};
    }
    case DataSource::kCsv:
      return {load_csv(d.train_path, d.num_classes), load_csv(d.test_path, d.num_classes)};
    case DataSource::kIdx:
      return {load_idx_pair(d.train_path, d.train_labels_path, d.num_classes),
              load_idx_pair(d.test_path, d.test_labels_path, d.num_classes)};
  }
  throw ConfigError("data.source: unsupported");
}

SimulationSetup prepare_simulation(const TrainingConfig& config) {
  auto [train, test] = load_datasets(config);
  if (train.num_classes != test.num_classes) {
    // Files without an explicit class count may disagree on max(label) + 1.
    const int m = std::max(train.num_classes, test.num_classes);
    train.num_classes = m;
    test.num_classes = m;
  }
  if (train.features.cols() != test.features.cols()) {
    throw ConfigError("data: train and test feature widths differ (" + std::to_string(train.features.cols()) +
                      " vs " + std::to_string(test.features.cols()) + ")");
  }
  if (config.skew.kind == SkewSpec::Kind::kQuantity && config.skew.alpha > train.num_classes) {
    throw ConfigError("federation.alpha: exceeds the class count " + std::to_string(train.num_classes));
  }
  Partition partition = make_partition(train, config.num_clients, config.skew, config.seed);
  Rng init_rng = make_rng(config.seed, Stream::kInit);
  LayeredModel init = make_mlp(static_cast<int>(train.features.cols()), config.hidden, train.num_classes,
                               config.cut_index, init_rng);
  return {std::move(train), std::move(test), std::move(partition), std::move(init)};
}

std::vector<RoundMetrics> simulate(const TrainingConfig& config, const SimulationSetup& setup,
                                   ProtocolVariant variant) {
  Federation fed(setup.train, setup.test, setup.partition, setup.init, protocol_config(config, variant),
                 config.seed);
  std::vector<RoundMetrics> out;
  out.reserve(static_cast<std::size_t>(config.rounds));
  for (int t = 1; t <= config.rounds; ++t) {
    try {
      out.push_back(fed.step().metrics);
    } catch (const std::exception& e) {
      throw RuntimeFailure(std::string(to_string(variant)) + " round " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

ExperimentManifest run_experiment(const TrainingConfig& config) {
  validate_config(config);
  ExperimentManifest manifest;
  manifest.config = config;
  manifest.code_version = code_version();
  manifest.started_at = utc_now();

  const std::filesystem::path dir = config.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("cannot create " + dir.string() + ": " + ec.message());

  const SimulationSetup setup = prepare_simulation(config);
  const int m = setup.train.num_classes;

  manifest.partition_path = dir / "partition.json";
  open_output(manifest.partition_path) << partition_to_json(setup.partition, &setup.train) << "\n";

  for (ProtocolVariant v : config.variants) {
    const std::string name(to_string(v));
    if (manifest.outputs.count(name)) continue;
    const std::vector<RoundMetrics> rounds = simulate(config, setup, v);
    VariantOutputs paths{dir / (name + ".metrics.csv"), dir / (name + ".metrics.ndjson")};
    auto csv = open_output(paths.metrics_csv);
    write_metrics_csv(csv, rounds, m);
    auto ndjson = open_output(paths.metrics_ndjson);
    write_metrics_ndjson(ndjson, rounds, m);
    manifest.outputs.emplace(name, std::move(paths));
  }

  manifest.finished_at = utc_now();
  open_output(dir / "manifest.json") << manifest.to_json() << "\n";
  return manifest;
}

TheoryCheckOutcome run_theory_checks(const TheoryCheckOptions& options) {
  const std::vector<double> grid =
      options.grid.empty() ? theory::default_prior_grid(options.sweep.num_classes) : options.grid;
  TheoryCheckOutcome outcome;
  outcome.report = theory::theorem2_sweep(options.sweep, grid);
  outcome.check = theory::check_report(outcome.report);
  if (!options.out_csv.empty()) {
    if (options.out_csv.has_parent_path()) std::filesystem::create_directories(options.out_csv.parent_path());
    auto out = open_output(options.out_csv);
    theory::write_report_csv(out, outcome.report);
  }
  return outcome;
}

}  // namespace scala
