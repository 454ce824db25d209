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

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scala/config.hpp"
#include "scala/data.hpp"
#include "scala/experiment.hpp"
#include "scala/format.hpp"
#include "scala/theory.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kRuntimeError = 2, kTheoryFailure = 3 };

enum class LogLevel { kError, kWarn, kInfo, kDebug };

LogLevel log_level() {
  const char* env = std::getenv("SCALA_LOG_LEVEL");
  const std::string v = env ? env : "info";
  if (v == "error" || v == "quiet") return LogLevel::kError;
  if (v == "warn") return LogLevel::kWarn;
  if (v == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log(LogLevel level, const std::string& msg) {
  static const LogLevel threshold = log_level();
  if (level > threshold) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

double parse_grid_value(const std::string& token, int num_classes) {
  const auto slash = token.find('/');
  if (slash != std::string::npos) {
    const std::string num = token.substr(0, slash);
    const std::string den = token.substr(slash + 1);
    const double n = std::stod(num);
    const double d = (den == "M" || den == "m") ? num_classes : std::stod(den);
    return n / d;
  }
  std::size_t used = 0;
  const double v = std::stod(token, &used);
  if (used != token.size()) throw std::invalid_argument(token);
  return v;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& variants,
            const std::optional<std::uint64_t>& seed, const std::string& out) {
  scala::TrainingConfig cfg = scala::load_config(config_path);
  if (!variants.empty()) {
    cfg.variants.clear();
    for (const auto& name : variants) {
      const auto v = scala::parse_variant(name);
      if (!v) throw scala::ConfigError("--variant: unknown variant '" + name + "'");
      cfg.variants.push_back(*v);
    }
  }
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.out_dir = out;
  scala::validate_config(cfg);
  log(LogLevel::kInfo, "running " + std::to_string(cfg.variants.size()) + " variant(s), T=" +
                           std::to_string(cfg.rounds) + ", seed=" + std::to_string(cfg.seed) + ", out=" +
                           cfg.out_dir);
  const scala::ExperimentManifest manifest = scala::run_experiment(cfg);
  for (const auto& [name, paths] : manifest.outputs) {
    log(LogLevel::kInfo, name + " -> " + paths.metrics_csv.string());
  }
  std::cout << (std::filesystem::path(cfg.out_dir) / "manifest.json").string() << "\n";
  return kOk;
}

int cmd_theory(int classes, int dim, double eta, std::uint64_t seed, const std::vector<std::string>& grid_tokens,
               const std::string& out, bool swap) {
  if (classes < 2) throw scala::ConfigError("--classes: need at least 2");
  if (dim < classes) throw scala::ConfigError("--dim: must be at least --classes for orthogonal features");
  if (!(eta > 0.0)) throw scala::ConfigError("--eta: must be positive");
  scala::TheoryCheckOptions opts;
  opts.sweep.num_classes = classes;
  opts.sweep.dim = dim;
  opts.sweep.eta = eta;
  opts.sweep.seed = seed;
  opts.sweep.swap_losses = swap;
  for (const auto& tok : grid_tokens) {
    double p = 0.0;
    try {
      p = parse_grid_value(tok, classes);
    } catch (const std::exception&) {
      throw scala::ConfigError("--grid: cannot parse '" + tok + "'");
    }
    if (!(p > 0.0 && p < 1.0)) throw scala::ConfigError("--grid: '" + tok + "' is outside (0, 1)");
    opts.grid.push_back(p);
  }
  opts.out_csv = out;
  const scala::TheoryCheckOutcome outcome = scala::run_theory_checks(opts);
  if (out.empty()) {
    scala::theory::write_report_csv(std::cout, outcome.report);
  }
  for (const auto& f : outcome.check.failures) log(LogLevel::kError, f);
  std::cout << (outcome.check.passed ? "PASS" : "FAIL") << " theory-check M=" << classes << " points="
            << outcome.report.rows.size() << " failures=" << outcome.check.failures.size() << "\n";
  return outcome.check.passed ? kOk : kTheoryFailure;
}

int cmd_partition_inspect(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const scala::Partition p = scala::partition_from_json(buf.str());
  std::size_t max_index = 0;
  std::size_t total = 0;
  for (const auto& c : p.client_indices) {
    for (auto i : c) max_index = std::max<std::size_t>(max_index, static_cast<std::size_t>(i));
    total += c.size();
  }
  scala::validate_partition(p, total == 0 ? 0 : max_index + 1);

  const nlohmann::json j = nlohmann::json::parse(buf.str());
  std::cout << "skew: " << scala::to_string(p.skew) << "\n"
            << "seed: " << p.seed << "\n"
            << "clients: " << p.num_clients() << "\n"
            << "samples: " << total << "\n"
            << "redraws: " << p.redraws << "\n";
  std::cout << "client,size,classes,max_class_share\n";
  for (std::size_t c = 0; c < p.client_indices.size(); ++c) {
    std::cout << c << "," << p.client_indices[c].size();
    const auto& entry = j.at("clients").at(c);
    if (entry.contains("label_counts")) {
      const auto counts = entry.at("label_counts").get<std::vector<long>>();
      long present = 0;
      long biggest = 0;
      for (long n : counts) {
        present += n > 0;
        biggest = std::max(biggest, n);
      }
      std::cout << "," << present << ","
                << scala::format_double(static_cast<double>(biggest) / static_cast<double>(p.client_indices[c].size()));
    } else {
      std::cout << ",,";
    }
    std::cout << "\n";
  }
  return kOk;
}

int cmd_partition_write(const std::string& config_path, const std::string& out) {
  const scala::TrainingConfig cfg = scala::load_config(config_path);
  const auto [train, test] = scala::load_datasets(cfg);
  const scala::Partition p = scala::make_partition(train, cfg.num_clients, cfg.skew, cfg.seed);
  std::ofstream o(out, std::ios::binary | std::ios::trunc);
  if (!o) throw std::runtime_error("cannot write " + out);
  o << scala::partition_to_json(p, &train) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split federated learning simulator with concatenated activations and logit adjustment"};
  app.set_version_flag("--version", scala::code_version());
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string config_path;
  std::vector<std::string> variants;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  run->add_option("--config", config_path, "Config file")->required();
  run->add_option("--variant", variants, "Variant(s): scala, ca-sfl, lla-sfl, splitfed-v1, fedavg")->delimiter(',');
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--out", out_dir, "Output directory");

  auto* theory_cmd = app.add_subcommand("theory-check", "Check the classifier-update ordering on a prior grid");
  int classes = 10;
  int dim = 0;
  double eta = 0.1;
  std::uint64_t theory_seed = 0;
  std::vector<std::string> grid;
  std::string theory_out;
  bool swap = false;
  theory_cmd->add_option("--classes", classes, "Number of classes M")->capture_default_str();
  theory_cmd->add_option("--dim", dim, "Feature dimension (default M)");
  theory_cmd->add_option("--eta", eta, "Step size")->capture_default_str();
  theory_cmd->add_option("--seed", theory_seed, "Shuffle seed");
  theory_cmd->add_option("--grid", grid, "Comma-separated P(y) values; fractions and 1/M allowed")->delimiter(',');
  theory_cmd->add_option("--out", theory_out, "Report CSV path (stdout when omitted)");
  theory_cmd->add_flag("--swap-losses", swap, "Negative control: exchange the two losses");

  auto* part = app.add_subcommand("partition", "Inspect or generate a partition manifest");
  std::string inspect_path;
  std::string part_config;
  std::string part_out;
  auto* inspect_opt = part->add_option("--inspect", inspect_path, "Manifest to summarize");
  auto* config_opt = part->add_option("--config", part_config, "Config to partition from");
  part->add_option("--write", part_out, "Manifest output path")->needs(config_opt);
  inspect_opt->excludes(config_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, variants, seed, out_dir);
    if (*theory_cmd) {
      return cmd_theory(classes, dim == 0 ? classes : dim, eta, theory_seed, grid, theory_out, swap);
    }
    if (*part) {
      if (!inspect_path.empty()) return cmd_partition_inspect(inspect_path);
      if (!part_config.empty() && !part_out.empty()) return cmd_partition_write(part_config, part_out);
      log(LogLevel::kError, "partition: pass --inspect <manifest> or --config <path> --write <path>");
      return kConfigError;
    }
  } catch (const scala::ConfigError& e) {
    log(LogLevel::kError, std::string("config error: ") + e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    log(LogLevel::kError, e.what());
    return kRuntimeError;
  }
  return kOk;
}
