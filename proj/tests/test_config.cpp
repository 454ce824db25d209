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

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scala/config.hpp"
#include "scala/experiment.hpp"
#include "scala/metrics_io.hpp"

using namespace scala;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("scala_cfg_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TrainingConfig small_config(const fs::path& out) {
  TrainingConfig c = parse_config(R"(
[data]
classes = 4
dim = 6
train_per_class = 30
test_per_class = 10

[federation]
clients = 6
participation_ratio = 0.5
skew = dirichlet
beta = 0.5

[model]
hidden = 12,8
cut = 2

[training]
variants = scala,splitfed-v1
batch = 24
local_iters = 2
rounds = 5
lr = 0.05
eval_every = 2
)");
  c.out_dir = out.string();
  return c;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config.parse") {
  TEST_CASE("empty document gives valid defaults") {
    const TrainingConfig c = parse_config("");
    CHECK(c == TrainingConfig{});
    CHECK(c.batch_size == 320);
    CHECK(c.local_iters == 20);
    CHECK(c.learning_rate == 0.01);
    CHECK(c.participation_ratio == 0.1);
    CHECK(c.num_clients == 100);
    CHECK_NOTHROW(validate_config(c));
  }

  TEST_CASE("invalid values name their key") {
    CHECK(error_of("[federation]\nparticipation_ratio = 0\n").find("federation.participation_ratio") !=
          std::string::npos);
    CHECK(error_of("[training]\nbogus = 1\n").find("training.bogus") != std::string::npos);
    CHECK(error_of("[training]\nbatch = ten\n").find("training.batch") != std::string::npos);
    CHECK(error_of("[training]\nvariants = scala,nope\n").find("training.variants") != std::string::npos);
    CHECK(error_of("[model]\nhidden = 8\ncut = 3\n").find("model.cut") != std::string::npos);
    CHECK(error_of("[federation]\nskew = zipf\n").find("federation.skew") != std::string::npos);
    CHECK(error_of("[data]\nsource = csv\n").find("data.train_path") != std::string::npos);
    CHECK(error_of("top = 1\n").find("outside any section") != std::string::npos);
    CHECK_FALSE(error_of("[training]\nlr = -1\n").empty());
    CHECK_FALSE(error_of("[training\n").empty());
  }

  TEST_CASE("B must cover one sample per participant") {
    CHECK(error_of("[federation]\nclients = 100\nparticipation_ratio = 0.5\n[training]\nbatch = 49\n")
              .find("training.batch") != std::string::npos);
    CHECK(error_of("[federation]\nclients = 100\nparticipation_ratio = 0.5\n[training]\nbatch = 50\n").empty());
  }

  TEST_CASE("defaults with ten equal participants give 32 samples each") {
    const TrainingConfig c = parse_config("");
    const long participants = std::lround(c.participation_ratio * c.num_clients);
    const std::vector<std::size_t> sizes(static_cast<std::size_t>(participants), 50);
    CHECK(allocate_minibatch_sizes(sizes, c.batch_size) == std::vector<int>(10, 32));
  }

  TEST_CASE("serialize then parse reproduces the config") {
    std::vector<TrainingConfig> cases{parse_config("")};
    cases.push_back(small_config("runs/x"));
    cases.push_back(parse_config(
        "[data]\nsource = idx\ntrain_path = a\ntrain_labels_path = b\ntest_path = c\ntest_labels_path = d\n"
        "classes = 7\n[federation]\nclients = 9\nparticipation = bernoulli\nparticipation_ratio = 0.3333\n"
        "skew = iid\n[training]\nbatch = 9\nserver_loss = plain\nclient_loss = adjusted\nlr = 0.1\n"
        "[run]\nseed = 18446744073709551615\nout = /tmp/o\n"));
    for (const auto& c : cases) {
      CHECK(parse_config(serialize_config(c)) == c);
      CHECK(serialize_config(parse_config(serialize_config(c))) == serialize_config(c));
    }
  }

  TEST_CASE("protocol settings carry over") {
    const auto c = small_config("x");
    const auto p = protocol_config(c, ProtocolVariant::kLlaSfl);
    CHECK(p.variant == ProtocolVariant::kLlaSfl);
    CHECK(p.batch_size == 24);
    CHECK(p.local_iters == 2);
    CHECK(p.total_rounds == 5);
    CHECK(p.eval_every == 2);
  }
}

TEST_SUITE("config.metrics_io") {
  TEST_CASE("csv header has the fixed column order") {
    CHECK(metrics_csv_header(3) ==
          "t,variant,loss,acc,bal_acc,acc_class_0,acc_class_1,acc_class_2,grad_norm_s,grad_norm_c,up_bytes,down_bytes");
  }

  TEST_CASE("rows without evaluation leave accuracy cells empty") {
    RoundMetrics m;
    m.round = 4;
    m.train_loss = 0.5;
    m.up_bytes = 10;
    m.down_bytes = 7;
    CHECK(metrics_csv_row(m, 2) == "4,scala,0.5,,,,,0,0,10,7");
    const auto j = nlohmann::json::parse(metrics_json_line(m, 2));
    CHECK(j["acc"].is_null());
    CHECK(j["t"] == 4);
    CHECK(j["up_bytes"] == 10);
  }

  TEST_CASE("evaluated rows carry per-class accuracy") {
    RoundMetrics m;
    m.round = 1;
    m.variant = ProtocolVariant::kFedAvg;
    m.train_loss = 1.25;
    m.eval = EvalMetrics{0.75, {0.5, 1.0}, 0.75, 0.5};
    CHECK(metrics_csv_row(m, 2) == "1,fedavg,1.25,0.75,0.75,0.5,1,0,0,0,0");
    const auto j = nlohmann::json::parse(metrics_json_line(m, 2));
    CHECK(j["acc_class"][1] == 1.0);
    CHECK(j["bal_acc_balanced_rule"] == 0.5);
  }
}

TEST_SUITE("config.experiment") {
  TEST_CASE("T = 0 writes empty metrics and a manifest") {
    const fs::path dir = fresh_dir("t0");
    TrainingConfig c = small_config(dir);
    c.rounds = 0;
    const auto manifest = run_experiment(c);
    REQUIRE(manifest.outputs.size() == 2);
    for (const auto& [name, o] : manifest.outputs) {
      CHECK(line_count(slurp(o.metrics_csv)) == 1);
      CHECK(slurp(o.metrics_ndjson).empty());
    }
    CHECK(fs::exists(dir / "manifest.json"));
  }

  TEST_CASE("every listed output exists and stays inside the output directory") {
    const fs::path dir = fresh_dir("outputs");
    const auto manifest = run_experiment(small_config(dir));
    std::set<fs::path> expected{dir / "manifest.json", manifest.partition_path};
    for (const auto& [name, o] : manifest.outputs) {
      expected.insert(o.metrics_csv);
      expected.insert(o.metrics_ndjson);
    }
    std::set<fs::path> found;
    for (const auto& e : fs::recursive_directory_iterator(dir)) found.insert(e.path());
    CHECK(found == expected);
    const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(j["code_version"].get<std::string>().find("scala-sfl") == 0);
    CHECK(parse_config(j["config"].get<std::string>()) == manifest.config);
    CHECK(j.contains("started_at"));
    CHECK(j.contains("finished_at"));
  }

  TEST_CASE("a variant sweep yields identical round grids") {
    const fs::path dir = fresh_dir("sweep");
    const auto manifest = run_experiment(small_config(dir));
    auto grid = [](const fs::path& p) {
      std::vector<std::pair<std::string, bool>> rows;
      std::istringstream in(slurp(p));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        const auto first = line.find(',');
        const auto loss_end = line.find(',', line.find(',', first + 1) + 1);
        rows.emplace_back(line.substr(0, first), line[loss_end + 1] != ',');
      }
      return rows;
    };
    const auto a = grid(manifest.outputs.at("scala").metrics_csv);
    const auto b = grid(manifest.outputs.at("splitfed-v1").metrics_csv);
    CHECK(a.size() == 5);
    CHECK(a == b);
    CHECK(a[0].second == false);
    CHECK(a[1].second == true);
    CHECK(a[4].second == true);
  }

  TEST_CASE("repeated runs are byte identical") {
    const fs::path d1 = fresh_dir("det1");
    const fs::path d2 = fresh_dir("det2");
    const auto m1 = run_experiment(small_config(d1));
    const auto m2 = run_experiment(small_config(d2));
    for (const auto& [name, o] : m1.outputs) {
      CHECK(slurp(o.metrics_csv) == slurp(m2.outputs.at(name).metrics_csv));
      CHECK(slurp(o.metrics_ndjson) == slurp(m2.outputs.at(name).metrics_ndjson));
    }
    CHECK(slurp(m1.partition_path) == slurp(m2.partition_path));
  }

  TEST_CASE("a different seed changes the metrics") {
    const fs::path d1 = fresh_dir("seed1");
    const fs::path d2 = fresh_dir("seed2");
    TrainingConfig c2 = small_config(d2);
    c2.seed = 1;
    const auto m1 = run_experiment(small_config(d1));
    const auto m2 = run_experiment(c2);
    CHECK(slurp(m1.outputs.at("scala").metrics_csv) != slurp(m2.outputs.at("scala").metrics_csv));
  }

  TEST_CASE("csv data sources load from files") {
    const fs::path dir = fresh_dir("csvsrc");
    fs::create_directories(dir);
    const Dataset train = synth_dataset(SynthSpec{3, 4, 20, 3.0}, 1, 0);
    const Dataset test = synth_dataset(SynthSpec{3, 4, 5, 3.0}, 1, 1);
    write_csv(train, dir / "train.csv");
    write_csv(test, dir / "test.csv");
    TrainingConfig c = parse_config("[data]\nsource = csv\ntrain_path = " + (dir / "train.csv").string() +
                                    "\ntest_path = " + (dir / "test.csv").string() +
                                    "\n[federation]\nclients = 3\nparticipation_ratio = 1\nalpha = 2\n"
                                    "[model]\nhidden = 5\n[training]\nbatch = 12\nlocal_iters = 1\nrounds = 2\n");
    c.out_dir = (dir / "out").string();
    const auto m = run_experiment(c);
    CHECK(line_count(slurp(m.outputs.at("scala").metrics_csv)) == 3);
  }

  TEST_CASE("missing data files surface as errors") {
    TrainingConfig c = parse_config("[data]\nsource = csv\ntrain_path = /nonexistent/a.csv\ntest_path = /nonexistent/b.csv\n");
    c.out_dir = fresh_dir("missing").string();
    CHECK_THROWS(run_experiment(c));
  }
}

TEST_SUITE("config.theory") {
  TEST_CASE("default grid passes and writes a report") {
    TheoryCheckOptions opts;
    const fs::path out = fresh_dir("theory") / "report.csv";
    opts.out_csv = out;
    const auto r = run_theory_checks(opts);
    CHECK(r.check.passed);
    CHECK(r.report.rows.size() == 8);
    CHECK(line_count(slurp(out)) == 9);
  }

  TEST_CASE("uniform-only grid is all equalities") {
    TheoryCheckOptions opts;
    opts.grid = {0.1};
    const auto r = run_theory_checks(opts);
    CHECK(r.check.passed);
    CHECK(r.report.rows[0].ordering == theory::Ordering::kEqual);
  }

  TEST_CASE("swapped losses fail") {
    TheoryCheckOptions opts;
    opts.sweep.swap_losses = true;
    CHECK_FALSE(run_theory_checks(opts).check.passed);
  }
}
